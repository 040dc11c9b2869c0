import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from jumptime.core import (
    DimensionError,
    HermitianModel,
    NonHermitianError,
    SurvivalCurve,
    amplitude_function,
    as_state,
    basis_state,
    decompose,
    evolve,
    piecewise_evolve,
    piecewise_survival,
    survival_amplitude,
)
from oracles import expm_amplitude, random_hermitian, random_state, rk4_evolve, rk4_trajectory


def test_rejects_non_hermitian():
    with pytest.raises(NonHermitianError) as info:
        HermitianModel(np.array([[0, 1], [0.5, 0]], dtype=complex))
    assert info.value.asymmetry == pytest.approx(0.5)


def test_rejects_bad_shapes_and_values():
    with pytest.raises(DimensionError):
        HermitianModel(np.zeros((2, 3)))
    with pytest.raises(DimensionError):
        HermitianModel(np.zeros((0, 0)))
    with pytest.raises(ValueError):
        HermitianModel(np.array([[np.nan, 0], [0, 0]]))


def test_matrix_is_read_only(three_level):
    model = HermitianModel(three_level)
    with pytest.raises(ValueError):
        model.matrix[0, 0] = 1.0


def test_state_validation():
    with pytest.raises(ValueError):
        as_state([1.0, 1.0])
    np.testing.assert_allclose(np.linalg.norm(as_state([1.0, 1.0], normalize=True)), 1.0)
    with pytest.raises(ValueError):
        as_state([0.0, 0.0], normalize=True)
    with pytest.raises(DimensionError):
        HermitianModel(np.eye(3)).check_state(basis_state(2))


def test_spectral_reconstruction(rng):
    for dim in (1, 2, 5, 17):
        h = random_hermitian(rng, dim)
        spec = decompose(HermitianModel(h))
        assert np.max(np.abs(spec.reconstruct() - h)) < 1e-12 * max(1.0, np.abs(h).max()) * dim
        assert spec.unitarity_error() < 1e-12


def test_evolve_matches_pade(rng):
    for _ in range(20):
        dim = int(rng.integers(2, 9))
        h = random_hermitian(rng, dim)
        psi = random_state(rng, dim)
        t = float(rng.uniform(-5, 5))
        np.testing.assert_allclose(evolve(HermitianModel(h), psi, t), expm(-1j * h * t) @ psi, atol=1e-11)


def test_evolve_zero_time_is_exact(three_level):
    psi = as_state([0.6, 0.8j, 0.0])
    out = evolve(HermitianModel(three_level), psi, 0.0)
    assert np.array_equal(out, psi)
    assert out is not psi


def test_three_level_against_rk4(three_level):
    model = HermitianModel(three_level)
    psi = basis_state(3, 0)
    times = np.array([0.5, 2.0, 7.5])
    ref = rk4_trajectory(three_level, psi, times)
    exact = model.spectrum.propagate_many(psi, times)
    np.testing.assert_allclose(exact, ref, atol=1e-10)


def test_survival_amplitude_three_level(three_level):
    model = HermitianModel(three_level)
    psi = basis_state(3, 0)
    times = np.linspace(0, 30, 7)
    curve = survival_amplitude(model, psi, times)
    ref = [expm_amplitude(three_level, psi, t) for t in times]
    np.testing.assert_allclose(curve.amplitude, ref, atol=1e-12)
    assert curve.amplitude[0] == 1.0


def test_survival_keeps_short_time_precision(fig1):
    # 1 - p is ~1e-10 here; a naive overlap would lose most digits of it
    t = 1e-3
    curve = survival_amplitude(fig1.hamiltonian, fig1.initial_state(), [0.0, t])
    assert 1 - curve.probability[1] == pytest.approx((t / fig1.tau_zeno) ** 2, rel=1e-6)


def test_survival_curve_validation():
    with pytest.raises(ValueError):
        SurvivalCurve(np.array([0.0, 0.0]), np.ones(2, dtype=complex))
    with pytest.raises(DimensionError):
        SurvivalCurve(np.array([0.0, 1.0]), np.ones(3, dtype=complex))
    with pytest.raises(ValueError):
        survival_amplitude(HermitianModel(np.eye(2)), basis_state(2), [-1.0, 0.0])
    curve = SurvivalCurve(np.array([0.0, 1.0, 2.0]), np.array([1, 0.5, 0.25], dtype=complex))
    assert len(curve) == 3
    assert curve.at(1.0) == pytest.approx(0.25)


def test_stationary_state_survives(rng):
    h = random_hermitian(rng, 4)
    vals, vecs = np.linalg.eigh(h)
    curve = survival_amplitude(HermitianModel(h), vecs[:, 2], np.linspace(0, 50, 11))
    np.testing.assert_allclose(curve.probability, 1.0, atol=1e-12)


def test_piecewise_matches_sequential_expm(rng):
    h1, h2 = random_hermitian(rng, 4), random_hermitian(rng, 4)
    psi = random_state(rng, 4)
    segments = [(HermitianModel(h1), 1.3), (HermitianModel(h2), math.inf)]
    times = np.array([0.0, 0.7, 1.3, 2.0, 4.5])
    out = piecewise_evolve(segments, psi, times)
    for t, state in zip(times, out):
        if t <= 1.3:
            ref = expm(-1j * h1 * t) @ psi
        else:
            ref = expm(-1j * h2 * (t - 1.3)) @ expm(-1j * h1 * 1.3) @ psi
        np.testing.assert_allclose(state, ref, atol=1e-11)
    curve = piecewise_survival(segments, psi, times)
    assert abs(curve.amplitude[2]) == pytest.approx(abs(np.vdot(psi, out[2])), abs=1e-12)


def test_piecewise_rejects_bad_segments(rng):
    h = HermitianModel(random_hermitian(rng, 2))
    with pytest.raises(ValueError):
        piecewise_evolve([(h, -1.0)], basis_state(2), [0.0])
    with pytest.raises(ValueError):
        piecewise_evolve([(h, math.inf)], basis_state(2), [1.0, 0.5])


_seeds = st.integers(min_value=0, max_value=2**32 - 1)
_times = st.floats(min_value=-20, max_value=20, allow_nan=False)


@settings(max_examples=60, deadline=None)
@given(seed=_seeds, t=_times)
def test_norm_is_conserved(seed, t):
    rng = np.random.default_rng(seed)
    dim = int(rng.integers(1, 10))
    psi = random_state(rng, dim)
    out = evolve(HermitianModel(random_hermitian(rng, dim)), psi, t)
    assert abs(np.linalg.norm(out) - 1) < 1e-12


@settings(max_examples=60, deadline=None)
@given(seed=_seeds, t=_times, s=_times)
def test_group_law(seed, t, s):
    rng = np.random.default_rng(seed)
    dim = int(rng.integers(2, 8))
    model = HermitianModel(random_hermitian(rng, dim))
    psi = random_state(rng, dim)
    np.testing.assert_allclose(evolve(model, evolve(model, psi, t), s), evolve(model, psi, t + s), atol=1e-11)


@settings(max_examples=60, deadline=None)
@given(seed=_seeds, t=_times)
def test_time_reversal_conjugates_amplitude(seed, t):
    rng = np.random.default_rng(seed)
    dim = int(rng.integers(2, 8))
    model = HermitianModel(random_hermitian(rng, dim))
    psi = random_state(rng, dim)
    f = amplitude_function(model, psi)
    assert abs(f(-t) - np.conj(f(t))) < 1e-12
    assert abs(f(t)) <= 1 + 1e-12


def test_rk4_oracle_converges(three_level):
    # sanity check on the oracle itself: halving dt changes little
    psi = basis_state(3, 0)
    a = rk4_evolve(three_level, psi, 3.0, dt=2e-4)
    b = rk4_evolve(three_level, psi, 3.0, dt=1e-4)
    assert np.max(np.abs(a - b)) < 1e-12
