import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jumptime.core import HermitianModel, basis_state
from jumptime.fleming import (
    BoundViolation,
    decompose_evolute,
    ersak_residual,
    first_orthogonal_time,
    first_zero,
    fleming_bound_report,
)
from jumptime.models import build_two_level
from oracles import expm_amplitude, random_hermitian, random_state

_seeds = st.integers(min_value=0, max_value=2**32 - 1)


def test_decomposition_is_orthogonal(rng):
    h = random_hermitian(rng, 6)
    psi = random_state(rng, 6)
    dec = decompose_evolute(HermitianModel(h), psi, 1.7)
    assert abs(np.vdot(psi, dec.phi_t)) < 1e-14
    assert abs(dec.f) ** 2 + dec.residual_norm**2 == pytest.approx(1.0, abs=1e-13)
    assert abs(dec.f - expm_amplitude(h, psi, 1.7)) < 1e-12
    zero = decompose_evolute(HermitianModel(h), psi, 0.0)
    assert zero.f == 1 and zero.residual_norm == 0


@settings(max_examples=100, deadline=None)
@given(seed=_seeds)
def test_random_models_respect_bound(seed):
    rng = np.random.default_rng(seed)
    dim = int(rng.integers(2, 9))
    model = HermitianModel(random_hermitian(rng, dim))
    psi = random_state(rng, dim)
    times = np.linspace(0, 10, 200)
    report = fleming_bound_report(model, psi, times, truncate=False)
    assert report.max_violation <= 1e-9


@settings(max_examples=100, deadline=None)
@given(seed=_seeds, t=st.floats(-10, 10), tp=st.floats(-10, 10))
def test_ersak_identity(seed, t, tp):
    rng = np.random.default_rng(seed)
    dim = int(rng.integers(2, 9))
    model = HermitianModel(random_hermitian(rng, dim))
    assert ersak_residual(model, random_state(rng, dim), t, tp) < 1e-9


def test_ersak_at_zero_shift(rng):
    h = HermitianModel(random_hermitian(rng, 4))
    psi = random_state(rng, 4)
    assert ersak_residual(h, psi, 2.0, 0.0) < 1e-14
    assert ersak_residual(h, psi, 0.0, 2.0) < 1e-14


@pytest.mark.parametrize("alpha_sq", [0.3, 1.0, 2.5])
def test_two_level_saturates_bound(alpha_sq):
    model = build_two_level(alpha_sq)
    psi = basis_state(2)
    tau_p = math.pi / (2 * alpha_sq)
    times = np.linspace(0, tau_p, 101)
    report = fleming_bound_report(model, psi, times)
    assert np.max(np.abs(report.theta - report.bound)) < 1e-9
    assert first_orthogonal_time(model, psi, 3 * tau_p, 1e-9) == pytest.approx(tau_p, abs=1e-8)


def test_two_level_over_several_periods():
    model = build_two_level(1.0)
    times = np.linspace(0, 3 * math.pi, 301)
    full = fleming_bound_report(model, basis_state(2), times, truncate=False)
    assert full.times.size == 301 and not full.violated
    # theta folds back to 0 where |f| returns to 1
    assert full.theta[100] == pytest.approx(0.0, abs=1e-12)
    truncated = fleming_bound_report(model, basis_state(2), times)
    assert truncated.times[-1] <= math.pi / 2 + 1e-6


def test_stationary_state_is_trivial():
    report = fleming_bound_report(HermitianModel(np.diag([0.0, 1.0])), basis_state(2), [0.0, 1.0])
    assert report.trivial and not report.violated
    assert first_orthogonal_time(HermitianModel(np.diag([0.0, 1.0])), basis_state(2), 10.0) is None


def test_report_rejects_negative_times():
    with pytest.raises(ValueError):
        fleming_bound_report(build_two_level(1.0), basis_state(2), [-1.0, 0.0])


def test_decay_model_never_orthogonal_before_lifetime(fig1):
    assert first_orthogonal_time(fig1.hamiltonian, fig1.initial_state(), 393.0) is None


def test_first_zero_refines_minimum():
    t0 = 1.2345678
    z = first_zero(lambda t: t - t0, 5.0, 1e-10, step=0.1)
    assert z == pytest.approx(t0, abs=1e-8)
    assert first_zero(lambda t: 1.0 + t, 5.0, 1e-10, step=0.1) is None
    assert first_zero(lambda t: t, 0.0, 1e-10, step=0.1) is None
    with pytest.raises(ValueError):
        first_zero(lambda t: t, 1.0, 0.0, step=0.1)


def test_premature_zero_raises():
    model = build_two_level(1.0)
    with pytest.raises(BoundViolation):
        first_orthogonal_time(model, basis_state(2), 5.0, amplitude=lambda t: complex(t - 0.5))


def test_strict_report_raises_on_violation(monkeypatch):
    import jumptime.fleming as fl

    model = build_two_level(1.0)
    real = fl.moments
    # understate the spread so that the true angle outruns the claimed bound
    monkeypatch.setattr(fl, "moments", lambda m, p: (real(m, p)[0], 0.5 * real(m, p)[1]))
    with pytest.raises(BoundViolation):
        fleming_bound_report(model, basis_state(2), np.linspace(0, 1, 11), strict=True)
