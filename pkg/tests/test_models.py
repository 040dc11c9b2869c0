import math

import numpy as np
import pytest

from jumptime.models import (
    DENSE_LIMIT,
    ContinuumSpec,
    DecayModel,
    EffectiveApparatus,
    build_apparatus_model,
    build_decay_model,
    build_special_model,
    build_two_level,
    calibrate_flat,
    theta_for_response_time,
)
from jumptime.timescales import golden_rule_rate, moments
from oracles import TAU_L, TAU_Z


def test_calibration_constructs_zeno_time(fig1):
    assert abs(fig1.tau_zeno - TAU_Z) < 1e-9
    # N |Phi|^2 = 1 / tau_Z^2 by hand
    assert fig1.n_levels * abs(fig1.phi[0]) ** 2 == pytest.approx(1 / TAU_Z**2, rel=1e-14)
    assert golden_rule_rate(fig1.continuum) == pytest.approx(1 / TAU_L, rel=1e-12)


def test_calibrated_grid_is_symmetric_with_a_resonant_level(fig1):
    omega = fig1.omega
    np.testing.assert_allclose(omega, -omega[::-1], atol=1e-15)
    assert np.min(np.abs(omega)) < 1e-15
    assert np.allclose(np.diff(omega), fig1.continuum.spacing)


def test_golden_rule_for_hand_built_band():
    # 2 pi |phi0|^2 independent of the discretization
    for n in (11, 101, 401):
        spec = ContinuumSpec(n, -1.0, 1.0, phi0=0.05)
        assert golden_rule_rate(spec) == pytest.approx(2 * math.pi * 0.05**2, rel=1e-12)


def test_continuum_validation():
    with pytest.raises(ValueError):
        ContinuumSpec(1, -1, 1, 0.1)
    with pytest.raises(ValueError):
        ContinuumSpec(-5, -1, 1, 0.1)
    with pytest.raises(ValueError):
        ContinuumSpec(10, 0.1, 1, 0.1)
    with pytest.raises(ValueError):
        ContinuumSpec(10, -1, 1, 0.1, profile="cauchy")
    with pytest.raises(ValueError):
        ContinuumSpec(10, -1, 1, 0.1, profile="gaussian")
    with pytest.raises(ValueError):
        build_decay_model(ContinuumSpec(10, -1, 1, 0.0))
    with pytest.raises(ValueError):
        calibrate_flat(1, 48, 393)


@pytest.mark.parametrize("profile,expected", [
    ("lorentzian", 1 / math.sqrt(2)),
    ("gaussian", math.exp(-0.25)),
])
def test_coupling_profiles(profile, expected):
    spec = ContinuumSpec(21, -2.0, 2.0, phi0=0.3, profile=profile, width=0.5)
    assert float(spec.coupling(0.5)) == pytest.approx(0.3 * expected)
    assert float(spec.coupling(0.0)) == pytest.approx(0.3)


def test_decay_matrix_layout(fig1):
    h = fig1.matrix()
    assert h.shape == (102, 102)
    assert h[0, 0] == 0
    np.testing.assert_array_equal(h[1:, 0], fig1.phi)
    np.testing.assert_array_equal(np.diag(h)[1:], fig1.omega)
    off = h[1:, 1:] - np.diag(fig1.omega)
    assert not off.any()


def test_decay_model_validation():
    with pytest.raises(ValueError):
        DecayModel(np.ones(3), np.ones(2))


def test_recurrence_time(fig1):
    assert fig1.recurrence_time() == pytest.approx(2 * math.pi / fig1.continuum.spacing)


def test_two_level_zeno_time_is_inverse_coupling():
    h = build_two_level(0.25)
    _, spread = moments(h, np.array([1, 0], dtype=complex))
    assert spread == pytest.approx(0.25)
    with pytest.raises(ValueError):
        build_two_level(0.0)


def test_effective_apparatus_shift(fig1):
    eff = EffectiveApparatus(fig1, tau_R=2.0, delta_E=0.1)
    h = eff.matrix()
    np.testing.assert_allclose(np.diag(h)[1:], fig1.omega + 0.1 - 0.25j)
    assert h[0, 0] == 0
    assert eff.gamma_theta == 0.5
    with pytest.raises(ValueError):
        EffectiveApparatus(fig1, 0.0)


def _small_base(n=5):
    return build_decay_model(ContinuumSpec(n, -0.4, 0.4, phi0=0.1))


def test_apparatus_layout_and_rates():
    base = _small_base()
    theta = theta_for_response_time(3.0, 41, 2.0)
    app = build_apparatus_model(base, theta, 5 * 41, 2.0)
    assert app.levels_per_channel == 41
    assert app.dimension == 1 + 5 + 205
    assert app.tau_R == pytest.approx(3.0)
    # rho_W = (levels - 1) / span
    assert app.gamma_theta == pytest.approx(2 * math.pi * 20.0 * theta**2)
    # symmetric ladder: principal-value shift vanishes
    assert abs(app.delta_E) < 1e-12
    h = app.hamiltonian.matrix
    # level 1 does not touch the detector; each y_k touches only its own ladder
    assert not h[0, 6:].any()
    block = h[6:, 1:6]
    assert np.count_nonzero(block) == 205
    assert np.all(np.count_nonzero(block, axis=1) == 1)
    np.testing.assert_array_equal(h, app.sparse_matrix().toarray())
    assert app.effective().tau_R == pytest.approx(3.0)


def test_apparatus_validation():
    base = _small_base()
    with pytest.raises(ValueError):
        build_apparatus_model(base, 0.1, 12, 1.0)
    with pytest.raises(ValueError):
        build_apparatus_model(base, 0.1, 10, -1.0)
    with pytest.raises(ValueError, match="M >= 2N"):
        build_apparatus_model(base, 0.1, 5, 1.0)
    assert build_apparatus_model(base, 0.1, 10, 1.0).levels_per_channel == 2


def test_apparatus_dense_limit(fig1):
    app = build_apparatus_model(fig1, 0.01, fig1.n_levels * 50, 2.0)
    assert app.dimension > DENSE_LIMIT
    with pytest.raises(MemoryError):
        app.hamiltonian
    assert app.sparse_matrix().shape == (app.dimension, app.dimension)


def test_special_model_blocks():
    base = _small_base()
    model = build_special_model(base, t_off=7.0)
    n = base.n_levels
    h = model.matrix(enhanced=True)
    assert h.shape == (2 * n + 1, 2 * n + 1)
    np.testing.assert_array_equal(h[: n + 1, : n + 1], base.matrix())
    np.testing.assert_array_equal(np.diag(h[1 : n + 1, n + 1 :]), base.omega)
    np.testing.assert_array_equal(np.diag(h)[n + 1 :], base.omega)
    assert not h[0, n + 1 :].any()
    post = model.matrix(enhanced=False)
    assert not post[n + 1 :, :].any()
    segs = model.segments()
    assert segs[0][1] == 7.0 and math.isinf(segs[1][1])
    assert len(build_special_model(base).segments()) == 1
    with pytest.raises(ValueError):
        build_special_model(base, t_off=0.0)
