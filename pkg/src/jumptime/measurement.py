"""Pulsed and continuous observation of a decaying level.

Pulsed: ideal projections onto the initial state at fixed intervals.
Continuous: an explicit detector (full three-block model) or its reduction
to a complex shift of the intermediate levels. Both are compared with the
complex pole of the resolvent.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.sparse.linalg import expm_multiply

from .core import HermitianModel, SurvivalCurve, as_state, survival_amplitude
from .models import DENSE_LIMIT, ApparatusModel, DecayModel, EffectiveApparatus
from .timescales import TRANSIENT_GUARD, fit_lifetime, jump_time_bandwidth

__all__ = [
    "PulsedSchedule",
    "SelfEnergyRoot",
    "SelfEnergyConvergenceError",
    "EquivalenceResult",
    "SweepRow",
    "pulsed_survival",
    "effective_rate_pulsed",
    "continuous_survival",
    "continuous_rate",
    "band_self_energy",
    "band_density_at",
    "solve_self_energy",
    "newton_root",
    "equivalence_check",
    "rate_horizon",
]

NEWTON_TOL = 1e-12
NEWTON_MAX_ITER = 200


@dataclass(frozen=True)
class PulsedSchedule:
    tau_PM: float
    horizon: float

    def __post_init__(self):
        if not self.tau_PM > 0:
            raise ValueError("tau_PM must be positive")
        if self.tau_PM > self.horizon:
            raise ValueError(f"tau_PM={self.tau_PM} exceeds the horizon {self.horizon}")

    @property
    def n_pulses(self) -> int:
        return int(math.floor(self.horizon / self.tau_PM * (1 + 1e-12)))


def pulsed_survival(model: HermitianModel, psi, schedule: PulsedSchedule) -> SurvivalCurve:
    """Survival under projections onto `psi` every tau_PM.

    After each interval the state is projected onto psi without
    renormalizing, so amplitudes multiply: f(n tau_PM) = f(tau_PM)^n.
    Samples are taken right after each projection.
    """
    psi = as_state(model.check_state(psi))
    e_psi = float(np.real(np.vdot(psi, model.matrix @ psi)))
    spec = model.spectrum
    step = spec.propagate(psi, schedule.tau_PM)
    kept = np.vdot(psi, step) * np.exp(1j * e_psi * schedule.tau_PM)
    n = schedule.n_pulses
    amps = np.empty(n + 1, dtype=complex)
    amps[0] = 1.0
    for i in range(1, n + 1):
        amps[i] = amps[i - 1] * kept
    return SurvivalCurve(schedule.tau_PM * np.arange(n + 1), amps)


def effective_rate_pulsed(curve: SurvivalCurve) -> float:
    """Exponential rate of the stroboscopic samples of a pulsed run."""
    fit = fit_lifetime(curve, float(curve.times[0]), float(curve.times[-1]))
    return fit.rate


def _effective_amplitude(model: EffectiveApparatus, times) -> np.ndarray:
    a = -1j * model.matrix()
    lam, right = np.linalg.eig(a)
    left = np.linalg.solve(right, np.eye(right.shape[0]))
    recon = (right * lam) @ left
    if np.max(np.abs(recon - a)) > 1e-9 * max(1.0, np.max(np.abs(a))):
        # Nearly defective: fall back to direct propagation.
        psi = np.zeros(a.shape[0], dtype=complex)
        psi[0] = 1.0
        return _sparse_amplitude(a, psi, times)
    coeff = right[0, :] * left[:, 0]
    return np.exp(np.outer(times, lam)) @ coeff


def _sparse_amplitude(a, psi, times) -> np.ndarray:
    """<psi| exp(a t) |psi> via the action of the exponential (scipy)."""
    times = np.asarray(times, dtype=float)
    out = np.empty(times.size, dtype=complex)
    start = psi if times[0] == 0 else expm_multiply(a * times[0], psi)
    if times.size == 1:
        out[0] = np.vdot(psi, start)
        return out
    dt = np.diff(times)
    if np.allclose(dt, dt[0], rtol=1e-10, atol=0):
        states = expm_multiply(a, start, start=0.0, stop=times[-1] - times[0],
                               num=times.size, endpoint=True)
        return states @ psi.conj()
    state = start
    out[0] = np.vdot(psi, state)
    for i, h in enumerate(dt, start=1):
        state = expm_multiply(a * h, state)
        out[i] = np.vdot(psi, state)
    return out


def continuous_survival(apparatus: ApparatusModel | EffectiveApparatus, times, psi=None) -> SurvivalCurve:
    """Survival of level 1 under continuous monitoring.

    The effective form propagates the (1+N) non-Hermitian matrix, so the
    norm leaks into the detector. The full form is diagonalized when it is
    small enough for dense storage and otherwise propagated with the sparse
    action of exp(-iHt).
    """
    times = np.asarray(times, dtype=float)
    if times.size == 0 or times[0] < 0 or np.any(np.diff(times) <= 0):
        raise ValueError("times must be nonempty, nonnegative and increasing")
    dim = apparatus.dimension
    if psi is not None:
        psi = np.asarray(psi, dtype=complex)
        if psi.shape != (dim,):
            raise ValueError(f"state of shape {psi.shape} does not match apparatus dimension {dim}")
        if abs(abs(psi[0]) - 1) > 1e-12:
            raise ValueError("continuous survival starts from the undecayed state x = 1")
    if isinstance(apparatus, EffectiveApparatus):
        return SurvivalCurve(times, _effective_amplitude(apparatus, times))
    if dim <= DENSE_LIMIT:
        return survival_amplitude(apparatus.hamiltonian, apparatus.initial_state(), times)
    a = (-1j * apparatus.sparse_matrix()).tocsr()
    return SurvivalCurve(times, _sparse_amplitude(a, apparatus.initial_state(), times))


def rate_horizon(model: DecayModel, fraction: float = 0.75) -> float:
    """Latest time safely before the discrete continuum revives."""
    return fraction * model.recurrence_time()


def continuous_rate(apparatus, times=None, t_lo: float | None = None) -> float:
    """Fitted decay rate of level 1 under `apparatus`.

    The fit skips the first `TRANSIENT_GUARD` jump times of the bare model.
    """
    base = apparatus.base
    if times is None:
        times = np.linspace(0.0, rate_horizon(base), 181)
    if t_lo is None:
        t_lo = TRANSIENT_GUARD * jump_time_bandwidth(base)
    curve = continuous_survival(apparatus, times)
    return fit_lifetime(curve, t_lo, float(curve.times[-1])).rate


# --- resolvent poles ------------------------------------------------------


class SelfEnergyConvergenceError(RuntimeError):
    def __init__(self, residual: float, iterations: int):
        super().__init__(f"self-energy root did not converge: residual {residual:.3e} after {iterations} steps")
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class SelfEnergyRoot:
    z: complex
    residual: float
    iterations: int

    @property
    def energy(self) -> float:
        return self.z.real

    @property
    def rate(self) -> float:
        """Decay rate -2 Im z."""
        return -2.0 * self.z.imag


def _bins(omega: np.ndarray):
    edges = np.empty(omega.size + 1)
    edges[1:-1] = 0.5 * (omega[1:] + omega[:-1])
    edges[0] = omega[0] - (edges[1] - omega[0])
    edges[-1] = omega[-1] + (omega[-1] - edges[-2])
    return edges[:-1], edges[1:]


def band_self_energy(z: complex, omega, weights) -> tuple[complex, complex]:
    """Self-energy of a discretized band and its derivative at `z`.

    Each level k is smeared over its grid cell with constant density
    weights_k / width_k. The integral sum_k g_k log((z - l_k)/(z - r_k)) is
    the resolvent seen from the upper half-plane; below the real axis the
    continuation adds -2 pi i g(z) inside the band, which is the
    P(1/x) -/+ i pi delta(x) prescription carried off the axis. A degenerate
    grid (all levels equal) falls back to the plain pole sum.
    """
    omega = np.asarray(omega, dtype=float)
    weights = np.asarray(weights, dtype=float)
    order = np.argsort(omega)
    omega, weights = omega[order], weights[order]
    if omega.size < 2 or omega[-1] == omega[0]:
        d = z - omega
        return complex(np.sum(weights / d)), complex(-np.sum(weights / d**2))
    lo, hi = _bins(omega)
    g = weights / (hi - lo)
    sigma = np.sum(g * (np.log(z - lo) - np.log(z - hi)))
    dsigma = np.sum(g * (1.0 / (z - lo) - 1.0 / (z - hi)))
    if z.imag < 0:
        inside = (lo <= z.real) & (z.real < hi)
        sigma -= 2j * math.pi * np.sum(g[inside])
    return complex(sigma), complex(dsigma)


def band_density_at(omega, weights, energy: float) -> float:
    omega = np.asarray(omega, dtype=float)
    order = np.argsort(omega)
    omega, weights = omega[order], np.asarray(weights, dtype=float)[order]
    if omega.size < 2 or omega[-1] == omega[0]:
        return 0.0
    lo, hi = _bins(omega)
    inside = (lo <= energy) & (energy < hi)
    return float(np.sum(weights[inside] / (hi - lo)[inside]))


def newton_root(fn: Callable[[complex], tuple[complex, complex]], z0: complex,
                fixed_point: Callable[[complex], complex] | None = None,
                tol: float = NEWTON_TOL, max_iter: int = NEWTON_MAX_ITER) -> tuple[complex, float, int]:
    """Newton iteration on F(z) = 0 with a damped fixed-point fallback.

    `fn` returns (F(z), F'(z)); `fixed_point` is the map z -> z - F(z)
    written in its natural form. Returns (root, |F(root)|, iterations).
    """
    z = complex(z0)
    it = 0
    for it in range(1, max_iter + 1):
        val, der = fn(z)
        if not np.isfinite(val) or der == 0 or not np.isfinite(der):
            break
        if abs(val) < tol:
            return z, abs(val), it
        z = z - val / der
    val, _ = fn(z)
    if np.isfinite(val) and abs(val) < tol:
        return z, abs(val), it
    if fixed_point is None:
        raise SelfEnergyConvergenceError(abs(val) if np.isfinite(val) else math.inf, it)
    z = complex(z0)
    for k in range(1, max_iter + 1):
        z = z + 0.5 * (fixed_point(z) - z)
        val, _ = fn(z)
        if abs(val) < tol:
            return z, abs(val), it + k
    raise SelfEnergyConvergenceError(abs(val), it + max_iter)


def _pole_sum(z, omega, weights, shift):
    d = z - omega - shift
    return complex(np.sum(weights / d)), complex(-np.sum(weights / d**2))


def solve_self_energy(model, z0: complex | None = None) -> SelfEnergyRoot:
    """Complex pole z = Sigma(z) of the undecayed-level resolvent.

    For a bare DecayModel Sigma is the continued band self-energy
    (`band_self_energy`). With an apparatus the intermediate levels are
    shifted by delta_E - i/(2 tau_R) and Sigma is the plain pole sum.
    Newton starts from -i Gamma_golden / 2 unless `z0` is given.
    """
    if isinstance(model, ApparatusModel):
        model = model.effective()
    if isinstance(model, EffectiveApparatus):
        base = model.base
        shift = model.delta_E - 0.5j / model.tau_R

        def sigma(z):
            return _pole_sum(z, base.omega, np.abs(base.phi) ** 2, shift)
    elif isinstance(model, DecayModel):
        base = model

        def sigma(z):
            return band_self_energy(z, base.omega, np.abs(base.phi) ** 2)
    else:
        raise TypeError(f"cannot solve the self-energy of {type(model).__name__}")

    weights = np.abs(base.phi) ** 2
    if z0 is None:
        z0 = -0.5j * 2 * math.pi * band_density_at(base.omega, weights, 0.0)

    def fn(z):
        s, ds = sigma(z)
        return z - s, 1.0 - ds

    root, resid, its = newton_root(fn, z0, fixed_point=lambda z: sigma(z)[0])
    if root.imag > 1e-14:
        raise SelfEnergyConvergenceError(resid, its)
    return SelfEnergyRoot(root, resid, its)


# --- comparisons ------------------------------------------------------------


@dataclass(frozen=True)
class EquivalenceResult:
    tau_R: float
    rate_continuous: float
    rate_pulsed: float

    @property
    def ratio(self) -> float:
        return self.rate_continuous / self.rate_pulsed


def equivalence_check(model: DecayModel, tau_R: float, backend: str = "effective",
                      apparatus: ApparatusModel | None = None, times=None) -> EquivalenceResult:
    """Continuous monitoring at tau_R against projections every 4 tau_R.

    ``backend="full"`` needs an explicit `apparatus` built around `model`.
    """
    if tau_R > model.tau_zeno / 5:
        warnings.warn("tau_R > tau_Z/5: outside the regime where the factor 4 is derived", stacklevel=2)
    if backend == "effective":
        app = EffectiveApparatus(model, tau_R)
    elif backend == "full":
        if apparatus is None:
            raise ValueError("full backend needs an apparatus model")
        app = apparatus
    else:
        raise ValueError(f"unknown backend {backend!r}")
    if times is None:
        times = np.linspace(0.0, rate_horizon(model), 181)
    rate_c = continuous_rate(app, times)
    pulsed = pulsed_survival(model.hamiltonian, model.initial_state(),
                             PulsedSchedule(4 * tau_R, float(times[-1])))
    return EquivalenceResult(tau_R, rate_c, effective_rate_pulsed(pulsed))


@dataclass(frozen=True)
class SweepRow:
    parameter: float
    fitted_rate: float
    predicted_rate: float

    @property
    def ratio(self) -> float:
        return self.fitted_rate / self.predicted_rate
