"""Characteristic times of a model/state pair.

Zeno time from the energy spread, golden-rule rate, fitted lifetime, jump
time (both as tau_Z^2 / tau_L and as an inverse bandwidth), passage time,
and the Landau-Zener estimate in SI units.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np
from scipy import constants

from .core import HermitianModel, SurvivalCurve
from .models import ContinuumSpec, DecayModel

__all__ = [
    "ExponentialFit",
    "TimescaleReport",
    "moments",
    "zeno_time",
    "golden_rule_rate",
    "fit_lifetime",
    "jump_time_bandwidth",
    "landau_zener_jump_time",
    "first_extinction_time",
    "full_report",
]

log = logging.getLogger(__name__)

FIT_RESIDUAL_CUTOFF = 0.1
TRANSIENT_GUARD = 5.0


def moments(model: HermitianModel, psi) -> tuple[float, float]:
    """Mean energy E_psi and spread Delta H = ||(H - E_psi) psi||."""
    psi = model.check_state(psi)
    h_psi = model.matrix @ psi
    e_psi = float(np.real(np.vdot(psi, h_psi)))
    spread = float(np.linalg.norm(h_psi - e_psi * psi))
    return e_psi, spread


def zeno_time(model: HermitianModel, psi) -> float:
    """hbar / Delta H; ``inf`` for a stationary state."""
    _, spread = moments(model, psi)
    return math.inf if spread == 0 else 1.0 / spread


def golden_rule_rate(spec: ContinuumSpec) -> float:
    """2 pi rho |Phi(0)|^2 with per-level coupling Phi = phi sqrt(d omega).

    This equals 2 pi |phi(0)|^2, independent of the level spacing.
    """
    phi0 = float(np.abs(spec.coupling(0.0)))
    if not math.isfinite(phi0):
        raise ValueError("coupling profile is undefined at omega = 0")
    per_level_sq = phi0**2 * spec.spacing
    return 2 * math.pi * spec.density * per_level_sq


@dataclass(frozen=True)
class ExponentialFit:
    """log p = log(amplitude) - rate * t over `window`."""

    rate: float
    amplitude: float
    window: tuple[float, float]
    rms_residual: float
    n_points: int

    @property
    def lifetime(self) -> float:
        return math.inf if self.rate == 0 else 1.0 / self.rate

    @property
    def accepted(self) -> bool:
        return self.rate > 0 and self.rms_residual <= FIT_RESIDUAL_CUTOFF


def fit_lifetime(curve: SurvivalCurve, t_lo: float = 0.0, t_hi: float | None = None) -> ExponentialFit:
    """Least-squares line through log p(t) on [t_lo, t_hi].

    Samples with p <= 0 are dropped with a warning. Check ``fit.accepted``
    before trusting the rate: oscillating curves produce a large residual.
    """
    t = curve.times
    p = curve.probability
    if t_hi is None:
        t_hi = float(t[-1])
    if t_lo < 0 or not t_hi > t_lo:
        raise ValueError(f"bad fit window [{t_lo}, {t_hi}]")
    inside = (t >= t_lo) & (t <= t_hi)
    positive = inside & (p > 0)
    if positive.sum() < inside.sum():
        warnings.warn(f"{inside.sum() - positive.sum()} samples with p <= 0 excluded from fit", stacklevel=2)
    if positive.sum() < 2:
        raise ValueError(f"fit window [{t_lo}, {t_hi}] holds fewer than two usable samples")
    tw, lp = t[positive], np.log(p[positive])
    slope, intercept = np.polyfit(tw, lp, 1)
    resid = lp - (slope * tw + intercept)
    return ExponentialFit(
        rate=float(-slope),
        amplitude=float(math.exp(intercept)),
        window=(float(t_lo), float(t_hi)),
        rms_residual=float(np.sqrt(np.mean(resid**2))),
        n_points=int(positive.sum()),
    )


def _on_shell_index(energies: np.ndarray, e_psi: float) -> int:
    return int(np.argmin(np.abs(energies - e_psi)))


def _local_density(energies: np.ndarray, k: int) -> float:
    e = np.sort(energies)
    if e.size < 2:
        raise ValueError("need at least two continuum levels for a density of states")
    j = int(np.searchsorted(e, energies[k]))
    lo, hi = max(j - 1, 0), min(j + 1, e.size - 1)
    span = (e[hi] - e[lo]) / (hi - lo)
    if span <= 0:
        raise ValueError("degenerate continuum: density of states is infinite")
    return 1.0 / span


def jump_time_bandwidth(model: DecayModel, psi=None) -> float:
    """Inverse bandwidth form of the jump time.

    Sums rho(E)/rho(E_psi) |<E|H - E_psi|psi>|^2 / |<f|H|psi>|^2 over the
    eigenbasis |E> of the continuum block (each state counted once, so the
    rho(E) dE measure becomes a plain sum), with |f> the eigenstate nearest
    E_psi, and returns 2 pi over the result.
    """
    h = model.hamiltonian
    psi = model.initial_state() if psi is None else h.check_state(psi)
    if abs(abs(psi[0]) - 1) > 1e-12:
        raise ValueError("jump_time_bandwidth expects the undecayed state x = 1")
    e_psi, _ = moments(h, psi)
    block = h.matrix[1:, 1:]
    energies, vecs = np.linalg.eigh(block)
    vpsi = (h.matrix @ psi - e_psi * psi)[1:]
    elements = np.abs(vecs.conj().T @ vpsi) ** 2
    f = _on_shell_index(energies, e_psi)
    on_shell = elements[f]
    if on_shell <= 0:
        raise ValueError("on-shell matrix element vanishes; bandwidth form undefined")
    rho_f = _local_density(energies, f)
    total = np.sum(elements) / (rho_f * on_shell)
    return 2 * math.pi / total


def landau_zener_jump_time(mass_kg: float, wavenumber_per_m: float) -> float:
    """hbar / E_b with Bloch bandwidth E_b = hbar^2 K^2 / 2M, in seconds."""
    if not (mass_kg > 0 and wavenumber_per_m > 0):
        raise ValueError("mass and wavenumber must be positive")
    return 2 * mass_kg / (constants.hbar * wavenumber_per_m**2)


def first_extinction_time(curve: SurvivalCurve, threshold: float = 1e-6) -> float | None:
    """First sampled time at which p drops below `threshold`, if any."""
    below = np.nonzero(curve.probability < threshold)[0]
    return float(curve.times[below[0]]) if below.size else None


@dataclass(frozen=True)
class TimescaleReport:
    E_psi: float
    delta_H: float
    tau_Z: float | None
    gamma_golden: float | None
    tau_L_fit: float | None
    tau_J: float | None
    tau_P: float | None
    tau_T_equiv: float | None
    tau_J_bandwidth: float | None = None
    fit_rms_residual: float | None = None
    first_extinction: float | None = None

    @property
    def stationary(self) -> bool:
        return self.tau_Z is None

    def to_record(self) -> dict:
        return asdict(self)


def full_report(model, psi, curve: SurvivalCurve, spec: ContinuumSpec | None = None,
                guard: float = TRANSIENT_GUARD, t_hi: float | None = None) -> TimescaleReport:
    """All characteristic times for one model/state pair.

    `model` may be a DecayModel (which also enables the golden-rule and
    bandwidth entries) or a bare HermitianModel. The lifetime fit starts at
    `guard` jump times; a first pass over the whole curve supplies the jump
    time estimate that places the guard.
    """
    decay = model if isinstance(model, DecayModel) else None
    h = decay.hamiltonian if decay is not None else model
    if decay is not None and spec is None:
        spec = decay.continuum
    e_psi, spread = moments(h, psi)
    first_ext = first_extinction_time(curve)
    gamma = golden_rule_rate(spec) if spec is not None else None
    if spread == 0:
        return TimescaleReport(e_psi, 0.0, None, gamma, None, None, None, None, first_extinction=first_ext)

    tau_z = 1.0 / spread
    tau_p = math.pi * tau_z / 2
    tau_l = tau_j = resid = None
    t_end = float(curve.times[-1]) if t_hi is None else t_hi
    if t_end > curve.times[0]:
        try:
            first = fit_lifetime(curve, float(curve.times[0]), t_end)
            if first.rate > 0:
                lo = min(guard * tau_z**2 * first.rate, 0.5 * t_end)
                fit = fit_lifetime(curve, lo, t_end)
                resid = fit.rms_residual
                if fit.accepted:
                    tau_l = fit.lifetime
                    tau_j = tau_z**2 / tau_l
            else:
                resid = first.rms_residual
        except ValueError as exc:
            log.info("lifetime fit skipped: %s", exc)

    bw = None
    if decay is not None and abs(abs(np.asarray(psi)[0]) - 1) < 1e-12:
        try:
            bw = jump_time_bandwidth(decay, psi)
        except ValueError as exc:
            log.info("bandwidth jump time skipped: %s", exc)

    return TimescaleReport(
        E_psi=e_psi,
        delta_H=spread,
        tau_Z=tau_z,
        gamma_golden=gamma,
        tau_L_fit=tau_l,
        tau_J=tau_j,
        tau_P=tau_p,
        tau_T_equiv=tau_j,
        tau_J_bandwidth=bw,
        fit_rms_residual=resid,
        first_extinction=first_ext,
    )
