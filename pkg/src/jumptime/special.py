"""Matched-photon ("special state") decay and its damped-oscillator reduction."""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import curve_fit

from .core import SurvivalCurve, piecewise_evolve, piecewise_survival, survival_amplitude
from .fleming import first_orthogonal_time
from .measurement import SelfEnergyRoot, band_density_at, band_self_energy, newton_root
from .models import DecayModel, build_special_model

__all__ = [
    "SpecialRunResult",
    "run_special_experiment",
    "special_self_energy",
    "reduced_oscillator_solution",
    "memory_kernel",
    "kernel_integral",
    "kernel_half_width",
    "fit_damped_cosine",
    "write_figure_csv",
]


@dataclass(frozen=True, eq=False)
class SpecialRunResult:
    curve_special: SurvivalCurve
    curve_bare: SurvivalCurve
    crossing: float | None
    predicted_crossing: float
    frequency: float
    damping: float
    predicted_damping: float

    @property
    def bare_at_crossing(self) -> float | None:
        if self.crossing is None:
            return None
        return self.curve_bare.at(self.crossing)


def special_amplitude(base: DecayModel, t_off: float):
    """Scalar t -> x(t) for the switched special-state schedule."""
    model = build_special_model(base, t_off)
    segments = model.segments()
    psi = model.initial_state()

    def x(t: float) -> complex:
        return complex(piecewise_evolve(segments, psi, [t])[0, 0])

    return x


def fit_damped_cosine(times, x, t_max: float, tau_zeno: float) -> tuple[float, float]:
    """Fit Re x(t) = cos(W t) exp(-k t) on [0, t_max]; returns (W, k)."""
    t = np.asarray(times, dtype=float)
    keep = t <= t_max
    popt, _ = curve_fit(
        lambda s, w, k: np.cos(w * s) * np.exp(-k * s),
        t[keep],
        np.real(np.asarray(x))[keep],
        p0=(1.0 / (math.sqrt(2) * tau_zeno), 0.0),
    )
    return float(popt[0]), float(popt[1])


def run_special_experiment(base: DecayModel, t_off: float, horizon: float, num: int = 2001,
                           resolution: float = 1e-6) -> SpecialRunResult:
    """Bare and matched-photon survival on one grid, plus the zero crossing."""
    times = np.linspace(0.0, horizon, num)
    special = build_special_model(base, t_off)
    curve_special = piecewise_survival(special.segments(), special.initial_state(), times)
    curve_bare = survival_amplitude(base.hamiltonian, base.initial_state(), times)

    tau_z = base.tau_zeno
    predicted = math.sqrt(2) * math.pi * tau_z / 2
    crossing = first_orthogonal_time(special.hamiltonian, special.initial_state(), horizon,
                                     resolution, amplitude=special_amplitude(base, t_off))
    fit_end = min(crossing if crossing is not None else predicted, t_off, horizon)
    gamma = 2 * math.pi * _golden_density(base)
    try:
        freq, damp = fit_damped_cosine(times, curve_special.amplitude, fit_end, tau_z)
    except RuntimeError:
        freq = damp = math.nan
    return SpecialRunResult(curve_special, curve_bare, crossing, predicted, freq, damp, gamma / 16)


def _golden_density(base: DecayModel) -> float:
    if base.continuum is not None:
        return abs(float(base.continuum.coupling(0.0))) ** 2
    return band_density_at(base.omega, np.abs(base.phi) ** 2, 0.0)


def special_self_energy(base: DecayModel, z0: complex | None = None) -> SelfEnergyRoot:
    """Root of E = (1/2) {1/(E tau_Z^2) + Phi^dagger (E - 2 omega)^-1 Phi} near +1/(sqrt2 tau_Z).

    The doubled band 2 omega is continued below the real axis as in
    `band_self_energy`.
    """
    tau_z = base.tau_zeno
    weights = np.abs(base.phi) ** 2
    gamma = 2 * math.pi * _golden_density(base)
    if gamma * tau_z > 0.3:
        warnings.warn("Gamma tau_Z is not small; the lowest-order root estimate is unreliable", stacklevel=2)
    doubled = 2 * base.omega
    if z0 is None:
        z0 = 1 / (math.sqrt(2) * tau_z) - 1j * gamma / 16

    def rhs(e):
        s, ds = band_self_energy(e, doubled, weights)
        return 0.5 * (1 / (e * tau_z**2) + s), 0.5 * (-1 / (e**2 * tau_z**2) + ds)

    def fn(e):
        r, dr = rhs(e)
        return e - r, 1 - dr

    root, resid, its = newton_root(fn, z0, fixed_point=lambda e: rhs(e)[0])
    return SelfEnergyRoot(root, resid, its)


def reduced_oscillator_solution(tau_Z: float, gamma: float, times) -> np.ndarray:
    """x(t) = cos(t / (sqrt2 tau_Z)) exp(-gamma t / 16)."""
    if not tau_Z > 0 or gamma < 0:
        raise ValueError("need tau_Z > 0 and gamma >= 0")
    t = np.asarray(times, dtype=float)
    return np.cos(t / (math.sqrt(2) * tau_Z)) * np.exp(-gamma * t / 16)


def memory_kernel(base: DecayModel, u_grid) -> np.ndarray:
    """K(u) = Phi^dagger exp(-i omega u) Phi."""
    u = np.asarray(u_grid, dtype=float)
    if np.any(u < 0):
        raise ValueError("kernel lags must be nonnegative")
    return np.exp(-1j * np.outer(u, base.omega)) @ (np.abs(base.phi) ** 2)


def _bandwidth(base: DecayModel) -> float:
    w = np.sort(base.omega)
    if w.size < 2:
        return 0.0
    return float(w[-1] - w[0] + (w[1] - w[0]))


def kernel_integral(base: DecayModel, u_max: float | None = None, num: int = 20001) -> complex:
    """Integral of K over [0, u_max]; u_max defaults to 20 / bandwidth.

    For a wide band this approaches Gamma / 2, the weight of the delta
    approximation K(u) ~ (Gamma/2) delta(u).
    """
    if u_max is None:
        u_max = 20.0 / _bandwidth(base)
    u = np.linspace(0.0, u_max, num)
    return complex(np.trapezoid(memory_kernel(base, u), u))


def kernel_half_width(base: DecayModel, u_max: float, num: int = 4001) -> float | None:
    """First lag at which |K(u)| falls to half of K(0)."""
    u = np.linspace(0.0, u_max, num)
    k = np.abs(memory_kernel(base, u))
    below = np.nonzero(k <= 0.5 * k[0])[0]
    return float(u[below[0]]) if below.size else None


def write_figure_csv(result: SpecialRunResult, path: Path, log_path: Path | None = None) -> list[Path]:
    """Write (t, p_special, p_bare) and a copy without rows where either p <= 0."""
    path = Path(path)
    ps, pb = result.curve_special.probability, result.curve_bare.probability
    rows = list(zip(result.curve_special.times, ps, pb))
    written = [path]
    _write_rows(path, ("t", "p_special", "p_bare"), rows)
    if log_path is not None:
        _write_rows(Path(log_path), ("t", "p_special", "p_bare"), [r for r in rows if r[1] > 0 and r[2] > 0])
        written.append(Path(log_path))
    return written


def _write_rows(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([f"{v:.12g}" for v in row])
