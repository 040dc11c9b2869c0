"""Orthogonality-time bound: evolute decomposition, Ersak identity, passage time."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import minimize_scalar

from .core import HermitianModel, amplitude_function
from .timescales import moments

__all__ = [
    "OrthogonalDecomposition",
    "BoundReport",
    "BoundViolation",
    "decompose_evolute",
    "ersak_residual",
    "fleming_bound_report",
    "first_orthogonal_time",
    "first_zero",
]

ZERO_THRESHOLD = 1e-6
VIOLATION_TOL = 1e-9


class BoundViolation(AssertionError):
    """A state became orthogonal faster than the energy spread allows."""


@dataclass(frozen=True, eq=False)
class OrthogonalDecomposition:
    """U(t)|psi> = f |psi> + |phi_t> with <psi|phi_t> = 0."""

    f: complex
    phi_t: np.ndarray

    @property
    def residual_norm(self) -> float:
        return float(np.linalg.norm(self.phi_t))


def _evolutes(model: HermitianModel, psi, times) -> tuple[np.ndarray, np.ndarray]:
    """Phase-removed evolutes U(t)psi for all `times` and psi itself."""
    psi = model.check_state(psi)
    e_psi, _ = moments(model, psi)
    times = np.atleast_1d(np.asarray(times, dtype=float))
    states = model.spectrum.propagate_many(psi, times) * np.exp(1j * e_psi * times)[:, None]
    states[times == 0] = psi
    return states, psi


def _split(states, psi):
    f = states @ psi.conj()
    phi = states - np.outer(f, psi)
    # one Gram-Schmidt pass cleans the rounding left in <psi|phi>
    f = f + phi @ psi.conj()
    phi = states - np.outer(f, psi)
    return f, phi


def decompose_evolute(model: HermitianModel, psi, t: float) -> OrthogonalDecomposition:
    if t == 0:
        psi = model.check_state(psi)
        return OrthogonalDecomposition(1.0 + 0j, np.zeros_like(psi))
    states, psi = _evolutes(model, psi, [t])
    f, phi = _split(states, psi)
    return OrthogonalDecomposition(complex(f[0]), phi[0])


def ersak_residual(model: HermitianModel, psi, t: float, t_prime: float) -> float:
    """|f(t + t') - f(t) f(t') - <phi_{-t'}|phi_t>|."""
    states, psi = _evolutes(model, psi, [t, t_prime, -t_prime, t + t_prime])
    f, phi = _split(states, psi)
    if t_prime == 0:
        phi[2] = 0.0
    if t == 0:
        phi[0] = 0.0
    return float(abs(f[3] - f[0] * f[1] - np.vdot(phi[2], phi[0])))


@dataclass(frozen=True, eq=False)
class BoundReport:
    """Angle theta = arccos|f| against Delta H t on a time grid."""

    times: np.ndarray
    g: np.ndarray
    theta: np.ndarray
    bound: np.ndarray
    trivial: bool = False

    @property
    def max_violation(self) -> float:
        if self.times.size == 0:
            return 0.0
        return float(np.max(self.theta - self.bound))

    @property
    def violated(self) -> bool:
        return self.max_violation > VIOLATION_TOL

    def rows(self):
        return zip(self.times, self.g, self.theta, self.bound)


def fleming_bound_report(model: HermitianModel, psi, times, truncate: bool = True,
                         strict: bool = False) -> BoundReport:
    """Compare theta(t) with Delta H t.

    theta is computed as atan2(||phi_t||, |f|), which stays accurate where
    |f| is close to 1. With ``truncate=True`` the report stops at the first
    zero of |f|, where the bound is informative. With ``truncate=False``
    every time is kept; beyond that zero theta <= pi/2 <= Delta H t holds
    automatically if the zero came no earlier than the passage time. With
    ``strict=True`` a violation raises `BoundViolation`.
    """
    times = np.asarray(times, dtype=float)
    if np.any(times < 0):
        raise ValueError("bound report needs nonnegative times")
    _, spread = moments(model, psi)
    if spread == 0:
        return BoundReport(times, np.ones_like(times), np.zeros_like(times), np.zeros_like(times), trivial=True)
    states, psi_c = _evolutes(model, psi, times)
    f, phi = _split(states, psi_c)
    g = np.abs(f)
    theta = np.arctan2(np.linalg.norm(phi, axis=1), g)
    if truncate and times.size:
        t_max = float(times.max())
        zero = first_zero(amplitude_function(model, psi_c), t_max, 1e-9, step=_scan_step(spread, t_max))
        if zero is not None:
            keep = times <= zero
            times, g, theta = times[keep], g[keep], theta[keep]
    report = BoundReport(times, g, theta, spread * times)
    if strict and report.violated:
        raise BoundViolation(f"theta exceeds Delta H t by {report.max_violation:.3e}")
    return report


def _scan_step(spread: float, t_max: float) -> float:
    return min(1.0 / (16 * spread), t_max / 64) if t_max > 0 else 1.0


def first_zero(amplitude: Callable[[float], complex], t_max: float, resolution: float,
               step: float, t_start: float = 0.0, threshold: float = ZERO_THRESHOLD) -> float | None:
    """First t in (t_start, t_max] where |amplitude(t)| < threshold.

    Local minima of |amplitude| on a grid of spacing `step` are refined by a
    bounded scalar search down to `resolution`, then polished with a few
    Gauss-Newton steps on the complex amplitude (see `_polish`).
    """
    if not resolution > 0:
        raise ValueError("resolution must be positive")
    if t_max <= t_start:
        return None
    n = max(int(math.ceil((t_max - t_start) / step)), 2)
    grid = np.linspace(t_start, t_max, n + 1)
    mag = np.array([abs(amplitude(t)) for t in grid])
    for i in range(1, n + 1):
        left = mag[i - 1]
        right = mag[i + 1] if i < n else math.inf
        if not (mag[i] <= left and mag[i] <= right):
            continue
        lo, hi = grid[i - 1], grid[min(i + 1, n)]
        res = minimize_scalar(lambda t: abs(amplitude(t)), bounds=(lo, hi), method="bounded",
                              options={"xatol": min(resolution, 1e-9 * max(1.0, hi))})
        t, val = _polish(amplitude, float(res.x), float(res.fun), lo, hi, step)
        if val < threshold:
            return t
    return None


def _polish(amplitude, t, val, lo, hi, step, sweeps=6):
    """Gauss-Newton steps on the complex amplitude toward the minimum of |f|.

    Bounded Brent stops at a relative tolerance of about sqrt(eps) * t; near
    a zero f is close to linear, so t - Re(f conj f') / |f'|^2 lands on the
    minimizer to rounding accuracy.
    """
    h = 1e-4 * step
    for _ in range(sweeps):
        f = amplitude(t)
        df = (amplitude(t + h) - amplitude(t - h)) / (2 * h)
        if df == 0:
            break
        t_new = min(max(t - (f * np.conj(df)).real / abs(df) ** 2, lo), hi)
        new_val = abs(amplitude(t_new))
        if new_val >= val:
            break
        t, val = t_new, new_val
    return float(t), float(val)


def first_orthogonal_time(model: HermitianModel, psi, t_max: float, resolution: float = 1e-6,
                          amplitude: Callable[[float], complex] | None = None) -> float | None:
    """Smallest t <= t_max with |f(t)| < 1e-6, or None.

    `amplitude` overrides the time-independent f(t) of `model` (used for
    piecewise schedules whose first segment is `model`). A zero found
    earlier than the passage time pi/(2 Delta H) raises `BoundViolation`.
    """
    _, spread = moments(model, psi)
    if spread == 0:
        return None
    if amplitude is None:
        amplitude = amplitude_function(model, psi)
    t = first_zero(amplitude, t_max, resolution, step=_scan_step(spread, t_max))
    if t is not None and t < math.pi / (2 * spread) - resolution:
        raise BoundViolation(f"orthogonal at t={t} before the passage time {math.pi / (2 * spread)}")
    return t
