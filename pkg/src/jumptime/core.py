"""Hermitian models, exact propagation and survival amplitudes.

Natural units throughout (hbar = 1). States are plain complex numpy vectors;
the helpers here only validate and normalize them.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "NonHermitianError",
    "DimensionError",
    "HermitianModel",
    "SpectralDecomposition",
    "SurvivalCurve",
    "as_state",
    "basis_state",
    "decompose",
    "evolve",
    "survival_amplitude",
    "piecewise_evolve",
    "piecewise_survival",
]

HERMITIAN_TOL = 1e-14
NORM_TOL = 1e-12
_CHUNK = 2**21


class NonHermitianError(ValueError):
    """Raised when a matrix handed to the propagator is not Hermitian."""

    def __init__(self, asymmetry: float):
        super().__init__(f"matrix is not Hermitian: max |H - H^dagger| = {asymmetry:.3e}")
        self.asymmetry = asymmetry


class DimensionError(ValueError):
    pass


def as_state(amplitudes, normalize: bool = False) -> np.ndarray:
    """Return `amplitudes` as a complex state vector of unit norm.

    With ``normalize=False`` the input must already have unit norm within
    1e-12; otherwise it is rescaled.
    """
    psi = np.array(amplitudes, dtype=complex).ravel()
    if psi.size == 0:
        raise DimensionError("state vector must have positive dimension")
    if not np.all(np.isfinite(psi)):
        raise ValueError("state vector has non-finite amplitudes")
    norm = np.linalg.norm(psi)
    if normalize:
        if norm == 0:
            raise ValueError("cannot normalize the zero vector")
        return psi / norm
    if abs(norm - 1.0) > NORM_TOL:
        raise ValueError(f"state is not normalized (norm = {norm!r})")
    return psi


def basis_state(dimension: int, index: int = 0) -> np.ndarray:
    psi = np.zeros(dimension, dtype=complex)
    psi[index] = 1.0
    return psi


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    """Eigenvalues (ascending) and unitary eigenvector matrix of a Hermitian H."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.conj().T

    def unitarity_error(self) -> float:
        v = self.eigenvectors
        return float(np.max(np.abs(v.conj().T @ v - np.eye(v.shape[0]))))

    def propagate(self, psi: np.ndarray, t: float) -> np.ndarray:
        coeff = self.eigenvectors.conj().T @ psi
        return self.eigenvectors @ (np.exp(-1j * self.eigenvalues * t) * coeff)

    def propagate_many(self, psi: np.ndarray, times) -> np.ndarray:
        """States at every time in `times`, shape (len(times), dimension)."""
        times = np.asarray(times, dtype=float)
        coeff = self.eigenvectors.conj().T @ psi
        phases = np.exp(-1j * np.outer(times, self.eigenvalues))
        return (phases * coeff) @ self.eigenvectors.T


@dataclass(frozen=True, eq=False)
class HermitianModel:
    """A dense Hermitian Hamiltonian.

    The stored matrix is a private read-only copy, so models can be shared
    freely between workers.
    """

    matrix: np.ndarray

    def __post_init__(self):
        h = np.array(self.matrix, dtype=complex)
        if h.ndim != 2 or h.shape[0] != h.shape[1] or h.shape[0] == 0:
            raise DimensionError(f"Hamiltonian must be a nonempty square matrix, got shape {h.shape}")
        if not np.all(np.isfinite(h)):
            raise ValueError("Hamiltonian has non-finite entries")
        asym = float(np.max(np.abs(h - h.conj().T)))
        if asym > HERMITIAN_TOL * max(1.0, float(np.max(np.abs(h)))):
            raise NonHermitianError(asym)
        h.setflags(write=False)
        object.__setattr__(self, "matrix", h)

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    @cached_property
    def spectrum(self) -> SpectralDecomposition:
        return decompose(self)

    def check_state(self, psi: np.ndarray) -> np.ndarray:
        psi = np.asarray(psi, dtype=complex)
        if psi.shape != (self.dimension,):
            raise DimensionError(
                f"state of shape {psi.shape} does not match model dimension {self.dimension}"
            )
        return psi


def decompose(model: HermitianModel) -> SpectralDecomposition:
    """Diagonalize `model`; eigenvalues come back in ascending order."""
    w, v = np.linalg.eigh(model.matrix)
    w.setflags(write=False)
    v.setflags(write=False)
    return SpectralDecomposition(w, v)


def evolve(model: HermitianModel, initial, t: float) -> np.ndarray:
    """Apply exp(-iHt) to `initial`. The full H is used, no phase removal."""
    if not np.isfinite(t):
        raise ValueError("evolution time must be finite")
    psi = model.check_state(initial)
    if t == 0:
        return psi.copy()
    return model.spectrum.propagate(psi, t)


@dataclass(frozen=True, eq=False)
class SurvivalCurve:
    """Sampled survival amplitude f(t) and probability p(t) = |f(t)|^2."""

    times: np.ndarray
    amplitude: np.ndarray

    def __post_init__(self):
        t = np.array(self.times, dtype=float)
        f = np.array(self.amplitude, dtype=complex)
        if t.ndim != 1 or t.size == 0:
            raise ValueError("survival curve needs a nonempty 1-d time grid")
        if f.shape != t.shape:
            raise DimensionError("amplitude and time arrays differ in length")
        if np.any(np.diff(t) <= 0):
            raise ValueError("survival curve times must be strictly increasing")
        t.setflags(write=False)
        f.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "amplitude", f)

    @property
    def probability(self) -> np.ndarray:
        return np.abs(self.amplitude) ** 2

    def __len__(self):
        return self.times.size

    def at(self, t: float) -> float:
        """Survival probability linearly interpolated at `t`."""
        return float(np.interp(t, self.times, self.probability))


def _phase_removed_amplitude(weights, energies, mean_energy, times) -> np.ndarray:
    # f - 1 = sum_k w_k (exp(-i e_k t) - 1), written without cancellation so
    # the short-time deviation from 1 keeps full relative precision.
    weights = weights / weights.sum()
    shifted = energies - mean_energy
    times = np.asarray(times, dtype=float)
    out = np.empty(times.size, dtype=complex)
    step = max(1, _CHUNK // max(1, energies.size))
    for lo in range(0, times.size, step):
        theta = np.outer(times[lo:lo + step], shifted)
        dev = -2.0 * np.sin(0.5 * theta) ** 2 - 1j * np.sin(theta)
        out[lo:lo + step] = 1.0 + dev @ weights
    return out


def survival_amplitude(model: HermitianModel, initial, times: Sequence[float]) -> SurvivalCurve:
    """Integrity amplitude <psi| exp(-i(H - E_psi)t) |psi> on a time grid."""
    psi = model.check_state(initial)
    times = np.asarray(times, dtype=float)
    if times.size == 0:
        raise ValueError("times must be nonempty")
    if times[0] < 0:
        raise ValueError("survival curve must start at t >= 0")
    spec = model.spectrum
    weights = np.abs(spec.eigenvectors.conj().T @ psi) ** 2
    mean_energy = float(np.real(np.vdot(psi, model.matrix @ psi)))
    amp = _phase_removed_amplitude(weights, spec.eigenvalues, mean_energy, times)
    return SurvivalCurve(times, amp)


def _segment_bounds(segments):
    bounds = [0.0]
    for _, duration in segments:
        if not duration > 0:
            raise ValueError("segment durations must be positive")
        bounds.append(bounds[-1] + duration)
    return bounds


def piecewise_evolve(segments, initial, times) -> np.ndarray:
    """States under a piecewise-constant Hamiltonian.

    `segments` is a list of ``(HermitianModel, duration)``; the last duration
    may be ``np.inf``. Each segment is propagated exactly and the state is
    handed across the boundary. Returns an array of shape (len(times), dim).
    """
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) < 0) or (times.size and times[0] < 0):
        raise ValueError("times must be nondecreasing and nonnegative")
    bounds = _segment_bounds(segments)
    psi = segments[0][0].check_state(initial)
    out = np.empty((times.size, psi.size), dtype=complex)
    start_state = psi
    for i, (model, _) in enumerate(segments):
        model.check_state(start_state)
        lo, hi = bounds[i], bounds[i + 1]
        mask = (times >= lo) & ((times < hi) if i < len(segments) - 1 else True)
        if np.any(mask):
            out[mask] = model.spectrum.propagate_many(start_state, times[mask] - lo)
        if np.isfinite(hi):
            start_state = model.spectrum.propagate(start_state, hi - lo)
    return out


def piecewise_survival(segments, initial, times, mean_energy: float | None = None) -> SurvivalCurve:
    """Survival amplitude under a piecewise-constant Hamiltonian.

    The mean-energy phase of the first segment is removed unless
    `mean_energy` is given.
    """
    psi = segments[0][0].check_state(initial)
    if mean_energy is None:
        mean_energy = float(np.real(np.vdot(psi, segments[0][0].matrix @ psi)))
    times = np.asarray(times, dtype=float)
    states = piecewise_evolve(segments, psi, times)
    amp = (states @ psi.conj()) * np.exp(1j * mean_energy * times)
    return SurvivalCurve(times, amp)


def amplitude_function(model: HermitianModel, psi) -> Callable[[float], complex]:
    """Scalar t -> f(t) for root searches."""
    psi = model.check_state(psi)
    spec = model.spectrum
    weights = np.abs(spec.eigenvectors.conj().T @ psi) ** 2
    mean_energy = float(np.real(np.vdot(psi, model.matrix @ psi)))

    def f(t: float) -> complex:
        return complex(_phase_removed_amplitude(weights, spec.eigenvalues, mean_energy, [t])[0])

    return f
