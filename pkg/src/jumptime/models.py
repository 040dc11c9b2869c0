"""Builders for the decay, apparatus, special-state and two-level Hamiltonians."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .core import HermitianModel, basis_state

__all__ = [
    "PROFILES",
    "ContinuumSpec",
    "DecayModel",
    "ApparatusModel",
    "EffectiveApparatus",
    "SpecialStateModel",
    "build_decay_model",
    "build_apparatus_model",
    "build_special_model",
    "build_two_level",
    "calibrate_flat",
    "figure1_spec",
    "theta_for_response_time",
]

PROFILES = ("flat", "lorentzian", "gaussian")

# Above this dimension an apparatus model is propagated through its sparse
# matrix only; dense assembly is refused.
DENSE_LIMIT = 4000


@dataclass(frozen=True)
class ContinuumSpec:
    """Uniform discretization of a decay continuum.

    The coupling profile is phi(w) = phi0 * s(w) with s(0) = 1:

    * flat:       s = 1
    * lorentzian: s = 1 / sqrt(1 + (w/width)^2)   (|phi|^2 is Lorentzian)
    * gaussian:   s = exp(-w^2 / (4 width^2))     (|phi|^2 has std `width`)
    """

    n_levels: int
    omega_min: float
    omega_max: float
    phi0: float
    profile: str = "flat"
    width: float | None = None

    def __post_init__(self):
        if int(self.n_levels) != self.n_levels or self.n_levels < 2:
            raise ValueError(f"continuum needs at least 2 levels, got N={self.n_levels}")
        if not (self.omega_min < 0 < self.omega_max):
            raise ValueError(
                "band must straddle the undecayed level at energy 0: "
                f"omega_min={self.omega_min}, omega_max={self.omega_max}"
            )
        if not math.isfinite(self.omega_max - self.omega_min):
            raise ValueError("band edges must be finite")
        if self.profile not in PROFILES:
            raise ValueError(f"unknown coupling profile {self.profile!r}; choose from {PROFILES}")
        if self.profile != "flat" and not (self.width is not None and self.width > 0):
            raise ValueError(f"profile {self.profile!r} needs a positive width")
        if not math.isfinite(self.phi0):
            raise ValueError("coupling scale must be finite")

    @property
    def spacing(self) -> float:
        return (self.omega_max - self.omega_min) / (self.n_levels - 1)

    @property
    def density(self) -> float:
        """Density of states (N - 1) / (omega_max - omega_min)."""
        return 1.0 / self.spacing

    def grid(self) -> np.ndarray:
        return np.linspace(self.omega_min, self.omega_max, self.n_levels)

    def coupling(self, omega) -> np.ndarray:
        """Continuum coupling phi(omega)."""
        w = np.asarray(omega, dtype=float)
        if self.profile == "flat":
            s = np.ones_like(w)
        elif self.profile == "lorentzian":
            s = 1.0 / np.sqrt(1.0 + (w / self.width) ** 2)
        else:
            s = np.exp(-(w**2) / (4.0 * self.width**2))
        return self.phi0 * s


@dataclass(frozen=True, eq=False)
class DecayModel:
    """Undecayed level (energy 0) coupled to N discrete continuum levels.

    H = [[0, Phi^dagger], [Phi, diag(omega)]], basis order (x, y_1..y_N).
    """

    phi: np.ndarray
    omega: np.ndarray
    continuum: ContinuumSpec | None = None

    def __post_init__(self):
        phi = np.array(self.phi, dtype=complex).ravel()
        omega = np.array(self.omega, dtype=float).ravel()
        if phi.shape != omega.shape or phi.size == 0:
            raise ValueError("Phi and omega must be nonempty and of equal length")
        phi.setflags(write=False)
        omega.setflags(write=False)
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "omega", omega)

    @property
    def n_levels(self) -> int:
        return self.phi.size

    @property
    def dimension(self) -> int:
        return 1 + self.n_levels

    @property
    def coupling_norm_sq(self) -> float:
        return float(np.real(np.vdot(self.phi, self.phi)))

    @property
    def tau_zeno(self) -> float:
        """1 / sqrt(Phi^dagger Phi) for the state x = 1."""
        return 1.0 / math.sqrt(self.coupling_norm_sq)

    def matrix(self) -> np.ndarray:
        n = self.n_levels
        h = np.zeros((n + 1, n + 1), dtype=complex)
        h[0, 1:] = self.phi.conj()
        h[1:, 0] = self.phi
        h[np.arange(1, n + 1), np.arange(1, n + 1)] = self.omega
        return h

    @cached_property
    def hamiltonian(self) -> HermitianModel:
        return HermitianModel(self.matrix())

    def initial_state(self) -> np.ndarray:
        return basis_state(self.dimension, 0)

    def recurrence_time(self) -> float:
        """2 pi / (level spacing); the discrete continuum revives near here."""
        spacing = np.median(np.diff(np.sort(self.omega))) if self.n_levels > 1 else 0.0
        return 2 * math.pi / spacing if spacing > 0 else math.inf


def build_decay_model(spec: ContinuumSpec) -> DecayModel:
    """Discretize `spec` on a uniform grid with Phi_k = phi(omega_k) * sqrt(d omega)."""
    if spec.phi0 == 0:
        raise ValueError("coupling scale phi0 must be nonzero")
    omega = spec.grid()
    phi = spec.coupling(omega) * math.sqrt(spec.spacing)
    return DecayModel(phi.astype(complex), omega, spec)


def calibrate_flat(n_levels: int, tau_zeno: float, lifetime: float) -> ContinuumSpec:
    """Flat band fixing the Zeno time and the golden-rule lifetime.

    Solves N Phi^2 = 1/tau_Z^2 and 2 pi Phi^2 / d omega = 1/tau_L for a
    band centred on the undecayed level.
    """
    if n_levels < 2 or tau_zeno <= 0 or lifetime <= 0:
        raise ValueError("calibration needs N >= 2 and positive times")
    phi_sq = 1.0 / (n_levels * tau_zeno**2)
    spacing = 2 * math.pi * phi_sq * lifetime
    half = 0.5 * (n_levels - 1) * spacing
    return ContinuumSpec(
        n_levels=n_levels,
        omega_min=-half,
        omega_max=half,
        phi0=math.sqrt(phi_sq / spacing),
        profile="flat",
    )


def figure1_spec() -> ContinuumSpec:
    """The 101-level flat band with tau_Z = 48 and tau_L = 393."""
    return calibrate_flat(101, 48.0, 393.0)


@dataclass(frozen=True, eq=False)
class EffectiveApparatus:
    """Apparatus reduced to a complex shift of the intermediate levels.

    Each y level gets omega -> omega + delta_E - i / (2 tau_R).
    """

    base: DecayModel
    tau_R: float
    delta_E: float = 0.0

    def __post_init__(self):
        if not self.tau_R > 0:
            raise ValueError("response time must be positive")

    @property
    def gamma_theta(self) -> float:
        return 1.0 / self.tau_R

    @property
    def dimension(self) -> int:
        return self.base.dimension

    def matrix(self) -> np.ndarray:
        h = self.base.matrix()
        idx = np.arange(1, self.base.dimension)
        h[idx, idx] += self.delta_E - 0.5j / self.tau_R
        return h


@dataclass(frozen=True, eq=False)
class ApparatusModel:
    """Decay model plus detector levels, three-block layout.

    Every intermediate level y_k couples with the same strength `theta` to
    its own ladder of `ladder.size` detector levels; the ladders share the
    energies in `ladder`. Level 1 has no direct coupling to the detector.
    """

    base: DecayModel
    theta: float
    ladder: np.ndarray

    def __post_init__(self):
        ladder = np.array(self.ladder, dtype=float).ravel()
        ladder.setflags(write=False)
        object.__setattr__(self, "ladder", ladder)

    @property
    def levels_per_channel(self) -> int:
        return self.ladder.size

    @property
    def n_detector(self) -> int:
        return self.base.n_levels * self.levels_per_channel

    @property
    def dimension(self) -> int:
        return 1 + self.base.n_levels + self.n_detector

    @property
    def ladder_density(self) -> float:
        return (self.ladder.size - 1) / (self.ladder[-1] - self.ladder[0])

    @property
    def gamma_theta(self) -> float:
        """Golden-rule rate 2 pi rho_W |theta|^2 out of each intermediate level."""
        return 2 * math.pi * self.ladder_density * abs(self.theta) ** 2

    @property
    def tau_R(self) -> float:
        return math.inf if self.gamma_theta == 0 else 1.0 / self.gamma_theta

    @property
    def delta_E(self) -> float:
        """Principal-value shift of the intermediate levels, evaluated at 0."""
        nz = self.ladder != 0
        return float(abs(self.theta) ** 2 * np.sum(1.0 / (0.0 - self.ladder[nz])))

    def theta_block(self) -> sp.csr_matrix:
        """The M x N coupling block Theta."""
        n, m = self.base.n_levels, self.levels_per_channel
        rows = np.arange(n * m)
        cols = np.repeat(np.arange(n), m)
        data = np.full(n * m, self.theta, dtype=complex)
        return sp.csr_matrix((data, (rows, cols)), shape=(n * m, n))

    def detector_energies(self) -> np.ndarray:
        return np.tile(self.ladder, self.base.n_levels)

    def sparse_matrix(self) -> sp.csr_matrix:
        base = sp.csr_matrix(self.base.matrix())
        theta = self.theta_block()
        zero_1w = sp.csr_matrix((1, self.n_detector), dtype=complex)
        upper = sp.hstack([base, sp.vstack([zero_1w, theta.conj().T])])
        lower = sp.hstack([sp.hstack([zero_1w.T, theta]), sp.diags(self.detector_energies())])
        h = sp.vstack([upper, lower]).tocsr()
        return h

    @cached_property
    def hamiltonian(self) -> HermitianModel:
        if self.dimension > DENSE_LIMIT:
            raise MemoryError(
                f"apparatus dimension {self.dimension} exceeds the dense limit {DENSE_LIMIT}; "
                "use sparse_matrix()"
            )
        return HermitianModel(self.sparse_matrix().toarray())

    def initial_state(self) -> np.ndarray:
        return basis_state(self.dimension, 0)

    def effective(self) -> EffectiveApparatus:
        return EffectiveApparatus(self.base, self.tau_R, self.delta_E)


def theta_for_response_time(tau_R: float, levels_per_channel: int, W_span: float) -> float:
    """Coupling theta giving 2 pi rho_W theta^2 = 1 / tau_R."""
    if not tau_R > 0:
        raise ValueError("response time must be positive")
    density = (levels_per_channel - 1) / W_span
    return math.sqrt(1.0 / (tau_R * 2 * math.pi * density))


def build_apparatus_model(base: DecayModel, theta_scale: float, M: int, W_span: float) -> ApparatusModel:
    """Attach M detector levels (M/N per intermediate level) spanning W_span.

    Each ladder is uniform on [-W_span/2, W_span/2].
    """
    n = base.n_levels
    if W_span <= 0:
        raise ValueError("W_span must be positive")
    if theta_scale < 0:
        raise ValueError("theta_scale must be nonnegative")
    if M % n:
        raise ValueError(f"M={M} must be a multiple of N={n} (one ladder per intermediate level)")
    per = M // n
    if per < 2:
        raise ValueError("each detector ladder needs at least 2 levels (M >= 2N)")
    ladder = np.linspace(-0.5 * W_span, 0.5 * W_span, per)
    return ApparatusModel(base, float(theta_scale), ladder)


@dataclass(frozen=True, eq=False)
class SpecialStateModel:
    """Matched-photon Hamiltonian on 2N+1 levels, switched off at t_off.

    Basis order (x, y_1..y_N, zeta_1..zeta_N). During [0, t_off] the zeta
    block has diagonal omega and couples to y through diag(omega); after
    t_off those couplings vanish and the zeta amplitudes are frozen.
    """

    base: DecayModel
    t_off: float = math.inf

    def __post_init__(self):
        if not self.t_off > 0:
            raise ValueError("t_off must be positive")

    @property
    def dimension(self) -> int:
        return 1 + 2 * self.base.n_levels

    def matrix(self, enhanced: bool = True) -> np.ndarray:
        n = self.base.n_levels
        h = np.zeros((2 * n + 1, 2 * n + 1), dtype=complex)
        h[: n + 1, : n + 1] = self.base.matrix()
        if enhanced:
            y = np.arange(1, n + 1)
            z = y + n
            h[y, z] = self.base.omega
            h[z, y] = self.base.omega
            h[z, z] = self.base.omega
        return h

    @cached_property
    def hamiltonian(self) -> HermitianModel:
        return HermitianModel(self.matrix(True))

    @cached_property
    def post_window(self) -> HermitianModel:
        return HermitianModel(self.matrix(False))

    def segments(self):
        if math.isinf(self.t_off):
            return [(self.hamiltonian, math.inf)]
        return [(self.hamiltonian, self.t_off), (self.post_window, math.inf)]

    def initial_state(self) -> np.ndarray:
        return basis_state(self.dimension, 0)


def build_special_model(base: DecayModel, t_off: float = math.inf) -> SpecialStateModel:
    return SpecialStateModel(base, t_off)


def build_two_level(alpha_sq: float) -> HermitianModel:
    """alpha^2 * sigma_x."""
    if not alpha_sq > 0:
        raise ValueError("alpha_sq must be positive")
    return HermitianModel(np.array([[0.0, alpha_sq], [alpha_sq, 0.0]], dtype=complex))
