"""Jump time, passage time and Zeno dynamics of discretized decay models."""

from .core import (
    HermitianModel,
    SpectralDecomposition,
    SurvivalCurve,
    as_state,
    basis_state,
    decompose,
    evolve,
    survival_amplitude,
)
from .models import (
    ApparatusModel,
    ContinuumSpec,
    DecayModel,
    EffectiveApparatus,
    SpecialStateModel,
    build_apparatus_model,
    build_decay_model,
    build_special_model,
    build_two_level,
    calibrate_flat,
    figure1_spec,
)
from .timescales import full_report, golden_rule_rate, landau_zener_jump_time, moments

__all__ = [
    "HermitianModel",
    "SpectralDecomposition",
    "SurvivalCurve",
    "as_state",
    "basis_state",
    "decompose",
    "evolve",
    "survival_amplitude",
    "ApparatusModel",
    "ContinuumSpec",
    "DecayModel",
    "EffectiveApparatus",
    "SpecialStateModel",
    "build_apparatus_model",
    "build_decay_model",
    "build_special_model",
    "build_two_level",
    "calibrate_flat",
    "figure1_spec",
    "full_report",
    "golden_rule_rate",
    "landau_zener_jump_time",
    "moments",
]

__version__ = "0.1.0"
