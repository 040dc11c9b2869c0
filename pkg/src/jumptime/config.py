"""Scenario configuration: JSON files checked against a JSON Schema.

A config is a JSON object. Every section is optional; omitted values take
the defaults in `DEFAULTS` (the 101-level calibrated flat band). Example::

    {
      "model": {"kind": "calibrated", "n_levels": 101, "tau_zeno": 48, "lifetime": 393},
      "grid": {"t_max": 1179, "num": 2001},
      "sweep": {"tau_PM": [0.3, 0.6, 1.5]},
      "apparatus": {"backend": "effective"}
    }

Unknown keys anywhere are rejected.
"""

from __future__ import annotations

import copy
import json
import math
from pathlib import Path

import jsonschema

from .models import ContinuumSpec, DecayModel, build_decay_model, build_two_level, calibrate_flat
from .timescales import golden_rule_rate

__all__ = ["ConfigError", "SCHEMA", "DEFAULTS", "load_config", "resolve_config", "build_model"]

EXPERIMENTS = ("timescales", "evolve", "zeno-sweep", "continuous", "equivalence", "fleming",
               "special", "landau-zener")

_pos = {"type": "number", "exclusiveMinimum": 0}
_pos_list = {"type": "array", "items": _pos, "minItems": 1}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "experiment": {"enum": list(EXPERIMENTS)},
        "model": {
            "type": "object",
            "oneOf": [
                {
                    "additionalProperties": False,
                    "required": ["kind"],
                    "properties": {
                        "kind": {"const": "calibrated"},
                        "n_levels": {"type": "integer", "minimum": 2},
                        "tau_zeno": _pos,
                        "lifetime": _pos,
                    },
                },
                {
                    "additionalProperties": False,
                    "required": ["kind", "n_levels", "omega_min", "omega_max", "phi0"],
                    "properties": {
                        "kind": {"const": "continuum"},
                        "n_levels": {"type": "integer", "minimum": 2},
                        "omega_min": {"type": "number", "exclusiveMaximum": 0},
                        "omega_max": _pos,
                        "phi0": _pos,
                        "profile": {"enum": ["flat", "lorentzian", "gaussian"]},
                        "width": _pos,
                    },
                },
                {
                    "additionalProperties": False,
                    "required": ["kind", "alpha_sq"],
                    "properties": {"kind": {"const": "two_level"}, "alpha_sq": _pos},
                },
            ],
        },
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"t_max": _pos, "num": {"type": "integer", "minimum": 2}},
        },
        "sweep": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"tau_PM": _pos_list, "tau_R": _pos_list},
        },
        "apparatus": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "backend": {"enum": ["effective", "full"]},
                "levels_per_channel": {"type": "integer", "minimum": 2},
                "W_span": _pos,
            },
        },
        "special": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"t_off": _pos, "resolution": _pos},
        },
        "fleming": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_random": {"type": "integer", "minimum": 0},
                "max_dimension": {"type": "integer", "minimum": 2},
                "n_times": {"type": "integer", "minimum": 2},
            },
        },
        "landau_zener": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"mass_proton_units": _pos, "period_nm": _pos},
        },
        "tolerances": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"fleming": _pos, "fit_residual": _pos},
        },
    },
}

DEFAULTS = {
    "model": {"kind": "calibrated", "n_levels": 101, "tau_zeno": 48.0, "lifetime": 393.0},
    "grid": {"num": 2001},
    "sweep": {},
    "apparatus": {"backend": "effective", "levels_per_channel": 601, "W_span": 6.0},
    "special": {"resolution": 1e-6},
    "fleming": {"n_random": 1000, "max_dimension": 8, "n_times": 64},
    "landau_zener": {"mass_proton_units": 23.0, "period_nm": 94.0},
    "tolerances": {"fleming": 1e-9, "fit_residual": 0.1},
}

_MODEL_DEFAULTS = {"calibrated": DEFAULTS["model"], "continuum": {"profile": "flat"}, "two_level": {}}


class ConfigError(ValueError):
    """Raised for unreadable or invalid configs; the message names the field."""


def load_config(path: str | Path | None) -> dict:
    """Read and validate a JSON config (``None`` gives an empty config)."""
    if path is None:
        raw = {}
    else:
        text = Path(path).read_text()
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    validate(raw)
    return raw


def validate(raw) -> None:
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        detail = err.message
        if err.context:
            detail = "; ".join(sorted({c.message for c in err.context}))
        raise ConfigError(f"config field {where}: {detail}")


def resolve_config(raw: dict) -> dict:
    """Merge `raw` over the defaults; the result is what the manifest echoes."""
    cfg = copy.deepcopy(DEFAULTS)
    for key, value in raw.items():
        if key == "model":
            cfg["model"] = {**_MODEL_DEFAULTS[value["kind"]], **value}
        elif isinstance(value, dict):
            cfg[key] = {**cfg.get(key, {}), **value}
        else:
            cfg[key] = value
    return cfg


def build_model(model_cfg: dict):
    """A DecayModel (calibrated or continuum kinds) or a two-level HermitianModel."""
    kind = model_cfg["kind"]
    try:
        if kind == "calibrated":
            spec = calibrate_flat(model_cfg["n_levels"], model_cfg["tau_zeno"], model_cfg["lifetime"])
            return build_decay_model(spec)
        if kind == "continuum":
            spec = ContinuumSpec(
                n_levels=model_cfg["n_levels"],
                omega_min=model_cfg["omega_min"],
                omega_max=model_cfg["omega_max"],
                phi0=model_cfg["phi0"],
                profile=model_cfg.get("profile", "flat"),
                width=model_cfg.get("width"),
            )
            return build_decay_model(spec)
        return build_two_level(model_cfg["alpha_sq"])
    except ValueError as exc:
        raise ConfigError(f"config field model: {exc}") from exc


def default_t_max(model) -> float:
    if isinstance(model, DecayModel) and model.continuum is not None:
        return 3.0 / golden_rule_rate(model.continuum)
    return 4 * math.pi
