"""Command-line scenario runner.

Each experiment is a subcommand. Outputs are CSV files (12 significant
digits, LF line endings) and a ``manifest.json`` in the output directory.

Exit codes: 0 success, 2 invalid config or arguments, 1 experiment error,
3 invariant violation (an orthogonality-bound breach).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import EXPERIMENTS, ConfigError, build_model, default_t_max, load_config, resolve_config
from .core import HermitianModel, as_state, basis_state, survival_amplitude
from .fleming import BoundViolation, ersak_residual, fleming_bound_report
from .measurement import (
    EffectiveApparatus,
    PulsedSchedule,
    continuous_rate,
    effective_rate_pulsed,
    equivalence_check,
    pulsed_survival,
    rate_horizon,
)
from .models import DecayModel, build_apparatus_model, build_special_model, theta_for_response_time
from .special import run_special_experiment, write_figure_csv
from .timescales import full_report, golden_rule_rate, landau_zener_jump_time, moments

log = logging.getLogger("jumptime")

EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_VIOLATION = 3

PROTON_MASS = scipy.constants.m_p


@dataclass
class RunManifest:
    experiment: str
    config: dict
    seed: int
    calibration: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    wall_clock_s: float = 0.0
    status: str = "ok"

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "status": self.status,
            "config": self.config,
            "seed": self.seed,
            "calibration": self.calibration,
            "versions": {
                "jumptime": __version__,
                "python": platform.python_version(),
                "numpy": np.__version__,
                "scipy": scipy.__version__,
            },
            "wall_clock_s": self.wall_clock_s,
            "outputs": self.outputs,
            "failures": self.failures,
        }


class InvariantViolation(RuntimeError):
    pass


# --- output helpers ---------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.12g}"


def write_csv(path: Path, header, rows) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def write_json(path: Path, data) -> Path:
    path.write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n")
    return path


# --- calibration --------------------------------------------------------------


def calibration(model) -> dict:
    if isinstance(model, DecayModel):
        tau_z = model.tau_zeno
        out = {"n_levels": model.n_levels, "tau_Z": tau_z, "tau_P": math.pi * tau_z / 2,
               "recurrence_time": model.recurrence_time()}
        if model.continuum is not None:
            gamma = golden_rule_rate(model.continuum)
            out.update(gamma_golden=gamma, tau_L_golden=1 / gamma, tau_J=tau_z**2 * gamma)
        return out
    _, spread = moments(model, basis_state(model.dimension, 0))
    return {"dimension": model.dimension, "tau_Z": 1 / spread, "tau_P": math.pi / (2 * spread)}


def _require_decay(model, experiment):
    if not isinstance(model, DecayModel):
        raise ConfigError(f"config field model: experiment {experiment} needs a decay model, not a two-level system")


def _jump_time(model: DecayModel) -> float:
    return model.tau_zeno**2 * golden_rule_rate(model.continuum)


def _grid(cfg, model) -> np.ndarray:
    t_max = cfg["grid"].get("t_max") or default_t_max(model)
    return np.linspace(0.0, t_max, cfg["grid"]["num"])


# --- sweeps ---------------------------------------------------------------------


def sweep_parameters(cfg, model, experiment) -> list[float]:
    """The grid for a sweep experiment, defaulting to fractions of the jump time."""
    tau_j = _jump_time(model)
    if experiment == "zeno-sweep":
        return list(cfg["sweep"].get("tau_PM", [tau_j / 20, tau_j / 10, tau_j / 4]))
    return list(cfg["sweep"].get("tau_R", [tau_j / 10, tau_j / 2, tau_j]))


def _apparatus(cfg, model: DecayModel, tau_R: float):
    app = cfg["apparatus"]
    if app["backend"] == "effective":
        return EffectiveApparatus(model, tau_R)
    per, span = app["levels_per_channel"], app["W_span"]
    theta = theta_for_response_time(tau_R, per, span)
    return build_apparatus_model(model, theta, per * model.n_levels, span)


def sweep_point(experiment: str, cfg: dict, value: float) -> dict:
    """One grid point, computed from scratch (safe to run in a worker process)."""
    model = build_model(cfg["model"])
    tau_z = model.tau_zeno
    if experiment == "zeno-sweep":
        horizon = cfg["grid"].get("t_max") or default_t_max(model)
        curve = pulsed_survival(model.hamiltonian, model.initial_state(), PulsedSchedule(value, horizon))
        rate = effective_rate_pulsed(curve)
        return {"tau_PM": value, "fitted_rate": rate, "predicted_rate": value / tau_z**2}
    times = np.linspace(0.0, rate_horizon(model), 181)
    if experiment == "continuous":
        rate = continuous_rate(_apparatus(cfg, model, value), times)
        return {"tau_R": value, "fitted_rate": rate, "predicted_rate": 4 * value / tau_z**2}
    backend = cfg["apparatus"]["backend"]
    apparatus = _apparatus(cfg, model, value) if backend == "full" else None
    res = equivalence_check(model, value, backend=backend, apparatus=apparatus, times=times)
    return {"tau_R": value, "rate_continuous": res.rate_continuous, "rate_pulsed": res.rate_pulsed,
            "ratio": res.ratio}


def _point_path(points_dir: Path, experiment: str, index: int) -> Path:
    return points_dir / f"{experiment}_{index:04d}.json"


def _point_job(args):
    experiment, cfg, value = args
    try:
        return {"ok": True, "result": sweep_point(experiment, cfg, value)}
    except Exception as exc:  # partial-failure policy: record and continue
        return {"ok": False, "error": f"{type(exc).__name__}: {exc}"}


def run_sweep(experiment: str, cfg: dict, values: list[float], out: Path, parallel: int):
    """Evaluate every grid point, reusing per-point files from earlier runs."""
    points_dir = out / "points"
    points_dir.mkdir(parents=True, exist_ok=True)
    results: dict[int, dict] = {}
    todo = []
    for i, v in enumerate(values):
        path = _point_path(points_dir, experiment, i)
        if path.exists():
            saved = json.loads(path.read_text())
            if saved.get("parameter") == v and saved.get("ok") and saved.get("config") == cfg:
                results[i] = saved
                continue
        todo.append(i)
    jobs = [(experiment, cfg, values[i]) for i in todo]
    if parallel > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(parallel, len(jobs))) as pool:
            outcomes = list(pool.map(_point_job, jobs))
    else:
        outcomes = [_point_job(j) for j in jobs]
    for i, outcome in zip(todo, outcomes):
        record = {"parameter": values[i], "config": cfg, **outcome}
        write_json(_point_path(points_dir, experiment, i), record)
        results[i] = json.loads(json.dumps(_jsonable(record)))
    return [results[i] for i in range(len(values))]


# --- experiments -------------------------------------------------------------------


def exp_timescales(cfg, model, out, manifest, **_):
    times = _grid(cfg, model)
    if isinstance(model, DecayModel):
        psi = model.initial_state()
        curve = survival_amplitude(model.hamiltonian, psi, times)
        t_hi = min(times[-1], rate_horizon(model))
        report = full_report(model, psi, curve, t_hi=t_hi)
    else:
        psi = basis_state(model.dimension, 0)
        report = full_report(model, psi, survival_amplitude(model, psi, times))
    record = report.to_record()
    manifest.outputs.append(write_json(out / "timescales.json", record).name)
    print(json.dumps(_jsonable(record), indent=2, sort_keys=True))


def exp_evolve(cfg, model, out, manifest, **_):
    times = _grid(cfg, model)
    h = model.hamiltonian if isinstance(model, DecayModel) else model
    curve = survival_amplitude(h, basis_state(h.dimension, 0), times)
    rows = zip(curve.times, curve.amplitude.real, curve.amplitude.imag, curve.probability)
    manifest.outputs.append(write_csv(out / "survival.csv", ("t", "re_f", "im_f", "p"), rows).name)


def _sweep_experiment(experiment, header, keys):
    def run(cfg, model, out, manifest, parallel=1, **_):
        _require_decay(model, experiment)
        values = sweep_parameters(cfg, model, experiment)
        records = run_sweep(experiment, cfg, values, out, parallel)
        rows = []
        for i, rec in enumerate(records):
            if rec["ok"]:
                rows.append([rec["result"][k] for k in keys])
            else:
                manifest.failures.append({"index": i, "parameter": rec["parameter"], "error": rec["error"]})
                rows.append([rec["parameter"]] + [math.nan] * (len(keys) - 1))
        name = experiment.replace("-", "_") + ".csv"
        manifest.outputs.append(write_csv(out / name, header, rows).name)
        manifest.outputs.append("points/")
        if manifest.failures:
            manifest.status = "partial"
            for f in manifest.failures:
                log.warning("grid point %d (%g) failed: %s", f["index"], f["parameter"], f["error"])

    return run


exp_zeno_sweep = _sweep_experiment("zeno-sweep", ("tau_PM", "fitted_rate", "predicted_rate"),
                                   ("tau_PM", "fitted_rate", "predicted_rate"))
exp_continuous = _sweep_experiment("continuous", ("tau_R", "fitted_rate", "predicted_rate"),
                                   ("tau_R", "fitted_rate", "predicted_rate"))
exp_equivalence = _sweep_experiment("equivalence", ("tau_R", "rate_continuous", "rate_pulsed", "ratio"),
                                    ("tau_R", "rate_continuous", "rate_pulsed", "ratio"))


def random_pair(rng: np.random.Generator, max_dimension: int):
    """A random Hermitian matrix with a random normalized state."""
    d = int(rng.integers(2, max_dimension + 1))
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    h = HermitianModel(0.5 * (a + a.conj().T))
    psi = as_state(rng.normal(size=d) + 1j * rng.normal(size=d), normalize=True)
    return h, psi


def _named_cases(model):
    cases = [("two_level", HermitianModel(np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)), None)]
    three = np.array([[0, 0.1, 0.1], [0.1, -0.5, 0], [0.1, 0, 0.5]], dtype=complex)
    cases.append(("three_level", HermitianModel(three), None))
    if isinstance(model, DecayModel):
        cases.append(("decay", model.hamiltonian, None))
        special = build_special_model(model)
        cases.append(("special", special.hamiltonian, None))
    else:
        cases.append(("configured", model, None))
    return cases


def exp_fleming(cfg, model, out, manifest, rng=None, **_):
    fcfg, tol = cfg["fleming"], cfg["tolerances"]["fleming"]
    rows = []
    worst = 0.0

    def check(name, h, psi, n_times):
        nonlocal worst
        psi = basis_state(h.dimension, 0) if psi is None else psi
        _, spread = moments(h, psi)
        t_max = 3 * math.pi / (2 * spread) if spread > 0 else 1.0
        times = np.linspace(0.0, t_max, n_times)
        report = fleming_bound_report(h, psi, times, truncate=False)
        t_pairs = rng.uniform(-t_max, t_max, size=(4, 2))
        ersak = max(ersak_residual(h, psi, t, tp) for t, tp in t_pairs)
        worst = max(worst, report.max_violation)
        rows.append((name, h.dimension, spread, report.max_violation, ersak,
                     report.max_violation > tol, ersak > tol))

    for name, h, psi in _named_cases(model):
        check(name, h, psi, 4 * fcfg["n_times"])
    for i in range(fcfg["n_random"]):
        h, psi = random_pair(rng, fcfg["max_dimension"])
        check(f"random_{i:04d}", h, psi, fcfg["n_times"])

    header = ("case", "dimension", "delta_H", "max_violation", "ersak_residual", "bound_violated",
              "ersak_failed")
    manifest.outputs.append(write_csv(out / "fleming.csv", header, rows).name)
    manifest.calibration["max_bound_violation"] = worst
    bad = [r[0] for r in rows if r[5] or r[6]]
    if bad:
        raise InvariantViolation(f"orthogonality bound or Ersak identity failed for {len(bad)} cases: {bad[:5]}")


def exp_special(cfg, model, out, manifest, **_):
    _require_decay(model, "special")
    tau_p = math.pi * model.tau_zeno / 2
    t_off = cfg["special"].get("t_off", math.sqrt(2) * tau_p)
    times = _grid(cfg, model)
    result = run_special_experiment(model, t_off, float(times[-1]), num=times.size,
                                    resolution=cfg["special"]["resolution"])
    written = write_figure_csv(result, out / "figure1.csv", out / "figure1_log.csv")
    summary = {
        "t_off": t_off,
        "crossing": result.crossing,
        "predicted_crossing": result.predicted_crossing,
        "bare_survival_at_crossing": result.bare_at_crossing,
        "fitted_frequency": result.frequency,
        "fitted_damping": result.damping,
        "predicted_damping": result.predicted_damping,
    }
    manifest.outputs += [p.name for p in written]
    manifest.outputs.append(write_json(out / "special.json", summary).name)
    print(json.dumps(_jsonable(summary), indent=2, sort_keys=True))


def exp_landau_zener(cfg, model, out, manifest, **_):
    lz = cfg["landau_zener"]
    mass = lz["mass_proton_units"] * PROTON_MASS
    k = 1.0 / (lz["period_nm"] * 1e-9)
    tau = landau_zener_jump_time(mass, k)
    manifest.outputs.append(write_json(out / "landau_zener.json",
                                       {"mass_kg": mass, "wavenumber_per_m": k, "tau_J_s": tau}).name)
    print(f"{tau:.2e} s")


RUNNERS = {
    "timescales": exp_timescales,
    "evolve": exp_evolve,
    "zeno-sweep": exp_zeno_sweep,
    "continuous": exp_continuous,
    "equivalence": exp_equivalence,
    "fleming": exp_fleming,
    "special": exp_special,
    "landau-zener": exp_landau_zener,
}


def _preflight(experiment, cfg, model):
    """Checks that must pass before anything is written."""
    if experiment in ("zeno-sweep", "continuous", "equivalence", "special"):
        _require_decay(model, experiment)
    if experiment in ("zeno-sweep", "continuous", "equivalence") and model.continuum is None:
        raise ConfigError("config field model: sweeps need a continuum description")


def run(experiment: str, raw_config: dict, out: Path, parallel: int = 1, seed: int = 0) -> RunManifest:
    """Validate, dispatch and write outputs plus ``manifest.json``."""
    if experiment not in RUNNERS:
        raise ConfigError(f"unknown experiment {experiment!r}")
    if raw_config.get("experiment", experiment) != experiment:
        raise ConfigError(f"config field experiment: {raw_config['experiment']!r} does not match {experiment!r}")
    cfg = resolve_config(raw_config)
    model = build_model(cfg["model"])
    _preflight(experiment, cfg, model)

    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(experiment, cfg, seed, calibration(model))
    start = time.perf_counter()
    try:
        RUNNERS[experiment](cfg, model, out, manifest, parallel=parallel, rng=np.random.default_rng(seed))
    except (InvariantViolation, BoundViolation) as exc:
        manifest.status = "violation"
        manifest.failures.append({"error": str(exc)})
        raise
    except Exception as exc:
        manifest.status = "error"
        manifest.failures.append({"error": f"{type(exc).__name__}: {exc}"})
        raise
    finally:
        manifest.wall_clock_s = time.perf_counter() - start
        write_json(out / "manifest.json", manifest.to_dict())
    return manifest


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="jumptime", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="JSON scenario file (defaults to the calibrated flat band)")
        p.add_argument("--out", type=Path, default=Path("out") / name, help="output directory")
        p.add_argument("--parallel", type=_positive_int, default=os.cpu_count() or 1,
                       help="worker processes for sweeps (default: all cores)")
        p.add_argument("--seed", type=_u64, default=0, help="seed for randomized scenarios")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        raw = load_config(args.config)
        run(args.experiment, raw, args.out, parallel=args.parallel, seed=args.seed)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG if args.config and not args.config.exists() else EXIT_ERROR
    except (InvariantViolation, BoundViolation) as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        return EXIT_VIOLATION
    except Exception as exc:
        print(f"experiment failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return 0


if __name__ == "__main__":
    sys.exit(main())
