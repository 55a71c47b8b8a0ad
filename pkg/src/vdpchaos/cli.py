"""Experiment runner: validated configs, task dispatch, CSV/JSON emission.

A run is described by one JSON config (documented in the README) holding the
model parameters, shared numerics, a task name and task-specific settings.
Every task writes CSV result files plus a .meta.json sidecar carrying the
fully resolved config, seeds, wall clock and termination records, so results
are self-describing and byte-reproducible (the sidecar's wall clock aside).

Exit codes: 0 success, 2 config error, 3 numerical failure, 4 physics
breakdown (desynchronization).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
import time

import numpy as np

from . import __version__
from .chaos import ChaosCoeffs, design_matrix, lift
from .coarse import (CoarseMapConfig, default_rough_guess, newton_fixed_point,
                     relaxed_guess)
from .continuation import (ContinuationConfig, DesyncPolicy, continue_branch,
                           continue_fold_curve, continue_hopf_curve,
                           locate_folds, locate_hopfs)
from .diagnostics import classify_synchrony, correlation_snapshot, walkthrough_period
from .errors import ConfigError, DomainError, NumericalError
from .network import (DEFAULT_DT, Heterogeneity, ModelParams, NetworkState,
                      integrate, measure_angular_frequency, record_series)
from .projective import (ProjectionSchedule, RealizationSource, SpeedupResult,
                         measure_speedup, projective_integrate)

_STATUS_OK = 0
_STATUS_CONFIG = 2
_STATUS_NUMERICAL = 3
_STATUS_PHYSICS = 4

_TERMINATION_STATUS = {
    "physics-breakdown": _STATUS_PHYSICS,
    "numerical-failure": _STATUS_NUMERICAL,
    "min-step-underflow": _STATUS_NUMERICAL,
}


@dataclasses.dataclass(frozen=True)
class NumericsConfig:
    """Shared numerical settings resolved once per run."""

    dt: float = DEFAULT_DT
    q: int = 1
    r: int = 20
    base_seed: int = 0
    het_seed: int = 0
    settle_periods: int = 50
    observe_periods: int = 100

    def __post_init__(self):
        if self.dt <= 0:
            raise ConfigError("numerics.dt", f"must be > 0, got {self.dt}")
        if self.q < 0:
            raise ConfigError("numerics.q", f"must be >= 0, got {self.q}")
        if self.r < 1:
            raise ConfigError("numerics.r", f"must be >= 1, got {self.r}")
        if self.settle_periods < 0:
            raise ConfigError("numerics.settle_periods",
                              f"must be >= 0, got {self.settle_periods}")
        if self.observe_periods < 1:
            raise ConfigError("numerics.observe_periods",
                              f"must be >= 1, got {self.observe_periods}")


@dataclasses.dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: model + numerics + a task with its settings."""

    task: str
    model: ModelParams
    numerics: NumericsConfig
    task_params: dict
    out: str


class _P:
    """Task-parameter spec: kind, default and a one-line description."""

    def __init__(self, kind: str, default, doc: str):
        self.kind = kind
        self.default = default
        self.doc = doc


_CONT_PARAMS = {
    "initial_step": _P("float", 0.02, "first arclength step"),
    "max_step": _P("float", 0.06, "arclength step ceiling"),
    "min_step": _P("float", 1e-6, "arclength step floor"),
    "max_points": _P("int", 150, "point budget per run"),
    "corrector_tol": _P("float", 1e-8, "Newton corrector tolerance"),
    "corrector_max_iter": _P("int", 25, "Newton corrector iteration cap"),
    "relax_periods": _P("int", 40, "fine relaxation length for the first guess"),
}

TASKS: dict[str, dict[str, _P]] = {
    "simulate": {
        "periods": _P("float", 100.0, "recorded window in forcing periods"),
        "settle_periods": _P("int", 0, "periods integrated before recording"),
        "stride": _P("int", 10, "record every stride-th step"),
        "oscillators": _P("int_list", [1], "1-based oscillator columns to emit"),
        "init_seed": _P("int", 0, "seed of the random initial condition"),
        "init_scale": _P("float", 1.0, "std dev of the random initial condition"),
    },
    "freq-sweep": {
        "phi_min": _P("float", -0.5, "lowest phi"),
        "phi_max": _P("float", 3.0, "highest phi"),
        "n_phi": _P("int", 36, "number of phi samples"),
        "settle_time": _P("float", 200.0, "transient skipped before measuring"),
        "measure_time": _P("float", 400.0, "measurement window"),
    },
    "correlate": {
        "times": _P("float_list", [], "snapshot times; empty = 0, T, 2T"),
        "init_seed": _P("int", 0, "seed of the random initial condition"),
        "init_scale": _P("float", 1.0, "std dev of the random initial condition"),
    },
    "project": {
        "duration": _P("float", 100.0, "integration horizon"),
        "n_inner": _P("int", 3, "fine steps per cycle"),
        "n_project": _P("int", 3, "projected steps per cycle (0 = plain run)"),
        "fit_order": _P("int", 0, "extrapolation order; 0 = use n_inner"),
        "fresh": _P("bool", True, "new realization per lift"),
        "source_seed": _P("int", 0, "realization stream seed"),
        "relax_periods": _P("int", 40, "fine relaxation length for the start state"),
    },
    "speedup": {
        "duration": _P("float", 100.0, "integration horizon"),
        "n_inner": _P("int", 3, "fine steps per cycle"),
        "n_project_list": _P("int_list", [1, 2, 4, 6, 8, 10, 12, 16, 24, 32, 48, 64, 71],
                             "projection horizons to time"),
        "fresh": _P("bool", True, "new realization per lift"),
        "source_seed": _P("int", 0, "realization stream seed"),
        "relax_periods": _P("int", 40, "fine relaxation length for the start state"),
    },
    "fixed-point": {
        "relax_periods": _P("int", 40, "fine relaxation length for the first guess"),
        "newton_tol": _P("float", 1e-8, "fixed-point residual tolerance"),
        "newton_max_iter": _P("int", 25, "Newton iteration cap"),
    },
    "branch": {
        **_CONT_PARAMS,
        "free_param": _P("str", "omega", "continuation parameter"),
        "param_min": _P("float", math.nan, "lower bound; nan = default"),
        "param_max": _P("float", math.nan, "upper bound; nan = default"),
        "directions": _P("int_list", [1, -1], "arclength directions to run"),
        "locate": _P("str", "folds", "bifurcations to refine: folds|hopfs|both|none"),
        "stop_at_fold": _P("bool", False, "halt each direction at its first fold"),
    },
    "fold-curve": {
        **_CONT_PARAMS,
        "scan_param": _P("str", "omega", "parameter of the starting fold"),
        "curve_param": _P("str", "beta", "second parameter of the curve"),
        "edge": _P("str", "right", "which fold to start from: right|left"),
        "scan_min": _P("float", math.nan, "scan parameter lower bound"),
        "scan_max": _P("float", math.nan, "scan parameter upper bound"),
        "curve_min": _P("float", math.nan, "curve parameter lower bound"),
        "curve_max": _P("float", math.nan, "curve parameter upper bound"),
        "direction": _P("int", 1, "initial sign of the curve-parameter motion"),
        "scan_max_points": _P("int", 150, "point budget of the starting scan"),
        "desync_check": _P("bool", False,
                           "classify synchrony along the curve and stop "
                           "at breakdown"),
        "desync_threshold": _P("float", 0.01, "breakdown fraction"),
    },
    "hopf-curve": {
        **_CONT_PARAMS,
        "scan_param": _P("str", "omega", "parameter scanned for the starting point"),
        "curve_param": _P("str", "phi", "second parameter of the curve"),
        "scan_direction": _P("int", -1, "scan direction"),
        "scan_min": _P("float", math.nan, "scan parameter lower bound"),
        "scan_max": _P("float", math.nan, "scan parameter upper bound"),
        "curve_min": _P("float", math.nan, "curve parameter lower bound"),
        "curve_max": _P("float", math.nan, "curve parameter upper bound"),
        "directions": _P("int_list", [1, -1], "arclength directions to run"),
        "scan_max_points": _P("int", 150, "point budget of the starting scan"),
        "desync_check": _P("bool", False,
                           "classify synchrony along the curve and stop "
                           "at breakdown"),
        "desync_threshold": _P("float", 0.01, "breakdown fraction"),
    },
    "sync-scan": {
        "omega_values": _P("float_list", [], "frequencies to classify; empty = model"),
        "samples_per_period": _P("int", 64, "crossing-count sampling density"),
        "emit_rotations": _P("bool", True, "write per-oscillator winding counts"),
    },
    "walkthrough": {
        "omega_star": _P("float", math.nan, "fold frequency the slips happen around"),
        "omega_values": _P("float_list", [], "frequencies; empty = log-spaced decade"),
        "d_min": _P("float", 1e-4, "smallest detuning when generating frequencies"),
        "d_max": _P("float", 1e-3, "largest detuning when generating frequencies"),
        "n_points": _P("int", 6, "generated frequency count"),
        "side": _P("int", 1, "+1 samples above omega_star, -1 below"),
        "max_periods": _P("int", 4000, "observation budget per frequency"),
        "band_mads": _P("float", 3.0, "slip band half-width in MADs"),
        "min_slips": _P("int", 5, "slips needed to call an estimate resolved"),
    },
}

_MODEL_FIELDS = {"phi": "float", "beta": "float", "epsilon": "float",
                 "amplitude": "float", "omega": "float", "n_osc": "int"}
_NUMERICS_FIELDS = {"dt": "float", "q": "int", "r": "int", "base_seed": "int",
                    "het_seed": "int", "settle_periods": "int",
                    "observe_periods": "int"}


def _coerce(path: str, value, kind: str):
    if kind == "bool":
        if isinstance(value, bool):
            return value
        raise ConfigError(path, f"expected a boolean, got {value!r}")
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, f"expected an integer, got {value!r}")
        return value
    if kind == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {value!r}")
        return float(value)
    if kind == "str":
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string, got {value!r}")
        return value
    if kind in ("int_list", "float_list"):
        if not isinstance(value, list):
            raise ConfigError(path, f"expected a list, got {value!r}")
        item = "int" if kind == "int_list" else "float"
        return [_coerce(f"{path}[{i}]", v, item) for i, v in enumerate(value)]
    raise AssertionError(kind)


def _check_mapping(path: str, raw, allowed: dict) -> dict:
    if not isinstance(raw, dict):
        raise ConfigError(path, f"expected an object, got {raw!r}")
    out = {}
    for key, value in raw.items():
        if key not in allowed:
            raise ConfigError(f"{path}.{key}",
                              f"unknown field; expected one of {sorted(allowed)}")
        kind = allowed[key].kind if isinstance(allowed[key], _P) else allowed[key]
        out[key] = _coerce(f"{path}.{key}", value, kind)
    return out


def build_config(raw: dict) -> ExperimentConfig:
    """Validate a raw config mapping and resolve all defaults."""
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    allowed_top = {"task", "model", "numerics", "task_params", "out"}
    for key in raw:
        if key not in allowed_top:
            raise ConfigError(key, f"unknown field; expected one of {sorted(allowed_top)}")
    task = raw.get("task")
    if not isinstance(task, str) or task not in TASKS:
        raise ConfigError("task", f"must be one of {sorted(TASKS)}, got {task!r}")

    model_kwargs = _check_mapping("model", raw.get("model", {}), _MODEL_FIELDS)
    try:
        model = ModelParams(**model_kwargs)
    except DomainError as err:
        raise ConfigError("model", str(err)) from err
    numerics_kwargs = _check_mapping("numerics", raw.get("numerics", {}),
                                     _NUMERICS_FIELDS)
    numerics = NumericsConfig(**numerics_kwargs)

    spec = TASKS[task]
    params = _check_mapping("task_params", raw.get("task_params", {}), spec)
    resolved = {name: p.default for name, p in spec.items()}
    resolved.update(params)

    out = raw.get("out", f"results/{task}")
    if not isinstance(out, str) or not out:
        raise ConfigError("out", f"expected a non-empty string, got {out!r}")
    return ExperimentConfig(task=task, model=model, numerics=numerics,
                            task_params=resolved, out=out)


def _apply_override(raw: dict, assignment: str):
    """Apply one dotted-path KEY=VALUE override onto the raw mapping."""
    if "=" not in assignment:
        raise ConfigError("--set", f"expected PATH=VALUE, got {assignment!r}")
    path, text = assignment.split("=", 1)
    keys = path.split(".")
    if not all(keys):
        raise ConfigError("--set", f"bad path {path!r}")
    try:
        value = json.loads(text)
    except json.JSONDecodeError:
        value = text
    node = raw
    for key in keys[:-1]:
        node = node.setdefault(key, {})
        if not isinstance(node, dict):
            raise ConfigError(path, "path runs through a non-object value")
    node[keys[-1]] = value


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if value is None:
        return "nan"
    return repr(float(value))


class _Emitter:
    """Writes result CSVs under one output prefix and tracks them."""

    def __init__(self, prefix: str):
        self.prefix = prefix
        self.files: list[str] = []

    def csv(self, suffix: str, header: list[str], rows) -> str:
        import os
        path = f"{self.prefix}{suffix}.csv"
        parent = os.path.dirname(path)
        if parent:
            os.makedirs(parent, exist_ok=True)
        with open(path, "w", newline="") as fh:
            fh.write(",".join(header) + "\n")
            for row in rows:
                fh.write(",".join(_fmt(v) for v in row) + "\n")
        self.files.append(path)
        return path


def _coeff_header(q: int) -> list[str]:
    return [f"a{j}" for j in range(q + 1)] + [f"b{j}" for j in range(q + 1)]


def _het(cfg: ExperimentConfig) -> Heterogeneity:
    return Heterogeneity.draw(cfg.model.n_osc, cfg.numerics.het_seed)


def _coarse(cfg: ExperimentConfig) -> CoarseMapConfig:
    n = cfg.numerics
    return CoarseMapConfig.default(q=n.q, r=n.r, base_seed=n.base_seed, dt=n.dt)


def _fixed_point(cfg: ExperimentConfig, coarse: CoarseMapConfig,
                 relax_periods: int):
    het = _het(cfg)
    guess = relaxed_guess(default_rough_guess(coarse.q), cfg.model, het,
                          periods=relax_periods, dt=cfg.numerics.dt)
    return newton_fixed_point(guess, cfg.model, coarse)


def _cont_config(tp: dict, direction: int = 1) -> ContinuationConfig:
    return ContinuationConfig(initial_step=tp["initial_step"],
                              min_step=tp["min_step"], max_step=tp["max_step"],
                              corrector_tol=tp["corrector_tol"],
                              corrector_max_iter=tp["corrector_max_iter"],
                              max_points=tp["max_points"], direction=direction)


def _range_or_none(lo: float, hi: float):
    lo_v = None if math.isnan(lo) else lo
    hi_v = None if math.isnan(hi) else hi
    if lo_v is None and hi_v is None:
        return None
    return (lo_v, hi_v)


def _term_payload(term) -> dict:
    out = {"reason": term.reason, "detail": term.detail}
    if term.desync_fraction is not None:
        out["desync_fraction"] = term.desync_fraction
    return out


def _branch_rows(points, names, with_theta=False):
    for idx, pt in enumerate(points):
        row = [idx] + [pt.active_params[n] for n in names]
        if with_theta:
            row.append(pt.theta)
        row += [pt.stable, pt.test_fold, pt.test_hopf]
        row += list(pt.z.to_vector())
        yield row


def _run_simulate(cfg: ExperimentConfig, emit: _Emitter):
    tp = cfg.task_params
    model, num = cfg.model, cfg.numerics
    het = _het(cfg)
    period = model.forcing_period
    for idx in tp["oscillators"]:
        if not 1 <= idx <= model.n_osc:
            raise ConfigError("task_params.oscillators",
                              f"oscillator {idx} outside 1..{model.n_osc}")
    # tagged so init_seed == het_seed still gives data independent of mu
    rng = np.random.default_rng([tp["init_seed"], 1])
    state = NetworkState(rng.standard_normal(model.n_osc) * tp["init_scale"],
                         rng.standard_normal(model.n_osc) * tp["init_scale"])
    if tp["settle_periods"] > 0:
        state = integrate(state, model, het, tp["settle_periods"] * period,
                          dt=num.dt)
    times, xs, ys = record_series(state, model, het, tp["periods"] * period,
                                  stride=tp["stride"], dt=num.dt)
    pinv = np.linalg.pinv(design_matrix(het, num.q))
    acoef = xs @ pinv.T
    bcoef = ys @ pinv.T
    cols = [f"x{i}" for i in tp["oscillators"]]
    header = ["t"] + cols + _coeff_header(num.q)
    osc = [i - 1 for i in tp["oscillators"]]

    def rows():
        for k in range(times.size):
            yield [times[k]] + [xs[k, i] for i in osc] + list(acoef[k]) + list(bcoef[k])

    emit.csv("", header, rows())
    return _STATUS_OK, {"samples": int(times.size)}


def _run_freq_sweep(cfg: ExperimentConfig, emit: _Emitter):
    tp = cfg.task_params
    if tp["n_phi"] < 1:
        raise ConfigError("task_params.n_phi", f"must be >= 1, got {tp['n_phi']}")
    het = _het(cfg)
    rows = []
    for phi in np.linspace(tp["phi_min"], tp["phi_max"], tp["n_phi"]):
        params = dataclasses.replace(cfg.model, phi=float(phi))
        freq = measure_angular_frequency(params, het,
                                         settle_time=tp["settle_time"],
                                         measure_time=tp["measure_time"],
                                         dt=cfg.numerics.dt)
        rows.append([float(phi), freq])
    emit.csv("", ["phi", "angular_frequency"], rows)
    return _STATUS_OK, {"quiescent_count": sum(1 for r in rows if r[1] is None)}


def _run_correlate(cfg: ExperimentConfig, emit: _Emitter):
    tp = cfg.task_params
    period = cfg.model.forcing_period
    times = tp["times"] or [0.0, period, 2.0 * period]
    het = _het(cfg)
    records = correlation_snapshot(cfg.model, het, times, q=cfg.numerics.q,
                                   dt=cfg.numerics.dt, init_seed=tp["init_seed"],
                                   init_scale=tp["init_scale"])
    mu = het.mu

    def rows():
        for rec in records:
            fit = lift(rec.coeffs, het)
            state = rec.state
            for i in range(mu.size):
                yield [rec.t, mu[i], state.x[i], state.y[i], fit.x[i], fit.y[i]]

    emit.csv("", ["t", "mu", "x", "y", "x_fit", "y_fit"], rows())
    residuals = [{"t": rec.t, "x": rec.residual_x, "y": rec.residual_y}
                 for rec in records]
    return _STATUS_OK, {"residuals": residuals}


def _project_start(cfg: ExperimentConfig, relax_periods: int) -> ChaosCoeffs:
    from .chaos import restrict
    het = _het(cfg)
    state = lift(default_rough_guess(cfg.numerics.q), het)
    state = integrate(state, cfg.model, het,
                      relax_periods * cfg.model.forcing_period,
                      dt=cfg.numerics.dt)
    return restrict(state, het, cfg.numerics.q)


def _run_project(cfg: ExperimentConfig, emit: _Emitter):
    tp = cfg.task_params
    fit_order = tp["fit_order"] if tp["fit_order"] > 0 else tp["n_inner"]
    schedule = ProjectionSchedule(dt=cfg.numerics.dt, n_inner=tp["n_inner"],
                                  n_project=tp["n_project"], fit_order=fit_order)
    source = RealizationSource(cfg.model.n_osc, seed=tp["source_seed"],
                               fresh=tp["fresh"])
    z0 = _project_start(cfg, tp["relax_periods"])
    series = projective_integrate(z0, cfg.model, schedule, source, tp["duration"])

    def rows():
        for k in range(series.times.size):
            yield [series.times[k], bool(series.projected[k])] + list(series.coeffs[k])

    emit.csv("", ["t", "projected"] + _coeff_header(cfg.numerics.q), rows())
    return _STATUS_OK, {"samples": int(series.times.size),
                        "projected_samples": int(series.projected.sum())}


def _run_speedup(cfg: ExperimentConfig, emit: _Emitter):
    tp = cfg.task_params
    z0 = _project_start(cfg, tp["relax_periods"])
    rows = []
    measured = []
    crossover = None
    for n2 in tp["n_project_list"]:
        schedule = ProjectionSchedule(dt=cfg.numerics.dt, n_inner=tp["n_inner"],
                                      n_project=n2, fit_order=tp["n_inner"])
        result = measure_speedup(z0, cfg.model, schedule, tp["duration"],
                                 seed=tp["source_seed"], fresh=tp["fresh"])
        work_ratio = (tp["n_inner"] + n2) / tp["n_inner"]
        rows.append([n2, tp["n_inner"], work_ratio])
        measured.append({"n_project": n2,
                         "direct_seconds": result.direct_seconds,
                         "projective_seconds": result.projective_seconds,
                         "speedup": result.speedup})
        if crossover is None and result.speedup > 1.0:
            crossover = n2
    emit.csv("", ["n_project", "n_inner", "work_ratio"], rows)
    return _STATUS_OK, {"measured": measured, "crossover_n_project": crossover}


def _run_fixed_point(cfg: ExperimentConfig, emit: _Emitter):
    tp = cfg.task_params
    coarse = dataclasses.replace(_coarse(cfg), newton_tol=tp["newton_tol"],
                                 newton_max_iter=tp["newton_max_iter"])
    fp = _fixed_point(cfg, coarse, tp["relax_periods"])
    het = _het(cfg)
    state0 = lift(fp.z, het)
    state1 = integrate(state0, cfg.model, het, cfg.model.forcing_period,
                       dt=cfg.numerics.dt)
    dx = state1.x - state0.x
    dy = state1.y - state0.y

    def rows():
        for i in range(het.n_osc):
            yield [i + 1, het.mu[i], dx[i], dy[i]]

    emit.csv("", ["oscillator", "mu", "dx_one_period", "dy_one_period"], rows())
    extras = {
        "coeffs": list(fp.z.to_vector()),
        "residual": fp.residual,
        "iterations": fp.iterations,
        "stable": bool(fp.stable),
        "eigenvalues": [[float(ev.real), float(ev.imag)] for ev in fp.eigenvalues],
        "max_defect_x": float(np.max(np.abs(dx))),
        "max_defect_y": float(np.max(np.abs(dy))),
    }
    return _STATUS_OK, extras


def _run_branch(cfg: ExperimentConfig, emit: _Emitter):
    tp = cfg.task_params
    name = tp["free_param"]
    if tp["locate"] not in ("folds", "hopfs", "both", "none"):
        raise ConfigError("task_params.locate",
                          f"must be folds|hopfs|both|none, got {tp['locate']!r}")
    coarse = _coarse(cfg)
    fp = _fixed_point(cfg, coarse, tp["relax_periods"])
    bounds = _range_or_none(tp["param_min"], tp["param_max"])
    param_range = {name: bounds} if bounds else None
    status = _STATUS_OK
    all_rows = []
    terminations = []
    folds, hopfs = [], []
    for direction in tp["directions"]:
        ccfg = _cont_config(tp, direction)
        branch = continue_branch(fp, cfg.model, name, ccfg, coarse=coarse,
                                 param_range=param_range,
                                 stop_at_fold=tp["stop_at_fold"])
        for row in _branch_rows(branch.points, (name,)):
            all_rows.append([direction] + row)
        terminations.append({"direction": direction,
                             **_term_payload(branch.termination)})
        status = max(status, _TERMINATION_STATUS.get(branch.termination.reason, 0))
        if tp["locate"] in ("folds", "both"):
            folds += locate_folds(branch, cfg.model, ccfg, coarse=coarse)
        if tp["locate"] in ("hopfs", "both"):
            hopfs += locate_hopfs(branch, cfg.model, ccfg, coarse=coarse)
    header = (["direction", "index", name, "stable", "test_fold", "test_hopf"]
              + _coeff_header(coarse.q))
    emit.csv("", header, all_rows)
    extras = {"terminations": terminations,
              "folds": [{name: pt.active_params[name],
                         "coeffs": list(pt.z.to_vector())} for pt in folds],
              "hopfs": [{name: pt.active_params[name], "theta": pt.theta,
                         "coeffs": list(pt.z.to_vector())} for pt in hopfs]}
    return status, extras


def _starting_fold(cfg: ExperimentConfig, coarse, tp):
    name = tp["scan_param"]
    direction = 1 if tp["edge"] == "right" else -1
    if tp["edge"] not in ("right", "left"):
        raise ConfigError("task_params.edge",
                          f"must be right|left, got {tp['edge']!r}")
    fp = _fixed_point(cfg, coarse, tp["relax_periods"])
    scan_cfg = dataclasses.replace(_cont_config(tp, direction),
                                   max_points=tp["scan_max_points"])
    bounds = _range_or_none(tp["scan_min"], tp["scan_max"])
    branch = continue_branch(fp, cfg.model, name, scan_cfg, coarse=coarse,
                             param_range={name: bounds} if bounds else None,
                             stop_at_fold=True)
    folds = locate_folds(branch, cfg.model, scan_cfg, coarse=coarse)
    if not folds:
        raise NumericalError(
            f"no fold found scanning {name} ({tp['edge']} edge); termination: "
            f"{branch.termination.reason} ({branch.termination.detail})")
    return folds[0]


def _curve_param_range(tp):
    out = {}
    scan = _range_or_none(tp["scan_min"], tp["scan_max"])
    curve = _range_or_none(tp["curve_min"], tp["curve_max"])
    if scan:
        out[tp["scan_param"]] = scan
    if curve:
        out[tp["curve_param"]] = curve
    return out or None


def _desync_policy(cfg: ExperimentConfig, tp):
    if not tp["desync_check"]:
        return None
    return DesyncPolicy(threshold=tp["desync_threshold"],
                        settle_periods=cfg.numerics.settle_periods,
                        observe_periods=cfg.numerics.observe_periods,
                        seed=cfg.numerics.het_seed, check_every=1)


def _run_fold_curve(cfg: ExperimentConfig, emit: _Emitter):
    tp = cfg.task_params
    coarse = _coarse(cfg)
    fold = _starting_fold(cfg, coarse, tp)
    names = (tp["scan_param"], tp["curve_param"])
    curve = continue_fold_curve(fold, cfg.model, names,
                                _cont_config(tp, tp["direction"]), coarse=coarse,
                                param_range=_curve_param_range(tp),
                                desync_policy=_desync_policy(cfg, tp))
    header = (["index", names[0], names[1], "stable", "test_fold", "test_hopf"]
              + _coeff_header(coarse.q))
    emit.csv("", header, _branch_rows(curve.points, names))
    status = _TERMINATION_STATUS.get(curve.termination.reason, 0)
    return status, {"termination": _term_payload(curve.termination),
                    "start_fold": {names[0]: fold.active_params[names[0]],
                                   "coeffs": list(fold.z.to_vector())}}


def _run_hopf_curve(cfg: ExperimentConfig, emit: _Emitter):
    tp = cfg.task_params
    coarse = _coarse(cfg)
    name = tp["scan_param"]
    fp = _fixed_point(cfg, coarse, tp["relax_periods"])
    scan_cfg = dataclasses.replace(_cont_config(tp, tp["scan_direction"]),
                                   max_points=tp["scan_max_points"])
    bounds = _range_or_none(tp["scan_min"], tp["scan_max"])
    branch = continue_branch(fp, cfg.model, name, scan_cfg, coarse=coarse,
                             param_range={name: bounds} if bounds else None,
                             stop_at_hopf=True)
    hopfs = locate_hopfs(branch, cfg.model, scan_cfg, coarse=coarse)
    if not hopfs:
        raise NumericalError(
            f"no torus bifurcation found scanning {name}; termination: "
            f"{branch.termination.reason} ({branch.termination.detail})")
    hopf = hopfs[0]
    names = (name, tp["curve_param"])
    status = _STATUS_OK
    all_rows = []
    terminations = []
    theta_ends = []
    monotone = True
    for direction in tp["directions"]:
        curve = continue_hopf_curve(hopf, cfg.model, names,
                                    _cont_config(tp, direction), coarse=coarse,
                                    param_range=_curve_param_range(tp),
                                    desync_policy=_desync_policy(cfg, tp))
        for row in _branch_rows(curve.points, names, with_theta=True):
            all_rows.append([direction] + row)
        terminations.append({"direction": direction,
                             **_term_payload(curve.termination)})
        status = max(status, _TERMINATION_STATUS.get(curve.termination.reason, 0))
        theta_ends.append(curve.points[-1].theta)
        monotone = monotone and bool(curve.theta_monotone)
    header = (["direction", "index", names[0], names[1], "theta", "stable",
               "test_fold", "test_hopf"] + _coeff_header(coarse.q))
    emit.csv("", header, all_rows)
    return status, {"terminations": terminations,
                    "theta_monotone_per_direction": monotone,
                    "theta_endpoints": theta_ends,
                    "start_hopf": {name: hopf.active_params[name],
                                   "theta": hopf.theta}}


def _run_sync_scan(cfg: ExperimentConfig, emit: _Emitter):
    tp = cfg.task_params
    het = _het(cfg)
    omegas = tp["omega_values"] or [cfg.model.omega]
    rows, rot_rows = [], []
    reports = []
    for omega in omegas:
        params = dataclasses.replace(cfg.model, omega=float(omega))
        rep = classify_synchrony(params, het,
                                 observe_periods=cfg.numerics.observe_periods,
                                 settle_periods=cfg.numerics.settle_periods,
                                 dt=cfg.numerics.dt,
                                 samples_per_period=tp["samples_per_period"])
        rows.append([omega, cfg.model.beta, rep.modal_count, rep.modal_tie,
                     rep.n_cluster, len(rep.desync_indices),
                     len(rep.quiescent_indices), rep.desync_fraction,
                     rep.cluster_locked_to_forcing])
        for i, count in enumerate(rep.rotation_counts):
            rot_rows.append([omega, i + 1, int(count)])
        reports.append({"omega": float(omega),
                        "desync_fraction": rep.desync_fraction,
                        "locked": bool(rep.cluster_locked_to_forcing)})
    emit.csv("", ["omega", "beta", "modal_count", "modal_tie", "n_cluster",
                  "n_desync", "n_quiescent", "desync_fraction", "locked"], rows)
    if tp["emit_rotations"]:
        emit.csv("_rotations", ["omega", "oscillator", "rotations"], rot_rows)
    return _STATUS_OK, {"reports": reports}


def _run_walkthrough(cfg: ExperimentConfig, emit: _Emitter):
    tp = cfg.task_params
    if math.isnan(tp["omega_star"]):
        raise ConfigError("task_params.omega_star", "required (fold frequency)")
    if tp["omega_values"]:
        omegas = tp["omega_values"]
    else:
        if not 0 < tp["d_min"] < tp["d_max"]:
            raise ConfigError("task_params.d_min",
                              "need 0 < d_min < d_max to generate frequencies")
        sign = 1 if tp["side"] >= 0 else -1
        ds = np.logspace(math.log10(tp["d_min"]), math.log10(tp["d_max"]),
                         tp["n_points"])
        omegas = list(tp["omega_star"] + sign * ds)
    het = _het(cfg)
    estimates = walkthrough_period(cfg.model, het, tp["omega_star"], omegas,
                                   q=cfg.numerics.q,
                                   settle_periods=cfg.numerics.settle_periods,
                                   max_periods=tp["max_periods"],
                                   dt=cfg.numerics.dt,
                                   band_mads=tp["band_mads"],
                                   min_slips=tp["min_slips"])
    rows = [[e.omega, e.distance, e.period, e.n_slips, e.resolved]
            for e in estimates]
    emit.csv("", ["omega", "distance", "period", "n_slips", "resolved"], rows)
    ok = [e for e in estimates if e.resolved and e.period is not None]
    slope = None
    if len(ok) >= 2:
        slope = float(np.polyfit(np.log([e.distance for e in ok]),
                                 np.log([e.period for e in ok]), 1)[0])
    return _STATUS_OK, {"resolved_count": len(ok), "loglog_slope": slope}


_RUNNERS = {
    "simulate": _run_simulate,
    "freq-sweep": _run_freq_sweep,
    "correlate": _run_correlate,
    "project": _run_project,
    "speedup": _run_speedup,
    "fixed-point": _run_fixed_point,
    "branch": _run_branch,
    "fold-curve": _run_fold_curve,
    "hopf-curve": _run_hopf_curve,
    "sync-scan": _run_sync_scan,
    "walkthrough": _run_walkthrough,
}


def run(config: ExperimentConfig) -> tuple[int, list[str]]:
    """Execute one experiment; returns (exit status, written files)."""
    import os
    emit = _Emitter(config.out)
    t0 = time.perf_counter()
    status, extras = _RUNNERS[config.task](config, emit)
    wall = time.perf_counter() - t0
    sidecar = {
        "library_version": __version__,
        "config": {
            "task": config.task,
            "model": dataclasses.asdict(config.model),
            "numerics": dataclasses.asdict(config.numerics),
            "task_params": config.task_params,
            "out": config.out,
        },
        "status": status,
        "wall_clock_seconds": wall,
        "results": extras,
    }
    path = f"{config.out}.meta.json"
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")
    emit.files.append(path)
    return status, emit.files


_FIG3_MODEL = {"phi": 1.0, "beta": 0.5, "epsilon": 1.0, "amplitude": 0.5,
               "omega": 0.85, "n_osc": 500}


def _figure_configs(figure_id: int) -> list[tuple[str, dict]]:
    """Canned parameter sets reproducing the reference experiments."""
    single = {"phi": 1.0, "beta": 0.0, "epsilon": 1.0, "amplitude": 0.5,
              "omega": 0.85, "n_osc": 1}
    net05 = {"phi": 1.0, "beta": 0.5, "epsilon": 1.0, "amplitude": 0.5,
             "omega": 0.85, "n_osc": 500}
    net03 = {"phi": 1.0, "beta": 0.3, "epsilon": 1.0, "amplitude": 0.5,
             "omega": 0.85, "n_osc": 500}
    single_q = {"q": 0, "r": 1}
    net_q = {"q": 1, "r": 20}
    if figure_id == 1:
        return [("", {"task": "freq-sweep",
                      "model": {"phi": 1.0, "beta": 0.0, "epsilon": 0.0,
                                "amplitude": 0.0, "omega": 0.85, "n_osc": 1},
                      "task_params": {"phi_min": -0.5, "phi_max": 3.0,
                                      "n_phi": 36}})]
    if figure_id == 2:
        return [("", {"task": "correlate",
                      "model": {"phi": 1.0, "beta": 0.1, "epsilon": 1.0,
                                "amplitude": 0.5, "omega": 0.85, "n_osc": 500},
                      "numerics": {"q": 1}})]
    if figure_id == 3:
        base = {"model": dict(_FIG3_MODEL), "numerics": {"q": 2}}
        return [
            ("_speedup", {"task": "speedup", **base}),
            ("_projective", {"task": "project", **base,
                             "task_params": {"n_project": 1}}),
            ("_direct", {"task": "project", **base,
                         "task_params": {"n_project": 0}}),
        ]
    if figure_id == 4:
        base = {"model": dict(_FIG3_MODEL), "numerics": {"q": 2}}
        return [
            ("_projective", {"task": "project", **base,
                             "task_params": {"n_project": 71}}),
            ("_direct", {"task": "project", **base,
                         "task_params": {"n_project": 0}}),
        ]
    if figure_id == 5:
        return [("", {"task": "fixed-point", "model": dict(net05),
                      "numerics": {"q": 1, "r": 1}})]
    if figure_id == 6:
        branch_tp = {"param_min": 0.5, "param_max": 1.3}
        return [
            ("_single", {"task": "branch", "model": dict(single),
                         "numerics": dict(single_q), "task_params": dict(branch_tp)}),
            ("_network", {"task": "branch", "model": dict(net05),
                          "numerics": dict(net_q), "task_params": dict(branch_tp)}),
        ]
    if figure_id == 7:
        tp = {"curve_param": "amplitude", "scan_min": 0.4, "scan_max": 1.4,
              "curve_min": 0.005, "curve_max": 0.8, "direction": -1}
        return [
            ("_single_right", {"task": "fold-curve", "model": dict(single),
                               "numerics": dict(single_q),
                               "task_params": {**tp, "edge": "right"}}),
            ("_single_left", {"task": "fold-curve", "model": dict(single),
                              "numerics": dict(single_q),
                              "task_params": {**tp, "edge": "left", "scan_min": 0.4}}),
            ("_network_right", {"task": "fold-curve", "model": dict(net05),
                                "numerics": dict(net_q),
                                "task_params": {**tp, "edge": "right"}}),
            ("_network_left", {"task": "fold-curve", "model": dict(net05),
                               "numerics": dict(net_q),
                               "task_params": {**tp, "edge": "left"}}),
        ]
    if figure_id == 8:
        tp = {"curve_param": "beta", "scan_min": 0.4, "scan_max": 1.4,
              "curve_min": 0.0, "curve_max": 2.5, "direction": 1,
              "desync_check": True, "max_points": 400}
        return [
            ("_right", {"task": "fold-curve", "model": dict(net05),
                        "numerics": dict(net_q),
                        "task_params": {**tp, "edge": "right"}}),
            ("_left", {"task": "fold-curve", "model": dict(net05),
                       "numerics": dict(net_q),
                       "task_params": {**tp, "edge": "left"}}),
        ]
    if figure_id == 9:
        osc = {"oscillators": list(range(491, 501)) + [1], "periods": 150.0,
               "settle_periods": 100, "stride": 20}
        model = {"phi": 1.0, "beta": 1.2, "epsilon": 1.0, "amplitude": 0.5,
                 "omega": 0.935, "n_osc": 500}
        return [
            ("_sync", {"task": "sync-scan", "model": dict(model),
                       "task_params": {"omega_values": [0.935, 0.925]}}),
            ("_omega0935", {"task": "simulate", "model": dict(model),
                            "task_params": dict(osc)}),
            ("_omega0925", {"task": "simulate",
                            "model": {**model, "omega": 0.925},
                            "task_params": dict(osc)}),
        ]
    if figure_id == 10:
        tp = {"curve_param": "phi", "scan_min": 0.4, "scan_max": 1.4,
              "curve_min": 0.05, "curve_max": 3.0, "direction": 1,
              "max_points": 400}
        net = dict(net03)
        return [
            ("_single_right", {"task": "fold-curve", "model": dict(single),
                               "numerics": dict(single_q),
                               "task_params": {**tp, "edge": "right"}}),
            ("_single_left", {"task": "fold-curve", "model": dict(single),
                              "numerics": dict(single_q),
                              "task_params": {**tp, "edge": "left"}}),
            ("_network_right", {"task": "fold-curve", "model": net,
                                "numerics": dict(net_q),
                                "task_params": {**tp, "edge": "right"}}),
            ("_network_left", {"task": "fold-curve", "model": net,
                               "numerics": dict(net_q),
                               "task_params": {**tp, "edge": "left"}}),
        ]
    if figure_id == 11:
        return [("", {"task": "branch",
                      "model": {**single, "phi": 0.8},
                      "numerics": dict(single_q),
                      "task_params": {"param_min": 0.3, "param_max": 1.6,
                                      "max_points": 400}})]
    if figure_id == 12:
        # scanning omega down from inside the tongue at phi = 0.72 hits the
        # torus curve attached to the left cusp of the fold wedge
        hopf_tp = {"curve_param": "phi", "scan_min": 0.3, "scan_max": 1.4,
                   "curve_min": 0.05, "curve_max": 3.0, "max_points": 400,
                   "directions": [1, -1]}
        parts = _figure_configs(10)
        out = [(f"_tongue{sfx}", cfg) for sfx, cfg in parts]
        out.append(("_single_hopf", {"task": "hopf-curve",
                                     "model": {**single, "phi": 0.72},
                                     "numerics": dict(single_q),
                                     "task_params": dict(hopf_tp)}))
        out.append(("_network_hopf", {"task": "hopf-curve",
                                      "model": {**net03, "phi": 0.72},
                                      "numerics": dict(net_q),
                                      "task_params": dict(hopf_tp)}))
        return out
    raise ConfigError("figure", f"figure id must be in 1..12, got {figure_id}")


def reproduce(figure_id: int, out_prefix: str | None = None,
              overrides: list[str] | None = None) -> tuple[int, list[str]]:
    """Run the canned experiment set for one reference figure."""
    parts = _figure_configs(figure_id)
    prefix = out_prefix or f"results/fig{figure_id}"
    status = _STATUS_OK
    files: list[str] = []
    for suffix, raw in parts:
        raw = json.loads(json.dumps(raw))  # deep copy, keep presets pristine
        raw["out"] = f"{prefix}{suffix}"
        for assignment in overrides or []:
            _apply_override(raw, assignment)
        part_status, part_files = run(build_config(raw))
        status = max(status, part_status)
        files += part_files
    return status, files


def _set_threads(n: int | None):
    if n is None:
        return
    if n < 1:
        raise ConfigError("--threads", f"must be >= 1, got {n}")
    import numba
    numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vdpchaos",
        description="Coarse-grained analysis of a forced heterogeneous "
                    "oscillator network.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="task")

    def add_common(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--set", action="append", default=[], metavar="PATH=VALUE",
                       help="override a config field, e.g. model.omega=0.9")
        p.add_argument("--seed", type=int,
                       help="set numerics.base_seed and numerics.het_seed")
        p.add_argument("--threads", type=int, help="cap compiled-kernel threads")
        p.add_argument("--out", help="output path prefix")

    for task in TASKS:
        p = sub.add_parser(task, help=f"run the {task} task")
        add_common(p)
    p = sub.add_parser("reproduce", help="run a canned reference-figure recipe")
    p.add_argument("figure", type=int, help="figure id, 1..12")
    add_common(p)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        _set_threads(args.threads)
        if args.command == "reproduce":
            status, files = reproduce(args.figure, out_prefix=args.out,
                                      overrides=_seed_overrides(args))
        else:
            raw = {"task": args.command}
            if args.config:
                with open(args.config) as fh:
                    try:
                        raw = json.load(fh)
                    except json.JSONDecodeError as err:
                        raise ConfigError("<config>", f"invalid JSON: {err}")
                if "task" in raw and raw["task"] != args.command:
                    raise ConfigError(
                        "task", f"config names task {raw['task']!r} but the "
                                f"command line asked for {args.command!r}")
                raw["task"] = args.command
            for assignment in _seed_overrides(args):
                _apply_override(raw, assignment)
            if args.out:
                raw["out"] = args.out
            status, files = run(build_config(raw))
    except ConfigError as err:
        print(json.dumps({"status": "config-error", "field": err.field,
                          "reason": err.message}), file=sys.stderr)
        return _STATUS_CONFIG
    except NumericalError as err:
        print(json.dumps({"status": "numerical-failure", "reason": str(err)}),
              file=sys.stderr)
        return _STATUS_NUMERICAL
    except DomainError as err:
        print(json.dumps({"status": "config-error", "reason": str(err)}),
              file=sys.stderr)
        return _STATUS_CONFIG
    for path in files:
        print(path)
    if status == _STATUS_PHYSICS:
        print(json.dumps({"status": "physics-breakdown",
                          "reason": "curve terminated by desynchronization"}),
              file=sys.stderr)
    elif status == _STATUS_NUMERICAL:
        print(json.dumps({"status": "numerical-failure",
                          "reason": "curve stalled without desynchronization"}),
              file=sys.stderr)
    return status


def _seed_overrides(args) -> list[str]:
    overrides = list(args.set)
    if args.seed is not None:
        overrides = [f"numerics.base_seed={args.seed}",
                     f"numerics.het_seed={args.seed}"] + overrides
    return overrides


if __name__ == "__main__":
    sys.exit(main())
