"""Command-line front end: JSON config in, deterministic CSV/JSON artifacts out.

Commands (config key "command"):

* ``run``        one trajectory -> steps.csv + ledger.json
* ``lemmas``     randomized pathwise-check suite -> violations.csv
* ``lowerbound`` exact + Monte Carlo hard-instance verification -> report.json
* ``tail``       ensemble + quantile curve + exponent fit -> curve.csv + fit.json
* ``separate``   paired per-delta study -> separation.json + curve CSVs

Exit codes: 0 success, 1 check/verdict failure, 2 configuration error,
3 runtime divergence in ``run``. Outputs land in one directory per
invocation, named <command>-<first 12 hex of the resolved-config SHA-256>,
so identical configs always map to identical bytes at identical paths.
Floats are rendered as shortest round-trip decimals.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from .checks import IDENTITY_CHECKS, LEMMA_CHECKS
from .errors import (
    ConfigurationError,
    DivergenceError,
    FitError,
    InputError,
    InstanceInvalidError,
)
from .instrument import compute_ledger, stopping_time
from .lowerbound import (
    build_const_instance,
    build_tv_instance,
    verify_const_instance,
    verify_tv_instance,
)
from .optimizers import AdamParams, StepSchedule, calibrate, run_trajectory
from .problems import Objective, Oracle
from .streams import derive_stream
from .suite import run_general_beta_suite, run_lemma_suite
from .tailstudy import (
    SlopeThresholds,
    fit_exponent,
    hard_instance_amplitude,
    quantile_curve,
    run_separation_study,
)
from .ensembles import ensemble_metrics

COMMANDS = ("run", "lemmas", "lowerbound", "tail", "separate")

DEFAULT_DELTA_GRID = [float(d) for d in np.logspace(-1, -3, 5)]

DEFAULTS = {
    "problem": {"kind": "quadratic-diag", "d": 1, "lambda": [1.0]},
    "oracle": {"noise": "gaussian", "sigma": 0.5, "amplitude": None},
    "optimizer": {
        "kind": "adam",
        "calibrated": True,
        "eta": 0.1,
        "gamma": None,
        "beta1": 0.0,
        "beta2": None,
        "eps": 1e-8,
        "v0": 1.0,
        "schedule_path": None,
    },
    "run": {},
    "output": {"directory": "out", "formats": ["csv", "json"]},
}

RUN_DEFAULTS = {
    "run": {"T": 100, "master_seed": 0, "x_init": [1.0], "G": None},
    "lemmas": {"count": 1000, "master_seed": 0, "gen_beta_count": None},
    "lowerbound": {
        "mode": "const",
        "T": 100,
        "master_seed": 0,
        "delta": 0.001,
        "delta_bar": None,
        "corollary_delta": None,
        "x_init": 0.0,
        "mc_runs": None,
    },
    "tail": {
        "T": 100,
        "N": 1000,
        "master_seed": 0,
        "x_init": [0.0],
        "delta_grid": DEFAULT_DELTA_GRID,
        "metric": "avg_gsq",
        "per_delta": False,
    },
    "separate": {
        "T": 1000,
        "N": 200000,
        "master_seed": 0,
        "delta_grid": DEFAULT_DELTA_GRID,
        "sgd_gamma": None,
        "adam_eta_frac": 0.9,
        "beta1": 0.0,
        "eps": 1e-8,
        "v0": 1.0,
        "thresholds": {
            "sgd_min_slope": 0.85,
            "adam_max_slope": 0.75,
            "min_gap": 0.2,
            "energy_max_slope": 0.15,
        },
    },
}


class ConfigValidationError(ConfigurationError):
    def __init__(self, violations):
        super().__init__("; ".join(violations))
        self.violations = list(violations)


def _merge(defaults: dict, supplied: dict, prefix: str, violations: list) -> dict:
    merged = dict(defaults)
    for key, value in supplied.items():
        if key not in defaults:
            violations.append(f"unknown key {prefix}{key}")
            continue
        if isinstance(defaults[key], dict) and isinstance(value, dict):
            merged[key] = _merge(defaults[key], value, f"{prefix}{key}.", violations)
        else:
            merged[key] = value
    return merged


def _check_number(cfg, block, key, violations, minimum=None, strict=False, integer=False,
                  maximum=None, allow_none=False):
    value = cfg[block][key]
    name = f"{block}.{key}"
    if value is None:
        if not allow_none:
            violations.append(f"{name} is required")
        return
    if integer and not isinstance(value, int):
        violations.append(f"{name} must be an integer, got {value!r}")
        return
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        violations.append(f"{name} must be a number, got {value!r}")
        return
    if minimum is not None:
        if strict and not value > minimum:
            violations.append(f"{name} must be > {minimum}, got {value}")
        if not strict and not value >= minimum:
            violations.append(f"{name} must be >= {minimum}, got {value}")
    if maximum is not None and not value <= maximum:
        violations.append(f"{name} must be <= {maximum}, got {value}")


class Config:
    """Validated configuration; ``resolved`` is the fully merged mapping."""

    def __init__(self, resolved: dict):
        self.resolved = resolved
        self.command = resolved["command"]

    @property
    def hash(self) -> str:
        canon = json.dumps(self.resolved, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:12]

    def build_objective(self) -> Objective:
        p = self.resolved["problem"]
        if p["kind"] == "quadratic-diag":
            lam = p["lambda"]
            if len(lam) != p["d"]:
                raise ConfigurationError("problem.lambda length must equal problem.d")
            return Objective.quadratic_diag(lam)
        return Objective.quadratic_cosine(p["d"])

    def build_oracle(self, objective: Objective) -> Oracle:
        o = self.resolved["oracle"]
        if o["noise"] == "gaussian":
            return Oracle(objective=objective, noise="gaussian", sigma=o["sigma"])
        if o["noise"] == "three-point":
            return Oracle(objective=objective, noise="three-point", amplitude=o["amplitude"])
        return Oracle(objective=objective, noise="zero")

    def build_optimizer(self, T: int):
        o = self.resolved["optimizer"]
        if o["kind"] == "adam":
            if o["calibrated"]:
                return calibrate(o["eta"], T, beta1=o["beta1"], eps=o["eps"], v0=o["v0"])
            return AdamParams(gamma=o["gamma"], beta1=o["beta1"], beta2=o["beta2"],
                              eps=o["eps"], v0=o["v0"], T=T)
        if o["schedule_path"] is not None:
            etas = _read_schedule(o["schedule_path"])
            return StepSchedule.explicit(etas)
        return StepSchedule.constant(o["gamma"])


def _read_schedule(path: str):
    """One-column CSV with header 'eta'."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["eta"]:
            raise ConfigurationError(f"schedule file {path} must have a single 'eta' column")
        return [float(row["eta"]) for row in reader]


def validate_config(data: dict) -> Config:
    violations: list[str] = []
    if not isinstance(data, dict):
        raise ConfigValidationError(["config root must be a JSON object"])
    command = data.get("command")
    if command not in COMMANDS:
        raise ConfigValidationError([f"command must be one of {COMMANDS}, got {command!r}"])
    allowed_top = {"command", "problem", "oracle", "optimizer", "run", "output"}
    for key in data:
        if key not in allowed_top:
            violations.append(f"unknown key {key}")
    defaults = {k: v for k, v in DEFAULTS.items()}
    defaults["run"] = RUN_DEFAULTS[command]
    resolved = {"command": command}
    for block in ("problem", "oracle", "optimizer", "run", "output"):
        supplied = data.get(block, {})
        if not isinstance(supplied, dict):
            violations.append(f"{block} must be an object")
            supplied = {}
        resolved[block] = _merge(defaults[block], supplied, f"{block}.", violations)

    prob = resolved["problem"]
    if prob["kind"] not in ("quadratic-diag", "quadratic-cosine"):
        violations.append(f"problem.kind must be quadratic-diag or quadratic-cosine, got {prob['kind']!r}")
    _check_number(resolved, "problem", "d", violations, minimum=1, integer=True)
    if prob["kind"] == "quadratic-cosine" and "lambda" in data.get("problem", {}):
        violations.append("problem.lambda conflicts with kind quadratic-cosine")

    orc = resolved["oracle"]
    if orc["noise"] not in ("zero", "gaussian", "three-point"):
        violations.append(f"oracle.noise must be zero, gaussian, or three-point, got {orc['noise']!r}")
    if orc["noise"] == "gaussian":
        _check_number(resolved, "oracle", "sigma", violations, minimum=0)
    if orc["noise"] == "three-point":
        per_delta = command == "tail" and bool(resolved["run"].get("per_delta", False))
        if not per_delta:
            _check_number(resolved, "oracle", "amplitude", violations, minimum=1)

    opt = resolved["optimizer"]
    if opt["kind"] not in ("adam", "sgd"):
        violations.append(f"optimizer.kind must be adam or sgd, got {opt['kind']!r}")
    if opt["kind"] == "adam":
        if opt["calibrated"] and opt["beta2"] is not None:
            violations.append("optimizer.beta2 conflicts with calibrated mode (beta2 = 1 - 1/T)")
        if opt["calibrated"]:
            _check_number(resolved, "optimizer", "eta", violations, minimum=0, strict=True)
        else:
            _check_number(resolved, "optimizer", "gamma", violations, minimum=0, strict=True)
            _check_number(resolved, "optimizer", "beta2", violations, minimum=0, maximum=1)
        _check_number(resolved, "optimizer", "beta1", violations, minimum=0, maximum=1)
        _check_number(resolved, "optimizer", "eps", violations, minimum=0, strict=True)
        _check_number(resolved, "optimizer", "v0", violations, minimum=0, strict=True)
    elif command in ("run", "lowerbound", "tail"):
        if opt["schedule_path"] is None:
            _check_number(resolved, "optimizer", "gamma", violations, minimum=0)
        elif not os.path.exists(opt["schedule_path"]):
            violations.append(f"optimizer.schedule_path does not exist: {opt['schedule_path']}")

    _validate_run_block(command, resolved, violations)

    out = resolved["output"]
    if not isinstance(out["directory"], str) or not out["directory"]:
        violations.append("output.directory must be a nonempty string")
    if not isinstance(out["formats"], list) or not set(out["formats"]) <= {"csv", "json"}:
        violations.append("output.formats must be a subset of ['csv', 'json']")

    if violations:
        raise ConfigValidationError(violations)
    return Config(resolved)


def _validate_run_block(command: str, resolved: dict, violations: list):
    run = resolved["run"]
    if command == "run":
        _check_number(resolved, "run", "T", violations, minimum=1, integer=True)
        _check_number(resolved, "run", "master_seed", violations, minimum=0, integer=True)
        if run["G"] is not None:
            _check_number(resolved, "run", "G", violations, minimum=1, allow_none=True)
    elif command == "lemmas":
        _check_number(resolved, "run", "count", violations, minimum=1, integer=True)
        _check_number(resolved, "run", "master_seed", violations, minimum=0, integer=True)
    elif command == "lowerbound":
        if run["mode"] not in ("const", "tv"):
            violations.append(f"run.mode must be const or tv, got {run['mode']!r}")
        _check_number(resolved, "run", "T", violations, minimum=2, integer=True)
        _check_number(resolved, "run", "master_seed", violations, minimum=0, integer=True)
        if run["mode"] == "const":
            _check_number(resolved, "run", "delta", violations, minimum=0, strict=True)
        else:
            if run["delta_bar"] is None and run["corollary_delta"] is None:
                violations.append("run.delta_bar (or run.corollary_delta) is required in tv mode")
        if run["mc_runs"] is not None:
            _check_number(resolved, "run", "mc_runs", violations, minimum=1000, integer=True, allow_none=True)
    elif command in ("tail", "separate"):
        _check_number(resolved, "run", "T", violations, minimum=1, integer=True)
        _check_number(resolved, "run", "N", violations, minimum=10, integer=True)
        _check_number(resolved, "run", "master_seed", violations, minimum=0, integer=True)
        grid = run["delta_grid"]
        if not isinstance(grid, list) or len(grid) < 1 or any(
            not isinstance(d, (int, float)) or not 0 < d < 1 for d in grid
        ):
            violations.append("run.delta_grid must be a list of confidence levels in (0, 1)")
        elif any(b >= a for a, b in zip(grid, grid[1:])):
            violations.append("run.delta_grid must be strictly decreasing")
        if command == "tail":
            if run["metric"] not in ("avg_gsq", "w_gsq", "E"):
                violations.append(f"run.metric must be avg_gsq, w_gsq, or E, got {run['metric']!r}")
            if run["per_delta"]:
                if resolved["oracle"]["noise"] != "three-point":
                    violations.append("run.per_delta requires oracle.noise three-point")
                if resolved["oracle"]["amplitude"] is not None:
                    violations.append("oracle.amplitude conflicts with run.per_delta (amplitude is retuned per delta)")


def parse_config(path: str) -> Config:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as err:
        raise ConfigValidationError([f"cannot read config: {err}"]) from None
    except json.JSONDecodeError as err:
        raise ConfigValidationError([f"malformed JSON: {err}"]) from None
    return validate_config(data)


def _json_ready(obj):
    if isinstance(obj, dict):
        return {k: _json_ready(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_ready(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_json_ready(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def _write_json(path: Path, payload: dict):
    text = json.dumps(_json_ready(payload), sort_keys=True, indent=2)
    path.write_text(text + "\n")


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _write_csv(path: Path, header: list, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _out_dir(cfg: Config, override: str | None) -> Path:
    base = Path(override) if override else Path(cfg.resolved["output"]["directory"])
    path = base / f"{cfg.command}-{cfg.hash}"
    path.mkdir(parents=True, exist_ok=True)
    return path


def _cmd_run(cfg: Config, outdir: Path, workers: int) -> int:
    run = cfg.resolved["run"]
    T = run["T"]
    obj = cfg.build_objective()
    oracle = cfg.build_oracle(obj)
    spec = cfg.build_optimizer(T)
    x_init = run["x_init"]
    stream = derive_stream(run["master_seed"], 0, "noise")
    code = 0
    try:
        traj = run_trajectory(spec, oracle, x_init, T, stream)
    except DivergenceError as err:
        traj = err.trajectory
        code = 3
    _write_steps_csv(outdir / "steps.csv", traj)
    if traj.n_steps >= 1:
        ledger = compute_ledger(traj).to_dict()
    else:
        # divergence at the very first step leaves nothing to accumulate
        ledger = {"n_steps": 0}
    ledger["diverged_at"] = traj.diverged_at
    if run["G"] is not None:
        ledger["tau_G"] = stopping_time(traj, run["G"])
    _write_json(outdir / "ledger.json", ledger)
    return code


def _write_steps_csv(path: Path, traj):
    d = traj.d
    cols = ["t"]
    per_coord = ["x", "g", "grad"]
    if traj.optimizer == "adam":
        per_coord += ["m", "v", "gamma"]
    for name in per_coord:
        cols += [f"{name}_{i}" for i in range(d)]
    if traj.optimizer == "sgd":
        cols.append("eta")
    rows = []
    for t in range(1, traj.T + 1):
        row = [t]
        arrays = [traj.x[t - 1], traj.g[t - 1], traj.grad[t - 1]]
        if traj.optimizer == "adam":
            arrays += [traj.m[t - 1], traj.v[t - 1], traj.gamma[t - 1]]
        for arr in arrays:
            row.extend(arr)
        if traj.optimizer == "sgd":
            row.append(traj.eta[t - 1])
        rows.append(row)
    _write_csv(path, cols, rows)


def _cmd_lemmas(cfg: Config, outdir: Path, workers: int) -> int:
    run = cfg.resolved["run"]
    count = run["count"]
    gb_count = run["gen_beta_count"]
    if gb_count is None:
        gb_count = max(5, count // 5)
    violations, _ = run_lemma_suite(count, run["master_seed"],
                                    check_ids=LEMMA_CHECKS + IDENTITY_CHECKS)
    gb_violations, _ = run_general_beta_suite(gb_count, run["master_seed"])
    rows = [
        [v["check_id"], v["seed"], v["d"], v["T"], v["beta1"], v["margin"], v["worst_t"], v["worst_i"]]
        for v in violations + gb_violations
    ]
    _write_csv(outdir / "violations.csv",
               ["check_id", "seed", "d", "T", "beta1", "margin", "worst_t", "worst_i"], rows)
    return 0 if not rows else 1


def _cmd_lowerbound(cfg: Config, outdir: Path, workers: int) -> int:
    run = cfg.resolved["run"]
    opt = cfg.resolved["optimizer"]
    T = run["T"]
    reports = {}
    if run["mode"] == "const":
        instance = build_const_instance(opt["gamma"], T, run["delta"], run["x_init"])
        for label, weighted in (("unweighted", False), ("weighted", True)):
            reports[label] = verify_const_instance(
                instance, weighted=weighted, mc_runs=run["mc_runs"],
                master_seed=run["master_seed"], workers=workers,
            ).to_dict()
    else:
        if opt["schedule_path"] is not None:
            schedule = _read_schedule(opt["schedule_path"])
        else:
            schedule = [opt["gamma"]] * T
        corollary_delta = run["corollary_delta"]
        delta_bar = run["delta_bar"] if corollary_delta is None else 16.0 * corollary_delta
        instance = build_tv_instance(schedule, T, delta_bar)
        for label, weighted in (("unweighted", False), ("weighted", True)):
            reports[label] = verify_tv_instance(
                instance, weighted=weighted, corollary_delta=corollary_delta,
                mc_runs=run["mc_runs"], master_seed=run["master_seed"], workers=workers,
            ).to_dict()
    _write_json(outdir / "report.json", reports)
    ok = all(rep["all_hold"] for rep in reports.values())
    return 0 if ok else 1


def _cmd_tail(cfg: Config, outdir: Path, workers: int) -> int:
    run = cfg.resolved["run"]
    T, N = run["T"], run["N"]
    obj = cfg.build_objective()
    spec = cfg.build_optimizer(T)
    deltas = [float(d) for d in run["delta_grid"]]
    metric = run["metric"]
    samples = {}
    if run["per_delta"]:
        for k, delta in enumerate(deltas):
            oracle = Oracle(objective=obj, noise="three-point",
                            amplitude=hard_instance_amplitude(T, delta))
            res = ensemble_metrics(spec, oracle, run["x_init"], T, N,
                                   run["master_seed"], workers=workers)
            samples[k] = res[metric]
    else:
        res = ensemble_metrics(spec, cfg.build_oracle(obj), run["x_init"], T, N,
                               run["master_seed"], workers=workers)
        samples = {k: res[metric] for k in range(len(deltas))}
    curve = quantile_curve(deltas, samples, metric, T)
    _write_csv(outdir / "curve.csv", ["delta", "q", "n_exceed"],
               zip(curve.deltas, curve.qs, curve.n_exceed))
    try:
        fit = fit_exponent(curve)
    except (FitError, ConfigurationError) as err:
        _write_json(outdir / "fit.json", {"error": str(err)})
        return 1
    _write_json(outdir / "fit.json", fit.to_dict())
    return 0


def _cmd_separate(cfg: Config, outdir: Path, workers: int) -> int:
    run = cfg.resolved["run"]
    thr = run["thresholds"]
    thresholds = SlopeThresholds(
        sgd_min_slope=thr["sgd_min_slope"],
        adam_max_slope=thr["adam_max_slope"],
        min_gap=thr["min_gap"],
        energy_max_slope=thr["energy_max_slope"],
    )
    study = run_separation_study(
        T=run["T"], N=run["N"], delta_grid=run["delta_grid"],
        master_seed=run["master_seed"], sgd_gamma=run["sgd_gamma"],
        adam_eta_frac=run["adam_eta_frac"], beta1=run["beta1"],
        eps=run["eps"], v0=run["v0"], thresholds=thresholds, workers=workers,
    )
    for name, curve in (("sgd_curve", study.sgd_curve), ("adam_curve", study.adam_curve),
                        ("energy_curve", study.energy_curve)):
        _write_csv(outdir / f"{name}.csv", ["delta", "q", "n_exceed"],
                   zip(curve.deltas, curve.qs, curve.n_exceed))
    _write_json(outdir / "separation.json", study.to_dict())
    return 0 if study.report.passes["gap_ok"] else 1


_DISPATCH = {
    "run": _cmd_run,
    "lemmas": _cmd_lemmas,
    "lowerbound": _cmd_lowerbound,
    "tail": _cmd_tail,
    "separate": _cmd_separate,
}


def _resolve_workers(flag_value) -> int:
    if flag_value is not None:
        return max(1, flag_value)
    env = os.environ.get("ADAMSEP_WORKERS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigValidationError([f"ADAMSEP_WORKERS must be an integer, got {env!r}"]) from None
    return 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="adamsep", description=__doc__)
    parser.add_argument("--config", required=True, help="path to the JSON config")
    parser.add_argument("--workers", type=int, default=None,
                        help="worker processes (fallback: ADAMSEP_WORKERS, default 1)")
    parser.add_argument("--out", default=None, help="output root (overrides output.directory)")
    args = parser.parse_args(argv)
    try:
        cfg = parse_config(args.config)
        workers = _resolve_workers(args.workers)
    except ConfigValidationError as err:
        for violation in err.violations:
            print(f"config error: {violation}", file=sys.stderr)
        return 2
    outdir = _out_dir(cfg, args.out)
    try:
        return _DISPATCH[cfg.command](cfg, outdir, workers)
    except (InstanceInvalidError, ConfigurationError, InputError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
