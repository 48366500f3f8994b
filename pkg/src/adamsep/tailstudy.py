"""Ensemble execution, delta-quantile curves, confidence-exponent fits, and
the Adam-vs-SGD separation study.

The canonical separation experiment retunes the three-point noise amplitude
to each confidence level via A(delta) = sqrt(T / (16 delta)) (the hard
instance is delta-dependent), runs both optimizers on the same per-delta
instances, and fits the slope of log q_delta against log(1/delta). A fixed
noise level instead produces flat quantile plateaus, not a delta^{-1} law.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .ensembles import ensemble_metrics
from .errors import ConfigurationError, FitError, InputError
from .lowerbound import const_metric_threshold
from .optimizers import AdamParams, StepSchedule, calibrate, max_eta
from .problems import Objective, Oracle
from .streams import derive_seed

MAX_RUNS = 10**8
METRICS = ("avg_gsq", "w_gsq", "E")


@dataclass(frozen=True)
class EnsembleSpec:
    oracle: Oracle
    optimizer: AdamParams | StepSchedule
    x_init: tuple
    T: int
    N: int
    master_seed: int
    metric: str = "avg_gsq"

    def __post_init__(self):
        if self.metric not in METRICS:
            raise ConfigurationError(f"metric must be one of {METRICS}, got {self.metric!r}")
        if self.N < 10:
            raise ConfigurationError(f"ensembles need N >= 10 runs, got {self.N}")
        if self.N > MAX_RUNS:
            raise ConfigurationError(f"N={self.N} exceeds the {MAX_RUNS} run guard")
        is_adam = isinstance(self.optimizer, AdamParams)
        if self.metric == "E" and not is_adam:
            raise ConfigurationError("metric E requires an Adam optimizer")
        if self.metric == "w_gsq" and is_adam:
            raise ConfigurationError("metric w_gsq requires an SGD optimizer")


def run_ensemble(spec: EnsembleSpec, workers: int = 1) -> np.ndarray:
    """Metric samples for runs 0..N-1 (run i drawing from (master_seed, i, "noise")).

    Diverged runs appear as +inf sentinels, which sort last and only
    strengthen upper-tail quantiles.
    """
    res = ensemble_metrics(spec.optimizer, spec.oracle, list(spec.x_init), spec.T,
                           spec.N, spec.master_seed, workers=workers)
    return res[spec.metric]


def empirical_quantile(samples, level: float) -> float:
    """Order-statistic quantile: ascending sort, 1-based index ceil(level * N)
    clamped to [1, N]. The ceiling convention is one-sided conservative for
    small upper tails."""
    arr = np.sort(np.asarray(samples, dtype=np.float64))
    n = arr.shape[0]
    if n == 0:
        raise InputError("empty sample list")
    if not 0.0 < level < 1.0:
        raise ConfigurationError(f"quantile level must lie in (0, 1), got {level}")
    idx = min(max(math.ceil(level * n), 1), n)
    return float(arr[idx - 1])


@dataclass(frozen=True)
class QuantileCurve:
    """Empirical (1 - delta)-quantiles over a strictly decreasing delta grid."""

    deltas: tuple
    qs: tuple
    n_exceed: tuple
    N: int
    metric: str

    def __post_init__(self):
        if len(self.deltas) != len(self.qs) or len(self.deltas) != len(self.n_exceed):
            raise InputError("curve fields must have equal lengths")
        if any(b >= a for a, b in zip(self.deltas, self.deltas[1:])):
            raise InputError("delta grid must be strictly decreasing")

    @property
    def is_monotone(self) -> bool:
        """Quantiles nondecreasing as delta decreases."""
        return all(b >= a for a, b in zip(self.qs, self.qs[1:]))


def quantile_curve(deltas, samples_by_delta, metric: str, T: int,
                   thresholds=None) -> QuantileCurve:
    """Assemble a curve from per-delta sample arrays; n_exceed counts samples
    at or above the per-delta threshold (the matching theorem threshold by
    default for SGD metrics, none for E)."""
    deltas = tuple(float(d) for d in deltas)
    qs = []
    n_exc = []
    for k, delta in enumerate(deltas):
        samples = samples_by_delta[k]
        qs.append(empirical_quantile(samples, 1.0 - delta))
        if thresholds is not None:
            thr = thresholds[k]
        elif metric == "avg_gsq":
            thr = const_metric_threshold(delta, T, weighted=False)
        elif metric == "w_gsq":
            thr = const_metric_threshold(delta, T, weighted=True)
        else:
            thr = math.inf
        n_exc.append(int(np.count_nonzero(np.asarray(samples) >= thr)))
    return QuantileCurve(deltas=deltas, qs=tuple(qs), n_exceed=tuple(n_exc),
                         N=len(samples_by_delta[0]), metric=metric)


@dataclass(frozen=True)
class ExponentFit:
    """Least-squares slope of log q against log(1/delta)."""

    slope: float
    intercept: float
    max_residual: float
    delta_range: tuple

    def to_dict(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "max_residual": self.max_residual,
            "delta_range": list(self.delta_range),
        }


def fit_exponent(curve: QuantileCurve) -> ExponentFit:
    if len(curve.deltas) < 3:
        raise InputError(f"exponent fit needs >= 3 points, got {len(curve.deltas)}")
    for delta, q in zip(curve.deltas, curve.qs):
        if not (q > 0.0 and math.isfinite(q)):
            raise FitError(delta, f"nonpositive or nonfinite quantile {q} at delta={delta}")
    x = np.log(1.0 / np.asarray(curve.deltas))
    y = np.log(np.asarray(curve.qs))
    slope, intercept = np.polyfit(x, y, 1)
    resid = np.max(np.abs(y - (slope * x + intercept)))
    return ExponentFit(
        slope=float(slope),
        intercept=float(intercept),
        max_residual=float(resid),
        delta_range=(min(curve.deltas), max(curve.deltas)),
    )


@dataclass(frozen=True)
class SlopeThresholds:
    sgd_min_slope: float = 0.85
    adam_max_slope: float = 0.75
    min_gap: float = 0.2
    energy_max_slope: float = 0.15

    def to_dict(self) -> dict:
        return {
            "sgd_min_slope": self.sgd_min_slope,
            "adam_max_slope": self.adam_max_slope,
            "min_gap": self.min_gap,
            "energy_max_slope": self.energy_max_slope,
        }


@dataclass
class SeparationReport:
    adam_fit: ExponentFit
    sgd_fit: ExponentFit
    slope_gap: float
    ratios: tuple
    thresholds: SlopeThresholds
    passes: dict

    def to_dict(self) -> dict:
        return {
            "adam_fit": self.adam_fit.to_dict(),
            "sgd_fit": self.sgd_fit.to_dict(),
            "slope_gap": self.slope_gap,
            "ratios": [list(r) for r in self.ratios],
            "thresholds": self.thresholds.to_dict(),
            "passes": dict(self.passes),
        }


def separation_report(adam_curve: QuantileCurve, sgd_curve: QuantileCurve,
                      thresholds: SlopeThresholds = SlopeThresholds()) -> SeparationReport:
    if adam_curve.deltas != sgd_curve.deltas:
        raise InputError("curves must share the same delta grid")
    adam_fit = fit_exponent(adam_curve)
    sgd_fit = fit_exponent(sgd_curve)
    gap = sgd_fit.slope - adam_fit.slope
    ratios = tuple(
        (d, qs / qa if qa > 0 else math.inf)
        for d, qa, qs in zip(adam_curve.deltas, adam_curve.qs, sgd_curve.qs)
    )
    passes = {
        "sgd_slope_ok": sgd_fit.slope >= thresholds.sgd_min_slope,
        "adam_slope_ok": adam_fit.slope <= thresholds.adam_max_slope,
        "gap_ok": gap >= thresholds.min_gap,
    }
    return SeparationReport(
        adam_fit=adam_fit, sgd_fit=sgd_fit, slope_gap=gap, ratios=ratios,
        thresholds=thresholds, passes=passes,
    )


@dataclass
class SeparationStudy:
    sgd_curve: QuantileCurve
    adam_curve: QuantileCurve
    energy_curve: QuantileCurve
    report: SeparationReport
    energy_fit: ExponentFit
    energy_slope_ok: bool

    def to_dict(self) -> dict:
        out = self.report.to_dict()
        out["energy_fit"] = self.energy_fit.to_dict()
        out["energy_slope_ok"] = self.energy_slope_ok
        return out


def hard_instance_amplitude(T: int, delta: float) -> float:
    """Noise-retuning rule of the per-delta hard instance, A = sqrt(T / (16 delta))."""
    return math.sqrt(T / (16.0 * delta))


def run_separation_study(T: int, N: int, delta_grid, master_seed: int,
                         sgd_gamma: float | None = None,
                         adam_eta_frac: float = 0.9, beta1: float = 0.0,
                         eps: float = 1e-8, v0: float = 1.0,
                         thresholds: SlopeThresholds = SlopeThresholds(),
                         workers: int = 1) -> SeparationStudy:
    """Paired per-delta study on f(x) = x^2/2 from x_1 = 0: SGD at
    gamma = 1/sqrt(T) (unless overridden) vs calibrated Adam at
    eta = adam_eta_frac * max_eta. Returns curves, fits, and pass flags."""
    deltas = tuple(float(d) for d in delta_grid)
    obj = Objective.quadratic_diag([1.0])
    if sgd_gamma is None:
        sgd_gamma = 1.0 / math.sqrt(T)
    eta = adam_eta_frac * max_eta(1, v0, eps, beta1, obj.L)
    adam_params = calibrate(eta, T, beta1=beta1, eps=eps, v0=v0)
    sgd_spec = StepSchedule.constant(sgd_gamma)
    x_init = [0.0]
    sgd_samples = {}
    adam_samples = {}
    energy_samples = {}
    for k, delta in enumerate(deltas):
        oracle = Oracle(objective=obj, noise="three-point", amplitude=hard_instance_amplitude(T, delta))
        res_sgd = ensemble_metrics(sgd_spec, oracle, x_init, T, N,
                                   derive_seed(master_seed, f"sep-sgd-{k}"), workers=workers)
        sgd_samples[k] = res_sgd["avg_gsq"]
        res_adam = ensemble_metrics(adam_params, oracle, x_init, T, N,
                                    derive_seed(master_seed, f"sep-adam-{k}"), workers=workers)
        adam_samples[k] = res_adam["avg_gsq"]
        energy_samples[k] = res_adam["E"]
    sgd_curve = quantile_curve(deltas, sgd_samples, "avg_gsq", T)
    adam_curve = quantile_curve(deltas, adam_samples, "avg_gsq", T)
    energy_curve = quantile_curve(deltas, energy_samples, "E", T)
    report = separation_report(adam_curve, sgd_curve, thresholds)
    energy_fit = fit_exponent(energy_curve)
    return SeparationStudy(
        sgd_curve=sgd_curve,
        adam_curve=adam_curve,
        energy_curve=energy_curve,
        report=report,
        energy_fit=energy_fit,
        energy_slope_ok=energy_fit.slope <= thresholds.energy_max_slope,
    )
