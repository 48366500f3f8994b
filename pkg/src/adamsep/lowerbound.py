"""Hard SGD instances with one-shock event analytics.

The instance family runs SGD on f(x) = x^2 / 2 (so grad f(x) = x) with
symmetric three-point noise of amplitude A: +A and -A each with probability
1/(2 A^2), zero otherwise (unit variance at every amplitude). Rare single
shocks inside the first floor(T/2) steps force a deterministic response
energy that no step size can damp, which is the mechanism behind the
delta^{-1} confidence floor of SGD.

Constant-step instances tune A^2 = T / (16 delta); time-varying instances
use an internal confidence parameter delta_bar with A^2 = 4 T / delta_bar.
Exact event probabilities, deterministic shocked trajectories, closed-form
response factors, exhaustive small-horizon enumeration, and Monte Carlo
cross-checks are all provided.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .ensembles import ensemble_metrics
from .errors import ConfigurationError, InputError, InstanceInvalidError
from .optimizers import StepSchedule, Trajectory
from .problems import Objective, Oracle

SIGNED = "signed"
UNSIGNED = "unsigned"


def response_factor(gamma: float, T: int) -> float:
    """One-shock response factor gamma^2 sum_{r=0}^{T - floor(T/2) - 1} (1-gamma)^{2r}
    for 0 < gamma < 1."""
    if not 0.0 < gamma < 1.0:
        raise ConfigurationError(f"response factor is defined for 0 < gamma < 1, got {gamma}")
    n_terms = T - T // 2
    q = (1.0 - gamma) ** 2
    if q == 1.0:
        return gamma * gamma * n_terms
    return gamma * gamma * (1.0 - q**n_terms) / (1.0 - q)


def delta_threshold(gamma: float, T: int) -> float:
    """Largest admissible confidence parameter for the constant-step instance."""
    if gamma >= 1.0:
        return 1.0 / 64.0
    R = response_factor(gamma, T)
    return min(
        1.0 / 64.0,
        math.exp(-1.0 / (32.0 * R * math.sqrt(T))),
        math.exp(-1.0 / math.sqrt(32.0 * gamma * T * R)),
    )


@dataclass(frozen=True)
class ConstStepInstance:
    gamma: float
    T: int
    delta: float
    x_init: float
    A: float
    p: float
    m: int
    R: float | None
    delta_threshold: float

    def summary(self) -> dict:
        return {
            "kind": "const",
            "gamma": self.gamma,
            "T": self.T,
            "delta": self.delta,
            "x_init": self.x_init,
            "A": self.A,
            "p": self.p,
            "m": self.m,
            "R": self.R,
            "delta_threshold": self.delta_threshold,
        }


def build_const_instance(gamma: float, T: int, delta: float, x_init: float = 0.0) -> ConstStepInstance:
    if not isinstance(T, int) or T < 10:
        raise ConfigurationError(f"constant-step instances require integer T >= 10, got {T}")
    if gamma <= 0:
        raise ConfigurationError(f"gamma must be positive, got {gamma}")
    if not 0.0 < delta < 1.0:
        raise ConfigurationError(f"delta must lie in (0, 1), got {delta}")
    thr = delta_threshold(gamma, T)
    if delta >= thr:
        raise InstanceInvalidError(
            "delta_threshold", f"delta={delta} must be below delta_threshold={thr} for gamma={gamma}, T={T}"
        )
    a_sq = T / (16.0 * delta)
    return ConstStepInstance(
        gamma=gamma,
        T=T,
        delta=delta,
        x_init=float(x_init),
        A=math.sqrt(a_sq),
        p=1.0 / a_sq,
        m=T // 2,
        R=response_factor(gamma, T) if gamma < 1.0 else None,
        delta_threshold=thr,
    )


def sign_choice(a: float, b: float) -> int:
    """Sign sigma with |a - sigma*b| >= b for b >= 0: oppose the sign of a (+1 on ties)."""
    if b < 0:
        raise InputError(f"b must be nonnegative, got {b}")
    return 1 if a <= 0 else -1


def _one_shock_prob(T: int, delta: float, case: str) -> float:
    """Closed-form one-shock probability (no instance gate; usable for any T >= 2)."""
    p = 16.0 * delta / T
    m = T // 2
    per_event = p / 2.0 if case == SIGNED else p
    return m * per_event * (1.0 - p) ** (T - 2)


def one_shock_prob_exact(instance: ConstStepInstance, case: str) -> float:
    """Exact probability of the one-shock event: the union of the m disjoint
    single-shock patterns (sign fixed for gamma < 1, either sign for gamma >= 1)."""
    if case not in (SIGNED, UNSIGNED):
        raise ConfigurationError(f"case must be '{SIGNED}' or '{UNSIGNED}', got {case!r}")
    if case == SIGNED and instance.gamma >= 1.0:
        raise InputError("signed events belong to the gamma < 1 construction")
    if case == UNSIGNED and instance.gamma < 1.0:
        raise InputError("unsigned events belong to the gamma >= 1 construction")
    return _one_shock_prob(instance.T, instance.delta, case)


def _hard_oracle(A: float) -> Oracle:
    return Oracle(objective=Objective.quadratic_diag([1.0]), noise="three-point", amplitude=A)


def _sgd_trajectory_from_noise(schedule: np.ndarray, A: float, x_init: float, noise: np.ndarray) -> Trajectory:
    """Deterministic SGD trajectory for an explicit noise pattern (length T)."""
    T = len(schedule)
    oracle = _hard_oracle(A)
    X = np.empty((T + 1, 1))
    G = np.empty((T, 1))
    GRAD = np.empty((T, 1))
    F = np.empty(T + 1)
    x = float(x_init)
    for t in range(T):
        X[t, 0] = x
        GRAD[t, 0] = x
        F[t] = 0.5 * x * x
        g = x + noise[t]
        G[t, 0] = g
        x = x - schedule[t] * g
    X[T, 0] = x
    F[T] = 0.5 * x * x
    return Trajectory(
        optimizer="sgd", objective=oracle.objective, oracle=oracle, T=T, d=1,
        seed_path=(0, 0, "deterministic"), x=X, g=G, grad=GRAD, fvals=F,
        eta=np.asarray(schedule, dtype=np.float64),
    )


def shocked_trajectory(instance: ConstStepInstance, j: int, sigma: int) -> tuple[Trajectory, float]:
    """The deterministic trajectory with a single shock sigma*A at step j and
    zero noise elsewhere; returns it with sum_{t<=T} x_t^2."""
    if not 1 <= j <= instance.m:
        raise InputError(f"shock index {j} outside [1, {instance.m}]")
    if sigma not in (-1, 1):
        raise InputError(f"sigma must be -1 or +1, got {sigma}")
    noise = np.zeros(instance.T)
    noise[j - 1] = sigma * instance.A
    schedule = np.full(instance.T, instance.gamma)
    traj = _sgd_trajectory_from_noise(schedule, instance.A, instance.x_init, noise)
    sum_sq = float(np.sum(traj.x[: instance.T, 0] ** 2))
    return traj, sum_sq


@dataclass
class LBReport:
    """Verification verdicts for one hard-instance theorem clause."""

    instance: dict
    weighted: bool
    exact_event_prob: float
    prob_lower_bound_target: float
    metric_threshold: float
    conditional_energy: float
    verdicts: dict
    mc_estimate: float | None = None
    mc_se: float | None = None
    mc_n: int | None = None

    @property
    def all_hold(self) -> bool:
        return all(self.verdicts.values())

    def to_dict(self) -> dict:
        out = {
            "instance": self.instance,
            "weighted": self.weighted,
            "exact_event_prob": self.exact_event_prob,
            "prob_lower_bound_target": self.prob_lower_bound_target,
            "metric_threshold": self.metric_threshold,
            "conditional_energy": self.conditional_energy,
            "verdicts": dict(self.verdicts),
            "all_hold": self.all_hold,
            "mc_estimate": self.mc_estimate,
            "mc_se": self.mc_se,
            "mc_n": self.mc_n,
        }
        return out


def const_metric_threshold(delta: float, T: int, weighted: bool) -> float:
    if weighted:
        return 1.0 / (512.0 * delta * math.log(1.0 / delta) ** 2)
    return 1.0 / (512.0 * delta * math.sqrt(T) * math.log(1.0 / delta))


def _const_conditional_energy(instance: ConstStepInstance, weighted: bool) -> float:
    """Worst-case (min over admissible shocks) realized metric on the event.

    Runs the same recursion as shocked_trajectory, but batched over all shock
    positions at once (one vector entry per j)."""
    T, m, gamma, A, x0 = instance.T, instance.m, instance.gamma, instance.A, instance.x_init
    js = np.arange(1, m + 1)
    if gamma < 1.0:
        x_j = (1.0 - gamma) ** (js - 1) * x0
        chosen = np.where((1.0 - gamma) * x_j <= 0.0, 1.0, -1.0)
        sign_batches = [chosen]
    else:
        sign_batches = [np.full(m, -1.0), np.full(m, 1.0)]
    worst = math.inf
    for sigmas in sign_batches:
        x = np.full(m, x0)
        sum_sq = np.zeros(m)
        for t in range(1, T + 1):
            sum_sq += x * x
            shock = np.where(js == t, sigmas * A, 0.0)
            x = x - gamma * (x + shock)
        metric = gamma * sum_sq if weighted else sum_sq / T
        worst = min(worst, float(metric.min()))
    return worst


def verify_const_instance(instance: ConstStepInstance, weighted: bool = False,
                          mc_runs: int | None = None, master_seed: int = 0,
                          workers: int = 1) -> LBReport:
    """Check the constant-step theorem clauses: the exact one-shock probability
    exceeds delta, and every admissible shocked trajectory clears the metric
    threshold. Optionally cross-checks the exceedance probability by Monte Carlo."""
    case = SIGNED if instance.gamma < 1.0 else UNSIGNED
    prob = one_shock_prob_exact(instance, case)
    threshold = const_metric_threshold(instance.delta, instance.T, weighted)
    energy = _const_conditional_energy(instance, weighted)
    report = LBReport(
        instance=instance.summary(),
        weighted=weighted,
        exact_event_prob=prob,
        prob_lower_bound_target=instance.delta,
        metric_threshold=threshold,
        conditional_energy=energy,
        verdicts={
            "event_prob_exceeds_target": bool(prob > instance.delta),
            "conditional_energy_meets_threshold": bool(energy >= threshold),
        },
    )
    if mc_runs is not None:
        est, se = mc_event_prob(instance, "weighted" if weighted else "avg",
                                threshold, mc_runs, master_seed, workers=workers)
        report.mc_estimate = est
        report.mc_se = se
        report.mc_n = mc_runs
        report.verdicts["mc_estimate_exceeds_target"] = bool(est > instance.delta)
    return report


def tv_response_factors(schedule) -> tuple[float, float]:
    """Deterministic response quantities (R_T, Q_T) of a nonnegative schedule:
    minima over shock positions s <= floor(T/2) of eta_s^2 sum_{t>s} Pi_{s,t}^2
    and eta_s^2 sum_{t>s} eta_t Pi_{s,t}^2, with Pi_{s,s+1} = 1."""
    etas = np.asarray(schedule, dtype=np.float64)
    if etas.ndim != 1 or len(etas) < 2:
        raise ConfigurationError("schedule must be a 1-D sequence of length >= 2")
    if np.any(etas < 0):
        raise ConfigurationError("schedule entries must be nonnegative")
    T = len(etas)
    best_r = math.inf
    best_q = math.inf
    for s in range(1, T // 2 + 1):
        pi = 1.0
        acc_r = 0.0
        acc_q = 0.0
        for t in range(s + 1, T + 1):
            acc_r += pi * pi
            acc_q += etas[t - 1] * pi * pi
            pi *= 1.0 - etas[t - 1]
        best_r = min(best_r, float(etas[s - 1] ** 2 * acc_r))
        best_q = min(best_q, float(etas[s - 1] ** 2 * acc_q))
    return best_r, best_q


@dataclass(frozen=True)
class TVInstance:
    schedule: tuple
    T: int
    delta_bar: float
    A: float
    p: float
    m: int
    R_T: float
    Q_T: float

    def summary(self) -> dict:
        return {
            "kind": "tv",
            "T": self.T,
            "delta_bar": self.delta_bar,
            "A": self.A,
            "p": self.p,
            "m": self.m,
            "R_T": self.R_T,
            "Q_T": self.Q_T,
        }


def build_tv_instance(schedule, T: int, delta_bar: float) -> TVInstance:
    etas = np.asarray(schedule, dtype=np.float64)
    if len(etas) != T:
        raise ConfigurationError(f"schedule has length {len(etas)}, expected T={T}")
    if np.any(etas < 0):
        raise ConfigurationError("schedule entries must be nonnegative")
    if not isinstance(T, int) or T <= 10:
        raise ConfigurationError(f"time-varying instances require integer T > 10, got {T}")
    if not 0.0 < delta_bar < 1.0:
        raise ConfigurationError(f"delta_bar must lie in (0, 1), got {delta_bar}")
    a_sq = 4.0 * T / delta_bar
    return TVInstance(
        schedule=tuple(float(e) for e in etas),
        T=T,
        delta_bar=delta_bar,
        A=math.sqrt(a_sq),
        p=1.0 / a_sq,
        m=T // 2,
        R_T=tv_response_factors(etas)[0],
        Q_T=tv_response_factors(etas)[1],
    )


def tv_event_prob_exact(instance: TVInstance) -> float:
    """P(exactly one shock, at a position in I_T) = |I_T| p (1-p)^{T-1}."""
    return instance.m * instance.p * (1.0 - instance.p) ** (instance.T - 1)


def tv_shocked_trajectory(instance: TVInstance, s: int, sigma: int) -> tuple[Trajectory, float, float]:
    """Deterministic single-shock trajectory from x_1 = 0; returns
    (trajectory, sum x_t^2, sum eta_t x_t^2)."""
    if not 1 <= s <= instance.m:
        raise InputError(f"shock index {s} outside [1, {instance.m}]")
    if sigma not in (-1, 1):
        raise InputError(f"sigma must be -1 or +1, got {sigma}")
    T = instance.T
    noise = np.zeros(T)
    noise[s - 1] = sigma * instance.A
    schedule = np.asarray(instance.schedule)
    traj = _sgd_trajectory_from_noise(schedule, instance.A, 0.0, noise)
    xsq = traj.x[:T, 0] ** 2
    return traj, float(np.sum(xsq)), float(np.sum(schedule * xsq))


def tv_corollary_bounds(instance: TVInstance, delta: float, weighted: bool) -> tuple[float, float]:
    """(delta ceiling, metric threshold) for the small-confidence corollaries."""
    if weighted:
        if instance.Q_T <= 0:
            raise InstanceInvalidError("Q_T_positive", "weighted corollary requires Q_T > 0")
        ceiling = math.exp(-1.0 / (4.0 * instance.T * instance.Q_T)) / 16.0
        threshold = 1.0 / (32.0 * delta * math.log(1.0 / delta))
    else:
        if instance.R_T <= 0:
            raise InstanceInvalidError("R_T_positive", "unweighted corollary requires R_T > 0")
        ceiling = math.exp(-1.0 / (4.0 * math.sqrt(instance.T) * instance.R_T)) / 16.0
        threshold = 1.0 / (32.0 * delta * math.sqrt(instance.T) * math.log(1.0 / delta))
    return ceiling, threshold


def verify_tv_instance(instance: TVInstance, weighted: bool = False,
                       corollary_delta: float | None = None,
                       mc_runs: int | None = None, master_seed: int = 0,
                       workers: int = 1) -> LBReport:
    """Check the time-varying clauses: exact event probability above
    delta_bar/16 and every single-shock trajectory clearing the response
    threshold ((4/delta_bar) R_T unweighted, (4T/delta_bar) Q_T weighted).
    In corollary mode (external delta, delta_bar = 16 delta) additionally
    checks the small-confidence threshold under its delta ceiling."""
    prob = tv_event_prob_exact(instance)
    target = instance.delta_bar / 16.0
    threshold = (4.0 * instance.T / instance.delta_bar) * instance.Q_T if weighted \
        else (4.0 / instance.delta_bar) * instance.R_T
    worst = math.inf
    for s in range(1, instance.m + 1):
        for sigma in (-1, 1):
            _, sum_sq, sum_w = tv_shocked_trajectory(instance, s, sigma)
            metric = sum_w if weighted else sum_sq / instance.T
            worst = min(worst, metric)
    verdicts = {
        "event_prob_exceeds_target": bool(prob > target),
        "conditional_energy_meets_threshold": bool(worst >= threshold * (1.0 - 1e-12)),
    }
    if corollary_delta is not None:
        delta = corollary_delta
        if not math.isclose(instance.delta_bar, 16.0 * delta, rel_tol=1e-12):
            raise InstanceInvalidError("delta_bar_mapping", "corollary mode requires delta_bar = 16 delta")
        ceiling, cor_threshold = tv_corollary_bounds(instance, delta, weighted)
        if not delta < ceiling:
            raise InstanceInvalidError(
                "corollary_delta_range", f"delta={delta} must be below the corollary ceiling {ceiling}"
            )
        verdicts["corollary_energy_meets_threshold"] = bool(worst >= cor_threshold)
        verdicts["corollary_prob_exceeds_delta"] = bool(prob > delta)
    report = LBReport(
        instance=instance.summary(),
        weighted=weighted,
        exact_event_prob=prob,
        prob_lower_bound_target=target,
        metric_threshold=threshold,
        conditional_energy=worst,
        verdicts=verdicts,
    )
    if mc_runs is not None:
        est, se = mc_event_prob(instance, "weighted" if weighted else "avg",
                                threshold, mc_runs, master_seed, workers=workers)
        report.mc_estimate = est
        report.mc_se = se
        report.mc_n = mc_runs
        report.verdicts["mc_estimate_exceeds_target"] = bool(est > target)
    return report


def mc_event_prob(instance, metric: str, threshold: float, N: int, master_seed: int,
                  workers: int = 1) -> tuple[float, float]:
    """Binomial estimate of P(metric >= threshold) over N seeded SGD runs with
    the instance's three-point noise."""
    if N < 10**3:
        raise ConfigurationError(f"Monte Carlo needs N >= 1000 runs, got {N}")
    if metric not in ("avg", "weighted"):
        raise ConfigurationError(f"metric must be 'avg' or 'weighted', got {metric!r}")
    if isinstance(instance, ConstStepInstance):
        schedule = StepSchedule.constant(instance.gamma)
        x_init = instance.x_init
        T = instance.T
    elif isinstance(instance, TVInstance):
        schedule = StepSchedule.explicit(instance.schedule)
        x_init = 0.0
        T = instance.T
    else:
        raise ConfigurationError(f"unknown instance type {type(instance)!r}")
    oracle = _hard_oracle(instance.A)
    res = ensemble_metrics(schedule, oracle, [x_init], T, N, master_seed, workers=workers)
    samples = res["avg_gsq"] if metric == "avg" else res["w_gsq"]
    est = float(np.count_nonzero(samples >= threshold)) / N
    se = math.sqrt(est * (1.0 - est) / N)
    return est, se


def _pattern_prob(noise_values: tuple, A: float) -> float:
    q = 1.0 / (2.0 * A * A)
    prob = 1.0
    for xi in noise_values:
        prob *= q if xi != 0.0 else 1.0 - 2.0 * q
    return prob


def enumerate_exceedance_prob(gamma: float, T: int, delta: float, x_init: float,
                              metric: str, threshold: float) -> float:
    """Exact P(metric >= threshold) by enumerating all 3^(T-1) noise patterns.

    Only the first T-1 noises influence x_1..x_T, so the enumeration is exact
    for the constant-step metric."""
    if metric not in ("avg", "weighted"):
        raise ConfigurationError(f"metric must be 'avg' or 'weighted', got {metric!r}")
    A = math.sqrt(T / (16.0 * delta))
    total = 0.0
    for pattern in itertools.product((A, -A, 0.0), repeat=T - 1):
        x = float(x_init)
        sum_sq = x * x
        for t in range(T - 1):
            x = x - gamma * (x + pattern[t])
            sum_sq += x * x
        value = gamma * sum_sq if metric == "weighted" else sum_sq / T
        if value >= threshold:
            total += _pattern_prob(pattern, A)
    return total


def enumerate_one_shock_prob(gamma: float, T: int, delta: float, x_init: float, case: str) -> float:
    """Exact one-shock event probability by enumerating all 3^(T-1) noise patterns."""
    if case not in (SIGNED, UNSIGNED):
        raise ConfigurationError(f"case must be '{SIGNED}' or '{UNSIGNED}', got {case!r}")
    A = math.sqrt(T / (16.0 * delta))
    m = T // 2
    sigmas = {}
    for j in range(1, m + 1):
        x_j = (1.0 - gamma) ** (j - 1) * x_init
        sigmas[j] = sign_choice((1.0 - gamma) * x_j, gamma * A)
    total = 0.0
    for pattern in itertools.product((A, -A, 0.0), repeat=T - 1):
        nonzero = [t for t, xi in enumerate(pattern, start=1) if xi != 0.0]
        if len(nonzero) != 1 or nonzero[0] > m:
            continue
        j = nonzero[0]
        if case == SIGNED and pattern[j - 1] != sigmas[j] * A:
            continue
        total += _pattern_prob(pattern, A)
    return total
