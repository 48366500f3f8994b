"""Monte Carlo verification of the one-step descent inequality.

The inequality compares the potential difference

    [f(y_{t+1}) + sum_i gamma_{t,i} (grad f(x_{t+1}))_i^2]
  - [f(y_t)     + sum_i gamma_{t-1,i} (grad f(x_t))_i^2]

against -(1/8) sum_i gamma_{t-1,i} (grad f(x_t))_i^2 + D_t + P_t, where the
martingale components D_{t,1..3} and one residual term involve conditional
expectations over the step-t gradient draw. Those expectations are estimated
by resampling g_t from the oracle at the frozen history (x_t, m_{t-1},
v_{t-1}); every estimate carries a standard error and the final check allows
5x the pooled standard error as statistical slack.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .checks import CheckResult, _SLACK_COEFF
from .errors import ConfigurationError, InputError
from .instrument import delta_split_arrays, momentum_removed
from .optimizers import Trajectory
from .streams import RngStream

MC_QUANTITIES = ("g", "gamma_grad_g", "abs_delta1", "gamma_t")


def _frozen_history(traj: Trajectory, t: int):
    p = traj.params
    x_t = traj.x[t - 1]
    grad_t = traj.grad[t - 1]
    v_prev = traj.v[t - 2] if t > 1 else np.full(traj.d, p.v0)
    m_prev = traj.m[t - 2] if t > 1 else np.zeros(traj.d)
    return x_t, grad_t, v_prev, m_prev


def _resample(traj: Trajectory, t: int, n: int, stream: RngStream):
    """n fresh draws of (g, gamma_t, |Delta_{t,1}|) at the frozen step-t history."""
    p = traj.params
    x_t, _, v_prev, _ = _frozen_history(traj, t)
    G = traj.oracle.sample_block(x_t, stream, n)
    V = p.beta2 * v_prev + (1.0 - p.beta2) * G * G
    GAMMA = p.gamma / (np.sqrt(V) + p.eps)
    if p.calibrated:
        T = p.T
        first = (p.eta / math.sqrt(T - 1)) / (np.sqrt(v_prev) + p.eps)
        DELTA1 = first - (p.eta / math.sqrt(T)) / (np.sqrt(V) + p.eps)
    else:
        DELTA1 = None
    return G, GAMMA, DELTA1


def _mean_se(samples: np.ndarray):
    n = samples.shape[0]
    if n < 2:
        raise ConfigurationError("resample count must be >= 2")
    first = samples[0]
    if np.all(samples == first):
        # degenerate distribution (e.g. zero-noise oracle): exact mean, zero SE
        return np.copy(first), np.zeros_like(first)
    mean = samples.mean(axis=0)
    se = samples.std(axis=0, ddof=1) / math.sqrt(n)
    return mean, se


def mc_conditional_mean(traj: Trajectory, t: int, quantity: str, n: int, stream: RngStream):
    """Sample mean and standard error of a step-t functional over n fresh
    gradient draws at fixed history. Quantities:

    * ``g``: the resampled gradient itself (coordinatewise),
    * ``gamma_grad_g``: gamma_{t,i} (grad f(x_t))_i g_{t,i},
    * ``abs_delta1``: |Delta_{t,1,i}| (calibrated runs only),
    * ``gamma_t``: the resampled preconditioning vector.
    """
    if traj.optimizer != "adam":
        raise InputError("conditional-mean resampling applies to Adam trajectories")
    if not 1 <= t <= traj.T:
        raise InputError(f"step index {t} outside [1, {traj.T}]")
    if n < 2:
        raise ConfigurationError(f"resample count must be >= 2, got {n}")
    if quantity not in MC_QUANTITIES:
        raise ConfigurationError(f"unknown quantity {quantity!r}; known: {MC_QUANTITIES}")
    G, GAMMA, DELTA1 = _resample(traj, t, n, stream)
    _, grad_t, _, _ = _frozen_history(traj, t)
    if quantity == "g":
        return _mean_se(G)
    if quantity == "gamma_grad_g":
        return _mean_se(GAMMA * grad_t * G)
    if quantity == "gamma_t":
        return _mean_se(GAMMA)
    if DELTA1 is None:
        raise InputError("abs_delta1 requires a calibrated trajectory")
    return _mean_se(np.abs(DELTA1))


@dataclass
class DescentTerms:
    """One-step descent decomposition with estimated conditional means.

    d1/d2/d3 are the realized martingale components, each equal to the
    estimated conditional mean minus the realized value of its functional;
    p is the residual total, whose only estimated piece is the
    C * sum_i E[|Delta_{t,1,i}|] term.
    """

    t: int
    lhs: float
    descent: float
    d1: float
    d2: float
    d3: float
    p: float
    se_d1: float
    se_d2: float
    se_d3: float
    se_p: float
    pooled_se: float
    resample_n: int


def descent_terms(traj: Trajectory, t: int, n: int, stream: RngStream) -> DescentTerms:
    if traj.optimizer != "adam" or not traj.params.calibrated:
        raise InputError("descent decomposition requires a calibrated Adam trajectory")
    if not 1 <= t <= traj.T - 1:
        raise InputError(f"step index {t} outside [1, {traj.T - 1}]")
    if n < 2:
        raise ConfigurationError(f"resample count must be >= 2, got {n}")
    p = traj.params
    obj = traj.objective
    L = obj.L
    C = traj.oracle.C
    T = p.T
    b1 = p.beta1
    _, grad_t, _, m_prev = _frozen_history(traj, t)
    grad_next = traj.grad[t]
    g_t = traj.g[t - 1]
    gam_t = traj.gamma[t - 1]
    gam_prev = traj.gamma_with_initial()[t - 1]
    y = momentum_removed(traj, b1)
    f_y_t = obj.value_grad(y[t - 1])[0]
    f_y_next = obj.value_grad(y[t])[0]
    grad_y_t = obj.value_grad(y[t - 1])[1]
    delta1_real = delta_split_arrays(traj)[0][t - 1]

    lhs = (f_y_next + float(np.dot(gam_t, grad_next**2))) - (
        f_y_t + float(np.dot(gam_prev, grad_t**2))
    )
    weighted_grad = float(np.dot(gam_prev, grad_t**2))
    descent = -weighted_grad / 8.0

    G, GAMMA, DELTA1 = _resample(traj, t, n, stream)

    s1 = np.sum(GAMMA * grad_t * G, axis=1)
    mean1, se1 = _mean_se(s1)
    d1 = float(mean1) - float(np.dot(gam_t * grad_t, g_t))

    s2 = np.sum(grad_t**2 * np.abs(DELTA1), axis=1)
    mean2, se2 = _mean_se(s2)
    d2 = float(mean2) - float(np.dot(grad_t**2, np.abs(delta1_real)))

    mom_factor = b1 / (1.0 - b1)
    s3 = mom_factor * np.sum(GAMMA * grad_y_t * m_prev, axis=1)
    mean3, se3 = _mean_se(s3)
    d3 = float(mean3) - mom_factor * float(np.dot(gam_t * grad_y_t, m_prev))

    s_abs = np.sum(np.abs(DELTA1), axis=1)
    mean_abs, se_abs = _mean_se(s_abs)

    gap = gam_prev - gam_t
    eps_term = p.eps / (math.sqrt(T) + math.sqrt(T - 1))
    residual = (
        (b1**2 * L / (2.0 * (1.0 - b1) ** 2) + b1**2 * L**2 * p.eta / (4.0 * (1.0 - b1) ** 2 * math.sqrt(p.v0)))
        * float(np.sum((gam_prev * m_prev) ** 2))
        + 1.5 * L * float(np.sum((gam_t * g_t) ** 2))
        + (b1**2 * L / (1.0 - b1) ** 2) * float(np.sum(gap**2 * m_prev**2))
        + (140.0 * traj.d * L**2 * p.eta / math.sqrt(p.v0)) * float(np.sum((gam_t * traj.m[t - 1]) ** 2))
        + C * float(mean_abs)
        + 8.0 * (b1 * (1.0 + b1) / (1.0 - b1) ** 2) * (T / (T - 1.0))
        * float(np.sum((np.abs(grad_t) + math.sqrt(C) + eps_term) / p.eta * gam_prev**2 * m_prev**2))
        + mom_factor / T * float(np.sum(gam_prev * np.abs(grad_y_t * m_prev)))
    )
    se_p = C * float(se_abs)
    pooled = math.sqrt(float(se1) ** 2 + float(se2) ** 2 + float(se3) ** 2 + se_p**2)
    return DescentTerms(
        t=t, lhs=lhs, descent=descent, d1=d1, d2=d2, d3=d3, p=residual,
        se_d1=float(se1), se_d2=float(se2), se_d3=float(se3), se_p=se_p,
        pooled_se=pooled, resample_n=n,
    )


def check_descent(traj: Trajectory, t: int, n: int, stream: RngStream) -> CheckResult:
    """Check lhs <= descent + D_t + P_t with 5x pooled-SE statistical slack."""
    terms = descent_terms(traj, t, n, stream)
    rhs = terms.descent + terms.d1 + terms.d2 + terms.d3 + terms.p
    stat_slack = 5.0 * terms.pooled_se
    slack = _SLACK_COEFF * (1.0 + abs(terms.lhs) + abs(rhs))
    margin = rhs + stat_slack - terms.lhs
    return CheckResult(
        check_id="DESCENT",
        holds=bool(margin >= -slack),
        lhs=terms.lhs,
        rhs=rhs,
        margin=margin,
        worst_t=t,
        worst_i=-1,
        slack=slack,
        stat_slack=stat_slack,
    )
