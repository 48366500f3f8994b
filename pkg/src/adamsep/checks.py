"""Executable pathwise checks over recorded trajectories.

Every deterministic inequality or identity the analysis relies on is encoded
as one check. A check evaluates all applicable (t, i, prefix) instances on a
trajectory and reports the worst case: margin = rhs - lhs at the minimizing
instance, with ``holds`` true iff margin >= -slack for
slack = 1e-9 * (1 + |lhs| + |rhs|). The inequalities are exact in exact
arithmetic, so the slack absorbs only rounding; a failure indicates an
implementation bug, not float noise.

Identity checks (Y-IDENT, V-EXPAND, QV-IDENT and the sum identity inside
DELTA-SIGN) are encoded as |residual| <= tol * scale with scale the sum of
the constituent magnitudes, which is the numerically meaningful reading of
"exact up to floating-point rearrangement".
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import ConfigurationError, InputError
from .instrument import compute_ledger, delta_split_arrays, momentum_removed
from .optimizers import Trajectory, d_beta1

IDENTITY_RTOL = 1e-10
DELTA_SUM_RTOL = 1e-12
_SLACK_COEFF = 1e-9


@dataclass
class CheckResult:
    check_id: str
    holds: bool
    lhs: float
    rhs: float
    margin: float
    worst_t: int
    worst_i: int
    slack: float
    stat_slack: float = 0.0


def _finish(check_id, lhs, rhs, ts, idx) -> CheckResult:
    lhs = np.asarray(lhs, dtype=np.float64).ravel()
    rhs = np.asarray(rhs, dtype=np.float64).ravel()
    margins = rhs - lhs
    k = int(np.argmin(margins))
    lhs_w, rhs_w = float(lhs[k]), float(rhs[k])
    slack = _SLACK_COEFF * (1.0 + abs(lhs_w) + abs(rhs_w))
    margin = float(margins[k])
    return CheckResult(
        check_id=check_id,
        holds=bool(margin >= -slack),
        lhs=lhs_w,
        rhs=rhs_w,
        margin=margin,
        worst_t=int(ts[k]),
        worst_i=int(idx[k]),
        slack=slack,
    )


def _steps(traj: Trajectory) -> int:
    n = traj.n_steps
    if n < 1:
        raise InputError("trajectory has no usable steps")
    return n


def _require_calibrated(traj: Trajectory, check_id: str):
    if traj.optimizer != "adam" or traj.params is None or not traj.params.calibrated:
        raise InputError(f"{check_id} requires a calibrated Adam trajectory")


def _grid(n, d):
    ts = np.repeat(np.arange(1, n + 1), d)
    idx = np.tile(np.arange(d), n)
    return ts, idx


def _check_grad_lb(traj: Trajectory) -> CheckResult:
    n = _steps(traj)
    L = traj.objective.L
    lhs = np.sum(traj.grad[:n] ** 2, axis=1)
    rhs = 2.0 * L * (traj.fvals[:n] - traj.objective.f_star + 1.0)
    return _finish("GRAD-LB", lhs, rhs, np.arange(1, n + 1), np.full(n, -1))


def _check_log_energy(traj: Trajectory) -> CheckResult:
    _require_calibrated(traj, "LOG-ENERGY")
    n = _steps(traj)
    p = traj.params
    led = compute_ledger(traj)
    log_term = np.log1p(led.S[1 : n + 1] / (p.v0 * traj.d * p.T))
    scale = p.eta**2 * traj.d
    lhs = np.concatenate([led.ASGE_prefix[:n], led.MomE_prefix[:n]])
    rhs = np.concatenate([4.0 * scale * log_term, 16.0 * scale * log_term])
    ts = np.concatenate([np.arange(1, n + 1)] * 2)
    idx = np.concatenate([np.zeros(n, dtype=int), np.ones(n, dtype=int)])
    return _finish("LOG-ENERGY", lhs, rhs, ts, idx)


def _check_delta_sum(traj: Trajectory) -> CheckResult:
    _require_calibrated(traj, "DELTA-SUM")
    p = traj.params
    delta1, _ = delta_split_arrays(traj)
    lhs = float(np.sum(np.abs(delta1)))
    rhs = (8.0 * traj.d * p.eps / p.v0**1.5 + 8.0 * traj.d / math.sqrt(p.v0)) * p.eta
    return _finish("DELTA-SUM", [lhs], [rhs], [-1], [-1])


def _check_m_recur(traj: Trajectory) -> CheckResult:
    if traj.optimizer != "adam":
        raise InputError("M-RECUR requires an Adam trajectory")
    n = _steps(traj)
    b1 = traj.params.beta1
    m = traj.m[:n]
    m_prev = np.vstack([np.zeros((1, traj.d)), m[: n - 1]])
    g = traj.g[:n]
    lhs = m * m - m_prev * m_prev
    rhs = -(1.0 - b1) * m_prev * m_prev + (1.0 - b1) * g * g
    ts, idx = _grid(n, traj.d)
    return _finish("M-RECUR", lhs, rhs, ts, idx)


def _check_fbar_cmp(traj: Trajectory) -> CheckResult:
    if traj.optimizer != "adam":
        raise InputError("FBAR-CMP requires an Adam trajectory")
    n = _steps(traj)
    p = traj.params
    L = traj.objective.L
    coeff = L * p.beta1**2 / (1.0 - p.beta1) ** 2
    y = momentum_removed(traj, p.beta1)[:n]
    f_y, _ = traj.objective.value_grad_batch(y)
    fbar_y = f_y - traj.objective.f_star + 1.0
    fbar_x = traj.fvals[:n] - traj.objective.f_star + 1.0
    gam_prev = traj.gamma_with_initial()[:n]
    m_prev = np.vstack([np.zeros((1, traj.d)), traj.m[: n - 1]])
    mom = np.sum((gam_prev * m_prev) ** 2, axis=1)
    lhs = np.concatenate([fbar_y, fbar_x])
    rhs = np.concatenate([2.0 * fbar_x + coeff * mom, 2.0 * fbar_y + coeff * mom])
    ts = np.concatenate([np.arange(1, n + 1)] * 2)
    idx = np.concatenate([np.zeros(n, dtype=int), np.ones(n, dtype=int)])
    return _finish("FBAR-CMP", lhs, rhs, ts, idx)


def _check_v_cmp(traj: Trajectory) -> CheckResult:
    if traj.optimizer != "adam":
        raise InputError("V-CMP requires an Adam trajectory")
    p = traj.params
    if not math.isclose(p.beta2, 1.0 - 1.0 / p.T, rel_tol=1e-12) or p.T < 2:
        raise InputError("V-CMP requires beta2 = 1 - 1/T with T >= 2")
    n = _steps(traj)
    if n < 2:
        return _finish("V-CMP", [0.0], [0.0], [1], [-1])
    v = traj.v[:n]
    # worst pair per h is max_{k<h} v_k vs 4 v_h; prefix running max keeps it O(n d)
    prefix_max = np.maximum.accumulate(v[:-1], axis=0)
    lhs = prefix_max
    rhs = 4.0 * v[1:]
    ts, idx = _grid(n - 1, traj.d)
    return _finish("V-CMP", lhs, rhs, ts + 1, idx)


def _check_m_bounds(traj: Trajectory) -> CheckResult:
    _require_calibrated(traj, "M-BOUNDS")
    n = _steps(traj)
    b1 = traj.params.beta1
    m = traj.m[:n]
    g = traj.g[:n]
    gam = traj.gamma[:n]
    m_sq = np.sum(m * m, axis=1)
    g_sq = np.sum(g * g, axis=1)
    gm_sq = np.sum((gam * m) ** 2, axis=1)
    gg_sq = np.sum((gam * g) ** 2, axis=1)
    # geometric accumulators r_t = b1 r_{t-1} + a_t realize sum_k b1^{t-k} a_k
    r = np.empty(n)
    q = np.empty(n)
    acc_r = acc_q = 0.0
    for t in range(n):
        acc_r = b1 * acc_r + g_sq[t]
        acc_q = b1 * acc_q + gg_sq[t]
        r[t] = acc_r
        q[t] = acc_q
    lhs = np.concatenate([m_sq, gm_sq, np.cumsum(gm_sq)])
    rhs = np.concatenate([(1.0 - b1) * r, 4.0 * (1.0 - b1) * q, 4.0 * np.cumsum(gg_sq)])
    ts = np.concatenate([np.arange(1, n + 1)] * 3)
    idx = np.concatenate([np.full(n, 0), np.full(n, 1), np.full(n, 2)])
    return _finish("M-BOUNDS", lhs, rhs, ts, idx)


def _check_inc_bound(traj: Trajectory) -> CheckResult:
    _require_calibrated(traj, "INC-BOUND")
    p = traj.params
    if p.T < 10:
        raise InputError("INC-BOUND requires T >= 10")
    n = _steps(traj)
    diffs = traj.x[1 : n + 1] - traj.x[:n]
    lhs = np.sqrt(np.sum(diffs * diffs, axis=1))
    bound = math.sqrt(traj.d) * p.eta * d_beta1(p.beta1)
    return _finish("INC-BOUND", lhs, np.full(n, bound), np.arange(1, n + 1), np.full(n, -1))


def _check_gen_beta(traj: Trajectory) -> CheckResult:
    if traj.optimizer != "adam":
        raise InputError("GEN-BETA requires an Adam trajectory")
    p = traj.params
    if p.beta1 != 0.0:
        raise InputError("GEN-BETA applies to beta1 = 0 runs")
    n = _steps(traj)
    gam = traj.gamma[:n]
    g = traj.g[:n]
    lhs_total = float(np.sum((gam * g) ** 2))
    if p.beta2 == 0.0:
        rhs_total = p.gamma**2 * traj.d * n
        return _finish("GEN-BETA", [lhs_total], [rhs_total], [n], [-1])
    b2 = p.beta2
    # middle term via logsumexp: beta2^{-t} overflows float64 for long runs
    log_c = math.log1p(-b2) - math.log(p.v0)
    mid = 0.0
    for i in range(traj.d):
        gsq = g[:, i] ** 2
        mask = gsq > 0
        terms = [0.0]
        if np.any(mask):
            t_idx = np.arange(1, n + 1)[mask]
            terms = np.concatenate([[0.0], log_c - t_idx * math.log(b2) + np.log(gsq[mask])])
        mid += float(logsumexp(terms))
    mid *= p.gamma**2 / (1.0 - b2)
    rhs_total = (
        p.gamma**2 * traj.d * n * math.log(1.0 / b2) / (1.0 - b2)
        + p.gamma**2 * traj.d / (1.0 - b2) * math.log1p((1.0 - b2) / (p.v0 * traj.d) * float(np.sum(g * g)))
    )
    return _finish("GEN-BETA", [lhs_total, mid], [mid, rhs_total], [n, n], [0, 1])


def _check_y_ident(traj: Trajectory) -> CheckResult:
    if traj.optimizer != "adam":
        raise InputError("Y-IDENT requires an Adam trajectory")
    p = traj.params
    n = min(_steps(traj), traj.T - 1)
    if n < 1:
        return _finish("Y-IDENT", [0.0], [0.0], [1], [-1])
    b1 = p.beta1
    y = momentum_removed(traj, b1)
    # y rows cover t = 1..T; x[T] extends the increment at t = T - 1
    dy = y[1 : n + 1] - y[:n]
    gam = traj.gamma[:n]
    gam_prev = traj.gamma_with_initial()[:n]
    m_prev = np.vstack([np.zeros((1, traj.d)), traj.m[: n - 1]])
    main = gam * traj.g[:n]
    corr = (b1 / (1.0 - b1)) * (gam_prev - gam) * m_prev
    res = np.abs(dy - (-main + corr))
    scale = np.abs(y[1 : n + 1]) + np.abs(y[:n]) + np.abs(main) + np.abs(corr)
    ts, idx = _grid(n, traj.d)
    return _finish("Y-IDENT", res, IDENTITY_RTOL * scale, ts, idx)


def _check_v_expand(traj: Trajectory) -> CheckResult:
    _require_calibrated(traj, "V-EXPAND")
    n = _steps(traj)
    p = traj.params
    beta = 1.0 - 1.0 / p.T
    t_idx = np.arange(1, n + 1)
    decay = beta ** np.subtract.outer(t_idx, np.arange(1, n + 1))
    weights = np.tril(decay) / p.T
    gsq = traj.g[:n] ** 2
    v_exp = (beta**t_idx)[:, None] * p.v0 + weights @ gsq
    v_rec = traj.v[:n]
    res = np.abs(v_rec - v_exp)
    scale = np.abs(v_rec) + np.abs(v_exp)
    ts, idx = _grid(n, traj.d)
    return _finish("V-EXPAND", res, IDENTITY_RTOL * scale, ts, idx)


def _check_qv_ident(traj: Trajectory) -> CheckResult:
    if traj.optimizer != "adam":
        raise InputError("QV-IDENT requires an Adam trajectory")
    led = compute_ledger(traj)
    res = abs(led.QV - led.MomE)
    scale = abs(led.QV) + abs(led.MomE)
    return _finish("QV-IDENT", [res], [IDENTITY_RTOL * scale], [-1], [-1])


def _check_delta_sign(traj: Trajectory) -> CheckResult:
    _require_calibrated(traj, "DELTA-SIGN")
    n = _steps(traj)
    delta1, delta2 = delta_split_arrays(traj)
    delta1 = delta1[:n]
    delta2 = delta2[:n]
    gam_ext = traj.gamma_with_initial()
    gap = gam_ext[:n] - gam_ext[1 : n + 1]
    res = np.abs(delta1 + delta2 - gap)
    scale = np.abs(delta1) + np.abs(delta2) + np.abs(gam_ext[:n]) + np.abs(gam_ext[1 : n + 1])
    ts, idx = _grid(n, traj.d)
    lhs = np.concatenate([np.zeros(n * traj.d), np.zeros(n * traj.d), res.ravel()])
    rhs = np.concatenate([delta1.ravel(), -delta2.ravel(), (DELTA_SUM_RTOL * scale).ravel()])
    return _finish("DELTA-SIGN", lhs, rhs, np.concatenate([ts] * 3), np.concatenate([idx] * 3))


CHECKS = {
    "GRAD-LB": _check_grad_lb,
    "LOG-ENERGY": _check_log_energy,
    "DELTA-SUM": _check_delta_sum,
    "M-RECUR": _check_m_recur,
    "FBAR-CMP": _check_fbar_cmp,
    "V-CMP": _check_v_cmp,
    "M-BOUNDS": _check_m_bounds,
    "INC-BOUND": _check_inc_bound,
    "GEN-BETA": _check_gen_beta,
    "Y-IDENT": _check_y_ident,
    "V-EXPAND": _check_v_expand,
    "QV-IDENT": _check_qv_ident,
    "DELTA-SIGN": _check_delta_sign,
}

LEMMA_CHECKS = (
    "GRAD-LB",
    "LOG-ENERGY",
    "DELTA-SUM",
    "M-RECUR",
    "FBAR-CMP",
    "V-CMP",
    "M-BOUNDS",
    "INC-BOUND",
    "DELTA-SIGN",
)

IDENTITY_CHECKS = ("Y-IDENT", "V-EXPAND", "QV-IDENT")


def run_pathwise_check(check_id: str, traj: Trajectory) -> CheckResult:
    """Evaluate one catalog check on a trajectory and return its worst case."""
    try:
        fn = CHECKS[check_id]
    except KeyError:
        raise ConfigurationError(f"unknown check id {check_id!r}; known: {sorted(CHECKS)}") from None
    return fn(traj)
