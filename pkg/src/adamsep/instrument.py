"""Trajectory functionals: energies, quadratic variation, the cumulative
gradient path S_t, momentum removal, stepsize-difference splits, and the
threshold stopping time.

All functions are pure over an immutable trajectory. For a trajectory that
diverged at step t the ledger stops at the last fully finite step (t - 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, InputError
from .optimizers import Trajectory


@dataclass
class Ledger:
    """Cumulative trajectory functionals with per-step prefix arrays.

    Adam-only fields (E, ASGE, MomE and their prefixes) are None on SGD
    trajectories; w_gsq is None on Adam trajectories. S has length
    n_steps + 1 with S[0] = d * v0 (0 for SGD, which has no second-moment
    state).
    """

    n_steps: int
    QV: float
    avg_gsq: float
    S: np.ndarray
    QV_prefix: np.ndarray
    E: float | None = None
    ASGE: float | None = None
    MomE: float | None = None
    w_gsq: float | None = None
    E_prefix: np.ndarray | None = None
    ASGE_prefix: np.ndarray | None = None
    MomE_prefix: np.ndarray | None = None
    w_gsq_prefix: np.ndarray | None = None

    def to_dict(self) -> dict:
        """Flat JSON-ready mapping (arrays as lists, numpy scalars as floats)."""
        def conv(val):
            if val is None:
                return None
            if isinstance(val, np.ndarray):
                return [float(v) for v in val]
            return float(val)

        return {
            "n_steps": int(self.n_steps),
            "E": conv(self.E),
            "ASGE": conv(self.ASGE),
            "MomE": conv(self.MomE),
            "QV": conv(self.QV),
            "S": conv(self.S),
            "avg_gsq": conv(self.avg_gsq),
            "w_gsq": conv(self.w_gsq),
            "E_prefix": conv(self.E_prefix),
            "ASGE_prefix": conv(self.ASGE_prefix),
            "MomE_prefix": conv(self.MomE_prefix),
            "QV_prefix": conv(self.QV_prefix),
            "w_gsq_prefix": conv(self.w_gsq_prefix),
        }


def compute_ledger(traj: Trajectory) -> Ledger:
    n = traj.n_steps
    if n < 1:
        raise InputError("trajectory has no usable steps")
    grad = traj.grad[:n]
    g = traj.g[:n]
    gsq = np.sum(grad * grad, axis=1)
    gsq_noisy = np.sum(g * g, axis=1)
    diffs = traj.x[1 : n + 1] - traj.x[:n]
    qv_prefix = np.cumsum(np.sum(diffs * diffs, axis=1))
    s0 = traj.d * traj.params.v0 if traj.optimizer == "adam" else 0.0
    S = np.concatenate([[s0], s0 + np.cumsum(gsq_noisy)])
    avg_gsq = float(np.sum(gsq) / n)
    if traj.optimizer == "adam":
        gam = traj.gamma[:n]
        m = traj.m[:n]
        e_prefix = np.cumsum(np.sum(gam * grad * grad, axis=1))
        asge_prefix = np.cumsum(np.sum((gam * g) ** 2, axis=1))
        mome_prefix = np.cumsum(np.sum((gam * m) ** 2, axis=1))
        return Ledger(
            n_steps=n,
            QV=float(qv_prefix[-1]),
            avg_gsq=avg_gsq,
            S=S,
            QV_prefix=qv_prefix,
            E=float(e_prefix[-1]),
            ASGE=float(asge_prefix[-1]),
            MomE=float(mome_prefix[-1]),
            E_prefix=e_prefix,
            ASGE_prefix=asge_prefix,
            MomE_prefix=mome_prefix,
        )
    w_prefix = np.cumsum(traj.eta[:n] * gsq)
    return Ledger(
        n_steps=n,
        QV=float(qv_prefix[-1]),
        avg_gsq=avg_gsq,
        S=S,
        QV_prefix=qv_prefix,
        w_gsq=float(w_prefix[-1]),
        w_gsq_prefix=w_prefix,
    )


def momentum_removed(traj: Trajectory, beta1: float) -> np.ndarray:
    """(T, d) array of y_1..y_T with y_1 = x_1 and
    y_t = (x_t - beta1 * x_{t-1}) / (1 - beta1) for t >= 2."""
    if traj.optimizer != "adam":
        raise InputError("momentum removal applies to Adam trajectories")
    if not math.isclose(beta1, traj.params.beta1, rel_tol=0, abs_tol=0):
        raise InputError(f"beta1 mismatch: trajectory has {traj.params.beta1}, got {beta1}")
    T = traj.T
    y = np.empty((T, traj.d))
    y[0] = traj.x[0]
    if T > 1:
        y[1:] = (traj.x[1:T] - beta1 * traj.x[: T - 1]) / (1.0 - beta1)
    return y


@dataclass(frozen=True)
class DeltaSplit:
    """Stepsize-difference split at (t, i): delta1 + delta2 = gamma_{t-1,i} - gamma_{t,i},
    with delta1 >= 0 and delta2 <= 0 on calibrated runs."""

    t: int
    i: int
    delta1: float
    delta2: float


def _require_calibrated(traj: Trajectory):
    if traj.optimizer != "adam" or traj.params is None or not traj.params.calibrated:
        raise InputError("stepsize-difference split requires a calibrated Adam trajectory")


def delta_split_arrays(traj: Trajectory) -> tuple[np.ndarray, np.ndarray]:
    """(T, d) arrays of delta1 and delta2 over the whole trajectory.

    Row t-1 holds the step-t values; the t = 1 row uses the v_0 convention.
    """
    _require_calibrated(traj)
    p = traj.params
    T, eta, eps = p.T, p.eta, p.eps
    v_prev = np.vstack([np.full((1, traj.d), p.v0), traj.v[: T - 1]])
    inv_prev = 1.0 / (np.sqrt(v_prev) + eps)
    inv_cur = 1.0 / (np.sqrt(traj.v) + eps)
    delta1 = (eta / math.sqrt(T - 1)) * inv_prev - (eta / math.sqrt(T)) * inv_cur
    delta2 = eta * (1.0 / math.sqrt(T) - 1.0 / math.sqrt(T - 1)) * inv_prev
    return delta1, delta2


def delta_split(traj: Trajectory, t: int, i: int) -> DeltaSplit:
    _require_calibrated(traj)
    if not 1 <= t <= traj.T:
        raise InputError(f"step index {t} outside [1, {traj.T}]")
    if not 0 <= i < traj.d:
        raise InputError(f"coordinate index {i} outside [0, {traj.d})")
    d1, d2 = delta_split_arrays(traj)
    return DeltaSplit(t=t, i=i, delta1=float(d1[t - 1, i]), delta2=float(d2[t - 1, i]))


def stopping_time(traj: Trajectory, G: float) -> int | None:
    """Smallest t in [1, T] with f(x_t) - f* + 1 >= G, or None if never hit."""
    if G < 1:
        raise ConfigurationError(f"threshold G must be >= 1, got {G}")
    n = traj.T if traj.diverged_at is None else traj.diverged_at
    fbar = traj.fvals[:n] - traj.objective.f_star + 1.0
    hits = np.nonzero(fbar >= G)[0]
    if hits.size == 0:
        return None
    return int(hits[0]) + 1
