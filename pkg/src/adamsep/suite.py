"""Randomized trajectory factory and the pathwise-check suite runner.

A suite case is a seeded random calibrated Adam run drawn over the
documented grid: d in [1, 8], T in [10, 200], beta1 in {0, 0.5, 0.9},
eta a random fraction of the admissible maximum, objectives of both kinds,
Gaussian noise with sigma in {0, 0.5, 2} or three-point noise with
amplitude in {2, 10} (three-point forces d = 1).
"""

from __future__ import annotations

import math

import numpy as np

from .checks import IDENTITY_CHECKS, LEMMA_CHECKS, run_pathwise_check
from .optimizers import AdamParams, Trajectory, calibrate, max_eta, run_trajectory
from .problems import Objective, Oracle
from .streams import derive_stream

NOISE_GRID = (
    ("gaussian", 0.0),
    ("gaussian", 0.5),
    ("gaussian", 2.0),
    ("three-point", 2.0),
    ("three-point", 10.0),
)
BETA1_GRID = (0.0, 0.5, 0.9)
V0_GRID = (0.25, 1.0, 4.0)
GENERAL_BETA2_GRID = (0.1, 0.5, 0.9, 0.99, 0.0)


def _pick(u: float, options):
    return options[min(int(u * len(options)), len(options) - 1)]


def _sample_problem(stream, d_forced=None):
    u = stream.uniform_block(4)
    noise_kind, noise_param = _pick(u[0], NOISE_GRID)
    if noise_kind == "three-point":
        d = 1
    elif d_forced is not None:
        d = d_forced
    else:
        d = 1 + min(int(u[1] * 8), 7)
    if u[2] < 0.5:
        lam = np.exp(np.log(0.25) + stream.uniform_block(d) * math.log(16.0))
        obj = Objective.quadratic_diag(lam)
    else:
        obj = Objective.quadratic_cosine(d)
    if noise_kind == "gaussian":
        oracle = Oracle(objective=obj, noise="gaussian", sigma=noise_param)
    else:
        oracle = Oracle(objective=obj, noise="three-point", amplitude=noise_param)
    x1 = -2.0 + 4.0 * stream.uniform_block(d)
    return obj, oracle, x1


def sample_calibrated_case(master_seed: int, index: int) -> tuple[Trajectory, dict]:
    """Deterministic random calibrated Adam trajectory for suite slot ``index``."""
    cs = derive_stream(master_seed, index, "case")
    obj, oracle, x1 = _sample_problem(cs)
    u = cs.uniform_block(5)
    T = 10 + min(int(u[0] * 191), 190)
    beta1 = _pick(u[1], BETA1_GRID)
    v0 = _pick(u[2], V0_GRID)
    eps = 10.0 ** (-8.0 + 7.0 * u[3])
    eta_cap = max_eta(obj.d, v0, eps, beta1, obj.L)
    eta = eta_cap * (0.1 + 0.9 * u[4])
    params = calibrate(eta, T, beta1=beta1, eps=eps, v0=v0)
    traj = run_trajectory(params, oracle, x1, T, derive_stream(master_seed, index, "noise"))
    meta = {"seed": index, "d": obj.d, "T": T, "beta1": beta1}
    return traj, meta


def sample_general_beta_case(master_seed: int, index: int, beta2: float) -> tuple[Trajectory, dict]:
    """beta1 = 0 run with a fixed beta2 and a free base stepsize."""
    cs = derive_stream(master_seed, index, "gbcase")
    obj, oracle, x1 = _sample_problem(cs)
    u = cs.uniform_block(3)
    T = 10 + min(int(u[0] * 141), 140)
    v0 = _pick(u[1], V0_GRID)
    gamma = 10.0 ** (-3.0 + 3.0 * u[2])
    params = AdamParams(gamma=gamma, beta1=0.0, beta2=beta2, eps=1e-8, v0=v0, T=T)
    traj = run_trajectory(params, oracle, x1, T, derive_stream(master_seed, index, "gbnoise"))
    meta = {"seed": index, "d": obj.d, "T": T, "beta1": 0.0, "beta2": beta2}
    return traj, meta


def _violation_row(meta: dict, result) -> dict:
    return {
        "check_id": result.check_id,
        "seed": meta["seed"],
        "d": meta["d"],
        "T": meta["T"],
        "beta1": meta["beta1"],
        "margin": result.margin,
        "worst_t": result.worst_t,
        "worst_i": result.worst_i,
    }


def run_lemma_suite(count: int, master_seed: int, check_ids=None, include_identity=True):
    """Run the catalog over ``count`` random calibrated trajectories.

    Returns (violations, checks_run); exit-clean means violations is empty.
    """
    if check_ids is None:
        check_ids = LEMMA_CHECKS + (IDENTITY_CHECKS if include_identity else ())
    violations = []
    n_checks = 0
    for k in range(count):
        traj, meta = sample_calibrated_case(master_seed, k)
        for cid in check_ids:
            result = run_pathwise_check(cid, traj)
            n_checks += 1
            if not result.holds:
                violations.append(_violation_row(meta, result))
    return violations, n_checks


def run_general_beta_suite(count: int, master_seed: int, beta2_grid=GENERAL_BETA2_GRID):
    """GEN-BETA over ``count`` beta1 = 0 runs cycling through the beta2 grid."""
    violations = []
    n_checks = 0
    for k in range(count):
        beta2 = beta2_grid[k % len(beta2_grid)]
        traj, meta = sample_general_beta_case(master_seed, k, beta2)
        result = run_pathwise_check("GEN-BETA", traj)
        n_checks += 1
        if not result.holds:
            violations.append(_violation_row(meta, result))
    return violations, n_checks
