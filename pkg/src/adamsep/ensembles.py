"""Vectorized batch execution of many independent runs for tail studies.

Runs are stepped together as (B, d) arrays, but every run draws from its own
stream (master_seed, run_index, stage), consuming uniforms in exactly the
order the per-run trajectory driver does. Results are therefore independent
of chunking and worker count, and per-run metrics match the slow path.

A run whose iterate becomes nonfinite is frozen and reported with +inf
metrics (the divergence sentinel) and its 1-based divergence step.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor

import numpy as np
from scipy.special import ndtri

from .errors import ConfigurationError
from .optimizers import AdamParams, StepSchedule
from .problems import Oracle, as_vector, three_point_from_uniform
from .streams import _MIN_UNIFORM, philox_key_words

ADAM_METRICS = ("avg_gsq", "E")
SGD_METRICS = ("avg_gsq", "w_gsq")


def _noise_matrix(oracle: Oracle, T: int, master_seed: int, lo: int, hi: int, stage: str):
    k = oracle.draws_per_sample
    if k == 0:
        return None
    U = np.empty((hi - lo, T * k))
    # one Philox reused across runs via state reset: identical draws to
    # derive_stream(master_seed, run, stage) at a fraction of the setup cost
    bitgen = np.random.Philox(key=0)
    gen = np.random.Generator(bitgen)
    state = bitgen.state
    for row, run in enumerate(range(lo, hi)):
        key_lo, key_hi = philox_key_words(master_seed, run, stage)
        state["state"]["key"][:] = (key_lo, key_hi)
        state["state"]["counter"][:] = 0
        state["buffer_pos"] = 4
        state["has_uint32"] = 0
        state["uinteger"] = 0
        bitgen.state = state
        U[row] = gen.random(T * k)
    return U


def _noise_step(oracle: Oracle, U, t: int, B: int):
    d = oracle.objective.d
    if U is None:
        return 0.0
    k = oracle.draws_per_sample
    block = U[:, t * k : (t + 1) * k]
    if oracle.noise == "gaussian":
        return oracle.sigma * ndtri(np.maximum(block, _MIN_UNIFORM))
    return three_point_from_uniform(block, oracle.amplitude).reshape(B, d)


def batch_metrics(spec, oracle: Oracle, x_init, T: int, master_seed: int,
                  lo: int, hi: int, stage: str = "noise") -> dict:
    """Metrics for runs [lo, hi); returns per-run arrays plus ``diverged_at``
    (1-based step, 0 where the run completed)."""
    obj = oracle.objective
    d = obj.d
    B = hi - lo
    x0 = as_vector(x_init, d)
    x = np.tile(x0, (B, 1))
    alive = np.ones(B, dtype=bool)
    div_step = np.zeros(B, dtype=np.int64)
    acc_gsq = np.zeros(B)
    U = _noise_matrix(oracle, T, master_seed, lo, hi, stage)
    if isinstance(spec, AdamParams):
        if spec.T != T:
            raise ConfigurationError(f"params horizon {spec.T} does not match T={T}")
        m = np.zeros((B, d))
        v = np.full((B, d), spec.v0)
        acc_e = np.zeros(B)
        b1, b2, eps, gamma = spec.beta1, spec.beta2, spec.eps, spec.gamma
        with np.errstate(over="ignore", invalid="ignore"):
            for t in range(T):
                _, grad = obj.value_grad_batch(x)
                g = grad + _noise_step(oracle, U, t, B)
                m = b1 * m + (1.0 - b1) * g
                v = b2 * v + (1.0 - b2) * g * g
                gam = gamma / (np.sqrt(v) + eps)
                acc_gsq += np.where(alive, np.sum(grad * grad, axis=1), 0.0)
                acc_e += np.where(alive, np.sum(gam * grad * grad, axis=1), 0.0)
                x = x - gam * m
                bad = alive & ~np.all(np.isfinite(x), axis=1)
                if np.any(bad):
                    div_step[bad] = t + 1
                    alive[bad] = False
                    x[bad] = 0.0
                    m[bad] = 0.0
                    v[bad] = spec.v0
        metrics = {"avg_gsq": acc_gsq / T, "E": acc_e}
    elif isinstance(spec, StepSchedule):
        etas = spec.materialize(T)
        acc_w = np.zeros(B)
        with np.errstate(over="ignore", invalid="ignore"):
            for t in range(T):
                _, grad = obj.value_grad_batch(x)
                g = grad + _noise_step(oracle, U, t, B)
                gsq = np.sum(grad * grad, axis=1)
                acc_gsq += np.where(alive, gsq, 0.0)
                acc_w += np.where(alive, etas[t] * gsq, 0.0)
                x = x - etas[t] * g
                bad = alive & ~np.all(np.isfinite(x), axis=1)
                if np.any(bad):
                    div_step[bad] = t + 1
                    alive[bad] = False
                    x[bad] = 0.0
        metrics = {"avg_gsq": acc_gsq / T, "w_gsq": acc_w}
    else:
        raise ConfigurationError(f"optimizer spec must be AdamParams or StepSchedule, got {type(spec)!r}")
    for arr in metrics.values():
        arr[~alive] = np.inf
    metrics["diverged_at"] = div_step
    return metrics


def _chunk_job(args):
    return batch_metrics(*args)


def default_chunk(T: int, draws_per_sample: int) -> int:
    budget = 8_000_000  # uniforms held in memory per chunk
    return max(1, budget // (T * max(draws_per_sample, 1)))


def ensemble_metrics(spec, oracle: Oracle, x_init, T: int, N: int, master_seed: int,
                     stage: str = "noise", workers: int = 1, chunk: int | None = None) -> dict:
    """Metrics over runs 0..N-1, assembled in run-index order."""
    if N < 1:
        raise ConfigurationError(f"run count must be positive, got {N}")
    if chunk is None:
        chunk = default_chunk(T, oracle.draws_per_sample)
    bounds = [(lo, min(lo + chunk, N)) for lo in range(0, N, chunk)]
    jobs = [(spec, oracle, x_init, T, master_seed, lo, hi, stage) for lo, hi in bounds]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_chunk_job, jobs))
    else:
        parts = [_chunk_job(job) for job in jobs]
    return {key: np.concatenate([p[key] for p in parts]) for key in parts[0]}
