"""Adam, its beta1 = 0 reduction, and SGD with constant or explicit step schedules.

The Adam step, all operations coordinatewise:

    m <- beta1 * m + (1 - beta1) * g
    v <- beta2 * v + (1 - beta2) * g * g
    gamma_t = gamma / (sqrt(v) + eps)
    x <- x - gamma_t * m

starting from m = 0 and v = v0 * ones. With beta1 = 0 this is exactly the
RMSProp-style update x <- x - gamma_t * g. The finite-horizon calibration
used by the tail experiments sets beta2 = 1 - 1/T and gamma = eta / sqrt(T).
SGD updates x <- x - eta_t * g under a constant or explicit nonnegative
schedule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DivergenceError, InputError
from .problems import Objective, Oracle, as_vector
from .streams import RngStream

_DBETA1_SCAN_CAP = 10**7
_CALIBRATION_RTOL = 1e-12


def d_beta1(beta1: float) -> float:
    """Increment-bound constant D with D^2 = 4 (1-beta1) sup_{T>=10} S(T),
    where S(T) = sum_{r<T} rho(T)^r and rho(T) = T beta1 / (T-1).

    Scans T upward from 10 with S(T) in closed geometric form; rho(T) is
    decreasing in T, so once 1/(1 - rho(T+1)) (an upper bound on every later
    S) drops below the running maximum the supremum is certified. The scan is
    capped at 10^7 and fails loudly if uncertified by then (never triggered
    for beta1 <= 0.99).
    """
    if not 0.0 <= beta1 < 1.0:
        raise ConfigurationError(f"beta1 must lie in [0, 1), got {beta1}")
    if beta1 == 0.0:
        return 2.0  # only the r = 0 term survives, S = 1, D^2 = 4
    best = 0.0
    T = 10
    while T <= _DBETA1_SCAN_CAP:
        rho = T * beta1 / (T - 1)
        if rho == 1.0:
            s = float(T)
        else:
            s = -math.expm1(T * math.log(rho)) / (1.0 - rho)
        best = max(best, s)
        rho_next = (T + 1) * beta1 / T
        if rho_next < 1.0 and 1.0 / (1.0 - rho_next) <= best:
            return 2.0 * math.sqrt((1.0 - beta1) * best)
        T += 1
    raise ConfigurationError(f"d_beta1 scan uncertified after T={_DBETA1_SCAN_CAP} for beta1={beta1}")


def max_eta(d: int, v0: float, eps: float, beta1: float, L: float) -> float:
    """Largest admissible stepsize constant eta: the reciprocal of
    max{8 d eps / v0^1.5 + 8 d / sqrt(v0), D_beta1 beta1 sqrt(d L) / (1 - beta1), 1}.

    eps = 0 is permitted here (the bound stays finite because v0 > 0) even
    though the algorithm itself requires eps > 0.
    """
    if d < 1:
        raise ConfigurationError(f"dimension must be positive, got {d}")
    if v0 <= 0:
        raise ConfigurationError(f"v0 must be positive, got {v0}")
    if eps < 0:
        raise ConfigurationError(f"eps must be nonnegative, got {eps}")
    if L <= 0:
        raise ConfigurationError(f"L must be positive, got {L}")
    noise_branch = 8.0 * d * eps / v0**1.5 + 8.0 * d / math.sqrt(v0)
    momentum_branch = d_beta1(beta1) * beta1 * math.sqrt(d * L) / (1.0 - beta1)
    return 1.0 / max(noise_branch, momentum_branch, 1.0)


@dataclass(frozen=True)
class AdamParams:
    """Hyperparameters for one Adam run of horizon T.

    ``calibrated`` marks the finite-horizon parameterization
    beta2 = 1 - 1/T, gamma = eta / sqrt(T) with the base constant ``eta``
    stored; both identities are enforced to machine precision.
    """

    gamma: float
    beta1: float
    beta2: float
    eps: float
    v0: float
    T: int
    calibrated: bool = False
    eta: float | None = None

    def __post_init__(self):
        if self.gamma <= 0:
            raise ConfigurationError(f"gamma must be positive, got {self.gamma}")
        if not 0.0 <= self.beta1 < 1.0:
            raise ConfigurationError(f"beta1 must lie in [0, 1), got {self.beta1}")
        if not 0.0 <= self.beta2 < 1.0:
            raise ConfigurationError(f"beta2 must lie in [0, 1), got {self.beta2}")
        if self.eps <= 0:
            raise ConfigurationError(f"eps must be positive, got {self.eps}")
        if self.v0 <= 0:
            raise ConfigurationError(f"v0 must be positive, got {self.v0}")
        if not isinstance(self.T, int) or self.T < 1:
            raise ConfigurationError(f"T must be a positive integer, got {self.T}")
        if self.calibrated:
            if self.T < 10:
                raise ConfigurationError(f"calibrated runs require T >= 10, got T={self.T}")
            if self.eta is None or self.eta <= 0:
                raise ConfigurationError("calibrated params must store eta > 0")
            if not math.isclose(self.beta2, 1.0 - 1.0 / self.T, rel_tol=_CALIBRATION_RTOL):
                raise ConfigurationError("calibrated params require beta2 = 1 - 1/T")
            if not math.isclose(self.gamma, self.eta / math.sqrt(self.T), rel_tol=_CALIBRATION_RTOL):
                raise ConfigurationError("calibrated params require gamma = eta / sqrt(T)")


def calibrate(eta: float, T: int, beta1: float = 0.0, eps: float = 1e-8, v0: float = 1.0) -> AdamParams:
    """Finite-horizon calibration beta2 = 1 - 1/T, gamma = eta / sqrt(T); needs T >= 10."""
    if not isinstance(T, int) or T < 10:
        raise ConfigurationError(f"calibration requires an integer horizon T >= 10, got {T}")
    if eta <= 0:
        raise ConfigurationError(f"eta must be positive, got {eta}")
    return AdamParams(
        gamma=eta / math.sqrt(T),
        beta1=beta1,
        beta2=1.0 - 1.0 / T,
        eps=eps,
        v0=v0,
        T=T,
        calibrated=True,
        eta=eta,
    )


@dataclass
class AdamState:
    t: int
    x: np.ndarray
    m: np.ndarray
    v: np.ndarray


def adam_init(params: AdamParams, x1) -> AdamState:
    x = as_vector(x1)
    d = x.shape[0]
    return AdamState(t=0, x=x.copy(), m=np.zeros(d), v=np.full(d, params.v0))


def adam_step(state: AdamState, g, params: AdamParams) -> tuple[AdamState, np.ndarray]:
    """One Adam update; returns the new state and the preconditioning vector gamma_t."""
    g = np.asarray(g, dtype=np.float64)
    if g.shape != state.x.shape:
        raise InputError(f"gradient shape {g.shape} does not match state shape {state.x.shape}")
    if not np.all(np.isfinite(g)):
        raise InputError(f"nonfinite gradient at step {state.t + 1}")
    with np.errstate(over="ignore", invalid="ignore"):
        m = params.beta1 * state.m + (1.0 - params.beta1) * g
        v = params.beta2 * state.v + (1.0 - params.beta2) * (g * g)
        gamma_t = params.gamma / (np.sqrt(v) + params.eps)
        x = state.x - gamma_t * m
    new_state = AdamState(t=state.t + 1, x=x, m=m, v=v)
    if not np.all(np.isfinite(x)):
        err = DivergenceError(state.t + 1)
        err.state = new_state  # partial step for diagnosis
        err.gamma_t = gamma_t
        raise err
    return new_state, gamma_t


def sgd_step(x, g, eta_t: float) -> np.ndarray:
    """One SGD update x - eta_t * g; the step must be nonnegative."""
    if eta_t < 0:
        raise ConfigurationError(f"stepsize must be nonnegative, got {eta_t}")
    x = np.asarray(x, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if x.shape != g.shape:
        raise InputError(f"shape mismatch: x {x.shape} vs g {g.shape}")
    return x - eta_t * g


@dataclass(frozen=True)
class StepSchedule:
    """Constant stepsize or an explicit nonnegative list of length T."""

    gamma: float | None = None
    etas: tuple | None = None

    def __post_init__(self):
        if (self.gamma is None) == (self.etas is None):
            raise ConfigurationError("schedule is either constant or explicit, not both")
        if self.gamma is not None and self.gamma < 0:
            raise ConfigurationError(f"constant stepsize must be >= 0, got {self.gamma}")
        if self.etas is not None and any(e < 0 for e in self.etas):
            raise ConfigurationError("explicit schedule entries must be >= 0")

    @classmethod
    def constant(cls, gamma: float) -> "StepSchedule":
        return cls(gamma=float(gamma))

    @classmethod
    def explicit(cls, etas) -> "StepSchedule":
        return cls(etas=tuple(float(e) for e in np.atleast_1d(etas)))

    def materialize(self, T: int) -> np.ndarray:
        if self.gamma is not None:
            return np.full(T, self.gamma)
        if len(self.etas) != T:
            raise ConfigurationError(f"explicit schedule has length {len(self.etas)}, expected T={T}")
        return np.asarray(self.etas)


@dataclass
class Trajectory:
    """Full per-step record of one optimizer run.

    Rows are 1-based in time: x[t-1] holds x_t for t = 1..T+1, and the step
    arrays (g, grad, fvals, and for Adam m, v, gamma; for SGD eta) hold steps
    t = 1..T. ``diverged_at`` is the step whose update produced a nonfinite
    iterate, or None.
    """

    optimizer: str
    objective: Objective
    oracle: Oracle
    T: int
    d: int
    seed_path: tuple
    x: np.ndarray
    g: np.ndarray
    grad: np.ndarray
    fvals: np.ndarray
    params: AdamParams | None = None
    m: np.ndarray | None = None
    v: np.ndarray | None = None
    gamma: np.ndarray | None = None
    eta: np.ndarray | None = None
    diverged_at: int | None = None

    @property
    def n_steps(self) -> int:
        """Number of fully usable steps: T, or the last step before divergence."""
        if self.diverged_at is None:
            return self.T
        return self.diverged_at - 1

    def gamma_with_initial(self) -> np.ndarray:
        """(T+1, d) array of gamma_0..gamma_T, gamma_0 = gamma / (sqrt(v0) + eps)."""
        if self.gamma is None:
            raise InputError("gamma sequence only exists for Adam trajectories")
        p = self.params
        g0 = np.full((1, self.d), p.gamma / (math.sqrt(p.v0) + p.eps))
        return np.vstack([g0, self.gamma])


def run_trajectory(spec, oracle: Oracle, x1, T: int, stream: RngStream) -> Trajectory:
    """Drive Adam (AdamParams spec) or SGD (StepSchedule spec) for T steps.

    Deterministic given (spec, stream path). On divergence the partial
    trajectory is attached to the raised DivergenceError for diagnosis.
    """
    if not isinstance(T, int) or T < 1:
        raise ConfigurationError(f"T must be a positive integer, got {T}")
    obj = oracle.objective
    x = as_vector(x1, obj.d)
    d = obj.d
    X = np.full((T + 1, d), np.nan)
    G = np.full((T, d), np.nan)
    GRAD = np.full((T, d), np.nan)
    F = np.full(T + 1, np.nan)
    path = stream.path
    if isinstance(spec, AdamParams):
        if spec.T != T:
            raise ConfigurationError(f"params horizon {spec.T} does not match T={T}")
        M = np.full((T, d), np.nan)
        V = np.full((T, d), np.nan)
        GAM = np.full((T, d), np.nan)
        traj = Trajectory(
            optimizer="adam", objective=obj, oracle=oracle, T=T, d=d, seed_path=path,
            x=X, g=G, grad=GRAD, fvals=F, params=spec, m=M, v=V, gamma=GAM,
        )
        state = adam_init(spec, x)
        for t in range(1, T + 1):
            X[t - 1] = state.x
            with np.errstate(over="ignore", invalid="ignore"):
                f, grad = obj.value_grad(state.x)
            F[t - 1] = f
            GRAD[t - 1] = grad
            g = grad + oracle.noise_block(stream, 1)[0]
            G[t - 1] = g
            try:
                state, gamma_t = adam_step(state, g, spec)
            except DivergenceError as err:
                bad = err.state
                M[t - 1], V[t - 1], GAM[t - 1] = bad.m, bad.v, err.gamma_t
                X[t] = bad.x
                traj.diverged_at = t
                raise DivergenceError(err.step, trajectory=traj) from None
            M[t - 1], V[t - 1], GAM[t - 1] = state.m, state.v, gamma_t
        X[T] = state.x
        F[T] = obj.value_grad(state.x)[0]
        return traj
    if isinstance(spec, StepSchedule):
        etas = spec.materialize(T)
        traj = Trajectory(
            optimizer="sgd", objective=obj, oracle=oracle, T=T, d=d, seed_path=path,
            x=X, g=G, grad=GRAD, fvals=F, eta=etas.copy(),
        )
        for t in range(1, T + 1):
            X[t - 1] = x
            with np.errstate(over="ignore", invalid="ignore"):
                f, grad = obj.value_grad(x)
            F[t - 1] = f
            GRAD[t - 1] = grad
            g = grad + oracle.noise_block(stream, 1)[0]
            G[t - 1] = g
            with np.errstate(over="ignore", invalid="ignore"):
                x = sgd_step(x, g, etas[t - 1])
            if not np.all(np.isfinite(x)):
                X[t] = x
                traj.diverged_at = t
                raise DivergenceError(t, trajectory=traj)
        X[T] = x
        F[T] = obj.value_grad(x)[0]
        return traj
    raise ConfigurationError(f"optimizer spec must be AdamParams or StepSchedule, got {type(spec)!r}")
