"""Smooth lower-bounded objectives and unbiased bounded-variance gradient oracles.

Two objective families with certifiable constants:

* ``quadratic-diag``: f(x) = 0.5 * sum_i lam_i x_i^2, minimum 0 at the origin,
  gradient-Lipschitz constant L = max_i lam_i.
* ``quadratic-cosine``: f(x) = sum_i (x_i^2 + cos x_i - 1), a smooth nonconvex
  test function with f''_i in [1, 3], hence L = 3, unique minimizer 0, f* = 0.

Oracles return g = grad f(x) + xi with xi one of: identically zero, centered
Gaussian with per-coordinate deviation sigma (variance constant C = d sigma^2),
or the symmetric three-point law (+A, -A each with probability 1/(2 A^2), zero
otherwise) which has unit variance at every amplitude A >= 1 (C = 1). The
three-point oracle is one-dimensional.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, InputError
from .streams import RngStream

QUADRATIC_DIAG = "quadratic-diag"
QUADRATIC_COSINE = "quadratic-cosine"
OBJECTIVE_KINDS = (QUADRATIC_DIAG, QUADRATIC_COSINE)

ZERO = "zero"
GAUSSIAN = "gaussian"
THREE_POINT = "three-point"
NOISE_KINDS = (ZERO, GAUSSIAN, THREE_POINT)


def as_vector(x, d=None) -> np.ndarray:
    """Validate x as a finite 1-D float64 vector, optionally of dimension d."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise InputError(f"expected a 1-D vector, got shape {arr.shape}")
    if d is not None and arr.shape[0] != d:
        raise InputError(f"dimension mismatch: expected {d}, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise InputError("vector has nonfinite entries")
    return arr


@dataclass(frozen=True)
class Objective:
    kind: str
    d: int
    lam: tuple | None = None  # eigenvalues, quadratic-diag only

    def __post_init__(self):
        if self.kind not in OBJECTIVE_KINDS:
            raise ConfigurationError(f"unknown objective kind {self.kind!r}")
        if self.d < 1:
            raise ConfigurationError(f"dimension must be positive, got {self.d}")
        if self.kind == QUADRATIC_DIAG:
            if self.lam is None or len(self.lam) != self.d:
                raise ConfigurationError("quadratic-diag needs one eigenvalue per coordinate")
            if any(l <= 0 for l in self.lam):
                raise ConfigurationError("quadratic-diag eigenvalues must be positive")
        elif self.lam is not None:
            raise ConfigurationError("eigenvalues only apply to quadratic-diag")

    @classmethod
    def quadratic_diag(cls, lam) -> "Objective":
        lam = tuple(float(l) for l in np.atleast_1d(lam))
        return cls(kind=QUADRATIC_DIAG, d=len(lam), lam=lam)

    @classmethod
    def quadratic_cosine(cls, d: int) -> "Objective":
        return cls(kind=QUADRATIC_COSINE, d=int(d))

    @property
    def f_star(self) -> float:
        """Infimum of the objective (attained at the origin for both kinds)."""
        return 0.0

    @property
    def L(self) -> float:
        if self.kind == QUADRATIC_DIAG:
            return float(max(self.lam))
        return 3.0

    def value_grad(self, x) -> tuple[float, np.ndarray]:
        x = as_vector(x, self.d)
        if self.kind == QUADRATIC_DIAG:
            lam = np.asarray(self.lam)
            return float(0.5 * np.dot(lam, x * x)), lam * x
        return float(np.sum(x * x + np.cos(x) - 1.0)), 2.0 * x - np.sin(x)

    def value_grad_batch(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Batched (B, d) evaluation; returns (values (B,), gradients (B, d))."""
        if self.kind == QUADRATIC_DIAG:
            lam = np.asarray(self.lam)
            return 0.5 * np.sum(lam * x * x, axis=1), lam * x
        return np.sum(x * x + np.cos(x) - 1.0, axis=1), 2.0 * x - np.sin(x)

    def fbar(self, value) -> float:
        """Shifted objective f - f* + 1, the quantity all threshold checks use."""
        return value - self.f_star + 1.0


def objective_eval(obj: Objective, x) -> tuple[float, np.ndarray]:
    return obj.value_grad(x)


def three_point_from_uniform(u, amplitude: float):
    """Map uniform [0,1) draws to the symmetric three-point law at the given amplitude."""
    a2 = amplitude * amplitude
    half_p = 0.5 / a2
    return np.where(u < half_p, amplitude, np.where(u < 2.0 * half_p, -amplitude, 0.0))


@dataclass(frozen=True)
class Oracle:
    objective: Objective
    noise: str = ZERO
    sigma: float = 0.0
    amplitude: float | None = None

    def __post_init__(self):
        if self.noise not in NOISE_KINDS:
            raise ConfigurationError(f"unknown noise kind {self.noise!r}")
        if self.noise == GAUSSIAN and self.sigma < 0:
            raise ConfigurationError(f"gaussian sigma must be >= 0, got {self.sigma}")
        if self.noise == THREE_POINT:
            if self.amplitude is None or self.amplitude < 1.0:
                raise ConfigurationError(f"three-point amplitude must be >= 1, got {self.amplitude}")
            if self.objective.d != 1:
                raise ConfigurationError("three-point noise requires a one-dimensional objective")

    @property
    def C(self) -> float:
        """Conditional-variance constant of the noise."""
        if self.noise == GAUSSIAN:
            return self.objective.d * self.sigma**2
        if self.noise == THREE_POINT:
            return 1.0
        return 0.0

    @property
    def draws_per_sample(self) -> int:
        """Uniform variates consumed per gradient sample (fixed per oracle)."""
        if self.noise == GAUSSIAN:
            return self.objective.d
        if self.noise == THREE_POINT:
            return 1
        return 0

    def noise_block(self, stream: RngStream, n: int) -> np.ndarray:
        """(n, d) noise realizations, consuming n * draws_per_sample uniforms."""
        d = self.objective.d
        if self.noise == ZERO:
            return np.zeros((n, d))
        if self.noise == GAUSSIAN:
            return self.sigma * stream.gaussian_block(n * d).reshape(n, d)
        u = stream.uniform_block(n)
        return three_point_from_uniform(u, self.amplitude).reshape(n, 1)

    def sample(self, x, stream: RngStream) -> np.ndarray:
        """One unbiased gradient sample g = grad f(x) + xi."""
        _, grad = self.objective.value_grad(x)
        return grad + self.noise_block(stream, 1)[0]

    def sample_block(self, x, stream: RngStream, n: int) -> np.ndarray:
        """(n, d) fresh gradient samples at a fixed point."""
        _, grad = self.objective.value_grad(x)
        return grad + self.noise_block(stream, n)


def sample_gradient(oracle: Oracle, x, stream: RngStream) -> np.ndarray:
    return oracle.sample(x, stream)
