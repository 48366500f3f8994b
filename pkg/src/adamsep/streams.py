"""Splittable deterministic random streams keyed by (master_seed, run_index, stage_tag).

Each stream owns a Philox counter-based generator whose 128-bit key is the
SHA-256 hash of its full path, so distinct paths use distinct keystreams:
sequences from different paths are independent and never overlap, and any
number of streams may be consumed concurrently without coordination.

Draw costs are fixed and documented: one 64-bit word per ``uniform01``
variate, and one uniform per ``std_gaussian`` variate (inverse-CDF
transform). Rebuilding a stream from its path and redrawing reproduces the
byte-identical sequence.
"""

from __future__ import annotations

import hashlib
import re

import numpy as np
from scipy.special import ndtri

from .errors import ConfigurationError

_U64 = 2**64
_TAG_RE = re.compile(r"^[A-Za-z0-9_.-]{1,64}$")

DISTRIBUTIONS = ("uniform01", "std_gaussian")

# Generator.random() can return exactly 0.0 (probability 2**-53 per draw);
# ndtri(0) is -inf, so zero uniforms are nudged to the smallest level used
# by the 53-bit sampler.
_MIN_UNIFORM = 2.0**-53


def _digest(master_seed: int, run_index: int, stage_tag: str) -> bytes:
    return hashlib.sha256(f"{master_seed}:{run_index}:{stage_tag}".encode()).digest()


def philox_key_words(master_seed: int, run_index: int, stage_tag: str) -> tuple[int, int]:
    """The two 64-bit Philox key words of a stream path (low word first)."""
    digest = _digest(master_seed, run_index, stage_tag)
    return (
        int.from_bytes(digest[:8], "little"),
        int.from_bytes(digest[8:16], "little"),
    )


def _validate_path(master_seed, run_index, stage_tag):
    if not isinstance(master_seed, int) or not 0 <= master_seed < _U64:
        raise ConfigurationError(f"master_seed must be a 64-bit unsigned integer, got {master_seed!r}")
    if not isinstance(run_index, int) or run_index < 0:
        raise ConfigurationError(f"run_index must be a nonnegative integer, got {run_index!r}")
    if not isinstance(stage_tag, str) or not _TAG_RE.match(stage_tag):
        raise ConfigurationError(f"stage_tag must be a short identifier, got {stage_tag!r}")


class RngStream:
    """One independent draw sequence at a fixed (master_seed, run_index, stage_tag) path."""

    __slots__ = ("master_seed", "run_index", "stage_tag", "counter", "_gen")

    def __init__(self, master_seed: int, run_index: int, stage_tag: str):
        _validate_path(master_seed, run_index, stage_tag)
        self.master_seed = master_seed
        self.run_index = run_index
        self.stage_tag = stage_tag
        self.counter = 0
        key = int.from_bytes(_digest(master_seed, run_index, stage_tag)[:16], "little")
        self._gen = np.random.Generator(np.random.Philox(key=key))

    @property
    def path(self):
        return (self.master_seed, self.run_index, self.stage_tag)

    def uniform_block(self, n: int) -> np.ndarray:
        """n uniforms in [0, 1); advances the counter by n."""
        if n < 0:
            raise ConfigurationError(f"block size must be nonnegative, got {n}")
        self.counter += n
        return self._gen.random(n)

    def gaussian_block(self, n: int) -> np.ndarray:
        """n standard normals via inverse CDF; one uniform consumed per variate."""
        u = self.uniform_block(n)
        return ndtri(np.maximum(u, _MIN_UNIFORM))

    def draw(self, dist: str) -> float:
        """Single variate from ``dist`` in DISTRIBUTIONS; advances the counter by 1."""
        if dist == "uniform01":
            return float(self.uniform_block(1)[0])
        if dist == "std_gaussian":
            return float(self.gaussian_block(1)[0])
        raise ConfigurationError(f"unknown distribution {dist!r}; expected one of {DISTRIBUTIONS}")

    def __repr__(self):
        return f"RngStream(path={self.path}, counter={self.counter})"


def derive_stream(master_seed: int, run_index: int, stage_tag: str) -> RngStream:
    """Deterministic stream for the given path; equal paths give equal sequences."""
    return RngStream(master_seed, run_index, stage_tag)


def derive_seed(master_seed: int, label: str) -> int:
    """Child 64-bit master seed for a named sub-experiment."""
    if not isinstance(label, str) or not label:
        raise ConfigurationError(f"label must be a nonempty string, got {label!r}")
    return int.from_bytes(_digest(master_seed, 0, f"seed.{label}")[16:24], "little")
