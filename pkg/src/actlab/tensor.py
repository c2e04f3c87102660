"""Dense 2-D float64 tensors and seeded, label-addressable randomness.

Tensors are plain ``numpy.ndarray`` objects of shape ``(rows, cols)`` and
dtype float64.  This module owns construction/validation, the handful of
shape-checked operations the lab needs, and the deterministic random
source everything else derives its draws from.  Performance is a non-goal;
reproducibility is the contract.
"""

from __future__ import annotations

import hashlib
from typing import Union

import numpy as np

Scalar = Union[int, float]


class ShapeMismatch(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class BadRange(ValueError):
    """Invalid sampling parameters (empty interval or negative spread)."""


def tensor2(data) -> np.ndarray:
    """Coerce ``data`` to a contiguous 2-D float64 array.

    Rejects anything that is not two-dimensional or has a zero dimension.
    """
    a = np.ascontiguousarray(np.asarray(data, dtype=np.float64))
    if a.ndim != 2:
        raise ShapeMismatch(f"expected a 2-D tensor, got ndim={a.ndim}")
    if a.shape[0] == 0 or a.shape[1] == 0:
        raise ShapeMismatch(f"zero dimension in shape {a.shape}")
    return a


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"matmul: {a.shape} @ {b.shape}")
    return a @ b


def add_row_bias(a: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Add a 1 x cols bias row to every row of ``a``."""
    if bias.shape != (1, a.shape[1]):
        raise ShapeMismatch(f"bias {bias.shape} does not fit {a.shape}")
    return a + bias


_ELEMENTWISE = {
    "add": np.add,
    "sub": np.subtract,
    "mul": np.multiply,
    "div": np.divide,
    "min": np.minimum,
    "max": np.maximum,
}


def elementwise(a: np.ndarray, b, op: str) -> np.ndarray:
    """Apply a named binary op elementwise; ``b`` may be a scalar.

    Plain IEEE semantics, no guards -- division by zero yields inf.
    """
    if op not in _ELEMENTWISE:
        raise ValueError(f"unknown elementwise op {op!r}")
    if isinstance(b, np.ndarray) and b.shape != a.shape:
        raise ShapeMismatch(f"elementwise {op}: {a.shape} vs {b.shape}")
    return _ELEMENTWISE[op](a, b)


def reduce_mean(a: np.ndarray) -> float:
    return float(np.mean(a))


def reduce_std(a: np.ndarray) -> float:
    """Population standard deviation over all elements (ddof=0)."""
    return float(np.std(a))


class SeededRng:
    """Deterministic random source addressable by hierarchical labels.

    ``SeededRng(7).substream("inputs")`` yields the same stream no matter
    what was drawn from any other substream first: substream keys are
    SHA-256 digests of (parent key, label), and each stream is a fresh
    PCG64 generator seeded from its key.  Draws within one stream are
    ordered as usual.
    """

    def __init__(self, seed: int):
        payload = int(seed).to_bytes(16, "little", signed=True)
        self._key = hashlib.sha256(b"actlab.rng\x00" + payload).digest()
        self._gen: np.random.Generator | None = None

    @classmethod
    def _from_key(cls, key: bytes) -> "SeededRng":
        rng = cls.__new__(cls)
        rng._key = key
        rng._gen = None
        return rng

    def substream(self, label: str) -> "SeededRng":
        key = hashlib.sha256(self._key + b"\x00" + label.encode("utf-8")).digest()
        return SeededRng._from_key(key)

    @property
    def generator(self) -> np.random.Generator:
        if self._gen is None:
            seed = int.from_bytes(self._key, "little")
            self._gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
        return self._gen

    def uniform(self, rows: int, cols: int, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
        """Uniform draws over the half-open interval [lo, hi)."""
        if not lo < hi:
            raise BadRange(f"uniform: need lo < hi, got [{lo}, {hi})")
        if rows <= 0 or cols <= 0:
            raise ShapeMismatch(f"uniform: bad shape ({rows}, {cols})")
        return self.generator.uniform(lo, hi, size=(rows, cols))

    def normal(self, rows: int, cols: int, mean: float = 0.0, sd: float = 1.0) -> np.ndarray:
        if sd < 0:
            raise BadRange(f"normal: sd must be >= 0, got {sd}")
        if rows <= 0 or cols <= 0:
            raise ShapeMismatch(f"normal: bad shape ({rows}, {cols})")
        return self.generator.normal(mean, sd, size=(rows, cols))
