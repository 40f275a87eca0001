"""Embedding validation and the cosine similarity kernels.

Embeddings are stored as 1-D ``float32`` arrays; every reduction is carried
out in ``float64``. All kernels funnel through ``np.einsum`` so that a score
computed for one pair is bit-identical to the same row scored inside a batch.
That property is what lets the flat and naive search paths agree exactly.
"""

from __future__ import annotations

import contextlib
import contextvars
import math
import threading
from typing import Iterator

import numpy as np

from .errors import DimensionMismatchError, NonFiniteError, ZeroNormError, VectorError

DEFAULT_DIM = 768


class KernelCounter:
    """Thread-safe tally of cosine evaluations."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self.calls = 0

    def add(self, n: int) -> None:
        with self._lock:
            self.calls += n


_active_counter: contextvars.ContextVar[KernelCounter | None] = contextvars.ContextVar(
    "vexbench_kernel_counter", default=None
)


@contextlib.contextmanager
def count_cosine_calls() -> Iterator[KernelCounter]:
    """Count cosine evaluations made in the current context.

    >>> with count_cosine_calls() as c:
    ...     _ = cosine([1, 0], [0, 1])
    >>> c.calls
    1
    """
    counter = KernelCounter()
    token = _active_counter.set(counter)
    try:
        yield counter
    finally:
        _active_counter.reset(token)


def _tick(n: int) -> None:
    counter = _active_counter.get()
    if counter is not None:
        counter.add(n)


def as_embedding(values, dim: int | None = None) -> np.ndarray:
    """Validate ``values`` and return them as a contiguous float32 vector."""
    v = np.ascontiguousarray(values, dtype=np.float32)
    if v.ndim != 1 or v.shape[0] < 1:
        raise VectorError(f"embedding must be a non-empty 1-D sequence, got shape {v.shape}")
    if dim is not None and v.shape[0] != dim:
        raise DimensionMismatchError(dim, v.shape[0])
    if not np.isfinite(v).all():
        raise NonFiniteError("embedding contains NaN or infinite values")
    return v


def _as_f64(values) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1 or v.shape[0] < 1:
        raise VectorError(f"expected a non-empty 1-D vector, got shape {v.shape}")
    if not np.isfinite(v).all():
        raise NonFiniteError("vector contains NaN or infinite values")
    return v


def _check_dims(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape[0] != b.shape[0]:
        raise DimensionMismatchError(a.shape[0], b.shape[0])


def dot(a, b) -> float:
    """Inner product accumulated in float64."""
    a64, b64 = _as_f64(a), _as_f64(b)
    _check_dims(a64, b64)
    return float(np.einsum("i,i->", a64, b64))


def norm(a) -> float:
    """Euclidean length of ``a``."""
    a64 = _as_f64(a)
    return math.sqrt(float(np.einsum("i,i->", a64, a64)))


def clamp_unit(x: float) -> float:
    return -1.0 if x < -1.0 else (1.0 if x > 1.0 else x)


def cosine(a, b) -> float:
    """Cosine similarity of two non-zero vectors, clamped to [-1, 1]."""
    a64, b64 = _as_f64(a), _as_f64(b)
    _check_dims(a64, b64)
    na = math.sqrt(float(np.einsum("i,i->", a64, a64)))
    nb = math.sqrt(float(np.einsum("i,i->", b64, b64)))
    if na == 0.0 or nb == 0.0:
        raise ZeroNormError("cosine similarity is undefined for a zero-norm vector")
    _tick(1)
    return clamp_unit(float(np.einsum("i,i->", a64, b64)) / (na * nb))


# Internal fast paths used by the index. Inputs are assumed validated; the
# query is already float64 and its norm is known.


def row_norms(block: np.ndarray) -> np.ndarray:
    """Norm of every row of a float32 matrix (float64 result)."""
    out = np.empty(block.shape[0], dtype=np.float64)
    # widen in slabs so a large corpus never gets a full float64 copy
    for start in range(0, block.shape[0], 256):
        b64 = block[start : start + 256].astype(np.float64)
        out[start : start + 256] = np.einsum("ij,ij->i", b64, b64)
    return np.sqrt(out)


def cosine_rows(block: np.ndarray, block_norms: np.ndarray, q64: np.ndarray, q_norm: float) -> np.ndarray:
    """Cosine of ``q64`` against every row of ``block``."""
    _tick(block.shape[0])
    dots = np.einsum("ij,j->i", block.astype(np.float64), q64)
    return np.clip(dots / (q_norm * block_norms), -1.0, 1.0)


def cosine_one(row: np.ndarray, row_norm: float, q64: np.ndarray, q_norm: float) -> float:
    """Cosine of ``q64`` against a single stored row.

    Produces exactly the value :func:`cosine_rows` yields for the same row.
    """
    _tick(1)
    d = float(np.einsum("i,i->", row.astype(np.float64), q64))
    return clamp_unit(d / (q_norm * row_norm))


def prepare_query(q, dim: int) -> tuple[np.ndarray, float]:
    """Validate a query vector and return it widened to float64 with its norm."""
    v = as_embedding(q)
    if v.shape[0] != dim:
        raise DimensionMismatchError(dim, v.shape[0])
    q64 = v.astype(np.float64)
    qn = math.sqrt(float(np.einsum("i,i->", q64, q64)))
    if qn == 0.0:
        raise ZeroNormError("query vector has zero norm")
    return q64, qn


def normalize(v) -> np.ndarray:
    """Unit-normalize in float64 and return float32."""
    v64 = np.asarray(v, dtype=np.float64)
    n = math.sqrt(float(np.einsum("i,i->", v64, v64)))
    if n == 0.0:
        raise ZeroNormError("cannot normalize a zero vector")
    return (v64 / n).astype(np.float32)
