"""Contiguous float64 vector kernels shared by the solvers.

All kernels write into an optional ``out`` buffer, which may alias any of the
inputs. Arithmetic goes through BLAS ``dscal``/``daxpy`` so that no
temporaries are created on the hot path.

Memory traffic (vector reads + writes of length N) is tallied when a
:func:`count_traffic` block is active; the tally lives in a context variable,
so concurrent solver contexts in different threads never share it.
"""
from __future__ import annotations

import contextlib
import contextvars
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import blas


class DimensionError(ValueError):
    """Vector lengths disagree or a vector is empty."""


class NonFiniteError(FloatingPointError):
    """A vector handed to a solver operation holds NaN or Inf."""


@dataclass
class Traffic:
    """Running count of vector reads/writes and allocations."""

    reads: int = 0
    writes: int = 0
    allocations: dict = field(default_factory=dict)

    @property
    def total(self) -> int:
        return self.reads + self.writes


_TRAFFIC: contextvars.ContextVar[Traffic | None] = contextvars.ContextVar(
    "lejaexp_traffic", default=None
)


@contextlib.contextmanager
def count_traffic():
    tally = Traffic()
    token = _TRAFFIC.set(tally)
    try:
        yield tally
    finally:
        _TRAFFIC.reset(token)


def record(reads: int = 0, writes: int = 0) -> None:
    tally = _TRAFFIC.get()
    if tally is not None:
        tally.reads += reads
        tally.writes += writes


def empty(n: int, tag: str = "temp") -> np.ndarray:
    """Allocate an uninitialised state vector; ``tag`` labels it in the tally."""
    tally = _TRAFFIC.get()
    if tally is not None:
        tally.allocations[tag] = tally.allocations.get(tag, 0) + 1
    return np.empty(n, dtype=np.float64)


def as_state(x, name: str = "vector") -> np.ndarray:
    """Return ``x`` as a contiguous 1-D float64 array, checking finiteness."""
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise DimensionError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.size == 0:
        raise DimensionError(f"{name} is empty")
    if not np.isfinite(arr).all():
        raise NonFiniteError(f"{name} contains non-finite values")
    return arr


def _check(*vecs: np.ndarray) -> int:
    n = vecs[0].shape[0]
    for v in vecs[1:]:
        if v.shape[0] != n:
            raise DimensionError(f"length mismatch: {n} vs {v.shape[0]}")
    return n


def _prepare_out(out, n):
    if out is None:
        return empty(n)
    if out.shape[0] != n:
        raise DimensionError(f"length mismatch: {n} vs {out.shape[0]}")
    return out


def scale(a: float, x: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
    """z = a*x."""
    n = _check(x)
    out = _prepare_out(out, n)
    if out is not x:
        np.copyto(out, x)
    blas.dscal(a, out)
    record(reads=1, writes=1)
    return out


def axpby(a: float, x: np.ndarray, b: float, y: np.ndarray,
          out: np.ndarray | None = None) -> np.ndarray:
    """z = a*x + b*y; ``out`` may be ``x`` or ``y``."""
    n = _check(x, y)
    out = _prepare_out(out, n)
    if out is y:
        blas.dscal(b, out)
        blas.daxpy(x, out, a=a)
    elif out is x:
        blas.dscal(a, out)
        blas.daxpy(y, out, a=b)
    else:
        np.copyto(out, y)
        blas.dscal(b, out)
        blas.daxpy(x, out, a=a)
    record(reads=2, writes=1)
    return out


def axpbypcz(a: float, x: np.ndarray, b: float, y: np.ndarray, c: float,
             z: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
    """w = a*x + b*y + c*z; ``out`` may alias any input."""
    n = _check(x, y, z)
    out = _prepare_out(out, n)
    # Scale whichever input is aliased first so it is consumed before being overwritten.
    if out is x:
        first, rest = (a, x), ((b, y), (c, z))
    elif out is y:
        first, rest = (b, y), ((a, x), (c, z))
    else:
        first, rest = (c, z), ((a, x), (b, y))
        if out is not z:
            np.copyto(out, z)
    blas.dscal(first[0], out)
    for coef, vec in rest:
        blas.daxpy(vec, out, a=coef)
    record(reads=3, writes=1)
    return out


def copy(x: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
    n = _check(x)
    out = _prepare_out(out, n)
    np.copyto(out, x)
    record(reads=1, writes=1)
    return out


def l2norm_scaled(x: np.ndarray) -> float:
    """Euclidean norm divided by sqrt(N), with pairwise summation."""
    n = x.shape[0]
    if n == 0:
        raise DimensionError("norm of an empty vector")
    # Rescale by max|x| so squares neither overflow nor underflow.
    big = float(np.max(np.abs(x)))
    record(reads=1)
    if big == 0.0 or not math.isfinite(big):
        return big
    s = np.add.reduce(np.square(x / big))
    return big * math.sqrt(float(s) / n)


def checksum(x: np.ndarray) -> str:
    """Order-independent 64-bit hash of the exact bit patterns of ``x``."""
    bits = np.ascontiguousarray(x, dtype=np.float64).view(np.uint64)
    idx = np.arange(bits.size, dtype=np.uint64)
    # splitmix64 finaliser over (index, bits); the sum is order independent.
    with np.errstate(over="ignore"):
        h = bits ^ (idx * np.uint64(0x9E3779B97F4A7C15))
        h = (h ^ (h >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        h = (h ^ (h >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        h = h ^ (h >> np.uint64(31))
        total = np.add.reduce(h, dtype=np.uint64)
    return f"{int(total):016x}"
