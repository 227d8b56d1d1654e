"""Dense float64 linear algebra, activations, seeded randomness, and a
finite-difference gradient oracle.

All matrices are 2-D float64 ndarrays.  Everything here is deterministic
for fixed inputs; ``lane_matmul`` additionally guarantees that each output
column depends only on the matching input column, so batched evaluation is
bitwise identical to a column-at-a-time evaluation (BLAS GEMM does not
give you that).
"""

from __future__ import annotations

import zlib
from typing import Callable

import numpy as np

from .errors import NumericError, ParameterError, ShapeError


def as_matrix(x) -> np.ndarray:
    """Coerce to a 2-D float64 array, validating the shape."""
    a = np.asarray(x, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got ndim={a.ndim}")
    return a


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Standard matrix product with an explicit shape check."""
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return a @ b


def lane_matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product computed one column of ``b`` at a time.

    Column ``j`` of the result is bitwise identical to ``a @ b[:, j:j+1]``
    regardless of how many columns ``b`` has.  Used wherever batch lanes
    must reproduce independent single-lane runs exactly.
    """
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    out = np.empty((a.shape[0], b.shape[1]))
    for j in range(b.shape[1]):
        out[:, j] = a @ b[:, j]
    return out


def hadamard(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Elementwise product of two same-shaped matrices."""
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape != b.shape:
        raise ShapeError(f"hadamard shape mismatch: {a.shape} vs {b.shape}")
    return a * b


def tanh_map(x) -> np.ndarray:
    """Elementwise tanh; saturates instead of overflowing."""
    return np.tanh(np.asarray(x, dtype=np.float64))


def sigmoid_map(x) -> np.ndarray:
    """Elementwise logistic sigmoid, numerically stable for large |x|."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def uniform_init(rows: int, cols: int, lo: float, hi: float, rng: "SeededRng") -> np.ndarray:
    """I.i.d. uniform matrix on [lo, hi), reproducible from the stream."""
    if not lo < hi:
        raise ParameterError(f"uniform_init requires lo < hi, got [{lo}, {hi})")
    return rng.uniform(lo, hi, (rows, cols))


def finite_diff_grad(f: Callable[[np.ndarray], float], x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function, entry by entry.

    The workhorse oracle for checking hand-derived gradients; it never
    shares code with the analytic path it verifies.
    """
    if h <= 0:
        raise ParameterError(f"step size must be positive, got {h}")
    x = as_matrix(x)
    grad = np.empty_like(x)
    for i in range(x.shape[0]):
        for j in range(x.shape[1]):
            saved = x[i, j]
            x[i, j] = saved + h
            fp = float(f(x))
            x[i, j] = saved - h
            fm = float(f(x))
            x[i, j] = saved
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise NumericError(f"non-finite function value at entry ({i}, {j})")
            grad[i, j] = (fp - fm) / (2.0 * h)
    return grad


class SeededRng:
    """Deterministic random stream with named, independent sub-streams.

    Backed by numpy's PCG64; sub-streams are derived by extending the
    seed path with a CRC32 of the stream name, so the same master seed
    always yields the same family of streams on any platform.
    """

    generator_name = "pcg64"

    def __init__(self, seed: int, _path: tuple[int, ...] = ()):
        self.seed = int(seed) & (2**64 - 1)
        self._path = tuple(_path)
        seq = np.random.SeedSequence([self.seed, *self._path])
        self._gen = np.random.Generator(np.random.PCG64(seq))

    def substream(self, name: str) -> "SeededRng":
        return SeededRng(self.seed, self._path + (zlib.crc32(name.encode("utf-8")),))

    def uniform(self, lo: float, hi: float, shape=None):
        return self._gen.uniform(lo, hi, shape)

    def normal(self, mean: float, std: float, shape=None):
        return self._gen.normal(mean, std, shape)

    def integers(self, lo: int, hi: int, shape=None):
        return self._gen.integers(lo, hi, shape)

    def shuffled(self, items: list) -> list:
        order = self._gen.permutation(len(items))
        return [items[i] for i in order]

    def choice(self, items: list):
        return items[int(self._gen.integers(0, len(items)))]
