"""Dense linear algebra for the streaming mixture.

Symmetric matrices are kept in packed lower-triangular storage (row-major)
so that the stored-value count matches the memory model exactly. Gaussian
log-densities go through Cholesky factors and triangular solves; the
inverse covariance is never materialized.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DimensionMismatch, NonFiniteInput, NotPositiveDefinite

LOG_2PI = float(np.log(2.0 * np.pi))


def packed_size(dim: int) -> int:
    """Number of stored entries for a dim x dim symmetric matrix."""
    return dim * (dim + 1) // 2


@dataclass
class SymMat:
    """Symmetric matrix stored as its lower triangle, row-major.

    Entry (i, j) with j <= i lives at offset i*(i+1)/2 + j. Symmetry is
    structural: only the triangle exists, so it cannot be violated.
    """

    dim: int
    packed: np.ndarray

    def __post_init__(self):
        self.packed = np.asarray(self.packed, dtype=np.float64)
        if self.packed.shape != (packed_size(self.dim),):
            raise DimensionMismatch(
                f"packed storage for dim {self.dim} needs {packed_size(self.dim)} "
                f"entries, got shape {self.packed.shape}"
            )

    @classmethod
    def zeros(cls, dim: int) -> "SymMat":
        return cls(dim, np.zeros(packed_size(dim)))

    @classmethod
    def identity(cls, dim: int) -> "SymMat":
        m = cls.zeros(dim)
        m.packed[np.arange(dim) * (np.arange(dim) + 3) // 2] = 1.0
        return m

    @classmethod
    def from_dense(cls, a: np.ndarray) -> "SymMat":
        a = np.asarray(a, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DimensionMismatch(f"expected a square matrix, got shape {a.shape}")
        dim = a.shape[0]
        rows, cols = np.tril_indices(dim)
        return cls(dim, a[rows, cols].copy())

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.dim, self.dim))
        rows, cols = np.tril_indices(self.dim)
        out[rows, cols] = self.packed
        out[cols, rows] = self.packed
        return out

    def copy(self) -> "SymMat":
        return SymMat(self.dim, self.packed.copy())

    def scaled(self, factor: float) -> "SymMat":
        return SymMat(self.dim, self.packed * factor)


def weighted_outer_accumulate(acc: SymMat, d: np.ndarray, w: float) -> SymMat:
    """Return acc + w * d d^T in packed form."""
    d = np.asarray(d, dtype=np.float64)
    if d.shape != (acc.dim,):
        raise DimensionMismatch(f"vector shape {d.shape} vs matrix dim {acc.dim}")
    rows, cols = np.tril_indices(acc.dim)
    return SymMat(acc.dim, acc.packed + w * d[rows] * d[cols])


def weighted_scatter(feats: np.ndarray, weights: np.ndarray, center: np.ndarray) -> SymMat:
    """Packed sum_i weights[i] * (feats[i]-center)(feats[i]-center)^T."""
    diff = feats - center
    dense = (diff.T * weights) @ diff
    return SymMat.from_dense(dense)


def cholesky(m: SymMat, jitter: float = 0.0, max_retries: int = 8) -> np.ndarray:
    """Lower Cholesky factor L with L L^T = m + jitter * I.

    If factorization fails the jitter escalates (starting at 1e-6 when the
    given jitter is zero, doubling each retry, up to ``max_retries`` times)
    before NotPositiveDefinite is raised. Small effective sample counts make
    near-singular covariances routine, so the ladder is load-bearing.
    """
    if jitter < 0:
        raise ValueError(f"jitter must be nonnegative, got {jitter}")
    dense = m.to_dense()
    if not np.all(np.isfinite(dense)):
        raise NonFiniteInput("matrix contains non-finite entries")
    current = float(jitter)
    for attempt in range(max_retries + 1):
        try:
            target = dense if current == 0.0 else dense + current * np.eye(m.dim)
            return np.linalg.cholesky(target)
        except np.linalg.LinAlgError:
            if attempt == max_retries:
                break
            current = 1e-6 if current == 0.0 else 2.0 * current
    raise NotPositiveDefinite(
        f"factorization failed after {max_retries} jitter retries (last jitter {current:g})"
    )


def log_gauss_density(x: np.ndarray, mean: np.ndarray, chol: np.ndarray) -> float:
    """log N(x; mean, Sigma) where chol is the lower Cholesky factor of Sigma."""
    x = np.asarray(x, dtype=np.float64)
    mean = np.asarray(mean, dtype=np.float64)
    dim = chol.shape[0]
    if x.shape != (dim,) or mean.shape != (dim,):
        raise DimensionMismatch(
            f"x {x.shape}, mean {mean.shape} incompatible with factor dim {dim}"
        )
    y = solve_triangular(chol, x - mean, lower=True)
    log_det = 2.0 * float(np.sum(np.log(np.diag(chol))))
    return -0.5 * (dim * LOG_2PI + log_det + float(y @ y))


def log_gauss_density_batch(xs: np.ndarray, mean: np.ndarray, chol: np.ndarray) -> np.ndarray:
    """Row-wise log N(x; mean, Sigma) for xs of shape (n, dim)."""
    xs = np.asarray(xs, dtype=np.float64)
    dim = chol.shape[0]
    if xs.ndim != 2 or xs.shape[1] != dim:
        raise DimensionMismatch(f"xs shape {xs.shape} incompatible with factor dim {dim}")
    ys = solve_triangular(chol, (xs - mean).T, lower=True)
    log_det = 2.0 * float(np.sum(np.log(np.diag(chol))))
    return -0.5 * (dim * LOG_2PI + log_det + np.sum(ys * ys, axis=0))
