"""Per-class Gaussian modes updated recursively from a batch stream.

Each of the known classes is one Gaussian mode. A batch contributes to
every mode, weighted by the softmax classifier outputs: the cumulative
soft mass s(c) grows by the batch's class-c mass, the mean becomes the
mass-weighted blend of the old mean and the batch,

    s_k(c)   = s_{k-1}(c) + sum_i w[i,c]
    mu_k(c)  = (s_{k-1}(c) * mu_{k-1}(c) + sum_i w[i,c] * r_i) / s_k(c)
    Sig_k(c) = (s_{k-1}(c) * Sig_{k-1}(c)
                + sum_i w[i,c] * (r_i - mu_k(c))(r_i - mu_k(c))^T) / s_k(c)

and the covariance recursion centers the batch scatter on the *new* mean.
The recursion for the mean is exactly a cumulative weighted mean over all
samples ever seen; the covariance recursion is the method as defined, not
the pooled scatter (for a fresh mode the two coincide).

State size is independent of how many batches were processed: per mode one
mean vector, one packed covariance triangle, one scalar mass.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .errors import DimensionMismatch, NoInitializedMode, NonFiniteInput

SNAPSHOT_VERSION = 1


@dataclass
class ModeState:
    """One Gaussian mode: mean, packed covariance, cumulative soft mass.

    weight == 0 means the mode has never received mass; mean and cov are
    then all-zero placeholders and the mode is skipped everywhere.
    chol_cache holds the lower Cholesky factor of cov (with jitter) as of
    the most recent update that touched this mode.
    """

    mean: np.ndarray
    cov: linalg.SymMat
    weight: float = 0.0
    chol_cache: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def empty(cls, dim: int) -> "ModeState":
        return cls(mean=np.zeros(dim), cov=linalg.SymMat.zeros(dim), weight=0.0)

    @property
    def initialized(self) -> bool:
        return self.weight > 0.0

    def copy(self) -> "ModeState":
        chol = None if self.chol_cache is None else self.chol_cache.copy()
        return ModeState(self.mean.copy(), self.cov.copy(), self.weight, chol)


class GaussianMixtureStream:
    """Streaming weighted Gaussian mixture over a fixed set of known classes.

    The mode count never changes; new/unknown classes are never modes.
    Updates are sequential per run (the recursion is order-dependent across
    batches by design); instances are plain values that may be copied or
    moved between threads, but concurrent mutation is unsupported.
    """

    def __init__(self, n_classes: int, dim: int, jitter: float = 1e-6):
        if n_classes < 1:
            raise ValueError("need at least one class")
        if jitter < 0:
            raise ValueError("jitter must be nonnegative")
        self.n_classes = n_classes
        self.dim = dim
        self.jitter = float(jitter)
        self.batch_counter = 0
        self.modes = [ModeState.empty(dim) for _ in range(n_classes)]

    @classmethod
    def with_prior(
        cls,
        means: np.ndarray,
        covs: list[linalg.SymMat],
        weights: np.ndarray,
        jitter: float = 1e-6,
    ) -> "GaussianMixtureStream":
        """Start from prior parameters instead of empty modes.

        A prior mode with weight 0 stays uninitialized regardless of the
        supplied mean/covariance.
        """
        means = np.asarray(means, dtype=np.float64)
        weights = np.asarray(weights, dtype=np.float64)
        n_classes, dim = means.shape
        if len(covs) != n_classes or weights.shape != (n_classes,):
            raise DimensionMismatch("means, covs and weights must agree on the class count")
        if np.any(weights < 0):
            raise ValueError("prior weights must be nonnegative")
        state = cls(n_classes, dim, jitter)
        for c in range(n_classes):
            if weights[c] > 0:
                mode = state.modes[c]
                mode.mean = means[c].copy()
                mode.cov = covs[c].copy()
                mode.weight = float(weights[c])
                mode.chol_cache = linalg.cholesky(mode.cov, state.jitter)
        return state

    def copy(self) -> "GaussianMixtureStream":
        dup = GaussianMixtureStream(self.n_classes, self.dim, self.jitter)
        dup.batch_counter = self.batch_counter
        dup.modes = [m.copy() for m in self.modes]
        return dup

    def update(self, feats: np.ndarray, weights: np.ndarray) -> "GaussianMixtureStream":
        """Fold one batch into the mixture (one recursion step per class).

        feats: (n, dim) reduced features; weights: (n, n_classes) softmax
        outputs, rows summing to 1. Classes whose batch mass is zero are
        left untouched; for them the recursion is the identity anyway.
        """
        feats = np.asarray(feats, dtype=np.float64)
        weights = np.asarray(weights, dtype=np.float64)
        if feats.ndim != 2 or feats.shape[1] != self.dim:
            raise DimensionMismatch(f"feats shape {feats.shape}, expected (n, {self.dim})")
        if weights.shape != (feats.shape[0], self.n_classes):
            raise DimensionMismatch(
                f"weights shape {weights.shape}, expected ({feats.shape[0]}, {self.n_classes})"
            )
        if feats.shape[0] < 1:
            raise DimensionMismatch("batch must contain at least one sample")
        if not np.all(np.isfinite(feats)) or not np.all(np.isfinite(weights)):
            raise NonFiniteInput("batch contains non-finite values")
        row_sums = weights.sum(axis=1)
        if np.any(np.abs(row_sums - 1.0) > 1e-6) or np.any(weights < -1e-12):
            raise ValueError("weight rows must be nonnegative and sum to 1")

        # Reduce samples in a canonical order so that shuffling a batch
        # yields bit-identical parameters (summation order is fixed).
        order = np.lexsort(np.vstack([feats.T, weights.T]))
        feats = feats[order]
        weights = weights[order]

        batch_mass = weights.sum(axis=0)
        weighted_sums = weights.T @ feats
        for c in range(self.n_classes):
            m_c = batch_mass[c]
            if m_c <= 0.0:
                continue
            mode = self.modes[c]
            s_prev = mode.weight
            s_new = s_prev + m_c
            new_mean = (s_prev * mode.mean + weighted_sums[c]) / s_new
            scatter = linalg.weighted_scatter(feats, weights[:, c], new_mean)
            new_cov = linalg.SymMat(self.dim, (s_prev * mode.cov.packed + scatter.packed) / s_new)
            mode.mean = new_mean
            mode.cov = new_cov
            mode.weight = s_new
            mode.chol_cache = linalg.cholesky(new_cov, self.jitter)
        self.batch_counter += 1
        return self

    def class_log_likelihoods(self, feat: np.ndarray) -> np.ndarray:
        """log p(feat | c) per class; -inf for modes that never received mass."""
        return self.class_log_likelihoods_batch(np.asarray(feat, dtype=np.float64)[None, :])[0]

    def class_log_likelihoods_batch(self, feats: np.ndarray) -> np.ndarray:
        """Row-wise class log-densities, shape (n, n_classes)."""
        feats = np.asarray(feats, dtype=np.float64)
        if feats.ndim != 2 or feats.shape[1] != self.dim:
            raise DimensionMismatch(f"feats shape {feats.shape}, expected (n, {self.dim})")
        if not any(m.initialized for m in self.modes):
            raise NoInitializedMode("no mode has received mass yet")
        out = np.full((feats.shape[0], self.n_classes), -np.inf)
        for c, mode in enumerate(self.modes):
            if not mode.initialized:
                continue
            if mode.chol_cache is None:
                mode.chol_cache = linalg.cholesky(mode.cov, self.jitter)
            out[:, c] = linalg.log_gauss_density_batch(feats, mode.mean, mode.chol_cache)
        return out

    def likelihood_vectors(self, feats: np.ndarray) -> np.ndarray:
        """Normalized per-class likelihoods via log-sum-exp, rows sum to 1.

        Uninitialized modes are excluded from the normalization and get
        probability 0 (a -inf log-density contributes nothing).
        """
        logp = self.class_log_likelihoods_batch(feats)
        shift = np.max(logp, axis=1, keepdims=True)
        expd = np.exp(logp - shift)
        return expd / expd.sum(axis=1, keepdims=True)

    def prototypes(self) -> tuple[np.ndarray, np.ndarray]:
        """(class indices, means) of all initialized modes."""
        idx = np.array([c for c, m in enumerate(self.modes) if m.initialized], dtype=int)
        if idx.size == 0:
            return idx, np.zeros((0, self.dim))
        return idx, np.stack([self.modes[c].mean for c in idx])

    def memory_footprint(self) -> int:
        """Stored reals: (dim + dim(dim+1)/2 + 1) per class, batch-count free."""
        return (self.dim + linalg.packed_size(self.dim) + 1) * self.n_classes

    # -- snapshot serialization ------------------------------------------
    # JSON object, field order fixed: format_version, n_classes, dim,
    # jitter, batch_counter, modes. Each mode: weight, mean, cov_packed.
    # Cholesky caches are rebuilt lazily after load, not stored.

    def to_snapshot(self) -> str:
        doc = {
            "format_version": SNAPSHOT_VERSION,
            "n_classes": self.n_classes,
            "dim": self.dim,
            "jitter": self.jitter,
            "batch_counter": self.batch_counter,
            "modes": [
                {
                    "weight": m.weight,
                    "mean": m.mean.tolist(),
                    "cov_packed": m.cov.packed.tolist(),
                }
                for m in self.modes
            ],
        }
        return json.dumps(doc)

    @classmethod
    def from_snapshot(cls, blob: str) -> "GaussianMixtureStream":
        doc = json.loads(blob)
        if doc.get("format_version") != SNAPSHOT_VERSION:
            raise ValueError(f"unsupported snapshot version {doc.get('format_version')!r}")
        state = cls(doc["n_classes"], doc["dim"], doc["jitter"])
        state.batch_counter = doc["batch_counter"]
        for mode, entry in zip(state.modes, doc["modes"]):
            mode.weight = float(entry["weight"])
            mode.mean = np.asarray(entry["mean"], dtype=np.float64)
            mode.cov = linalg.SymMat(doc["dim"], np.asarray(entry["cov_packed"], dtype=np.float64))
        return state
