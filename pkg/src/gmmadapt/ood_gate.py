"""Entropy-based out-of-distribution gating with self-calibrating thresholds.

Confidence of a sample belonging to the known-class mixture is scored by
the normalized Shannon entropy of its per-class likelihood vector, which
lands in [0, 1]: 0 at a one-hot vector, 1 at the uniform one. Two
thresholds split samples three ways: confidently known (entropy <= tau_k,
pseudo-labeled with the argmax class), confidently out-of-distribution
(entropy >= tau_u, pseudo-labeled unknown), and uncertain (discarded from
adaptation). The thresholds calibrate themselves over the first n_init
batches from per-batch order statistics and freeze afterwards.

Label coding used throughout the package: known classes are 0..C-1, the
unknown class is C, and DISCARDED (-1) marks samples excluded from
adaptation.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AlreadyFrozen, BatchTooSmall, Uncalibrated

DISCARDED = -1

# Minimum threshold separation enforced when a degenerate batch would
# collapse tau_k and tau_u onto the same value.
EPS_SEPARATION = 1e-6


def normalized_entropy(p: np.ndarray) -> float:
    """Shannon entropy of a probability vector, normalized to [0, 1].

    Computed as 1 - KL(p || uniform)/log(C) rather than -sum(p log p)/log(C):
    the forms are identical mathematically, but the KL form makes the
    uniform vector land on exactly 1.0 in floating point (p*C rounds to 1,
    log(1) == 0) while one-hot lands on exactly 0.0 in both. A single-class
    vector returns 0.0 by convention.
    """
    p = np.asarray(p, dtype=np.float64)
    n = p.shape[-1]
    if n == 1:
        return 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0.0, p * np.log(p * n), 0.0)
    kl = float(np.sum(terms))
    return float(np.clip(1.0 - kl / np.log(n), 0.0, 1.0))


def normalized_entropy_rows(p: np.ndarray) -> np.ndarray:
    """normalized_entropy applied to each row of a (n, C) matrix."""
    p = np.asarray(p, dtype=np.float64)
    n = p.shape[1]
    if n == 1:
        return np.zeros(p.shape[0])
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0.0, p * np.log(p * n), 0.0)
    kl = np.sum(terms, axis=1)
    return np.clip(1.0 - kl / np.log(n), 0.0, 1.0)


@dataclass
class ThresholdState:
    """Dual entropy thresholds and their running calibration accumulators.

    During the calibration window tau_k/tau_u are running averages of the
    m-th smallest / m-th largest batch entropies, applied immediately
    (adaptation is active from batch 1). After n_init batches they freeze
    for the rest of the run. p_reject is the percentage of each batch left
    *without* a pseudo-label: the quantile rule keeps the bottom and top
    (100 - p_reject)/2 percent.
    """

    n_init: int
    p_reject: float
    tau_k: float = 0.0
    tau_u: float = 0.0
    sum_low: float = 0.0
    sum_high: float = 0.0
    batches_seen: int = 0

    def __post_init__(self):
        if self.n_init < 1:
            raise ValueError("n_init must be positive")
        if not 0.0 < self.p_reject < 100.0:
            raise ValueError("p_reject must lie in (0, 100)")

    @property
    def frozen(self) -> bool:
        return self.batches_seen >= self.n_init

    @property
    def tau(self) -> float:
        """Single inference threshold: midpoint of the dual thresholds."""
        return 0.5 * (self.tau_k + self.tau_u)

    def calibrate(self, entropies: np.ndarray) -> "ThresholdState":
        """Fold one batch of entropy values into the threshold averages.

        The cut rank is m = max(1, round(N_b * (100 - p_reject)/200)), a
        nearest-rank quantile (round half away from zero). Degenerate
        batches where both running averages coincide are repaired by a
        symmetric eps offset so tau_k < tau_u always holds.
        """
        if self.frozen:
            raise AlreadyFrozen(f"calibration window closed after {self.n_init} batches")
        entropies = np.asarray(entropies, dtype=np.float64)
        n = entropies.shape[0]
        if n < 4:
            raise BatchTooSmall(f"need at least 4 samples to calibrate, got {n}")
        m = max(1, int(np.floor(n * (100.0 - self.p_reject) / 200.0 + 0.5)))
        ordered = np.sort(entropies)
        low = float(ordered[m - 1])
        high = float(ordered[n - m])
        self.sum_low += low
        self.sum_high += high
        self.batches_seen += 1
        self.tau_k = self.sum_low / self.batches_seen
        self.tau_u = self.sum_high / self.batches_seen
        if self.tau_k >= self.tau_u:
            mid = 0.5 * (self.tau_k + self.tau_u)
            self.tau_k = mid - EPS_SEPARATION
            self.tau_u = mid + EPS_SEPARATION
        return self

    def _require_calibrated(self):
        if self.batches_seen < 1:
            raise Uncalibrated("thresholds have not seen any calibration batch")

    def pseudo_label(self, p: np.ndarray) -> int:
        """Three-way pseudo-label for one likelihood vector.

        Returns the argmax class (ties to the lowest index) when the
        entropy is at most tau_k, the unknown class C when it is at least
        tau_u, and DISCARDED in between.
        """
        self._require_calibrated()
        p = np.asarray(p, dtype=np.float64)
        ent = normalized_entropy(p)
        if ent <= self.tau_k:
            return int(np.argmax(p))
        if ent >= self.tau_u:
            return p.shape[-1]
        return DISCARDED

    def pseudo_label_batch(self, p: np.ndarray, entropies: np.ndarray | None = None) -> np.ndarray:
        """Vectorized pseudo_label over rows of p; precomputed entropies optional."""
        self._require_calibrated()
        p = np.asarray(p, dtype=np.float64)
        if entropies is None:
            entropies = normalized_entropy_rows(p)
        labels = np.full(p.shape[0], DISCARDED, dtype=int)
        known = entropies <= self.tau_k
        unknown = entropies >= self.tau_u
        labels[known] = np.argmax(p[known], axis=1)
        labels[unknown] = p.shape[1]
        return labels

    def predict(self, softmax_out: np.ndarray, p: np.ndarray) -> int:
        """Inference rule: classifier argmax gated by the mixture entropy.

        The class decision uses the model softmax, the gate uses the
        mixture likelihood entropy against tau = (tau_k + tau_u)/2; the
        boundary entropy == tau routes to the known branch.
        """
        self._require_calibrated()
        ent = normalized_entropy(np.asarray(p, dtype=np.float64))
        if ent <= self.tau:
            return int(np.argmax(softmax_out))
        return np.asarray(p).shape[-1]

    def predict_batch(
        self,
        softmax_outs: np.ndarray,
        p: np.ndarray,
        entropies: np.ndarray | None = None,
    ) -> np.ndarray:
        """Vectorized predict over aligned rows of softmax_outs and p."""
        self._require_calibrated()
        p = np.asarray(p, dtype=np.float64)
        softmax_outs = np.asarray(softmax_outs, dtype=np.float64)
        if entropies is None:
            entropies = normalized_entropy_rows(p)
        preds = np.full(p.shape[0], p.shape[1], dtype=int)
        known = entropies <= self.tau
        preds[known] = np.argmax(softmax_outs[known], axis=1)
        return preds
