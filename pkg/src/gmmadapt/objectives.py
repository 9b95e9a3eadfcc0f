"""Adaptation losses with exact analytic gradients.

Contrastive term, over the doubled batch (originals + augmented views):
pseudo-known samples of the same class attract each other and their class
prototype (the current mixture mean); everything else in the batch acts as
a negative through the softmax denominators. Similarities are cosine, so
the loss is invariant to rescaling any feature or prototype. Unknown
samples are negatives only by default (a toggle admits unknown-unknown
positive pairs for ablation); discarded samples are excluded from every
term, numerators and denominators alike. Prototypes are constants: no
gradient flows into the mixture.

KL term, over the original half only: for pseudo-known samples the
divergence KL(uniform || softmax) is maximized (sharpens the prediction),
for pseudo-unknown samples it is minimized (flattens it); discarded
samples contribute nothing.

Label coding matches ood_gate: 0..C-1 known, C unknown, -1 discarded.
"""
from __future__ import annotations

import numpy as np
from scipy.special import logsumexp

from .errors import DimensionMismatch
from .ood_gate import DISCARDED

PROB_FLOOR = 1e-12


def _normalize_rows(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Unit-norm rows; zero-norm rows stay zero (similarity 0 to everything)."""
    norms = np.linalg.norm(a, axis=1)
    safe = np.where(norms > 0.0, norms, 1.0)
    return a / safe[:, None], norms


def contrastive_loss(
    reduced_feats: np.ndarray,
    pseudo_labels: np.ndarray,
    prototypes: np.ndarray,
    n_classes: int,
    temperature: float,
    unknown_positive_pairs: bool = False,
) -> tuple[float, np.ndarray]:
    """Prototype-anchored supervised contrastive loss and feature gradient.

    reduced_feats: (2n, fd_r) raw reduced features, originals followed by
    augmented views. pseudo_labels: (2n,) codes, the augmented half
    inheriting its origin's label. prototypes: (n_classes, fd_r) mixture
    means (rows of classes absent from the labels are never read).

    Returns the loss averaged over contributing numerator terms and its
    gradient w.r.t. the raw reduced features. No known sample (and no
    positive pair) means loss 0 with zero gradient.
    """
    feats = np.asarray(reduced_feats, dtype=np.float64)
    labels = np.asarray(pseudo_labels, dtype=int)
    protos = np.asarray(prototypes, dtype=np.float64)
    if feats.ndim != 2 or labels.shape != (feats.shape[0],):
        raise DimensionMismatch("features and pseudo-labels are misaligned")
    if protos.shape != (n_classes, feats.shape[1]):
        raise DimensionMismatch("prototype matrix has the wrong shape")
    if temperature <= 0:
        raise ValueError("temperature must be positive")

    n2 = feats.shape[0]
    tau = float(temperature)
    participant = labels != DISCARDED
    known = (labels >= 0) & (labels < n_classes)

    # Positive-pair mask: same known class, optionally unknown-unknown.
    eligible = known | (labels == n_classes) if unknown_positive_pairs else known
    same = labels[:, None] == labels[None, :]
    pos = same & eligible[:, None] & eligible[None, :]
    np.fill_diagonal(pos, False)

    n_pos_pairs = int(pos.sum())
    n_known = int(known.sum())
    n_terms = n_pos_pairs + n_known
    grad = np.zeros_like(feats)
    if n_terms == 0:
        return 0.0, grad

    z, norms = _normalize_rows(feats)
    sims = (z @ z.T) / tau  # (2n, 2n), entry [l, i] pairs sample l with anchor i

    # Sample-sample term: anchor i, denominator over participants l != i.
    denom_mask = participant[:, None] & participant[None, :]
    np.fill_diagonal(denom_mask, False)
    masked = np.where(denom_mask, sims, -np.inf)
    log_denom = logsumexp(masked, axis=0)  # per anchor column i
    pos_per_anchor = pos.sum(axis=0).astype(np.float64)  # n_i
    active = pos_per_anchor > 0
    term1 = float(-(sims * pos).sum() + (pos_per_anchor[active] * log_denom[active]).sum())

    with np.errstate(invalid="ignore"):
        softw = np.where(denom_mask, np.exp(sims - log_denom[None, :]), 0.0)
    coeff = (softw * pos_per_anchor[None, :] - pos) / tau  # A[l, i]
    grad_z = coeff @ z + coeff.T @ z

    # Prototype term: anchor is the class mean, denominator over all
    # participating samples (self included).
    q, _ = _normalize_rows(protos)
    present = np.bincount(labels[known], minlength=n_classes).astype(np.float64)
    classes = np.flatnonzero(present)
    term2 = 0.0
    if classes.size > 0:
        proto_sims = (q[classes] @ z.T) / tau  # (n_present, 2n)
        masked_p = np.where(participant[None, :], proto_sims, -np.inf)
        log_denom_p = logsumexp(masked_p, axis=1)
        counts = present[classes]
        numerator = proto_sims[np.searchsorted(classes, labels[known]), np.flatnonzero(known)]
        term2 = float(-numerator.sum() + (counts * log_denom_p).sum())

        softp = np.where(participant[None, :], np.exp(proto_sims - log_denom_p[:, None]), 0.0)
        grad_z += ((softp * counts[:, None]).T @ q[classes]) / tau
        grad_z[known] -= q[labels[known]] / tau

    loss = (term1 + term2) / n_terms
    grad_z /= n_terms

    # Chain through the row normalization z = r / ||r||.
    inner = np.sum(grad_z * z, axis=1, keepdims=True)
    nonzero = norms > 0.0
    grad[nonzero] = (grad_z[nonzero] - inner[nonzero] * z[nonzero]) / norms[nonzero, None]
    return loss, grad


def kld_loss(
    softmax_outs: np.ndarray,
    pseudo_labels: np.ndarray,
    n_classes: int,
) -> tuple[float, np.ndarray]:
    """Signed KL-to-uniform loss and its gradient w.r.t. the logits.

    Per sample d = KL(u || q) with probabilities floored at 1e-12 inside
    the log; pseudo-known samples contribute -d, pseudo-unknown +d,
    discarded 0. The gradient accounts for the floor, so it matches finite
    differences even in clipped regimes.
    """
    probs = np.asarray(softmax_outs, dtype=np.float64)
    labels = np.asarray(pseudo_labels, dtype=int)
    if probs.ndim != 2 or probs.shape != (labels.shape[0], n_classes):
        raise DimensionMismatch("softmax matrix and pseudo-labels are misaligned")

    sign = np.zeros(labels.shape[0])
    sign[labels == n_classes] = 1.0
    sign[(labels >= 0) & (labels < n_classes)] = -1.0

    u = 1.0 / n_classes
    unclipped = probs > PROB_FLOOR
    logq = np.log(np.clip(probs, PROB_FLOOR, None))
    kl_per_sample = -u * logq.sum(axis=1) - np.log(n_classes)  # + sum(u log u)
    loss = float(sign @ kl_per_sample)

    # d KL/d logit_j = -u*1[q_j above floor] + q_j * sum_c u*1[q_c above floor]
    active_mass = u * unclipped.sum(axis=1, keepdims=True)
    d_logits = sign[:, None] * (-u * unclipped + probs * active_mass)
    return loss, d_logits


def combined_loss(loss_c: float, loss_kld: float, lam: float) -> float:
    """Total adaptation loss L_C + lambda * L_KLD.

    Gradients combine with the same weights: the contrastive feature
    gradient enters the backward pass unscaled, the KL logit gradient
    scaled by lambda.
    """
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    return loss_c + lam * loss_kld
