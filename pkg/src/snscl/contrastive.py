"""Contrastive objectives: queue-based noise-tolerant loss, InfoNCE, batch SCL.

Similarities are dot products of unit-norm vectors divided by the
temperature.  Keys are constants; gradients reach only the anchors.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


def _check_tau(tau: float) -> None:
    if not tau > 0:
        raise ValueError("temperature must be positive")


def ntcl_loss(
    anchors: Tensor,
    hard_labels,
    keys: np.ndarray,
    key_labels: np.ndarray,
    tau: float = 0.07,
    reduction: str = "mean",
) -> Tensor:
    """Noise-tolerant supervised contrastive loss against a queue snapshot.

    For anchor q with hard label h, the P stored keys of class h are the
    positives and every other stored key a negative::

        L(q) = -(1/P) * sum_{pos d} log( exp(q.k_d/tau) / sum_{all j} exp(q.k_j/tau) )

    Anchors whose class has no stored key contribute zero.  ``"mean"``
    divides the summed loss by the number of anchors (skipped ones
    included), ``"sum"`` returns the sum, ``"none"`` the per-anchor vector.
    """
    _check_tau(tau)
    anchors = ad.as_tensor(anchors)
    if anchors.data.ndim == 1:
        anchors = ad.index(anchors, (None, slice(None)))
    hard_labels = np.atleast_1d(np.asarray(hard_labels))
    keys = np.asarray(keys, dtype=np.float64).reshape(-1, anchors.shape[1])
    key_labels = np.asarray(key_labels)
    B = anchors.shape[0]

    pos = (key_labels[None, :] == hard_labels[:, None]).astype(np.float64)  # (B, N)
    n_pos = pos.sum(axis=1)
    valid = n_pos > 0
    if len(keys) == 0 or not np.any(valid):
        zero = ad.mul(ad.sum(anchors), 0.0)
        return zero if reduction != "none" else ad.mul(ad.sum(anchors, axis=1), 0.0)

    sims = ad.scale(ad.matmul(anchors, keys.T), 1.0 / tau)  # (B, N)
    lse = ad.logsumexp(sims, axis=1)  # (B,)
    pos_weights = pos / np.where(valid, n_pos, 1.0)[:, None]
    pos_mean = ad.sum(ad.mul(sims, pos_weights), axis=1)
    per_anchor = ad.mul(ad.add(lse, ad.neg(pos_mean)), valid.astype(np.float64))
    if reduction == "none":
        return per_anchor
    total = ad.sum(per_anchor)
    if reduction == "sum":
        return total
    return ad.scale(total, 1.0 / B)


def infonce_loss(q: Tensor, q_hat, negatives, tau: float = 0.07) -> Tensor:
    """-log( exp(q.q^/tau) / (exp(q.q^/tau) + sum_d exp(q.k_d/tau)) ) for a single anchor."""
    _check_tau(tau)
    q = ad.as_tensor(q)
    q_hat = np.asarray(q_hat.data if isinstance(q_hat, Tensor) else q_hat, dtype=np.float64)
    negatives = np.asarray(negatives, dtype=np.float64).reshape(-1, q.shape[-1])
    keys = np.vstack([q_hat[None, :], negatives])
    sims = ad.scale(ad.matmul(ad.index(q, (None, slice(None))), keys.T), 1.0 / tau)
    lse = ad.logsumexp(sims, axis=1)
    return ad.sum(ad.add(lse, ad.neg(ad.index(sims, (slice(None), 0)))))


def scl_batch_loss(embeddings: Tensor, labels, tau: float = 0.07) -> Tensor:
    """In-batch supervised contrastive loss.

    Each anchor uses its same-label batch mates as positives and the rest as
    negatives, with the log taken of the summed positive mass::

        L(q) = -log( sum_pos exp(q.k/tau) / (sum_pos exp(q.k/tau) + sum_neg exp(q.k/tau)) )

    The anchor itself is excluded.  Anchors without a positive contribute
    zero; the result averages over anchors that have one.
    """
    _check_tau(tau)
    embeddings = ad.as_tensor(embeddings)
    labels = np.asarray(labels)
    B = embeddings.shape[0]
    if B < 2:
        raise ValueError("batch needs at least two samples")
    same = labels[:, None] == labels[None, :]
    not_self = ~np.eye(B, dtype=bool)
    pos = same & not_self
    has_pos = pos.any(axis=1)
    if not np.any(has_pos):
        return ad.mul(ad.sum(embeddings), 0.0)

    # keys are constants; only the anchor side carries gradient
    sims = ad.scale(ad.matmul(embeddings, embeddings.data.T.copy()), 1.0 / tau)
    big_neg = -1e30
    all_mask = np.where(not_self, 0.0, big_neg)
    pos_mask = np.where(pos, 0.0, big_neg)
    # rows without positives are replaced by a harmless finite row before the logsumexp
    pos_mask[~has_pos] = 0.0
    lse_all = ad.logsumexp(ad.add(sims, all_mask), axis=1)
    lse_pos = ad.logsumexp(ad.add(sims, pos_mask), axis=1)
    per_anchor = ad.mul(ad.add(lse_all, ad.neg(lse_pos)), has_pos.astype(np.float64))
    return ad.scale(ad.sum(per_anchor), 1.0 / has_pos.sum())
