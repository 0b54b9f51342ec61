"""Plug-in classification losses: cross-entropy, label smoothing, generalized CE."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

LOSS_KINDS = ("ce", "ls", "gce")


def cross_entropy(logits: Tensor, targets: np.ndarray) -> Tensor:
    return ad.softmax_cross_entropy(logits, targets)[0]


def label_smoothing(logits: Tensor, targets: np.ndarray, epsilon: float = 0.1) -> Tensor:
    C = logits.shape[1]
    smoothed = (1.0 - epsilon) * np.asarray(targets) + epsilon / C
    return ad.softmax_cross_entropy(logits, smoothed)[0]


def generalized_ce(logits: Tensor, targets: np.ndarray, q: float = 0.7) -> Tensor:
    """Mean of (1 - p_h^q) / q where h is the argmax of each target row."""
    if not 0 < q <= 1:
        raise ValueError("gce exponent q must lie in (0, 1]")
    targets = np.asarray(targets)
    hard = np.zeros_like(targets)
    hard[np.arange(len(targets)), np.argmax(targets, axis=1)] = 1.0
    logp = ad.add(logits, ad.neg(ad.index(ad.logsumexp(logits, axis=1), (slice(None), None))))
    logp_h = ad.sum(ad.mul(logp, hard), axis=1)
    p_q = ad.exp(ad.scale(logp_h, q))
    return ad.scale(ad.mean(ad.add(ad.neg(p_q), 1.0)), 1.0 / q)


def classification_loss(kind: str, logits: Tensor, targets: np.ndarray, epsilon: float = 0.1, q: float = 0.7) -> Tensor:
    if kind == "ce":
        return cross_entropy(logits, targets)
    if kind == "ls":
        return label_smoothing(logits, targets, epsilon)
    if kind == "gce":
        return generalized_ce(logits, targets, q)
    raise ValueError(f"unknown classification loss {kind!r}; expected one of {LOSS_KINDS}")
