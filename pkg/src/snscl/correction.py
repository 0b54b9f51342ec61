"""Weighted soft-label correction with an exponential moving average."""

from __future__ import annotations

import numpy as np

NORM_ATOL = 1e-6


def _check_rows(p: np.ndarray, what: str) -> None:
    if np.any(p < -NORM_ATOL) or not np.allclose(p.sum(axis=-1), 1.0, atol=NORM_ATOL, rtol=0):
        raise ValueError(f"{what} must be normalized probability vectors")


def one_hot(labels, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels)
    out = np.zeros(labels.shape + (num_classes,))
    np.put_along_axis(out, labels[..., None], 1.0, axis=-1)
    return out


def weighted_correct(omega, y, y_pred) -> np.ndarray:
    """Blend the given label with the model prediction: (1 - w) * y_pred + w * y.

    Works on single vectors or (n, C) batches with a per-row weight.
    """
    y = np.asarray(y, dtype=np.float64)
    y_pred = np.asarray(y_pred, dtype=np.float64)
    _check_rows(y, "y")
    _check_rows(y_pred, "y_pred")
    w = np.asarray(omega, dtype=np.float64)
    if np.any((w < 0) | (w > 1)):
        raise ValueError("omega must lie in [0, 1]")
    if y.ndim == 2:
        w = w.reshape(-1, 1)
    return (1.0 - w) * y_pred + w * y


def moving_average_update(prev, new, alpha: float = 0.99) -> np.ndarray:
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    out = alpha * np.asarray(prev, dtype=np.float64) + (1.0 - alpha) * np.asarray(new, dtype=np.float64)
    return out / out.sum(axis=-1, keepdims=True)


def hard_label(y_soft) -> np.ndarray | int:
    """argmax with ties going to the lowest index (numpy's argmax already does this)."""
    y_soft = np.asarray(y_soft)
    out = np.argmax(y_soft, axis=-1)
    return int(out) if out.ndim == 0 else out


class LabelCorrector:
    """Per-sample moving-average state of corrected soft labels.

    A sample's state starts as its one-hot noisy label.  The first time its
    weight drops below 1, the state is seeded with that epoch's corrected
    label; afterwards each epoch with weight < 1 folds the new correction in
    with coefficient ``alpha``.  Epochs with weight exactly 1 leave the state
    untouched.
    """

    def __init__(self, noisy_labels, num_classes: int, alpha: float = 0.99, seed_with_first: bool = True):
        self.noisy_onehot = one_hot(noisy_labels, num_classes)
        self.labels = self.noisy_onehot.copy()
        self.alpha = alpha
        self.seed_with_first = seed_with_first
        self._touched = np.zeros(len(self.labels), dtype=bool)

    def update(self, omega: np.ndarray, predictions: np.ndarray) -> np.ndarray:
        omega = np.asarray(omega, dtype=np.float64)
        active = omega != 1.0
        if not np.any(active):
            return self.labels
        corrected = weighted_correct(omega[active], self.noisy_onehot[active], predictions[active])
        prev = self.labels[active]
        if self.seed_with_first:
            fresh = ~self._touched[active]
            prev[fresh] = corrected[fresh]
        self.labels[active] = moving_average_update(prev, corrected, self.alpha)
        self._touched |= active
        return self.labels

    def hard(self) -> np.ndarray:
        return hard_label(self.labels)
