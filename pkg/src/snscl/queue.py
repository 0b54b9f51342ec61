"""Class-partitioned FIFO embedding queue with weight-gated insertion."""

from __future__ import annotations

import numpy as np

UNIT_NORM_ATOL = 1e-6


class MomentumQueue:
    """C ring buffers of capacity D holding unit-norm embeddings.

    Stored vectors are plain arrays (constants for the autodiff graph).
    """

    def __init__(self, num_classes: int, capacity: int = 32, dim: int = 32):
        if num_classes < 2:
            raise ValueError("need at least two classes")
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.num_classes = num_classes
        self.capacity = capacity
        self.dim = dim
        self._buf = np.zeros((num_classes, capacity, dim))
        self._head = np.zeros(num_classes, dtype=np.int64)  # next write slot
        self._count = np.zeros(num_classes, dtype=np.int64)

    @property
    def total_capacity(self) -> int:
        return self.num_classes * self.capacity

    def occupancy(self) -> np.ndarray:
        return self._count.copy()

    def __len__(self) -> int:
        return int(self._count.sum())

    def _check_class(self, c: int) -> None:
        if not 0 <= c < self.num_classes:
            raise IndexError(f"class {c} out of range [0, {self.num_classes})")

    def push(self, c: int, embedding) -> None:
        """Unconditional FIFO insert into ring ``c``, evicting the oldest when full."""
        self._check_class(c)
        e = np.asarray(embedding, dtype=np.float64)
        if e.shape != (self.dim,):
            raise ValueError(f"embedding must have shape ({self.dim},)")
        norm = np.linalg.norm(e)
        if norm > 0 and abs(norm - 1.0) > UNIT_NORM_ATOL:
            e = e / norm
        h = self._head[c]
        self._buf[c, h] = e
        self._head[c] = (h + 1) % self.capacity
        self._count[c] = min(self._count[c] + 1, self.capacity)

    def weighted_update(self, c: int, embedding, omega: float, rng: np.random.Generator) -> bool:
        """Insert with probability ``omega``; omega == 1 inserts without drawing."""
        self._check_class(c)
        if not 0.0 <= omega <= 1.0:
            raise ValueError("omega must lie in [0, 1]")
        if omega < 1.0 and not rng.random() < omega:
            return False
        self.push(c, embedding)
        return True

    def positives(self, c: int) -> np.ndarray:
        """Ring ``c`` contents, oldest first."""
        self._check_class(c)
        n = self._count[c]
        if n < self.capacity:
            return self._buf[c, :n].copy()
        h = self._head[c]
        return np.concatenate([self._buf[c, h:], self._buf[c, :h]])

    def negatives(self, c: int) -> tuple[np.ndarray, np.ndarray]:
        """Contents of every other ring plus the class tag of each row."""
        self._check_class(c)
        keys, tags = [], []
        for k in range(self.num_classes):
            if k == c:
                continue
            p = self.positives(k)
            keys.append(p)
            tags.append(np.full(len(p), k, dtype=np.int64))
        return np.concatenate(keys).reshape(-1, self.dim), np.concatenate(tags)

    def snapshot(self) -> tuple[np.ndarray, np.ndarray]:
        """All stored keys and their class tags (classes in order, each ring oldest first)."""
        keys = [self.positives(k) for k in range(self.num_classes)]
        tags = [np.full(len(p), k, dtype=np.int64) for k, p in enumerate(keys)]
        return np.concatenate(keys).reshape(-1, self.dim), np.concatenate(tags)
