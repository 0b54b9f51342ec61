"""Synthetic fine-grained datasets and label-noise injection.

Classes come in confusable groups: each super-group center sits far from the
others, and its sub-classes sit close to it.  Labels are then corrupted by
sampling from a row-stochastic transition matrix.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class NoiseSpec:
    kind: str = "symmetric"
    rate: float = 0.4
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("symmetric", "asymmetric"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if not 0.0 <= self.rate < 1.0:
            raise ValueError(f"noise rate must lie in [0, 1), got {self.rate}")


@dataclass
class Dataset:
    """Features plus observed labels; clean labels are kept out of the way.

    Training code must only touch ``features`` and ``noisy_labels``.  The
    clean labels are reachable through :meth:`reveal_clean_labels`, which
    exists for evaluation and diagnostics.
    """

    features: np.ndarray
    noisy_labels: np.ndarray
    num_classes: int
    split: str = "train"
    ids: np.ndarray | None = None
    _clean_labels: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.noisy_labels = np.asarray(self.noisy_labels, dtype=np.int64)
        if self._clean_labels is None:
            self._clean_labels = self.noisy_labels.copy()
        self._clean_labels = np.asarray(self._clean_labels, dtype=np.int64)
        if self.ids is None:
            self.ids = np.arange(len(self.noisy_labels))
        if self.split not in ("train", "test"):
            raise ValueError(f"split must be train or test, got {self.split!r}")
        n = len(self.features)
        if len(self.noisy_labels) != n or len(self._clean_labels) != n:
            raise ValueError("features and labels must be index-aligned")

    def __len__(self) -> int:
        return len(self.noisy_labels)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def reveal_clean_labels(self) -> np.ndarray:
        return self._clean_labels


@dataclass(frozen=True)
class FineGrainedBlobs:
    train: Dataset
    test: Dataset
    class_centers: np.ndarray
    super_centers: np.ndarray


def make_fine_grained_blobs(
    num_classes: int = 10,
    dim: int = 2,
    n_per_class: int = 200,
    super_groups: int = 5,
    intra_spread: float = 1.0,
    inter_spread: float = 8.0,
    cluster_std: float = 0.5,
    n_test_per_class: int = 100,
    seed: int = 0,
    standardize: bool = True,
) -> FineGrainedBlobs:
    """Draw a train/test pair of Gaussian blobs with grouped class centers.

    Super-group centers are placed on a circle (in the first two feature
    axes) whose chord between neighbours equals ``inter_spread``; sub-class
    centers are offset from their super-center by at most ``intra_spread``.
    With ``standardize`` both splits are z-scored using train statistics.
    """
    if num_classes < 2:
        raise ValueError("need at least two classes")
    if num_classes % super_groups:
        raise ValueError("num_classes must be divisible by super_groups")
    if not intra_spread < inter_spread:
        raise ValueError("intra_spread must be smaller than inter_spread")
    rng = np.random.default_rng(seed)
    per_group = num_classes // super_groups

    super_centers = np.zeros((super_groups, dim))
    if super_groups > 1:
        radius = inter_spread / (2 * np.sin(np.pi / super_groups))
        angles = 2 * np.pi * np.arange(super_groups) / super_groups
        if dim >= 2:
            super_centers[:, 0] = radius * np.cos(angles)
            super_centers[:, 1] = radius * np.sin(angles)
        else:
            super_centers[:, 0] = inter_spread * np.arange(super_groups)

    class_centers = np.empty((num_classes, dim))
    for c in range(num_classes):
        direction = rng.normal(size=dim)
        direction /= np.linalg.norm(direction)
        offset = direction * rng.uniform(0.5 * intra_spread, intra_spread)
        class_centers[c] = super_centers[c // per_group] + offset

    def draw(n):
        labels = np.repeat(np.arange(num_classes), n)
        x = class_centers[labels] + cluster_std * rng.normal(size=(len(labels), dim))
        return x, labels

    x_tr, y_tr = draw(n_per_class)
    x_te, y_te = draw(n_test_per_class)
    if standardize:
        mu, sd = x_tr.mean(axis=0), x_tr.std(axis=0)
        x_tr, x_te = (x_tr - mu) / sd, (x_te - mu) / sd
    train = Dataset(x_tr, y_tr, num_classes, "train", _clean_labels=y_tr.copy())
    test = Dataset(x_te, y_te, num_classes, "test", ids=np.arange(len(y_te)) + len(y_tr), _clean_labels=y_te.copy())
    return FineGrainedBlobs(train, test, class_centers, super_centers)


def build_transition(spec: NoiseSpec, num_classes: int) -> np.ndarray:
    """Row-stochastic flip matrix ``T[i, j] = P(observed j | clean i)``.

    Symmetric noise spreads ``rate`` evenly over the other classes;
    asymmetric noise moves all of it to class ``(i + 1) % C``.
    """
    if not 0.0 <= spec.rate < 1.0:
        raise ValueError("noise rate must be < 1")
    r, C = spec.rate, num_classes
    if spec.kind == "symmetric":
        T = np.full((C, C), r / (C - 1))
        np.fill_diagonal(T, 1.0 - r)
    else:
        T = (1.0 - r) * np.eye(C)
        T[np.arange(C), (np.arange(C) + 1) % C] += r
    return T


def inject_noise(dataset: Dataset, T: np.ndarray, seed: int) -> Dataset:
    """Resample each observed label from the row of ``T`` for its clean label."""
    if dataset.split != "train":
        raise ValueError("noise is only injected into the train split")
    C = dataset.num_classes
    T = np.asarray(T, dtype=np.float64)
    if T.shape != (C, C):
        raise ValueError(f"transition matrix must be {C}x{C}, got {T.shape}")
    if np.any(T < 0) or not np.allclose(T.sum(axis=1), 1.0, atol=1e-9, rtol=0):
        raise ValueError("transition matrix must be row-stochastic")
    rng = np.random.default_rng(seed)
    clean = dataset.reveal_clean_labels()
    cdf = np.cumsum(T, axis=1)
    u = rng.random(len(clean))
    noisy = (u[:, None] >= cdf[clean]).sum(axis=1)
    noisy = np.minimum(noisy, C - 1)
    return replace(dataset, noisy_labels=noisy, features=dataset.features.copy(), _clean_labels=clean.copy())


def empirical_noise_rate(dataset: Dataset) -> float:
    return float(np.mean(dataset.noisy_labels != dataset.reveal_clean_labels()))


def write_dataset_csv(path: str | Path, datasets: list[Dataset], comment: str | None = None) -> None:
    """One row per sample: ``id, split, clean_label, noisy_label, f_0 ... f_{d-1}``.

    An optional leading ``# ...`` comment line carries provenance (e.g. a
    config hash); :func:`read_dataset_csv` skips it.
    """
    dim = datasets[0].dim
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh)
        w.writerow(["id", "split", "clean_label", "noisy_label"] + [f"f_{j}" for j in range(dim)])
        for ds in datasets:
            clean = ds.reveal_clean_labels()
            for i in range(len(ds)):
                w.writerow(
                    [int(ds.ids[i]), ds.split, int(clean[i]), int(ds.noisy_labels[i])]
                    + [repr(float(v)) for v in ds.features[i]]
                )


def read_dataset_csv(path: str | Path, num_classes: int | None = None) -> dict[str, Dataset]:
    with open(path, newline="") as fh:
        rows = [line for line in fh if not line.startswith("#")]
    reader = csv.reader(rows)
    header = next(reader)
    if header[:4] != ["id", "split", "clean_label", "noisy_label"]:
        raise ValueError(f"{path}: unexpected header {header[:4]}")
    buckets: dict[str, list[list[str]]] = {}
    for row in reader:
        buckets.setdefault(row[1], []).append(row)
    out = {}
    all_labels = [int(r[2]) for rs in buckets.values() for r in rs]
    C = num_classes if num_classes is not None else max(all_labels) + 1
    for split, rs in buckets.items():
        ids = np.array([int(r[0]) for r in rs])
        clean = np.array([int(r[2]) for r in rs])
        noisy = np.array([int(r[3]) for r in rs])
        feats = np.array([[float(v) for v in r[4:]] for r in rs])
        out[split] = Dataset(feats, noisy, C, split, ids=ids, _clean_labels=clean)
    return out
