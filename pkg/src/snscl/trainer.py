"""Training loop: warmup, per-epoch reliability and correction, joint objective.

The total batch loss is

    L = L_cls + lambda_ntcl * L_contrastive + lambda_kl * L_kl

where L_cls is a plug-in classification loss on the corrected soft labels.
One numpy Generator, seeded from ``TrainingConfig.seed``, is consumed in a
fixed order within each batch: the epoch shuffle first, then the
reparameterization noise, then one queue coin flip per sample whose weight
is below 1.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .contrastive import ntcl_loss, scl_batch_loss
from .correction import LabelCorrector, one_hot
from .data import Dataset
from .encoder import BackboneConfig, SNSCLNet, kl_to_unit, sample
from .losses import LOSS_KINDS, classification_loss
from .queue import MomentumQueue
from .reliability import ReliabilityResult, estimate_reliability, write_reliability_dump

log = logging.getLogger(__name__)

METRIC_COLUMNS = [
    "epoch",
    "train_loss",
    "lnl_loss",
    "ntcl_loss",
    "kl_loss",
    "test_acc",
    "corrected_label_acc",
    "clean_recall",
    "mean_gamma_clean",
    "mean_gamma_noisy",
]


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainingConfig:
    epochs: int = 60
    warmup_epochs: int = 5
    batch_size: int = 32
    lr: float = 0.01
    lr_decay: float = 0.1
    lr_milestones: tuple[int, ...] = (20, 40)
    momentum: float = 0.9
    weight_decay: float = 1e-3
    threshold: float = 0.5
    queue_size: int = 32
    tau: float = 0.07
    alpha: float = 0.99
    lambda_ntcl: float = 1.0
    lambda_kl: float = 0.001
    seed: int = 0
    lnl_loss: str = "ce"
    smoothing: float = 0.1
    gce_q: float = 0.7
    snscl: bool = True
    weight_correction: bool = True
    weight_update: bool = True
    stochastic_module: bool = True
    plain_scl: bool = False
    hidden: tuple[int, ...] = (64, 64)
    embed_dim: int = 32
    stochastic_hidden: tuple[int, int] = (32, 32)
    fourier_features: int = 64
    fourier_scale: float = 20.0

    def __post_init__(self):
        if self.lnl_loss not in LOSS_KINDS:
            raise ValueError(f"lnl_loss must be one of {LOSS_KINDS}")
        if self.warmup_epochs < 0 or self.epochs < 0:
            raise ValueError("epoch counts must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        self.lr_milestones = tuple(self.lr_milestones)
        self.hidden = tuple(self.hidden)
        self.stochastic_hidden = tuple(self.stochastic_hidden)
        if self.plain_scl:
            self.weight_correction = self.weight_update = self.stochastic_module = False

    @classmethod
    def baseline(cls, **kw) -> "TrainingConfig":
        """Plain classification training without any of the contrastive machinery."""
        kw.setdefault("snscl", False)
        return cls(**kw)

    def lr_at(self, global_epoch: int) -> float:
        k = sum(1 for m in self.lr_milestones if global_epoch >= m)
        return self.lr * self.lr_decay**k

    @property
    def contrastive_branch(self) -> bool:
        return self.snscl

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    lnl_loss: float
    ntcl_loss: float
    kl_loss: float
    test_acc: float
    corrected_label_acc: float
    clean_recall: float
    mean_gamma_clean: float
    mean_gamma_noisy: float
    queue_occupancy: list[int] = field(default_factory=list)

    def row(self) -> list:
        return [getattr(self, c) for c in METRIC_COLUMNS]


@dataclass
class RunResult:
    history: list[EpochMetrics]
    best_acc: float
    last_acc: float
    warmup_acc: float
    model: SNSCLNet


def evaluate(model: SNSCLNet, test: Dataset) -> float:
    """Top-1 accuracy of argmax predictions against the clean test labels."""
    if len(test) == 0:
        return 0.0
    pred = np.argmax(model.predict_logits(test.features), axis=1)
    return float(np.mean(pred == test.reveal_clean_labels()))


@dataclass
class BatchLosses:
    total: ad.Tensor
    lnl: ad.Tensor
    ntcl: ad.Tensor | None
    kl: ad.Tensor | None


class Trainer:
    """Holds model, optimizer, queue and label state across epochs.

    Only ``train.features`` and ``train.noisy_labels`` feed the optimization.
    Clean labels are read in :meth:`epoch_diagnostics` and :func:`evaluate`.
    """

    def __init__(self, config: TrainingConfig, train: Dataset, test: Dataset | None = None, dump_dir: str | Path | None = None):
        self.config = config
        self.train = train
        self.test = test
        self.dump_dir = Path(dump_dir) if dump_dir is not None else None
        c = config
        self.model = SNSCLNet(
            BackboneConfig(
                input_dim=train.dim,
                hidden=list(c.hidden),
                num_classes=train.num_classes,
                embed_dim=c.embed_dim,
                stochastic_hidden=list(c.stochastic_hidden),
                fourier_features=c.fourier_features,
                fourier_scale=c.fourier_scale,
            ),
            seed=c.seed,
        )
        self.optimizer = ad.SGD(self.model.parameters(), c.lr, c.momentum, c.weight_decay)
        self.rng = np.random.default_rng(c.seed)
        self.queue = MomentumQueue(train.num_classes, c.queue_size, c.embed_dim)
        self.corrector = LabelCorrector(train.noisy_labels, train.num_classes, c.alpha)
        self.noisy_onehot = one_hot(train.noisy_labels, train.num_classes)
        self.omega = np.ones(len(train))
        self.reliability: ReliabilityResult | None = None
        self.global_epoch = 0
        self.history: list[EpochMetrics] = []

    # --- batch level -------------------------------------------------------
    def batch_losses(self, idx: np.ndarray, targets: np.ndarray, omega: np.ndarray, contrastive: bool) -> BatchLosses:
        c = self.config
        m = self.model
        z = m.features(self.train.features[idx])
        lnl = classification_loss(c.lnl_loss, m.logits(z), targets, c.smoothing, c.gce_q)
        if not contrastive:
            return BatchLosses(lnl, lnl, None, None)

        hard = np.argmax(targets, axis=1)
        kl = None
        if c.stochastic_module:
            ge = m.encode(z)
            emb = sample(ge, self.rng)
            kl = kl_to_unit(ge)
        else:
            emb = m.projector(z)
        q = ad.l2_normalize(emb, axis=1)

        if c.plain_scl:
            con = scl_batch_loss(q, hard, c.tau)
        else:
            for b in range(len(idx)):
                w = omega[b] if c.weight_update else 1.0
                self.queue.weighted_update(int(hard[b]), q.data[b], float(w), self.rng)
            keys, key_labels = self.queue.snapshot()
            con = ntcl_loss(q, hard, keys, key_labels, c.tau)

        total = ad.add(lnl, ad.scale(con, c.lambda_ntcl))
        if kl is not None:
            total = ad.add(total, ad.scale(kl, c.lambda_kl))
        return BatchLosses(total, lnl, con, kl)

    def _sgd_epoch(self, targets: np.ndarray, contrastive: bool) -> dict[str, float]:
        c = self.config
        n = len(self.train)
        self.optimizer.lr = c.lr_at(self.global_epoch)
        perm = self.rng.permutation(n)
        sums = {"train_loss": 0.0, "lnl_loss": 0.0, "ntcl_loss": 0.0, "kl_loss": 0.0}
        for start in range(0, n, c.batch_size):
            idx = perm[start : start + c.batch_size]
            try:
                parts = self.batch_losses(idx, targets[idx], self.omega[idx], contrastive)
            except FloatingPointError as exc:
                self._dump_failure(idx)
                raise TrainingError(f"non-finite value in epoch {self.global_epoch}: {exc}") from exc
            self.optimizer.zero_grad()
            parts.total.backward()
            self.optimizer.step()
            k = len(idx)
            sums["train_loss"] += parts.total.item() * k
            sums["lnl_loss"] += parts.lnl.item() * k
            if parts.ntcl is not None:
                sums["ntcl_loss"] += parts.ntcl.item() * k
            if parts.kl is not None:
                sums["kl_loss"] += parts.kl.item() * k
        self.global_epoch += 1
        return {key: v / n for key, v in sums.items()}

    def _dump_failure(self, idx: np.ndarray) -> None:
        if self.dump_dir is None:
            log.error("non-finite loss in epoch %d, batch %s", self.global_epoch, idx[:8])
            return
        self.dump_dir.mkdir(parents=True, exist_ok=True)
        path = self.dump_dir / f"failure_epoch{self.global_epoch}.npz"
        np.savez(path, batch_indices=idx, omega=self.omega, labels=self.corrector.labels,
                 **{name: p.data for name, p in self.model.named_parameters().items()})
        log.error("non-finite loss; state dumped to %s", path)

    # --- epoch level -------------------------------------------------------
    def warmup(self) -> None:
        """Plain training on the noisy one-hot labels; no correction, no queue."""
        for _ in range(self.config.warmup_epochs):
            self._sgd_epoch(self.noisy_onehot, contrastive=False)

    def refresh_reliability(self) -> ReliabilityResult:
        res = estimate_reliability(self.model, self.train.features, self.train.noisy_labels, self.config.threshold, self.global_epoch)
        self.reliability = res
        self.omega = res.omega
        return res

    def current_targets(self) -> np.ndarray:
        c = self.config
        if c.snscl and c.weight_correction:
            return self.corrector.labels
        return self.noisy_onehot

    def run_epoch(self) -> EpochMetrics:
        c = self.config
        res = self.refresh_reliability()
        if self.dump_dir is not None:
            self.dump_dir.mkdir(parents=True, exist_ok=True)
            write_reliability_dump(self.dump_dir / "reliability.csv", self.global_epoch, self.train.ids, res)
        if c.snscl and c.weight_correction:
            self.corrector.update(self.omega, self.model.predict_proba(self.train.features))
        losses = self._sgd_epoch(self.current_targets(), contrastive=c.contrastive_branch)
        metrics = EpochMetrics(
            epoch=self.global_epoch,
            **losses,
            test_acc=evaluate(self.model, self.test) if self.test is not None else float("nan"),
            **self.epoch_diagnostics(res),
            queue_occupancy=self.queue.occupancy().tolist(),
        )
        self.history.append(metrics)
        log.info("epoch %d loss %.4f test_acc %.4f", metrics.epoch, metrics.train_loss, metrics.test_acc)
        return metrics

    def epoch_diagnostics(self, res: ReliabilityResult) -> dict[str, float]:
        clean = self.train.reveal_clean_labels()
        is_clean = self.train.noisy_labels == clean
        corrected = np.argmax(self.current_targets(), axis=1)

        def _mean(a):
            return float(a.mean()) if a.size else float("nan")

        return {
            "corrected_label_acc": float(np.mean(corrected == clean)),
            "clean_recall": _mean(res.omega[is_clean] == 1.0),
            "mean_gamma_clean": _mean(res.gamma[is_clean]),
            "mean_gamma_noisy": _mean(res.gamma[~is_clean]),
        }

    def fit(self) -> RunResult:
        self.warmup()
        warm_acc = evaluate(self.model, self.test) if self.test is not None else float("nan")
        for _ in range(self.config.epochs):
            self.run_epoch()
        accs = [warm_acc] + [m.test_acc for m in self.history]
        return RunResult(self.history, float(np.max(accs)), float(accs[-1]), warm_acc, self.model)


def run(config: TrainingConfig, train: Dataset, test: Dataset, dump_dir: str | Path | None = None) -> RunResult:
    """Warmup followed by ``config.epochs`` full epochs; returns history and (best, last)."""
    return Trainer(config, train, test, dump_dir).fit()


def write_metrics_csv(path: str | Path, history: list[EpochMetrics], comment: str | None = None) -> None:
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh)
        w.writerow(METRIC_COLUMNS)
        for m in history:
            w.writerow([f"{v:.10g}" if isinstance(v, float) else v for v in m.row()])
