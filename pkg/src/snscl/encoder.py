"""MLP backbone, classifier head, projector and the stochastic embedding module.

Pipeline: x -> backbone -> z -> projector (one layer) -> stochastic module
(three layers) -> (mu, sigma).  The classifier reads z directly.

Low-dimensional inputs can be lifted through fixed random Fourier features
before the first trainable layer.  Without the lift a small ReLU MLP on 2-D
data is too smooth to memorize scattered noisy labels, which is the failure
mode the contrastive branch is meant to counter.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

SIGMA_FLOOR = 1e-6
CHECKPOINT_VERSION = 1


class FourierLift:
    """Fixed map x -> [sin(x B), cos(x B)] with B ~ N(0, scale^2); not trained."""

    def __init__(self, n_in: int, n_features: int, scale: float, rng: np.random.Generator):
        self.B = rng.normal(scale=scale, size=(n_in, n_features))

    @property
    def out_dim(self) -> int:
        return 2 * self.B.shape[1]

    def __call__(self, x: np.ndarray) -> np.ndarray:
        proj = np.asarray(x, dtype=np.float64) @ self.B
        return np.hstack([np.sin(proj), np.cos(proj)])


class Linear:
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, init_scale: float | None = None, name: str = ""):
        bound = init_scale if init_scale is not None else np.sqrt(6.0 / n_in)  # He-uniform
        self.W = Tensor(rng.uniform(-bound, bound, size=(n_in, n_out)), requires_grad=True, name=f"{name}.W")
        self.b = Tensor(np.zeros(n_out), requires_grad=True, name=f"{name}.b")

    def __call__(self, x: Tensor) -> Tensor:
        return ad.add(ad.matmul(x, self.W), self.b)

    def forward_np(self, x: np.ndarray) -> np.ndarray:
        return x @ self.W.data + self.b.data

    def parameters(self) -> list[Tensor]:
        return [self.W, self.b]


class MLP:
    """Stack of Linear layers with ReLU between them (none after the last)."""

    def __init__(self, sizes: list[int], rng: np.random.Generator, name: str = "mlp", final_relu: bool = False, last_init_scale: float | None = None):
        self.layers = []
        for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
            last = i == len(sizes) - 2
            self.layers.append(Linear(a, b, rng, init_scale=last_init_scale if last else None, name=f"{name}.{i}"))
        self.final_relu = final_relu

    def __call__(self, x: Tensor) -> Tensor:
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1 or self.final_relu:
                x = ad.relu(x)
        return x

    def forward_np(self, x: np.ndarray) -> np.ndarray:
        for i, layer in enumerate(self.layers):
            x = layer.forward_np(x)
            if i < len(self.layers) - 1 or self.final_relu:
                x = np.maximum(x, 0.0)
        return x

    def parameters(self) -> list[Tensor]:
        return [p for layer in self.layers for p in layer.parameters()]


@dataclass
class BackboneConfig:
    input_dim: int = 2
    hidden: list[int] = field(default_factory=lambda: [64, 64])
    num_classes: int = 10
    embed_dim: int = 32
    stochastic_hidden: list[int] = field(default_factory=lambda: [32, 32])
    stochastic_init_scale: float = 1e-3
    fourier_features: int = 0
    fourier_scale: float = 20.0

    def __post_init__(self):
        if len(self.stochastic_hidden) != 2:
            raise ValueError("the stochastic module has exactly three layers (two hidden widths)")
        if not self.hidden:
            raise ValueError("backbone needs at least one hidden layer")


@dataclass
class GaussianEmbedding:
    mu: Tensor
    sigma: Tensor


class SNSCLNet:
    """Classifier network plus the contrastive branch parameters."""

    def __init__(self, config: BackboneConfig, seed: int = 0):
        self.config = config
        rng = np.random.default_rng(seed)
        c = config
        self.lift = FourierLift(c.input_dim, c.fourier_features, c.fourier_scale, rng) if c.fourier_features else None
        n_in = self.lift.out_dim if self.lift is not None else c.input_dim
        self.backbone = MLP([n_in, *c.hidden], rng, name="backbone", final_relu=True)
        self.classifier = Linear(c.hidden[-1], c.num_classes, rng, name="classifier")
        self.projector = Linear(c.hidden[-1], c.embed_dim, rng, name="projector")
        self.stochastic = MLP(
            [c.embed_dim, *c.stochastic_hidden, 2 * c.embed_dim],
            rng,
            name="stochastic",
            last_init_scale=c.stochastic_init_scale,
        )

    # forward pieces
    def lift_input(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return self.lift(x) if self.lift is not None else x

    def features(self, x) -> Tensor:
        return self.backbone(Tensor(self.lift_input(x)))

    def logits(self, z: Tensor) -> Tensor:
        return self.classifier(z)

    def encode(self, z: Tensor) -> GaussianEmbedding:
        h = self.stochastic(self.projector(z))
        d = self.config.embed_dim
        mu = ad.index(h, (slice(None), slice(0, d)))
        raw_sigma = ad.index(h, (slice(None), slice(d, 2 * d)))
        return GaussianEmbedding(mu, sigma_from_raw(raw_sigma))

    def predict_logits(self, x: np.ndarray) -> np.ndarray:
        return self.classifier.forward_np(self.backbone.forward_np(self.lift_input(x)))

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        return ad.softmax(self.predict_logits(x))

    # parameter bookkeeping
    def classification_parameters(self) -> list[Tensor]:
        return self.backbone.parameters() + self.classifier.parameters()

    def contrastive_parameters(self) -> list[Tensor]:
        return self.projector.parameters() + self.stochastic.parameters()

    def parameters(self) -> list[Tensor]:
        return self.classification_parameters() + self.contrastive_parameters()

    def named_parameters(self) -> dict[str, Tensor]:
        return {p.name: p for p in self.parameters()}

    def save(self, path: str | Path) -> None:
        """Write every parameter to an ``.npz`` archive keyed by name, plus a format version."""
        arrays = {name: p.data for name, p in self.named_parameters().items()}
        if self.lift is not None:
            arrays["lift.B"] = self.lift.B
        np.savez(path, __version__=np.array(CHECKPOINT_VERSION), **arrays)

    def load(self, path: str | Path) -> None:
        with np.load(path) as f:
            version = int(f["__version__"])
            if version != CHECKPOINT_VERSION:
                raise ValueError(f"unsupported checkpoint version {version}")
            for name, p in self.named_parameters().items():
                if f[name].shape != p.data.shape:
                    raise ValueError(f"shape mismatch for {name}")
                p.data[...] = f[name]
            if self.lift is not None:
                self.lift.B = f["lift.B"].copy()


def sigma_from_raw(raw: Tensor) -> Tensor:
    return ad.add(ad.softplus(raw), SIGMA_FLOOR)


def sample(ge: GaussianEmbedding, rng: np.random.Generator | None = None, eps: np.ndarray | None = None) -> Tensor:
    """Reparameterized draw mu + eps * sigma with eps ~ N(0, I)."""
    if eps is None:
        eps = rng.standard_normal(ge.mu.shape)
    return ad.add(ge.mu, ad.mul(ge.sigma, eps))


def kl_to_unit(ge: GaussianEmbedding) -> Tensor:
    """KL(N(mu, diag sigma^2) || N(0, I)), summed over dimensions, averaged over rows."""
    mu2 = ad.square(ge.mu)
    s2 = ad.square(ge.sigma)
    log_s2 = ad.scale(ad.log(ge.sigma), 2.0)
    per_dim = ad.add(ad.add(mu2, s2), ad.neg(ad.add(log_s2, 1.0)))
    total = ad.sum(per_dim, axis=-1)
    if total.data.ndim == 0:
        return ad.scale(total, 0.5)
    return ad.scale(ad.mean(total), 0.5)
