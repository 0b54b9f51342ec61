"""Noise-tolerant supervised contrastive training for fine-grained classes with noisy labels."""

from .data import (
    Dataset,
    NoiseSpec,
    build_transition,
    empirical_noise_rate,
    inject_noise,
    make_fine_grained_blobs,
)
from .trainer import RunResult, Trainer, TrainingConfig, evaluate, run

__all__ = [
    "Dataset",
    "NoiseSpec",
    "RunResult",
    "Trainer",
    "TrainingConfig",
    "build_transition",
    "empirical_noise_rate",
    "evaluate",
    "inject_noise",
    "make_fine_grained_blobs",
    "run",
]

__version__ = "0.1.0"
