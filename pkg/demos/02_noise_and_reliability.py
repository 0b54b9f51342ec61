"""
Label noise and the small-loss signal
=====================================

Generate the fine-grained blobs, flip 40% of the training labels, train the
classifier briefly on the noisy labels, and look at how a two-component
mixture over per-sample losses separates clean from flipped samples.
"""

import numpy as np

from snscl.data import NoiseSpec, build_transition, empirical_noise_rate, inject_noise, make_fine_grained_blobs
from snscl.reliability import estimate_reliability
from snscl.trainer import Trainer, TrainingConfig, evaluate

blobs = make_fine_grained_blobs(seed=0)
print("super-group centers:\n", np.round(blobs.super_centers, 2))

T = build_transition(NoiseSpec("symmetric", 0.4), 10)
print("transition row 0:", np.round(T[0], 3))
train = inject_noise(blobs.train, T, seed=1000)
print("empirical noise rate:", empirical_noise_rate(train))

# five epochs of plain training on the noisy labels
trainer = Trainer(TrainingConfig(), train, blobs.test)
trainer.warmup()
print("test accuracy after warmup:", evaluate(trainer.model, blobs.test))

res = estimate_reliability(trainer.model, train.features, train.noisy_labels)
is_clean = train.noisy_labels == train.reveal_clean_labels()  # only for this printout
print("mixture means:", np.round(res.params.means, 3), "weights:", np.round(res.params.weights, 3))
print("mean gamma, clean samples:", res.gamma[is_clean].mean().round(3))
print("mean gamma, flipped samples:", res.gamma[~is_clean].mean().round(3))
print("share of clean samples with full weight:", np.mean(res.omega[is_clean] == 1.0).round(3))
print("share of flipped samples with full weight:", np.mean(res.omega[~is_clean] == 1.0).round(3))

# loss histogram by group, as text
edges = np.linspace(0, 1, 11)
hc, _ = np.histogram(res.normalized[is_clean], edges)
hn, _ = np.histogram(res.normalized[~is_clean], edges)
for lo, a, b in zip(edges, hc, hn):
    print(f"{lo:.1f}  clean {'#' * (a // 20):<40} flipped {'#' * (b // 20)}")
