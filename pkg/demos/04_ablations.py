"""
Switching components off
========================

Each ablation removes one part of the contrastive branch.  ``plain_scl``
replaces the queue loss with an in-batch supervised contrastive loss and
turns every weighting switch off.
"""

from snscl.data import NoiseSpec, build_transition, inject_noise, make_fine_grained_blobs
from snscl.trainer import TrainingConfig, run

blobs = make_fine_grained_blobs(seed=1)
train = inject_noise(blobs.train, build_transition(NoiseSpec("symmetric", 0.4), 10), seed=1001)

variants = {
    "CE": TrainingConfig.baseline(seed=1),
    "CE + batch SCL": TrainingConfig(seed=1, plain_scl=True),
    "no correction": TrainingConfig(seed=1, weight_correction=False),
    "no weighted insert": TrainingConfig(seed=1, weight_update=False),
    "no stochastic module": TrainingConfig(seed=1, stochastic_module=False),
    "full": TrainingConfig(seed=1),
}
for name, cfg in variants.items():
    r = run(cfg, train, blobs.test)
    print(f"{name:<22} best {r.best_acc:.3f}  last {r.last_acc:.3f}")
