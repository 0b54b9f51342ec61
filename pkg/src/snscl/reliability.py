"""Small-loss reliability scores from a two-component 1D Gaussian mixture."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import log_softmax

VAR_FLOOR = 1e-6
DEGENERATE_SEPARATION = 1e-3
_LOG_2PI = np.log(2 * np.pi)


@dataclass
class LossProfile:
    losses: np.ndarray
    epoch: int = 0

    def __post_init__(self):
        self.losses = np.asarray(self.losses, dtype=np.float64)
        if not np.all(np.isfinite(self.losses)):
            raise FloatingPointError("loss profile contains non-finite values")

    def __len__(self) -> int:
        return len(self.losses)


@dataclass
class Gmm2Params:
    """Mixture parameters with component 0 the low-mean ("clean") one."""

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    degenerate: bool = False
    n_iter: int = 0
    log_likelihoods: list[float] = field(default_factory=list)


def collect_losses(model, features: np.ndarray, noisy_labels: np.ndarray, epoch: int = 0, batch_size: int = 1024) -> LossProfile:
    """Cross-entropy of the current model against the given (noisy) hard labels.

    Runs forward-only in batches; no graph is built.
    """
    out = np.empty(len(noisy_labels))
    for start in range(0, len(noisy_labels), batch_size):
        sl = slice(start, start + batch_size)
        logits = model.predict_logits(features[sl])
        logp = log_softmax(logits)
        out[sl] = -logp[np.arange(logp.shape[0]), noisy_labels[sl]]
    return LossProfile(out, epoch)


def normalize_losses(losses) -> np.ndarray:
    x = np.asarray(losses.losses if isinstance(losses, LossProfile) else losses, dtype=np.float64)
    if x.size == 0:
        raise ValueError("empty loss profile")
    lo, hi = x.min(), x.max()
    if hi - lo <= 0:
        return np.zeros_like(x)
    return (x - lo) / (hi - lo)


def _component_logpdf(x: np.ndarray, means: np.ndarray, variances: np.ndarray) -> np.ndarray:
    # (n, 2)
    d = x[:, None] - means[None, :]
    return -0.5 * (_LOG_2PI + np.log(variances)[None, :] + d * d / variances[None, :])


def _log_likelihood(x, weights, means, variances) -> tuple[float, np.ndarray]:
    joint = np.log(weights)[None, :] + _component_logpdf(x, means, variances)
    m = joint.max(axis=1, keepdims=True)
    log_norm = (m + np.log(np.exp(joint - m).sum(axis=1, keepdims=True))).ravel()
    return float(log_norm.sum()), np.exp(joint - log_norm[:, None])


def fit_gmm2(x, max_iter: int = 100, tol: float = 1e-4, var_floor: float = VAR_FLOOR, check_monotone: bool = True) -> Gmm2Params:
    """Fit a two-component Gaussian mixture to 1D data by EM.

    Initialization is deterministic: means at the 10th and 90th percentiles,
    equal weights, both variances equal to the global variance.  Iteration
    stops when the log-likelihood improves by less than ``tol`` or after
    ``max_iter`` steps.  With ``check_monotone`` every step asserts that the
    log-likelihood did not decrease.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.size < 2 or np.ptp(x) == 0:
        v = max(float(np.var(x)) if x.size else 0.0, var_floor)
        m = float(x[0]) if x.size else 0.0
        return Gmm2Params(np.array([1.0, 0.0]), np.array([m, m]), np.array([v, v]), degenerate=True)

    means = np.percentile(x, [10, 90]).astype(np.float64)
    weights = np.array([0.5, 0.5])
    variances = np.full(2, max(float(np.var(x)), var_floor))
    ll, resp = _log_likelihood(x, weights, means, variances)
    history = [ll]
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        nk = resp.sum(axis=0) + 10 * np.finfo(float).tiny
        weights = nk / nk.sum()
        means = (resp * x[:, None]).sum(axis=0) / nk
        d = x[:, None] - means[None, :]
        variances = np.maximum((resp * d * d).sum(axis=0) / nk, var_floor)
        new_ll, resp = _log_likelihood(x, weights, means, variances)
        if check_monotone and new_ll < ll - 1e-8 * max(1.0, abs(ll)):
            raise AssertionError(f"EM log-likelihood decreased at iteration {n_iter}: {ll} -> {new_ll}")
        history.append(new_ll)
        improvement = new_ll - ll
        ll = new_ll
        if improvement < tol:
            break

    order = np.argsort(means, kind="stable")
    weights, means, variances = weights[order], means[order], variances[order]
    weights = weights / weights.sum()
    degenerate = bool(abs(means[1] - means[0]) < DEGENERATE_SEPARATION)
    return Gmm2Params(weights, means, variances, degenerate, n_iter, history)


def reliability_scores(params: Gmm2Params, x) -> np.ndarray:
    """Posterior probability that each value came from the low-mean component."""
    x = np.asarray(x, dtype=np.float64).ravel()
    if params.degenerate:
        return np.ones_like(x)
    with np.errstate(divide="ignore"):
        _, resp = _log_likelihood(x, params.weights, params.means, params.variances)
    return resp[:, 0]


def weights_from_scores(gamma, t: float = 0.5) -> np.ndarray:
    """omega = 1 where gamma > t, otherwise gamma itself."""
    if not 0.0 <= t <= 1.0:
        raise ValueError("threshold must lie in [0, 1]")
    gamma = np.asarray(gamma, dtype=np.float64)
    return np.where(gamma > t, 1.0, gamma)


@dataclass
class ReliabilityResult:
    losses: LossProfile
    normalized: np.ndarray
    params: Gmm2Params
    gamma: np.ndarray
    omega: np.ndarray


def estimate_reliability(model, features, noisy_labels, t: float = 0.5, epoch: int = 0) -> ReliabilityResult:
    """Full sweep: losses -> min-max scaling -> EM -> gamma -> omega.

    Everything is recomputed from the current model; nothing is carried over
    from earlier epochs.  A degenerate fit yields omega = 1 for every sample.
    """
    profile = collect_losses(model, features, noisy_labels, epoch)
    norm = normalize_losses(profile)
    params = fit_gmm2(norm)
    if params.degenerate:
        gamma = np.ones(len(norm))
        omega = np.ones(len(norm))
    else:
        gamma = reliability_scores(params, norm)
        omega = weights_from_scores(gamma, t)
    return ReliabilityResult(profile, norm, params, gamma, omega)


def write_reliability_dump(path: str | Path, epoch: int, sample_ids, result: ReliabilityResult, append: bool = True) -> None:
    path = Path(path)
    new = not path.exists() or not append
    with open(path, "a" if append else "w", newline="") as fh:
        w = csv.writer(fh)
        if new:
            w.writerow(["epoch", "sample_id", "loss", "gamma", "omega"])
        for sid, l, g, o in zip(sample_ids, result.losses.losses, result.gamma, result.omega):
            w.writerow([epoch, int(sid), f"{l:.10g}", f"{g:.10g}", f"{o:.10g}"])
