import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from snscl import autodiff as ad
from snscl.autodiff import Tensor
from snscl.contrastive import infonce_loss, ntcl_loss, scl_batch_loss

from conftest import check_grad, numeric_grad, rel_err


def keys_with_sims(sims):
    """Unit anchor e0 and unit keys with q.k_j = sims[j] exactly."""
    sims = np.asarray(sims, dtype=float)
    n = len(sims)
    q = np.zeros(n + 1)
    q[0] = 1.0
    keys = np.zeros((n, n + 1))
    keys[:, 0] = sims
    keys[np.arange(n), np.arange(n) + 1] = np.sqrt(1 - sims**2)
    return q, keys


def brute_ntcl(sims, key_labels, h, tau):
    pos = [s for s, l in zip(sims, key_labels) if l == h]
    denom = sum(math.exp(s / tau) for s in sims)
    return -sum(math.log(math.exp(s / tau) / denom) for s in pos) / len(pos)


def test_uniform_similarity_full_queue():
    C, D = 10, 32
    q = np.ones(4) / 2
    keys = np.tile(q, (C * D, 1))
    labels = np.repeat(np.arange(C), D)
    loss = ntcl_loss(Tensor(q), [3], keys, labels, tau=0.07)
    assert abs(loss.item() - math.log(320)) < 1e-9


def test_two_term_closed_form():
    tau = 0.5
    q, keys = keys_with_sims([0.3, -0.4])
    a, b = 0.3 / tau, -0.4 / tau
    loss = ntcl_loss(Tensor(q), [0], keys, np.array([0, 1]), tau)
    assert loss.item() == pytest.approx(math.log1p(math.exp(b - a)), abs=1e-12)


def test_aligned_positives_orthogonal_negatives():
    C, D, tau = 10, 32, 0.07
    d = 1 + (C - 1)
    q = np.zeros(d)
    q[0] = 1.0
    keys = np.zeros((C * D, d))
    labels = np.repeat(np.arange(C), D)
    keys[labels == 0, 0] = 1.0
    for c in range(1, C):
        keys[labels == c, c] = 1.0
    loss = ntcl_loss(Tensor(q), [0], keys, labels, tau).item()
    # every log term shares the denominator 32 e^{1/tau} + 288
    assert loss == pytest.approx(math.log(32 + 288 * math.exp(-1 / tau)), abs=1e-9)
    # with a single stored positive the loss is essentially zero
    keep = (labels != 0) | (np.arange(C * D) == 0)
    single = ntcl_loss(Tensor(q), [0], keys[keep], labels[keep], tau).item()
    assert 0 <= single < math.log1p(288 * math.exp(-1 / tau)) + 1e-9


def test_matches_brute_force_partial_rings(rng):
    sims = rng.uniform(-1, 1, 11)
    labels = np.array([0, 0, 1, 2, 2, 2, 1, 0, 3, 3, 1])
    q, keys = keys_with_sims(sims)
    for h in range(4):
        got = ntcl_loss(Tensor(q), [h], keys, labels, 0.2).item()
        assert got == pytest.approx(brute_ntcl(sims, labels, h, 0.2), rel=1e-12)


def test_empty_ring_contributes_nothing(rng):
    q, keys = keys_with_sims(rng.uniform(-1, 1, 4))
    labels = np.array([1, 1, 2, 2])
    anchors = Tensor(np.vstack([q, q]))
    per = ntcl_loss(anchors, [0, 1], keys, labels, 0.1, reduction="none")
    assert per.data[0] == 0.0 and per.data[1] > 0
    mean = ntcl_loss(anchors, [0, 1], keys, labels, 0.1).item()
    assert mean == pytest.approx(per.data[1] / 2)
    assert ntcl_loss(anchors, [0, 0], np.zeros((0, 5)), np.zeros(0), 0.1).item() == 0.0


def test_rejects_bad_tau():
    with pytest.raises(ValueError):
        ntcl_loss(Tensor(np.ones(2)), [0], np.ones((1, 2)), [0], tau=0.0)


def test_ntcl_grad(rng):
    keys = rng.normal(size=(12, 5))
    keys /= np.linalg.norm(keys, axis=1, keepdims=True)
    labels = rng.integers(0, 3, 12)
    hard = np.array([0, 1, 2, 1])
    for tau in (0.07, 0.5):
        build = lambda a: ntcl_loss(ad.l2_normalize(a, axis=1), hard, keys, labels, tau)
        assert check_grad(build, rng.normal(size=(4, 5))) < 1e-4


sim_lists = st.lists(st.floats(-0.9, 0.9), min_size=4, max_size=10)


@settings(max_examples=100, deadline=None)
@given(sim_lists, st.floats(0.05, 1.0))
def test_nonnegative(sims, tau):
    labels = np.arange(len(sims)) % 3
    q, keys = keys_with_sims(sims)
    assert ntcl_loss(Tensor(q), [0], keys, labels, tau).item() >= -1e-12


@settings(max_examples=100, deadline=None)
@given(sim_lists, st.floats(0.01, 0.09))
def test_raising_positive_similarity_lowers_loss(sims, delta):
    sims = np.array(sims)
    labels = np.arange(len(sims)) % 3
    q, keys = keys_with_sims(sims)
    base = ntcl_loss(Tensor(q), [0], keys, labels, 0.3).item()
    bumped = sims + delta * (labels == 0)
    q2, keys2 = keys_with_sims(bumped)
    assert ntcl_loss(Tensor(q2), [0], keys2, labels, 0.3).item() < base


@settings(max_examples=100, deadline=None)
@given(sim_lists, st.floats(0.1, 1.0), st.floats(0.05, 1.0))
def test_temperature_scaling_invariance(sims, k, tau):
    sims = np.array(sims)
    labels = np.arange(len(sims)) % 3
    q, keys = keys_with_sims(sims)
    q2, keys2 = keys_with_sims(sims * k)
    a = ntcl_loss(Tensor(q), [1], keys, labels, tau).item()
    b = ntcl_loss(Tensor(q2), [1], keys2, labels, tau * k).item()
    assert a == pytest.approx(b, rel=1e-9, abs=1e-12)


def test_infonce_no_negatives():
    q = np.array([0.6, 0.8])
    assert infonce_loss(Tensor(q), q, np.zeros((0, 2)), 0.07).item() == pytest.approx(0.0, abs=1e-12)


def test_infonce_symmetric_pair():
    q, keys = keys_with_sims([0.2, 0.2])
    assert infonce_loss(Tensor(q), keys[0], keys[1:], 0.1).item() == pytest.approx(math.log(2), abs=1e-12)


def test_infonce_equals_ntcl_with_single_positive(rng):
    sims = rng.uniform(-1, 1, 6)
    q, keys = keys_with_sims(sims)
    labels = np.array([2, 0, 1, 0, 1, 3])
    a = infonce_loss(Tensor(q), keys[0], keys[1:], 0.2).item()
    b = ntcl_loss(Tensor(q), [2], keys, labels, 0.2).item()
    assert a == pytest.approx(b, rel=1e-12)


def test_scl_two_samples():
    e = np.array([[1.0, 0.0], [0.6, 0.8]])
    assert scl_batch_loss(Tensor(e), [0, 1], 0.1).item() == 0.0
    assert scl_batch_loss(Tensor(e), [4, 4], 0.1).item() == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError):
        scl_batch_loss(Tensor(e[:1]), [0], 0.1)


def test_scl_four_point_hand_computed():
    e = np.array([[1.0, 0.0], [0.0, 1.0], [0.6, 0.8], [-0.8, 0.6]])
    labels = [0, 1, 0, 1]
    tau = 0.5
    sims = e @ e.T
    total = 0.0
    for i in range(4):
        pos = sum(math.exp(sims[i, j] / tau) for j in range(4) if j != i and labels[j] == labels[i])
        allm = sum(math.exp(sims[i, j] / tau) for j in range(4) if j != i)
        total += -math.log(pos / allm)
    assert scl_batch_loss(Tensor(e), labels, tau).item() == pytest.approx(total / 4, abs=1e-9)


def scl_reference(anchors, keys, labels, tau):
    sims = anchors @ keys.T / tau
    B = len(labels)
    total, n = 0.0, 0
    for i in range(B):
        others = [j for j in range(B) if j != i]
        pos = [j for j in others if labels[j] == labels[i]]
        if not pos:
            continue
        total += np.log(np.exp(sims[i, others]).sum()) - np.log(np.exp(sims[i, pos]).sum())
        n += 1
    return total / n


def test_scl_grad_keys_constant(rng):
    labels = np.array([0, 1, 0, 1, 2])
    x0 = rng.normal(size=(5, 4))
    norm = lambda a: a / np.linalg.norm(a, axis=1, keepdims=True)
    keys = norm(x0)
    leaf = Tensor(x0, requires_grad=True)
    loss = scl_batch_loss(ad.l2_normalize(leaf, axis=1), labels, 0.3)
    assert loss.item() == pytest.approx(scl_reference(keys, keys, labels, 0.3), rel=1e-12)
    loss.backward()
    num = numeric_grad(lambda a: scl_reference(norm(a), keys, labels, 0.3), x0)
    assert rel_err(leaf.grad, num) < 1e-4
