import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from snscl.queue import MomentumQueue


def unit(rng, d):
    v = rng.normal(size=d)
    return v / np.linalg.norm(v)


def test_new_queue():
    q = MomentumQueue(10, 32, 8)
    np.testing.assert_array_equal(q.occupancy(), 0)
    assert q.total_capacity == 320
    assert q.positives(3).shape == (0, 8)


def test_bad_construction():
    with pytest.raises(ValueError):
        MomentumQueue(1, 4, 2)
    with pytest.raises(ValueError):
        MomentumQueue(3, 0, 2)


def test_weight_one_and_zero(rng):
    q = MomentumQueue(3, 4, 5)
    for _ in range(20):
        assert q.weighted_update(0, unit(rng, 5), 1.0, rng)
        assert not q.weighted_update(1, unit(rng, 5), 0.0, rng)
    assert q.occupancy().tolist() == [4, 0, 0]


def test_class_out_of_range(rng):
    q = MomentumQueue(3, 4, 5)
    with pytest.raises(IndexError):
        q.weighted_update(3, unit(rng, 5), 1.0, rng)


def test_insertion_rate():
    rng = np.random.default_rng(0)
    q = MomentumQueue(2, 1, 2)
    e = np.array([1.0, 0.0])
    hits = sum(q.weighted_update(0, e, 0.3, rng) for _ in range(10_000))
    assert abs(hits / 10_000 - 0.3) <= 0.02


def test_fifo_order(rng):
    q = MomentumQueue(2, 5, 3)
    items = [unit(rng, 3) for _ in range(8)]
    for v in items[:3]:
        q.push(1, v)
    np.testing.assert_allclose(q.positives(1), items[:3])
    for v in items[3:]:
        q.push(1, v)
    np.testing.assert_allclose(q.positives(1), items[3:])


def test_stored_vectors_unit_norm(rng):
    q = MomentumQueue(2, 4, 3)
    q.push(0, np.array([3.0, 4.0, 0.0]))
    np.testing.assert_allclose(np.linalg.norm(q.positives(0), axis=1), 1.0, atol=1e-12)


def test_negatives_two_classes(rng):
    q = MomentumQueue(2, 3, 2)
    for _ in range(2):
        q.push(1, unit(rng, 2))
    keys, tags = q.negatives(0)
    np.testing.assert_array_equal(keys, q.positives(1))
    np.testing.assert_array_equal(tags, 1)


def test_full_queue_negative_count(rng):
    q = MomentumQueue(10, 32, 4)
    for c in range(10):
        for _ in range(40):
            q.push(c, unit(rng, 4))
    for c in range(10):
        keys, tags = q.negatives(c)
        assert len(keys) == 32 * 9
        assert c not in tags


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 10_000)), max_size=60), st.integers(1, 6))
def test_replay_and_partition(ops, D):
    q = MomentumQueue(4, D, 3)
    log = {c: [] for c in range(4)}
    for c, s in ops:
        v = unit(np.random.default_rng(s), 3)
        q.push(c, v)
        log[c].append(v)
        all_keys, all_tags = q.snapshot()
        for k in range(4):
            pos = q.positives(k)
            neg, tags = q.negatives(k)
            assert len(pos) + len(neg) == len(all_keys)
            assert k not in tags
            np.testing.assert_allclose(pos, np.array(log[k][-D:]).reshape(-1, 3))
