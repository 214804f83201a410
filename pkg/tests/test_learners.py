"""Histogram-transform and binary-histogram regressors."""

import math
from collections import defaultdict

import numpy as np
import pytest

from htboost.exceptions import InvalidInputError, InvalidParameterError
from htboost.learners import (
    BinaryPartition,
    fit_binary,
    fit_ht,
    predict_ht,
    sample_binary_partition,
)
from htboost.rng import RngStream
from htboost.transform import HistogramTransform, bin_key, sample_transform


def _identity(h, d=1, b=None):
    return HistogramTransform(np.eye(d), h, np.zeros(d) if b is None else b)


def _group_mean_clip(t, xs, ys, clip):
    # plain-python oracle: dictionary of bins, exact-ish sums, then clip
    groups = defaultdict(list)
    for x, y in zip(xs, ys):
        groups[bin_key(t, x)].append(float(y))
    return {k: min(max(math.fsum(v) / len(v), -clip), clip) for k, v in groups.items()}


# --- fit_ht ---------------------------------------------------------------------

def test_fit_ht_worked_example():
    m = fit_ht([[0.1], [0.2], [0.9]], [1.0, 3.0, 10.0], _identity(0.5), clip_bound=5.0)
    assert m.value_map() == {(0,): 2.0, (1,): 5.0}
    assert predict_ht(m, 0.15) == 2.0
    assert predict_ht(m, 1.0) == 0.0  # bin (2,) holds no data


def test_fit_ht_constant_target():
    gen = RngStream(1).generator()
    x = gen.random((300, 2))
    t = sample_transform(0.1, 2, gen)
    m = fit_ht(x, np.full(300, -0.7), t)
    assert set(m.value_map().values()) == {-0.7}
    assert np.max(np.abs(m.predict(x) + 0.7)) == 0.0


def test_fit_ht_single_point():
    m = fit_ht([[0.3, 0.4]], [0.25], sample_transform(0.2, 2, RngStream(3)))
    assert m.predict(np.array([[0.3, 0.4]]))[0] == 0.25


def test_fit_ht_default_clip_is_max_abs():
    m = fit_ht([[0.1], [0.6]], [2.0, -3.0], _identity(0.5))
    assert m.clip_bound == 3.0


def test_fit_ht_empty():
    with pytest.raises(InvalidInputError):
        fit_ht(np.zeros((0, 1)), np.zeros(0), _identity(0.5))


def test_fit_ht_negative_clip():
    with pytest.raises(InvalidParameterError):
        fit_ht([[0.1]], [1.0], _identity(0.5), clip_bound=-1.0)


@pytest.mark.parametrize("d,h", [(1, 0.1), (1, 0.003), (2, 0.2), (2, 0.01), (3, 0.05), (8, 0.001)])
def test_fit_ht_matches_oracle(d, h):
    # covers the dense table, sorted-code and hashed-key lookup paths
    root = RngStream(2024).child(d, int(1 / h))
    for i in range(17):
        gen = root.child(i).generator()
        n = int(gen.integers(1, 201))
        x = gen.random((n, d))
        y = gen.normal(0, 1, n) * 3
        clip = float(gen.uniform(0.5, 4))
        t = sample_transform(h, d, gen)
        m = fit_ht(x, y, t, clip)
        expect = _group_mean_clip(t, x, y, clip)
        got = m.value_map()
        assert got.keys() == expect.keys()
        assert max(abs(got[k] - expect[k]) for k in expect) <= 1e-12
        pred = m.predict(x)
        assert np.max(np.abs(pred - [expect[bin_key(t, xi)] for xi in x])) <= 1e-12
        q = gen.random((200, d))
        pq = m.predict(q)
        assert np.all(np.abs(pq) <= clip)
        assert np.max(np.abs(pq - [expect.get(bin_key(t, qi), 0.0) for qi in q])) <= 1e-12


# --- binary partitions ----------------------------------------------------------

def test_binary_depth_zero_is_one_leaf():
    p = sample_binary_partition(3, 0, RngStream(0))
    assert p.n_leaves == 1
    lo, hi = p.leaf_bounds()
    assert np.array_equal(lo, np.zeros((1, 3))) and np.array_equal(hi, np.ones((1, 3)))


def test_binary_leaf_volumes_sum_to_one():
    p = sample_binary_partition(2, 3, RngStream(5))
    lo, hi = p.leaf_bounds()
    assert p.n_leaves == 8
    assert abs(np.prod(hi - lo, axis=1).sum() - 1) < 1e-12


def test_binary_partition_is_deterministic():
    a = sample_binary_partition(4, 5, RngStream(9))
    b = sample_binary_partition(4, 5, RngStream(9))
    assert np.array_equal(a.features, b.features) and np.array_equal(a.thresholds, b.thresholds)


@pytest.mark.parametrize("rule", ["uniform", "midpoint"])
def test_binary_thresholds_interior(rule):
    p = sample_binary_partition(3, 6, RngStream(1), split_rule=rule)
    lo, hi = p.node_bounds()
    for i in range(2**p.depth - 1):
        f = p.features[i]
        assert lo[i, f] < p.thresholds[i] < hi[i, f]
        if rule == "midpoint":
            assert p.thresholds[i] == 0.5 * (lo[i, f] + hi[i, f])


def test_binary_each_point_in_exactly_one_leaf():
    gen = RngStream(4).generator()
    p = sample_binary_partition(3, 5, gen)
    lo, hi = p.leaf_bounds()
    x = gen.random((10000, 3))
    inside = np.all((x[:, None, :] >= lo[None]) & ((x[:, None, :] < hi[None]) | (hi[None] == 1.0)), axis=2)
    assert np.all(inside.sum(axis=1) == 1)
    assert np.array_equal(np.argmax(inside, axis=1), p.leaf_ids(x))


def test_fit_binary_depth_zero_is_global_mean():
    gen = RngStream(6).generator()
    x, y = gen.random((50, 2)), gen.normal(size=50)
    m = fit_binary(x, y, sample_binary_partition(2, 0, gen))
    assert np.allclose(m.predict(gen.random((10, 2))), y.mean(), rtol=0, atol=1e-15)


def test_fit_binary_forced_split():
    p = BinaryPartition(2, 1, [0], [0.5])
    x = np.array([[0.1, 0.9], [0.4, 0.2], [0.7, 0.5], [0.9, 0.1], [0.6, 0.6]])
    y = np.array([1.0, 2.0, 3.0, 5.0, 10.0])
    m = fit_binary(x, y, p)
    assert m.value_map() == {0: 1.5, 1: 6.0}


def test_fit_binary_empty_leaf_predicts_zero():
    p = BinaryPartition(1, 1, [0], [0.5])
    m = fit_binary([[0.1], [0.2]], [4.0, 6.0], p)
    assert m.predict(np.array([[0.8]]))[0] == 0.0
    assert not m.occupied[1]
