"""Piecewise-constant base regressors.

Two partition families are supported:

* :class:`~htboost.transform.HistogramTransform` -- randomly rotated and
  shifted equal-width grids, fitted by :func:`fit_ht`;
* :class:`BinaryPartition` -- purely random recursive binary splits of
  ``[0, 1]^d`` ("binary histograms"), fitted by :func:`fit_binary`.

Both assign every nonempty cell the clipped mean of its training targets
and predict ``default_value`` (0) in cells that saw no data.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .exceptions import InvalidInputError, InvalidParameterError
from .rng import RngLike, as_generator
from .transform import HistogramTransform, as_rows, is_single_point, sample_transform

__all__ = [
    "HTRegressor",
    "BinaryPartition",
    "BinaryHistRegressor",
    "HTSampler",
    "BinarySampler",
    "fit_ht",
    "predict_ht",
    "sample_binary_partition",
    "fit_binary",
    "fit_partition",
    "make_sampler",
]

SPLIT_RULES = ("uniform", "midpoint")

# transforms whose packed key range is at most this long use a dense lookup table
_DENSE_MAX = 2048


def _check_xy(xs, ys):
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float).reshape(-1)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise InvalidInputError(f"xs {x.shape} and ys {y.shape} do not align")
    if x.shape[0] == 0:
        raise InvalidInputError("empty dataset")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise InvalidInputError("non-finite values in data")
    return x, y


def _resolve_clip(clip_bound, y):
    if clip_bound is None:
        return float(np.max(np.abs(y)))
    if clip_bound < 0:
        raise InvalidParameterError(f"clip_bound must be nonnegative, got {clip_bound}")
    return float(clip_bound)


def _cell_means(cell_ids, y, clip_bound):
    """Group ``y`` by integer cell id; return (ids, clipped means, inverse)."""
    ids, inverse = np.unique(cell_ids, return_inverse=True)
    counts = np.bincount(inverse).astype(float)
    means = np.bincount(inverse, weights=y) / counts
    # second pass removes the rounding error of the first (corrected two-pass mean)
    means += np.bincount(inverse, weights=y - means[inverse]) / counts
    return ids, np.clip(means, -clip_bound, clip_bound), inverse


@dataclass(frozen=True, eq=False)
class HTRegressor:
    """Clipped cell means over the bins of one histogram transform.

    ``keys`` holds the integer bin indices of every nonempty bin (one row
    per bin) and ``values`` the matching constants.
    """

    transform: HistogramTransform
    keys: np.ndarray
    values: np.ndarray
    clip_bound: float
    default_value: float = 0.0

    def __post_init__(self):
        keys = np.asarray(self.keys, dtype=np.int64).reshape(-1, self.transform.dim)
        values = np.asarray(self.values, dtype=float).reshape(-1)
        dense = None
        if self.transform.packable:
            lo, sizes, mult = self.transform._radix
            codes = (keys - lo) @ mult
            order = np.argsort(codes, kind="stable")
            lookup = codes[order]
            keys, values = keys[order], values[order]
            total = int(np.prod(sizes))
            if total <= _DENSE_MAX:
                # slot ``total`` catches out-of-range codes (-1)
                dense = np.full(total + 1, float(self.default_value))
                dense[lookup] = values
        else:
            lookup = {row.tobytes(): i for i, row in enumerate(keys)}
        object.__setattr__(self, "keys", keys)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "_lookup", lookup)
        object.__setattr__(self, "_dense", dense)

    @property
    def n_cells(self) -> int:
        return self.values.shape[0]

    def value_map(self) -> dict:
        """Bin key tuple -> fitted constant."""
        return {tuple(int(k) for k in row): float(v) for row, v in zip(self.keys, self.values)}

    def predict(self, xs) -> np.ndarray:
        x = as_rows(xs, self.transform.dim)
        out = np.full(x.shape[0], self.default_value)
        if self._dense is not None:
            return self._dense[self.transform.codes(x)]
        if self.transform.packable:
            codes = self.transform.codes(x)
            lookup = self._lookup
            if lookup.size == 0:
                return out
            idx = np.minimum(np.searchsorted(lookup, codes), lookup.size - 1)
            hit = lookup[idx] == codes
            out[hit] = self.values[idx[hit]]
        else:
            for i, row in enumerate(self.transform.bin_keys(x)):
                j = self._lookup.get(row.tobytes())
                if j is not None:
                    out[i] = self.values[j]
        return out


def _fit_ht(xs, ys, t: HistogramTransform, clip_bound):
    if t.packable:
        codes = t.codes(xs)
        if np.any(codes < 0):
            raise InvalidInputError("training points lie outside the unit cube")
        total = int(np.prod(t._radix[1]))
        if total <= _DENSE_MAX:
            # codes index a short dense range: group with bincount, no sort
            counts = np.bincount(codes, minlength=total).astype(float)
            ids = np.flatnonzero(counts)
            sums = np.bincount(codes, weights=ys, minlength=total)
            full = np.zeros(total)
            full[ids] = sums[ids] / counts[ids]
            full[ids] += np.bincount(codes, weights=ys - full[codes], minlength=total)[ids] / counts[ids]
            full = np.clip(full, -clip_bound, clip_bound)
            means, fitted = full[ids], full[codes]
            model = HTRegressor(t, t.decode(ids), means, clip_bound)
            return model, fitted
        ids, means, inverse = _cell_means(codes, ys, clip_bound)
        keys = t.decode(ids)
    else:
        keys_all = t.bin_keys(xs)
        keys, inverse = np.unique(keys_all, axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
        _, means, _ = _cell_means(inverse, ys, clip_bound)
    model = HTRegressor(t, keys, means, clip_bound)
    return model, means[inverse]


def fit_ht(xs, ys, t: HistogramTransform, clip_bound: float | None = None) -> HTRegressor:
    """Fit clipped per-bin means of ``ys`` on the bins of ``t``.

    ``clip_bound`` defaults to ``max |ys|``.
    """
    x, y = _check_xy(xs, ys)
    return _fit_ht(x, y, t, _resolve_clip(clip_bound, y))[0]


def predict_ht(m: HTRegressor, x) -> np.ndarray | float:
    """Predict at one point (returns a float) or at the rows of a matrix."""
    out = m.predict(x)
    return float(out[0]) if is_single_point(x, m.transform.dim) else out


@dataclass(frozen=True, eq=False)
class BinaryPartition:
    """Complete binary tree of axis-aligned splits over ``[0, 1]^d``.

    Nodes use heap numbering (root 0, children ``2i+1`` and ``2i+2``).
    ``features[i]`` and ``thresholds[i]`` describe internal node ``i``;
    points with ``x[f] < threshold`` go left.  Leaves are numbered
    ``0 .. 2**depth - 1`` from left to right.
    """

    dim: int
    depth: int
    features: np.ndarray
    thresholds: np.ndarray

    def __post_init__(self):
        n_internal = 2**self.depth - 1
        f = np.asarray(self.features, dtype=np.int64).reshape(-1)
        t = np.asarray(self.thresholds, dtype=float).reshape(-1)
        if f.shape[0] != n_internal or t.shape[0] != n_internal:
            raise InvalidParameterError(f"depth {self.depth} needs {n_internal} split records")
        f.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "features", f)
        object.__setattr__(self, "thresholds", t)

    @property
    def n_leaves(self) -> int:
        return 2**self.depth

    def nodes_at(self, xs, depth: int | None = None) -> np.ndarray:
        """Heap index of the depth-``depth`` ancestor cell of each row."""
        depth = self.depth if depth is None else depth
        x = as_rows(xs, self.dim)
        node = np.zeros(x.shape[0], dtype=np.int64)
        rows = np.arange(x.shape[0])
        for _ in range(depth):
            go_right = x[rows, self.features[node]] >= self.thresholds[node]
            node = 2 * node + 1 + go_right
        return node

    def leaf_ids(self, xs) -> np.ndarray:
        return self.nodes_at(xs) - (2**self.depth - 1)

    def node_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Lower and upper corners of every node cell, heap-indexed."""
        n_nodes = 2 ** (self.depth + 1) - 1
        lo = np.zeros((n_nodes, self.dim))
        hi = np.ones((n_nodes, self.dim))
        for i in range(2**self.depth - 1):
            f, t = self.features[i], self.thresholds[i]
            for c in (2 * i + 1, 2 * i + 2):
                lo[c], hi[c] = lo[i], hi[i]
            hi[2 * i + 1, f] = t
            lo[2 * i + 2, f] = t
        return lo, hi

    def leaf_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.node_bounds()
        first = 2**self.depth - 1
        return lo[first:], hi[first:]


def sample_binary_partition(d: int, depth: int, rng: RngLike, split_rule: str = "uniform") -> BinaryPartition:
    """Grow a purely random binary partition of ``[0, 1]^d``.

    Every node splits a coordinate chosen uniformly at random.  With
    ``split_rule="uniform"`` the threshold is uniform inside the node's
    extent along that coordinate; ``"midpoint"`` halves the extent.
    """
    if int(d) != d or d < 1:
        raise InvalidParameterError(f"dimension must be a positive integer, got {d}")
    if int(depth) != depth or depth < 0:
        raise InvalidParameterError(f"depth must be a nonnegative integer, got {depth}")
    if split_rule not in SPLIT_RULES:
        raise InvalidParameterError(f"split_rule must be one of {SPLIT_RULES}")
    d, depth = int(d), int(depth)
    gen = as_generator(rng)
    features = np.empty(2**depth - 1, dtype=np.int64)
    thresholds = np.empty(2**depth - 1)
    lo = np.zeros((1, d))
    hi = np.ones((1, d))
    for level in range(depth):
        count = 2**level
        first = count - 1
        f = gen.integers(d, size=count)
        rows = np.arange(count)
        a, b = lo[rows, f], hi[rows, f]
        if split_rule == "uniform":
            u = gen.random(count)
            # U[0, 1) can return exactly 0; the threshold must be interior
            u = np.where(u == 0.0, 0.5, u)
            t = a + u * (b - a)
        else:
            t = 0.5 * (a + b)
        features[first:first + count] = f
        thresholds[first:first + count] = t
        new_lo = np.repeat(lo, 2, axis=0)
        new_hi = np.repeat(hi, 2, axis=0)
        new_hi[2 * rows, f] = t
        new_lo[2 * rows + 1, f] = t
        lo, hi = new_lo, new_hi
    return BinaryPartition(d, depth, features, thresholds)


@dataclass(frozen=True, eq=False)
class BinaryHistRegressor:
    """Clipped leaf means over a :class:`BinaryPartition`.

    ``values`` is dense over all ``2**depth`` leaves; ``occupied`` marks
    leaves that held training data (the others carry ``default_value``).
    """

    partition: BinaryPartition
    values: np.ndarray
    occupied: np.ndarray
    clip_bound: float
    default_value: float = 0.0

    def value_map(self) -> dict:
        return {int(i): float(self.values[i]) for i in np.flatnonzero(self.occupied)}

    def predict(self, xs) -> np.ndarray:
        return self.values[self.partition.leaf_ids(xs)]


def _fit_binary(xs, ys, partition: BinaryPartition, clip_bound):
    leaves = partition.leaf_ids(xs)
    ids, means, inverse = _cell_means(leaves, ys, clip_bound)
    values = np.zeros(partition.n_leaves)
    occupied = np.zeros(partition.n_leaves, dtype=bool)
    values[ids] = means
    occupied[ids] = True
    return BinaryHistRegressor(partition, values, occupied, clip_bound), means[inverse]


def fit_binary(xs, ys, partition: BinaryPartition, clip_bound: float | None = None) -> BinaryHistRegressor:
    """Fit clipped per-leaf means of ``ys`` on a binary partition."""
    x, y = _check_xy(xs, ys)
    if x.shape[1] != partition.dim:
        raise InvalidInputError(f"expected {partition.dim} features, got {x.shape[1]}")
    return _fit_binary(x, y, partition, _resolve_clip(clip_bound, y))[0]


Partition = Union[HistogramTransform, BinaryPartition]
BaseRegressor = Union[HTRegressor, BinaryHistRegressor]


def fit_partition(xs, ys, partition: Partition, clip_bound: float):
    """Fit on an already validated sample; returns (model, in-sample fit)."""
    if isinstance(partition, HistogramTransform):
        return _fit_ht(xs, ys, partition, clip_bound)
    return _fit_binary(xs, ys, partition, clip_bound)


@dataclass(frozen=True)
class HTSampler:
    """Draws histogram transforms with a fixed bin width."""

    bin_width: float

    def __post_init__(self):
        if not self.bin_width > 0:
            raise InvalidParameterError(f"bin_width must be positive, got {self.bin_width}")

    @property
    def size(self) -> float:
        return self.bin_width

    def __call__(self, d: int, rng: RngLike) -> HistogramTransform:
        return sample_transform(self.bin_width, d, rng)


@dataclass(frozen=True)
class BinarySampler:
    """Draws random binary partitions of a fixed depth."""

    depth: int
    split_rule: str = "uniform"

    def __post_init__(self):
        if int(self.depth) != self.depth or self.depth < 0:
            raise InvalidParameterError(f"depth must be a nonnegative integer, got {self.depth}")
        if self.split_rule not in SPLIT_RULES:
            raise InvalidParameterError(f"split_rule must be one of {SPLIT_RULES}")

    @property
    def size(self) -> float:
        # coarseness on the bin-width scale: depth p behaves like h = 2**(-p)
        return 2.0 ** (-self.depth)

    def __call__(self, d: int, rng: RngLike) -> BinaryPartition:
        return sample_binary_partition(d, self.depth, rng, self.split_rule)


def make_sampler(bin_width: float | None = None, depth: int | None = None, split_rule: str = "uniform"):
    """Build a sampler from exactly one of ``bin_width`` or ``depth``."""
    if (bin_width is None) == (depth is None):
        raise InvalidParameterError("give exactly one of bin_width or depth")
    if bin_width is not None:
        return HTSampler(float(bin_width))
    return BinarySampler(int(depth), split_rule)
