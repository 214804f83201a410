"""Region bookkeeping for the staged (adaptive) booster.

A region is a set of active cells of a partition of ``[0, 1]^d``.  Two
families exist:

* :class:`RegionPartition` -- an axis-aligned grid anchored at 0 with
  half-open cells ``[i w, (i+1) w)``; the last cell along each axis is
  closed at 1.
* :class:`TreeRegionPartition` -- the nodes at one depth of a fixed
  random binary partition, used with binary-histogram learners.

Both expose ``labels(xs)`` (index of the active cell holding each row,
``-1`` outside the region), ``refine`` and ``subset``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import InvalidInputError, InvalidParameterError, InvalidRefinementError
from .learners import BinaryPartition, sample_binary_partition
from .rng import RngLike
from .transform import as_rows

__all__ = [
    "RegionPartition",
    "TreeRegionPartition",
    "initial_partition",
    "initial_tree_partition",
    "refine",
    "membership_mask",
]

_SNAP = 1e-9


def _ceil_snap(v: float) -> int:
    r = round(v)
    return int(r) if abs(v - r) < _SNAP else math.ceil(v)


def cells_per_axis(width: float) -> int:
    return max(1, _ceil_snap(1.0 / width))


def _axis_spans(width: float, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Smallest and largest float in [0, 1] mapped to each grid index.

    Grid indices are ``clip(floor(x / width), 0, k - 1)``, which is
    monotone in ``x``, so each cell is a contiguous float range.
    """
    idx = np.arange(k, dtype=float)
    x = idx * width
    for _ in range(64):
        high = np.floor(x / width) >= idx
        if not high[1:].any():
            break
        x[1:] = np.where(high[1:], np.nextafter(x[1:], -np.inf), x[1:])
    for _ in range(64):
        low = np.floor(x / width) < idx
        if not low.any():
            break
        x = np.where(low, np.nextafter(x, np.inf), x)
    lo = x
    lo[0] = 0.0
    hi = np.empty(k)
    hi[:-1] = np.nextafter(lo[1:], -np.inf)
    hi[-1] = 1.0
    return lo, hi


def _expand(codes, dim, k_from, k_to, map_lo, map_hi) -> np.ndarray:
    """Raveled cells of the ``k_to`` grid reached from cells of the ``k_from`` grid."""
    if codes.size == 0:
        return np.zeros(0, dtype=np.int64)
    idx = np.stack(np.unravel_index(codes, (k_from,) * dim), axis=1)
    lo = map_lo[idx]
    span = map_hi[idx] - lo
    mult = k_to ** np.arange(dim, dtype=np.int64)[::-1]
    out = []
    for offsets in np.ndindex(*(int(m) + 1 for m in span.max(axis=0))):
        off = np.asarray(offsets, dtype=np.int64)
        ok = np.all(off <= span, axis=1)
        out.append((lo[ok] + off) @ mult)
    return np.unique(np.concatenate(out))


@dataclass(frozen=True, eq=False)
class RegionPartition:
    """Active cells of the width-``cell_width`` grid on ``[0, 1]^d``.

    ``active`` holds raveled cell indices (sorted, unique).  When a
    refinement could not follow the previous cell boundaries the new
    cells overhang the old region; ``parent`` then clips the point set
    so regions stay nested.
    """

    dim: int
    cell_width: float
    active: np.ndarray
    parent: "RegionPartition | None" = None

    def __post_init__(self):
        if not 0 < self.cell_width:
            raise InvalidParameterError(f"cell_width must be positive, got {self.cell_width}")
        if self.cells_per_axis ** self.dim >= 1 << 62:
            raise InvalidParameterError("grid too fine to index")
        act = np.unique(np.asarray(self.active, dtype=np.int64).reshape(-1))
        if act.size and (act[0] < 0 or act[-1] >= self.cells_per_axis**self.dim):
            raise InvalidParameterError("active cell index out of range")
        act.setflags(write=False)
        object.__setattr__(self, "active", act)

    @property
    def cells_per_axis(self) -> int:
        return cells_per_axis(self.cell_width)

    @property
    def n_active(self) -> int:
        return int(self.active.size)

    @property
    def is_empty(self) -> bool:
        return self.active.size == 0

    def cell_tuples(self) -> list[tuple[int, ...]]:
        """Active cells as d-tuples of grid indices."""
        idx = np.unravel_index(self.active, (self.cells_per_axis,) * self.dim)
        return [tuple(int(a[i]) for a in idx) for i in range(self.active.size)]

    def cell_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Lower/upper corners of active cells (upper clipped at 1)."""
        idx = np.stack(np.unravel_index(self.active, (self.cells_per_axis,) * self.dim), axis=1)
        lo = idx * self.cell_width
        hi = np.minimum((idx + 1) * self.cell_width, 1.0)
        return lo, hi

    def grid_codes(self, xs) -> np.ndarray:
        """Raveled grid index of every row, whether active or not."""
        x = as_rows(xs, self.dim)
        if x.shape[1] != self.dim:
            raise InvalidInputError(f"expected {self.dim} features, got {x.shape[1]}")
        k = self.cells_per_axis
        w = self.cell_width
        idx = np.floor(x / w).astype(np.int64)
        # x / w can round across an edge; settle on the corners cell_bounds reports
        idx -= x < idx * w
        idx += x >= (idx + 1) * w
        idx = np.clip(idx, 0, k - 1)
        mult = k ** np.arange(self.dim, dtype=np.int64)[::-1]
        return idx @ mult

    def labels(self, xs) -> np.ndarray:
        """Position in ``active`` of each row's cell; -1 outside the region."""
        codes = self.grid_codes(xs)
        out = np.full(codes.shape[0], -1, dtype=np.int64)
        if self.active.size:
            pos = np.minimum(np.searchsorted(self.active, codes), self.active.size - 1)
            hit = self.active[pos] == codes
            out[hit] = pos[hit]
        if self.parent is not None:
            out[~self.parent.contains(xs)] = -1
        return out

    def contains(self, xs) -> np.ndarray:
        return self.labels(xs) >= 0

    def subset(self, positions) -> "RegionPartition":
        """Keep the active cells at the given positions of ``active``."""
        return RegionPartition(self.dim, self.cell_width, self.active[np.asarray(positions, dtype=np.int64)], self.parent)

    def refine(self, new_width: float) -> "RegionPartition":
        """Re-grid the region at a finer width.

        The result holds every new cell that contains a point of the
        region.  When the new cells overhang the region (``new_width`` does
        not divide the old width) the old partition becomes ``parent`` and
        clips membership, so regions stay nested.
        """
        if not new_width > 0:
            raise InvalidParameterError(f"new_width must be positive, got {new_width}")
        w = self.cell_width
        if new_width > w * (1 + _SNAP):
            raise InvalidRefinementError(f"cannot refine width {w} to coarser {new_width}")
        new_width = float(new_width)
        k_old, k_new = self.cells_per_axis, cells_per_axis(new_width)
        old_lo, old_hi = _axis_spans(w, k_old)
        to_new_lo = np.clip(np.floor(old_lo / new_width).astype(np.int64), 0, k_new - 1)
        to_new_hi = np.clip(np.floor(old_hi / new_width).astype(np.int64), 0, k_new - 1)
        new_codes = _expand(self.active, self.dim, k_old, k_new, to_new_lo, to_new_hi)
        # overhang test: does any new cell reach an old cell outside the region?
        new_lo, new_hi = _axis_spans(new_width, k_new)
        to_old_lo = np.clip(np.floor(new_lo / w).astype(np.int64), 0, k_old - 1)
        to_old_hi = np.clip(np.floor(new_hi / w).astype(np.int64), 0, k_old - 1)
        touched = _expand(new_codes, self.dim, k_new, k_old, to_old_lo, to_old_hi)
        overhang = not np.all(np.isin(touched, self.active))
        parent = self if overhang else self.parent
        return RegionPartition(self.dim, new_width, new_codes, parent)

    def volumes(self) -> np.ndarray:
        """Volumes of active cells, ignoring any parent clipping."""
        lo, hi = self.cell_bounds()
        return np.prod(hi - lo, axis=1)

    def boxes(self) -> tuple[np.ndarray, np.ndarray]:
        """Corners of the disjoint boxes making up the region's point set.

        Without a parent these are the active cells.  Otherwise each cell
        is intersected with the parent's boxes, so an overhanging cell may
        come back as several pieces.
        """
        lo, hi = self.cell_bounds()
        if self.parent is None:
            return lo, hi
        plo, phi = self.parent.boxes()
        a = np.maximum(lo[:, None, :], plo[None])
        b = np.minimum(hi[:, None, :], phi[None])
        keep = np.all(a < b, axis=2)
        return a[keep], b[keep]

    def describe_cells(self) -> list[list[list[float]]]:
        """The region as boxes, each a list of ``[lo, hi)`` intervals per axis."""
        lo, hi = self.boxes()
        return [[[float(a), float(b)] for a, b in zip(l_, h_)] for l_, h_ in zip(lo, hi)]


def initial_partition(d: int, h0: float) -> RegionPartition:
    """All cells of the width-``h0`` grid on ``[0, 1]^d``."""
    if not 0 < h0 <= 1:
        raise InvalidParameterError(f"h0 must lie in (0, 1], got {h0}")
    k = cells_per_axis(h0)
    return RegionPartition(int(d), float(h0), np.arange(k**d, dtype=np.int64))


def refine(r, new_size):
    return r.refine(new_size)


def membership_mask(r, xs) -> np.ndarray:
    return r.contains(xs)


@dataclass(frozen=True, eq=False)
class TreeRegionPartition:
    """Active nodes at one depth of a fixed random binary partition.

    ``active`` holds heap indices of nodes at level ``depth``.  Nested
    regions are exact because every refinement takes descendants.
    """

    tree: BinaryPartition
    depth: int
    active: np.ndarray

    def __post_init__(self):
        if not 0 <= self.depth <= self.tree.depth:
            raise InvalidParameterError(f"depth must lie in [0, {self.tree.depth}]")
        act = np.unique(np.asarray(self.active, dtype=np.int64).reshape(-1))
        first = 2**self.depth - 1
        if act.size and (act[0] < first or act[-1] >= 2 * first + 1):
            raise InvalidParameterError("active node is not on the partition level")
        act.setflags(write=False)
        object.__setattr__(self, "active", act)

    @property
    def dim(self) -> int:
        return self.tree.dim

    @property
    def cell_width(self) -> float:
        return 2.0 ** (-self.depth)

    @property
    def n_active(self) -> int:
        return int(self.active.size)

    @property
    def is_empty(self) -> bool:
        return self.active.size == 0

    def labels(self, xs) -> np.ndarray:
        nodes = self.tree.nodes_at(xs, self.depth)
        out = np.full(nodes.shape[0], -1, dtype=np.int64)
        if self.active.size:
            pos = np.minimum(np.searchsorted(self.active, nodes), self.active.size - 1)
            hit = self.active[pos] == nodes
            out[hit] = pos[hit]
        return out

    def contains(self, xs) -> np.ndarray:
        return self.labels(xs) >= 0

    def subset(self, positions) -> "TreeRegionPartition":
        return TreeRegionPartition(self.tree, self.depth, self.active[np.asarray(positions, dtype=np.int64)])

    def refine(self, new_depth: int) -> "TreeRegionPartition":
        """Descend to level ``new_depth`` (no-op for shallower levels)."""
        new_depth = min(max(int(new_depth), self.depth), self.tree.depth)
        nodes = self.active
        for _ in range(new_depth - self.depth):
            nodes = np.stack([2 * nodes + 1, 2 * nodes + 2], axis=1).reshape(-1)
        return TreeRegionPartition(self.tree, new_depth, nodes)

    def cell_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.tree.node_bounds()
        return lo[self.active], hi[self.active]

    def boxes(self) -> tuple[np.ndarray, np.ndarray]:
        # tree cells nest exactly, so the cells are the point set
        return self.cell_bounds()

    def volumes(self) -> np.ndarray:
        lo, hi = self.cell_bounds()
        return np.prod(hi - lo, axis=1)

    def describe_cells(self) -> list[list[list[float]]]:
        lo, hi = self.cell_bounds()
        return [[[float(a), float(b)] for a, b in zip(l_, h_)] for l_, h_ in zip(lo, hi)]


def initial_tree_partition(d: int, depth: int, max_depth: int, rng: RngLike, split_rule: str = "uniform") -> TreeRegionPartition:
    """All level-``depth`` nodes of a fresh random tree of depth ``max_depth``."""
    if not 0 <= depth <= max_depth:
        raise InvalidParameterError("need 0 <= depth <= max_depth")
    tree = sample_binary_partition(d, max_depth, rng, split_rule)
    first = 2**depth - 1
    return TreeRegionPartition(tree, int(depth), np.arange(first, 2 * first + 1))
