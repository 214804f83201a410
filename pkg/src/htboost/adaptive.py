"""Adaptive boosted histogram transforms (ABHT).

Training proceeds in stages.  Stage ``l`` works on a region ``X_l`` of
the domain (all of ``[0, 1]^d`` at first):

1. every candidate ``(h, rho, T)`` is boosted on the training residuals
   that fall inside ``X_l``;
2. each cell of ``X_l`` picks the candidate with the lowest validation
   MSE on its own validation points; ``h*`` is the largest bin width
   picked by any cell;
3. the stage commits the boosted model at ``h*`` together with the
   ``(rho, T)`` that validates best on the cells that chose ``h*``;
4. ``X_l`` is re-gridded at ``h*``; cells whose own best bin width is
   ``h*`` (or that hold too few validation points to judge) are frozen
   ("early stopped") and the rest becomes ``X_{l+1}``;
5. residuals are refreshed against the cumulative model and the bin width
   grid is cut to ``{h <= h*}``.

The cumulative model is ``c_1 = f_1`` and ``c_l = s * c_{l-1} + f_l``
with inter-stage shrinkage ``s``.  A point is predicted with ``c_l`` for
the stage ``l`` at which its cell was frozen.

The same code runs with binary-histogram learners: depths replace bin
widths (a depth ``p`` counts as bin width ``2**-p`` for ordering) and the
region cells are nodes of a fixed random binary tree.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from .boosting import BHTModel, fit_bht
from .exceptions import InvalidInputError, InvalidParameterError, OutOfDomainError
from .learners import BinarySampler, HTSampler, _check_xy
from .regions import TreeRegionPartition, initial_partition, initial_tree_partition
from .rng import RngLike, RngStream
from .transform import as_rows, is_single_point

__all__ = ["StageRecord", "ABHTModel", "fit_abht", "predict_abht", "candidate_stream"]

STOP_BEST = 1
STOP_FEW_POINTS = 2


def candidate_stream(rng: RngStream, stage: int, size_index: int, rate_index: int) -> RngStream:
    """Stream used for the candidate fit ``(size_index, rate_index)`` of a stage."""
    return rng.child(stage, size_index, rate_index)


@dataclass(frozen=True, eq=False)
class StageRecord:
    """Everything decided in one stage.

    Attributes
    ----------
    stage : int
        1-based stage index.
    sampler : HTSampler or BinarySampler
        Learner family at the chosen bin width (or depth).
    n_iters, learning_rate
        Chosen ``T`` and ``rho``.
    boosted : BHTModel
        Committed stage model ``f_l`` (fit on residuals inside ``working``).
    working : RegionPartition or TreeRegionPartition
        The stage region ``X_l`` with the cells used for the first pass.
    refined : same type
        ``X_l`` re-gridded at the chosen bin width.
    stopped : same type
        Frozen cells (a subset of ``refined``).
    cell_choice : ndarray
        Best bin width of every ``working`` cell (NaN when the cell had
        too few validation points).
    refined_choice : ndarray
        Best bin width of every ``refined`` cell (NaN likewise).
    stop_reason : ndarray
        For each ``refined`` cell: 0 kept, 1 best width equals the chosen
        one, 2 too few validation points.
    """

    stage: int
    sampler: object
    n_iters: int
    learning_rate: float
    boosted: BHTModel
    working: object
    refined: object
    stopped: object
    cell_choice: np.ndarray
    refined_choice: np.ndarray
    stop_reason: np.ndarray
    val_mse: float = float("nan")

    @property
    def bin_width(self) -> float:
        return self.sampler.size

    @property
    def size_param(self):
        """The bin width, or the depth for binary histograms."""
        if isinstance(self.sampler, HTSampler):
            return self.sampler.bin_width
        return self.sampler.depth


@dataclass(frozen=True, eq=False)
class ABHTModel:
    """Fitted staged booster.

    ``stages[l].stopped`` are pairwise disjoint; points outside all of
    them belong to the last stage.
    """

    stages: tuple
    shrinkage: float
    dim: int
    clip_bound: float | None = None
    used_training_fallback: bool = False
    final_working: object = None

    @property
    def n_stages(self) -> int:
        return len(self.stages)

    def stage_assignment(self, xs) -> np.ndarray:
        """0-based index of the stage whose model predicts each row."""
        x = as_rows(xs, self.dim)
        out = np.full(x.shape[0], self.n_stages - 1, dtype=np.int64)
        undecided = np.ones(x.shape[0], dtype=bool)
        for l, rec in enumerate(self.stages[:-1]):
            if not undecided.any():
                break
            hit = np.zeros(x.shape[0], dtype=bool)
            hit[undecided] = rec.stopped.contains(x[undecided])
            out[hit] = l
            undecided &= ~hit
        return out

    def cumulative_predict(self, xs, upto: int | None = None) -> np.ndarray:
        """Cumulative model ``c_l`` for every stage, shape ``(L, n)``."""
        x = as_rows(xs, self.dim)
        upto = self.n_stages if upto is None else upto
        out = np.zeros((upto, x.shape[0]))
        prev = np.zeros(x.shape[0])
        for l in range(upto):
            prev = self.shrinkage * prev + self.stages[l].boosted.predict(x) if l else self.stages[0].boosted.predict(x)
            out[l] = prev
        return out

    def predict(self, xs) -> np.ndarray:
        x = as_rows(xs, self.dim)
        if np.any(x < 0) or np.any(x > 1):
            raise OutOfDomainError("query points must lie in [0, 1]^d")
        assign = self.stage_assignment(x)
        out = np.zeros(x.shape[0])
        prev = np.zeros(x.shape[0])
        need = np.ones(x.shape[0], dtype=bool)
        for l, rec in enumerate(self.stages):
            idx = np.flatnonzero(need)
            if idx.size == 0:
                break
            f = rec.boosted.predict(x[idx])
            prev[idx] = f if l == 0 else self.shrinkage * prev[idx] + f
            done = assign[idx] == l
            out[idx[done]] = prev[idx[done]]
            need[idx[done]] = False
        return out

    def truncate(self, n_stages: int) -> "ABHTModel":
        """The model as it stood after ``n_stages`` stages."""
        n = max(1, min(int(n_stages), self.n_stages))
        return replace(self, stages=self.stages[:n])


def _unpack(ds, name):
    if ds is None:
        return None, None
    if hasattr(ds, "xs"):
        xs, ys = ds.xs, ds.ys
    else:
        xs, ys = ds
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float).reshape(-1)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] != y.shape[0]:
        raise InvalidInputError(f"{name}: xs and ys do not align")
    return x, y


def _preference_order(candidates):
    # larger bin width first, then fewer iterations, then smaller rate
    return sorted(range(len(candidates)), key=lambda i: (-candidates[i][0].size, candidates[i][2], candidates[i][1]))


def _cell_choice(sq_err, labels, n_cells, min_points, tie_tolerance):
    """Preferred candidate of every cell, or -1 for cells with too few points.

    Rows of ``sq_err`` are candidates in preference order.  The most
    preferred candidate whose cell MSE is within a factor
    ``1 + tie_tolerance`` of the cell's best wins.
    """
    choice = np.full(n_cells, -1, dtype=np.int64)
    order = np.argsort(labels, kind="stable")
    bounds = np.searchsorted(labels[order], np.arange(n_cells + 1))
    for j in range(n_cells):
        idx = order[bounds[j]:bounds[j + 1]]
        m = idx.size
        if m < max(min_points, 1):
            continue
        err = sq_err[:, idx]
        means = err.mean(axis=1)
        best = int(np.argmin(means))
        if tie_tolerance > 0:
            best = int(np.argmax(means <= (1 + tie_tolerance) * means[best]))
        choice[j] = best
    return choice


def fit_abht(
    train,
    val,
    h_grid=(0.1, 0.05, 0.02, 0.01, 0.005, 0.002, 0.001),
    rho_grid=(0.01, 0.02, 0.05, 0.1, 0.2),
    T_grid=(20, 50, 100, 200),
    h0: float = 0.2,
    max_stages: int = 10,
    min_val_points: int = 10,
    clip_bound: float | None = None,
    rng: RngLike = 0,
    *,
    depth_grid=None,
    initial_depth: int = 3,
    shrinkage: float = 1.0,
    split_rule: str = "uniform",
    max_rejects: int = 10,
    tie_tolerance: float = 0.2,
) -> ABHTModel:
    """Fit the staged adaptive booster.

    Parameters
    ----------
    train, val : LabeledDataset or (xs, ys)
        Training and validation samples with features in ``[0, 1]^d``.
        ``val`` may be empty, in which case selection falls back to the
        training error and ``used_training_fallback`` is set.
    h_grid : sequence of float
        Candidate bin widths (ignored when ``depth_grid`` is given).
    rho_grid, T_grid : sequences
        Candidate learning rates and iteration counts, chosen per stage.
    h0 : float
        Cell width of the initial region grid.
    max_stages : int
        Hard cap on the number of stages.
    min_val_points : int
        Cells with fewer validation points are frozen immediately.
    clip_bound : float, optional
        Clip bound of the base learners; by default each stage uses the
        largest absolute residual it is fitted on.
    rng : RngStream or int
    depth_grid : sequence of int, optional
        Use binary-histogram learners with these depths.
    initial_depth : int
        Depth of the initial region cells for binary histograms.
    shrinkage : float
        Weight ``s`` of the previous cumulative model between stages.
    tie_tolerance : float
        Per-cell selection counts a candidate as tied with the cell's best
        when its validation MSE is at most ``1 + tie_tolerance`` times the
        best; among tied candidates the larger bin width wins, then fewer
        iterations, then the smaller rate.  0 keeps exact ties only.

    Returns
    -------
    ABHTModel
    """
    xt, yt = _unpack(train, "train")
    xt, yt = _check_xy(xt, yt)
    xv, yv = _unpack(val, "val")
    if xv is None:
        xv, yv = np.zeros((0, xt.shape[1])), np.zeros(0)
    d = xt.shape[1]
    if xv.shape[1] != d:
        raise InvalidInputError("train and val feature counts differ")
    rho_grid = [float(r) for r in rho_grid]
    T_grid = sorted({int(t) for t in T_grid})
    if not rho_grid or not T_grid:
        raise InvalidParameterError("rho_grid and T_grid must be nonempty")
    if any(not 0 < r <= 1 for r in rho_grid) or T_grid[0] < 1:
        raise InvalidParameterError("rates must lie in (0, 1] and iteration counts be positive")
    if max_stages < 1:
        raise InvalidParameterError("max_stages must be at least 1")
    if tie_tolerance < 0:
        raise InvalidParameterError("tie_tolerance must be nonnegative")
    if not 0 <= shrinkage <= 1:
        raise InvalidParameterError("shrinkage must lie in [0, 1]")
    if not isinstance(rng, RngStream):
        rng = RngStream(int(rng))

    if depth_grid is not None:
        samplers = sorted({BinarySampler(int(p), split_rule) for p in depth_grid}, key=lambda s: -s.size)
        if not samplers:
            raise InvalidParameterError("depth_grid must be nonempty")
        max_depth = max(s.depth for s in samplers)
        region = initial_tree_partition(d, min(initial_depth, max_depth), max_depth, rng.child(0), split_rule)
    else:
        samplers = sorted({HTSampler(float(h)) for h in h_grid}, key=lambda s: -s.size)
        if not samplers:
            raise InvalidParameterError("h_grid must be nonempty")
        region = initial_partition(d, h0)
    size_index = {s: i for i, s in enumerate(samplers)}

    fallback = xv.shape[0] == 0
    if fallback:
        warnings.warn("empty validation set; selecting on training error", RuntimeWarning, stacklevel=2)
    # residual targets r = y - s * c_{l-1}
    rt, rv = yt.copy(), yv.copy()
    cum_t, cum_v = np.zeros_like(yt), np.zeros_like(yv)
    grid = list(samplers)
    stages = []
    t_max = T_grid[-1]

    for stage in range(1, max_stages + 1):
        in_t = region.contains(xt)
        if not in_t.any():
            break
        sel_x, sel_r = (xt, rt) if fallback else (xv, rv)
        in_s = region.contains(sel_x)
        xs_in, r_in = sel_x[in_s], sel_r[in_s]

        candidates, fits, sq_err = [], {}, []
        for s in grid:
            for ir, rho in enumerate(rho_grid):
                model, _ = fit_bht(
                    xt[in_t], rt[in_t], learning_rate=rho, max_iters=t_max, clip_bound=clip_bound,
                    rng=candidate_stream(rng, stage, size_index[s], ir), max_rejects=max_rejects, sampler=s,
                )
                fits[s, rho] = model
                staged = model.staged_predict(xs_in, T_grid) if xs_in.shape[0] else np.zeros((len(T_grid), 0))
                for k, T in enumerate(T_grid):
                    candidates.append((s, rho, T))
                    sq_err.append((r_in - staged[k]) ** 2)
        order = _preference_order(candidates)
        candidates = [candidates[i] for i in order]
        sq_err = np.asarray(sq_err).reshape(len(order), -1)[order]
        sizes = np.array([c[0].size for c in candidates])

        # first pass: best candidate per working cell
        labels = region.labels(xs_in)
        first = _cell_choice(sq_err, labels, region.n_active, min_val_points, tie_tolerance)
        judged = first >= 0
        cell_choice = np.where(judged, sizes[first], np.nan)
        if judged.any():
            h_star = float(np.nanmax(cell_choice))
            pool = np.isin(labels, np.flatnonzero(judged & (cell_choice == h_star)))
        else:
            # nothing to judge per cell: select on the whole region
            pool = np.ones(labels.shape[0], dtype=bool)
            if pool.any():
                h_star = float(sizes[int(np.argmin(sq_err.mean(axis=1)))])
            else:
                h_star = float(sizes[0])
        sampler = next(c[0] for c in candidates if c[0].size == h_star)
        at_star = [i for i, c in enumerate(candidates) if c[0] == sampler]
        if pool.any():
            commit = at_star[int(np.argmin(sq_err[at_star][:, pool].mean(axis=1)))]
        else:
            commit = at_star[0]
        _, rho_star, T_star = candidates[commit]
        boosted = fits[sampler, rho_star].truncate(T_star)
        val_mse = float(sq_err[commit].mean()) if sq_err.shape[1] else float("nan")

        # second pass on the re-gridded region
        if isinstance(region, TreeRegionPartition):
            refined = region.refine(sampler.depth)
        else:
            refined = region.refine(min(h_star, region.cell_width))
        second = _cell_choice(sq_err, refined.labels(xs_in), refined.n_active, min_val_points, tie_tolerance)
        judged2 = second >= 0
        refined_choice = np.where(judged2, sizes[second], np.nan)
        stop_reason = np.where(~judged2, STOP_FEW_POINTS, np.where(refined_choice == h_star, STOP_BEST, 0))
        stopped = refined.subset(np.flatnonzero(stop_reason > 0))
        remaining = refined.subset(np.flatnonzero(stop_reason == 0))

        stages.append(StageRecord(
            stage=stage, sampler=sampler, n_iters=int(T_star), learning_rate=float(rho_star), boosted=boosted,
            working=region, refined=refined, stopped=stopped, cell_choice=cell_choice,
            refined_choice=refined_choice, stop_reason=stop_reason, val_mse=val_mse,
        ))

        # refresh residuals against c_l = s * c_{l-1} + f_l
        cum_t = (shrinkage * cum_t if stage > 1 else 0.0) + boosted.predict(xt)
        rt = yt - shrinkage * cum_t
        if xv.shape[0]:
            cum_v = (shrinkage * cum_v if stage > 1 else 0.0) + boosted.predict(xv)
            rv = yv - shrinkage * cum_v
        grid = [s for s in grid if s.size <= h_star]
        region = remaining
        if region.is_empty or not grid:
            break

    return ABHTModel(
        stages=tuple(stages), shrinkage=float(shrinkage), dim=d, clip_bound=clip_bound,
        used_training_fallback=fallback, final_working=region,
    )


def predict_abht(m: ABHTModel, x) -> np.ndarray | float:
    """Predict at one point (float) or at the rows of a matrix."""
    out = m.predict(x)
    return float(out[0]) if is_single_point(x, m.dim) else out
