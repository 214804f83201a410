"""Parallel ensembles of histogram-transform regressors (PEHT).

Every member is fitted on the full sample with its own independently
drawn partition; the ensemble predicts the plain average.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .exceptions import InvalidParameterError
from .learners import _check_xy, _resolve_clip, fit_partition, make_sampler
from .rng import RngLike, RngStream
from .transform import as_rows, is_single_point

__all__ = ["PEHTModel", "fit_peht", "predict_peht"]


@dataclass(frozen=True, eq=False)
class PEHTModel:
    learners: tuple
    samplers: tuple
    dim: int
    clip_bound: float

    @property
    def n_learners(self) -> int:
        return len(self.learners)

    @property
    def bin_width(self):
        widths = {s.size for s in self.samplers}
        return widths.pop() if len(widths) == 1 else sorted(widths)

    def member_predictions(self, xs) -> np.ndarray:
        x = as_rows(xs, self.dim)
        return np.stack([m.predict(x) for m in self.learners])

    def predict(self, xs) -> np.ndarray:
        x = as_rows(xs, self.dim)
        preds = self.member_predictions(x)
        # corrected two-pass mean keeps the average independent of rounding drift
        mean = preds.sum(axis=0) / self.n_learners
        return mean + (preds - mean).sum(axis=0) / self.n_learners

    def staged_predict(self, xs, counts) -> np.ndarray:
        """Averages of the first ``T`` members for each ``T`` in ``counts``."""
        x = as_rows(xs, self.dim)
        preds = self.member_predictions(x)
        out = np.empty((len(counts), x.shape[0]))
        for i, t in enumerate(counts):
            t = min(int(t), self.n_learners)
            head = preds[:t]
            mean = head.sum(axis=0) / t
            out[i] = mean + (head - mean).sum(axis=0) / t
        return out

    def truncate(self, n_learners: int) -> "PEHTModel":
        n = min(int(n_learners), self.n_learners)
        return replace(self, learners=self.learners[:n], samplers=self.samplers[:n])


def fit_peht(
    xs,
    ys,
    bin_width=None,
    num_learners: int | None = None,
    clip_bound: float | None = None,
    rng: RngLike = 0,
    *,
    depth=None,
    split_rule: str = "uniform",
) -> PEHTModel:
    """Fit ``num_learners`` independent HT regressors and average them.

    ``bin_width`` (or ``depth``) may be a single value or a sequence with
    one entry per member, for ensembles mixing several widths.  Member
    ``t`` draws its partition from substream ``t`` of ``rng``.
    """
    x, y = _check_xy(xs, ys)
    size = bin_width if depth is None else depth
    if size is None:
        raise InvalidParameterError("give bin_width or depth")
    if np.ndim(size) == 0:
        if num_learners is None or int(num_learners) != num_learners or num_learners < 1:
            raise InvalidParameterError(f"num_learners must be a positive integer, got {num_learners}")
        sizes = [size] * int(num_learners)
    else:
        sizes = list(size)
        if num_learners is not None and num_learners != len(sizes):
            raise InvalidParameterError(f"{len(sizes)} widths given for {num_learners} learners")
        if not sizes:
            raise InvalidParameterError("need at least one learner")
    key = "bin_width" if depth is None else "depth"
    samplers = tuple(make_sampler(**{key: s}, split_rule=split_rule) if key == "depth" else make_sampler(bin_width=s) for s in sizes)
    clip = _resolve_clip(clip_bound, y)
    if not isinstance(rng, RngStream):
        rng = RngStream(int(rng))
    d = x.shape[1]
    learners = tuple(fit_partition(x, y, s(d, rng.child(t)), clip)[0] for t, s in enumerate(samplers))
    return PEHTModel(learners, samplers, d, clip)


def predict_peht(m: PEHTModel, x) -> np.ndarray | float:
    out = m.predict(x)
    return float(out[0]) if is_single_point(x, m.dim) else out
