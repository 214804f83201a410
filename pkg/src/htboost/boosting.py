"""Gradient boosting with random-partition base learners (BHT).

Each iteration draws a fresh random partition, fits the current
residuals with clipped cell means and adds the fit with learning rate
``rho``.  A candidate whose addition would raise the training MSE is
discarded.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .exceptions import InvalidParameterError
from .learners import BaseRegressor, _check_xy, _resolve_clip, as_rows, fit_partition, is_single_point, make_sampler
from .rng import RngLike, as_generator

__all__ = ["BHTModel", "fit_bht", "predict_bht"]

REJECT_POLICIES = ("retry", "skip")


@dataclass(frozen=True, eq=False)
class BHTModel:
    """A fitted boosted ensemble ``rho * sum_t f_t``.

    Attributes
    ----------
    learners : tuple
        Accepted base regressors in fitting order.
    learning_rate : float
    sampler : HTSampler or BinarySampler
        Partition family the learners were drawn from.
    dim : int
        Number of input features.
    clip_bound : float
    mse_trace : ndarray
        Training MSE after each accepted learner.
    initial_mse : float
        Mean squared target before any learner.
    truncated : bool
        True when a slot exhausted its reject budget and fitting stopped early.
    n_rejected : int
        Total number of discarded candidates.
    """

    learners: tuple
    learning_rate: float
    sampler: object
    dim: int
    clip_bound: float
    mse_trace: np.ndarray = field(default_factory=lambda: np.zeros(0))
    initial_mse: float = 0.0
    truncated: bool = False
    n_rejected: int = 0

    @property
    def n_learners(self) -> int:
        return len(self.learners)

    def predict(self, xs) -> np.ndarray:
        x = as_rows(xs, self.dim)
        total = np.zeros(x.shape[0])
        for learner in self.learners:
            total += learner.predict(x)
        return self.learning_rate * total

    def staged_predict(self, xs, iters) -> np.ndarray:
        """Predictions of the first ``T`` learners for every ``T`` in ``iters``.

        Returns an array of shape ``(len(iters), n)``.  Counts beyond the
        number of learners reuse the full model.
        """
        x = as_rows(xs, self.dim)
        iters = [int(t) for t in iters]
        out = np.zeros((len(iters), x.shape[0]))
        wanted = {}
        for i, t in enumerate(iters):
            wanted.setdefault(min(t, self.n_learners), []).append(i)
        total = np.zeros(x.shape[0])
        if 0 in wanted:
            out[wanted[0]] = 0.0
        for k, learner in enumerate(self.learners, start=1):
            if k > max(wanted):
                break
            total += learner.predict(x)
            if k in wanted:
                out[wanted[k]] = self.learning_rate * total
        return out

    def truncate(self, n_learners: int) -> "BHTModel":
        """The model after its first ``n_learners`` accepted iterations."""
        n = min(int(n_learners), self.n_learners)
        return replace(self, learners=self.learners[:n], mse_trace=self.mse_trace[:n])


def fit_bht(
    xs,
    ys,
    bin_width: float | None = None,
    learning_rate: float = 0.1,
    max_iters: int = 100,
    clip_bound: float | None = None,
    rng: RngLike = 0,
    max_rejects: int = 10,
    *,
    depth: int | None = None,
    sampler=None,
    reject_policy: str = "retry",
) -> tuple[BHTModel, np.ndarray]:
    """Fit a boosted histogram-transform regressor.

    Parameters
    ----------
    xs : array_like, shape (n, d)
        Features in ``[0, 1]^d``.
    ys : array_like, shape (n,)
    bin_width : float, optional
        Bin width of the histogram transforms.  Give this, ``depth``
        (binary histograms) or an explicit ``sampler``.
    learning_rate : float
        Shrinkage ``rho`` in ``(0, 1]`` applied to every learner.
    max_iters : int
        Number of learner slots ``T``.
    clip_bound : float, optional
        Cell values are clipped to ``[-M, M]``; defaults to ``max |ys|``.
    rng : RngStream, Generator or int
    max_rejects : int
        Rejected candidates allowed per slot under ``reject_policy="retry"``.
    reject_policy : {"retry", "skip"}
        On a rejected candidate either redraw for the same slot or give
        the slot up.

    Returns
    -------
    model : BHTModel
    residuals : ndarray
        Final residuals ``y - model.predict(xs)``.
    """
    x, y = _check_xy(xs, ys)
    if not 0 < learning_rate <= 1:
        raise InvalidParameterError(f"learning_rate must lie in (0, 1], got {learning_rate}")
    if int(max_iters) != max_iters or max_iters < 1:
        raise InvalidParameterError(f"max_iters must be a positive integer, got {max_iters}")
    if max_rejects < 0:
        raise InvalidParameterError("max_rejects must be nonnegative")
    if reject_policy not in REJECT_POLICIES:
        raise InvalidParameterError(f"reject_policy must be one of {REJECT_POLICIES}")
    if sampler is None:
        sampler = make_sampler(bin_width=bin_width, depth=depth)
    clip = _resolve_clip(clip_bound, y)
    gen = as_generator(rng)
    d = x.shape[1]
    n = x.shape[0]

    residuals = y.copy()
    # the initial error is the raw mean square, so a first learner that
    # makes things worse is rejected like any other
    eps_prev = float(residuals @ residuals) / n
    initial_mse = eps_prev
    learners: list[BaseRegressor] = []
    trace: list[float] = []
    n_rejected = 0
    truncated = False
    slot = 0
    rejects_in_slot = 0
    while slot < max_iters:
        model, fitted = fit_partition(x, residuals, sampler(d, gen), clip)
        candidate = residuals - learning_rate * fitted
        eps = float(candidate @ candidate) / n
        if eps > eps_prev:
            n_rejected += 1
            if reject_policy == "skip":
                slot += 1
                continue
            rejects_in_slot += 1
            if rejects_in_slot > max_rejects:
                truncated = True
                break
            continue
        residuals = candidate
        eps_prev = eps
        learners.append(model)
        trace.append(eps)
        slot += 1
        rejects_in_slot = 0
    bht = BHTModel(
        learners=tuple(learners),
        learning_rate=float(learning_rate),
        sampler=sampler,
        dim=d,
        clip_bound=clip,
        mse_trace=np.asarray(trace),
        initial_mse=initial_mse,
        truncated=truncated,
        n_rejected=n_rejected,
    )
    return bht, residuals


def predict_bht(m: BHTModel, x) -> np.ndarray | float:
    """Predict at one point (float) or at the rows of a matrix."""
    out = m.predict(x)
    return float(out[0]) if is_single_point(x, m.dim) else out
