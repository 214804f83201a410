"""Metrics, hyperparameter search and the repeated-experiment runner.

A run of :func:`run_experiment` draws fresh data for every repetition
(or reshuffles the split of a data file), grid-searches each method on
the validation part, scores the winner on the test part and aggregates
region-wise MSEs across repetitions.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .adaptive import fit_abht
from .boosting import fit_bht
from .data import (
    CASE_A_REGIONS,
    CASE_B_REGIONS,
    LabeledDataset,
    SplitSpec,
    TargetScaler,
    gen_case_a,
    gen_case_b,
    load_csv,
    scale_features,
    split,
)
from .exceptions import HTBoostError, InvalidParameterError
from .learners import make_sampler
from .parallel import fit_peht
from .rng import RngStream

__all__ = [
    "mse",
    "RegionMSEReport",
    "region_mse",
    "aggregate_reports",
    "GridResult",
    "grid_search",
    "ExperimentConfig",
    "ExperimentResult",
    "run_experiment",
    "repetition_data",
    "METHODS",
]

METHODS = ("PEHT", "BHT", "ABHT")


def mse(preds, targets) -> float:
    """Mean squared error."""
    p = np.asarray(preds, dtype=float).reshape(-1)
    t = np.asarray(targets, dtype=float).reshape(-1)
    if p.shape != t.shape:
        raise InvalidParameterError(f"{p.size} predictions for {t.size} targets")
    if p.size == 0:
        return float("nan")
    r = p - t
    return float(r @ r) / r.size


@dataclass(frozen=True)
class RegionMSEReport:
    """Overall and per-region MSE, possibly aggregated over repetitions.

    Attributes
    ----------
    overall_mse : float
        Mean over repetitions of the overall test MSE.
    per_region : dict
        Region id -> ``(mse, count)``.  Over several repetitions the MSE
        is pooled (count weighted) and ``count`` is the total, so the
        overall value stays the count-weighted mean of the regions.
    repetitions : int
    overall_sd : float
        Sample standard deviation of the overall MSE across repetitions
        (NaN for a single repetition).
    per_region_sd : dict
        Region id -> sample standard deviation of the per-repetition MSEs.
    region_names : dict
    count : int
        Number of scored points (summed over repetitions).
    """

    overall_mse: float
    per_region: dict = field(default_factory=dict)
    repetitions: int = 1
    overall_sd: float = float("nan")
    per_region_sd: dict = field(default_factory=dict)
    region_names: dict = field(default_factory=dict)
    count: int = 0

    def weighted_overall(self) -> float:
        counts = sum(c for _, c in self.per_region.values())
        if counts == 0:
            return float("nan")
        return sum(m * c for m, c in self.per_region.values()) / counts


def region_mse(preds, targets, labels=None, region_names=None) -> RegionMSEReport:
    """Overall MSE plus the MSE over the points of every present label."""
    p = np.asarray(preds, dtype=float).reshape(-1)
    t = np.asarray(targets, dtype=float).reshape(-1)
    overall = mse(p, t)
    per = {}
    if labels is not None:
        lab = np.asarray(labels, dtype=np.int64).reshape(-1)
        sq = (p - t) ** 2
        for k in np.unique(lab):
            sel = sq[lab == k]
            per[int(k)] = (float(sel.sum()) / sel.size, int(sel.size))
    return RegionMSEReport(overall, per, 1, float("nan"), {}, dict(region_names or {}), int(p.size))


def _sd(values) -> float:
    return float(np.std(values, ddof=1)) if len(values) > 1 else float("nan")


def aggregate_reports(reports) -> RegionMSEReport:
    """Mean and sample standard deviation over single-run reports."""
    reports = list(reports)
    if not reports:
        raise InvalidParameterError("nothing to aggregate")
    overall = [r.overall_mse for r in reports]
    regions = sorted({k for r in reports for k in r.per_region})
    per, per_sd = {}, {}
    for k in regions:
        pairs = [r.per_region[k] for r in reports if k in r.per_region]
        count = sum(c for _, c in pairs)
        per[k] = (sum(m * c for m, c in pairs) / count, count)
        per_sd[k] = _sd([m for m, _ in pairs])
    return RegionMSEReport(
        float(np.mean(overall)), per, len(reports), _sd(overall), per_sd, reports[0].region_names,
        sum(r.count for r in reports),
    )


# ---------------------------------------------------------------------------
# grid search


@dataclass(frozen=True, eq=False)
class GridResult:
    """Outcome of a grid search.

    ``table`` lists every candidate as ``(params, val_mse)`` in
    preference order (larger size first, then fewer iterations, then
    smaller rate).
    """

    params: dict
    model: object
    val_mse: float
    table: list


def _sizes(config):
    if config.depth_grid:
        return [make_sampler(depth=int(p), split_rule=config.split_rule) for p in config.depth_grid]
    return [make_sampler(bin_width=float(h)) for h in config.h_grid]


def _size_param(sampler):
    return {"depth": sampler.depth} if hasattr(sampler, "depth") else {"h": sampler.bin_width}


def _pick(table):
    # first strict minimum in preference order
    best = 0
    for i, (_, err) in enumerate(table):
        if err < table[best][1]:
            best = i
    return best


def grid_search(method: str, train: LabeledDataset, val: LabeledDataset, config: "ExperimentConfig", rng) -> GridResult:
    """Select hyperparameters of ``method`` by validation MSE.

    Each (size, rate) pair is fitted once at the largest ``T`` and the
    smaller ``T`` are read off the prefix of the ensemble.  For ABHT the
    grids are passed through and selection happens inside the stages.
    """
    method = method.upper()
    if not isinstance(rng, RngStream):
        rng = RngStream(int(rng))
    T_grid = sorted({int(t) for t in config.T_grid})
    samplers = sorted(_sizes(config), key=lambda s: -s.size)
    if method == "ABHT":
        kw = {"depth_grid": list(config.depth_grid)} if config.depth_grid else {"h_grid": list(config.h_grid)}
        model = fit_abht(
            train, val, rho_grid=config.rho_grid, T_grid=T_grid, h0=config.h0, max_stages=config.max_stages,
            min_val_points=config.min_val_points, rng=rng, initial_depth=config.initial_depth,
            shrinkage=config.shrinkage, split_rule=config.split_rule, tie_tolerance=config.tie_tolerance, **kw,
        )
        err = mse(model.predict(val.xs), val.ys) if val.n else float("nan")
        return GridResult({"stages": model.n_stages}, model, err, [({"stages": model.n_stages}, err)])

    rows = []  # (sort key, params, val_mse, fitted model, T)
    if method == "PEHT":
        for i, s in enumerate(samplers):
            kw = {"depth": s.depth, "split_rule": s.split_rule} if hasattr(s, "depth") else {"bin_width": s.bin_width}
            model = fit_peht(train.xs, train.ys, num_learners=T_grid[-1], rng=rng.child(i), **kw)
            staged = model.staged_predict(val.xs, T_grid)
            for k, T in enumerate(T_grid):
                rows.append(((-s.size, T), {**_size_param(s), "T": T}, mse(staged[k], val.ys), model, T))
    elif method == "BHT":
        for i, s in enumerate(samplers):
            for j, rho in enumerate(config.rho_grid):
                model, _ = fit_bht(train.xs, train.ys, learning_rate=float(rho), max_iters=T_grid[-1],
                                   rng=rng.child(i, j), sampler=s)
                staged = model.staged_predict(val.xs, T_grid)
                for k, T in enumerate(T_grid):
                    params = {**_size_param(s), "rho": float(rho), "T": T}
                    rows.append(((-s.size, T, float(rho)), params, mse(staged[k], val.ys), model, T))
    else:
        raise InvalidParameterError(f"unknown method {method!r}; expected one of {METHODS}")
    rows.sort(key=lambda r: r[0])
    table = [(r[1], r[2]) for r in rows]
    best = rows[_pick(table)]
    return GridResult(best[1], best[3].truncate(best[4]), best[2], table)


# ---------------------------------------------------------------------------
# experiments

@dataclass(frozen=True)
class ExperimentConfig:
    """Everything that defines a repeated experiment.

    Either ``case`` (``"A"`` or ``"B"``, synthetic) or ``data_path`` (a CSV
    file split by ``split_fractions``) selects the data.  ``h_grid`` is
    used for histogram-transform learners; a nonempty ``depth_grid``
    switches every method to binary histograms.
    """

    methods: tuple = METHODS
    case: str | None = "A"
    data_path: str | None = None
    target_column: str = "y"
    region_column: str | None = None
    drop_columns: tuple = ()
    h_grid: tuple = (0.1, 0.05, 0.02, 0.01, 0.005, 0.002, 0.001)
    depth_grid: tuple = ()
    rho_grid: tuple = (0.01, 0.02, 0.05, 0.1, 0.2)
    T_grid: tuple = (20, 50, 100, 200)
    n_train: int = 1000
    n_val: int = 1000
    n_test: int = 10000
    noise_sd: float = 0.01
    split_fractions: tuple = (0.4, 0.4, 0.2)
    standardize_target: bool = True
    repetitions: int = 30
    seed: int = 0
    h0: float = 0.2
    initial_depth: int = 3
    max_stages: int = 10
    min_val_points: int = 10
    shrinkage: float = 1.0
    tie_tolerance: float = 0.2
    split_rule: str = "uniform"

    def __post_init__(self):
        for name in ("methods", "h_grid", "depth_grid", "rho_grid", "T_grid", "drop_columns", "split_fractions"):
            value = getattr(self, name)
            if isinstance(value, (str, bytes)) or not hasattr(value, "__iter__"):
                value = (value,)
            object.__setattr__(self, name, tuple(value))
        object.__setattr__(self, "methods", tuple(m.upper() for m in self.methods))
        bad = [m for m in self.methods if m not in METHODS]
        if bad or not self.methods:
            raise InvalidParameterError(f"methods must be drawn from {METHODS}, got {self.methods}")
        if not (self.h_grid or self.depth_grid) or not self.rho_grid or not self.T_grid:
            raise InvalidParameterError("grids must be nonempty")
        if int(self.repetitions) != self.repetitions or self.repetitions < 1:
            raise InvalidParameterError("repetitions must be a positive integer")
        if self.data_path is None:
            if self.case not in ("A", "B"):
                raise InvalidParameterError(f"case must be 'A' or 'B' when no data_path is given, got {self.case!r}")
            if min(self.n_train, self.n_val, self.n_test) < 1:
                raise InvalidParameterError("sample sizes must be positive")
        SplitSpec(self.split_fractions, 0)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(d) - known)
        if unknown:
            raise InvalidParameterError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class ExperimentResult:
    """Aggregated reports per method and the raw per-repetition table.

    ``raw`` has one row per (repetition, method, region); the region
    ``"all"`` row carries the overall test MSE.  Failed fits leave a row
    with an ``error`` message and are excluded from the aggregates.
    """

    config: ExperimentConfig
    reports: dict
    raw: list

    def report_csv(self, method: str) -> str:
        rep = self.reports[method]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["method", "region", "region_name", "mse", "sd", "count", "repetitions"])
        w.writerow([method, "all", "all", repr(rep.overall_mse), repr(rep.overall_sd), rep.count, rep.repetitions])
        for k, (m, c) in sorted(rep.per_region.items()):
            w.writerow([method, k, rep.region_names.get(k, ""), repr(m), repr(rep.per_region_sd.get(k, float("nan"))),
                        c, rep.repetitions])
        return buf.getvalue()

    def raw_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["repetition", "method", "region", "mse", "count", "val_mse", "params", "error"])
        for row in self.raw:
            w.writerow([row["repetition"], row["method"], row["region"], repr(row["mse"]), row["count"],
                        repr(row["val_mse"]), row["params"], row["error"]])
        return buf.getvalue()

    def table(self) -> str:
        """Human-readable table: one column per method, MSE (sd)."""
        methods = [m for m in self.config.methods if m in self.reports]
        if not methods:
            return "no successful runs\n"
        names = self.reports[methods[0]].region_names
        regions = sorted({k for m in methods for k in self.reports[m].per_region})
        head = ["region"] + methods
        lines = [head]
        lines.append(["all"] + [_cell(self.reports[m].overall_mse, self.reports[m].overall_sd) for m in methods])
        for k in regions:
            row = [names.get(k, str(k))]
            for m in methods:
                pair = self.reports[m].per_region.get(k)
                row.append(_cell(pair[0], self.reports[m].per_region_sd.get(k)) if pair else "-")
            lines.append(row)
        widths = [max(len(r[i]) for r in lines) for i in range(len(head))]
        return "".join("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() + "\n" for r in lines)


def _cell(m, sd):
    if sd is None or math.isnan(sd):
        return f"{m:.3e}"
    return f"{m:.3e} ({sd:.3e})"


def repetition_data(config: ExperimentConfig, stream: RngStream, base: LabeledDataset | None = None):
    """(train, val, test) and region names for the repetition owning ``stream``.

    Synthetic cases draw fresh samples; a loaded ``base`` dataset is split,
    min-max scaled on its training part and (optionally) target z-scored.
    """
    if base is None:
        gen = gen_case_a if config.case == "A" else gen_case_b
        names = CASE_A_REGIONS if config.case == "A" else CASE_B_REGIONS
        parts = [gen(n, config.noise_sd, stream.child(i)) for i, n in enumerate((config.n_train, config.n_val, config.n_test))]
        return parts, names
    train, val, test = split(base, SplitSpec(config.split_fractions, config.seed), rng=stream.child(0))
    train, params = scale_features(train)
    val, _ = scale_features(val, params)
    test, _ = scale_features(test, params)
    if config.standardize_target:
        scaler = TargetScaler.fit(train.ys)
        train, val, test = scaler.apply(train), scaler.apply(val), scaler.apply(test)
    return [train, val, test], base.region_names


def _run_repetition(config: ExperimentConfig, r: int, base):
    stream = RngStream(int(config.seed)).child(r)
    (train, val, test), names = repetition_data(config, stream, base)
    out = []
    for i, method in enumerate(config.methods):
        try:
            res = grid_search(method, train, val, config, stream.child(100 + i))
            rep = region_mse(res.model.predict(test.xs), test.ys, test.region_labels, names)
            out.append((method, rep, res.val_mse, json.dumps(res.params, sort_keys=True), ""))
        except (HTBoostError, ValueError, FloatingPointError) as exc:
            out.append((method, None, float("nan"), "", f"{type(exc).__name__}: {exc}"))
    return out


def run_experiment(config: ExperimentConfig, workers: int = 1) -> ExperimentResult:
    """Repeat data generation, selection and testing; aggregate the scores.

    Repetition ``r`` uses substream ``r`` of ``config.seed``, so results do
    not depend on ``workers``.
    """
    base = None
    if config.data_path is not None:
        base = load_csv(config.data_path, config.target_column, config.region_column, config.drop_columns)
    reps = range(int(config.repetitions))
    if workers > 1 and config.repetitions > 1:
        with ProcessPoolExecutor(max_workers=int(workers)) as pool:
            results = list(pool.map(_run_repetition, [config] * len(reps), reps, [base] * len(reps)))
    else:
        results = [_run_repetition(config, r, base) for r in reps]

    raw, per_method = [], {m: [] for m in config.methods}
    for r, rows in zip(reps, results):
        for method, rep, val_err, params, error in rows:
            if rep is None:
                raw.append({"repetition": r, "method": method, "region": "all", "mse": float("nan"), "count": 0,
                            "val_mse": val_err, "params": params, "error": error})
                continue
            per_method[method].append(rep)
            raw.append({"repetition": r, "method": method, "region": "all", "mse": rep.overall_mse,
                        "count": rep.count, "val_mse": val_err, "params": params, "error": ""})
            for k, (m, c) in sorted(rep.per_region.items()):
                raw.append({"repetition": r, "method": method, "region": k, "mse": m, "count": c,
                            "val_mse": val_err, "params": params, "error": ""})
    reports = {m: aggregate_reports(v) for m, v in per_method.items() if v}
    return ExperimentResult(config, reports, raw)
