"""Datasets: synthetic benchmark generators, CSV I/O, scaling and splits.

Case A is a 1-D target with three smoothness regimes::

    [0, 1/8]    square wave of period 0.02 and height 0.1
    (1/8, 1/2]  3 * x**(1/3), shifted to be continuous at 1/8
    (1/2, 1]    -x, shifted to be continuous at 1/2

Case B is a 2-D target built on the blocks ``[0, 1/3]`` and ``(1/3, 1]``
of each axis, with a diagonal square wave on ``[0, 1/3]^2``.  Both add
Gaussian noise (sd 0.01 by default) and carry region labels so errors can
be reported per smoothness regime.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import DataError, InvalidParameterError
from .rng import RngLike, as_generator

__all__ = [
    "LabeledDataset",
    "CASE_A_REGIONS",
    "CASE_B_REGIONS",
    "case_a_target",
    "case_a_region",
    "case_b_target",
    "case_b_region",
    "gen_case_a",
    "gen_case_b",
    "gen_tabular",
    "tabular_target",
    "load_csv",
    "save_csv",
    "ScaleParams",
    "scale_features",
    "TargetScaler",
    "SplitSpec",
    "split",
    "load_manifest",
]

CASE_A_REGIONS = {0: "[0, 1/8]", 1: "(1/8, 1/2]", 2: "(1/2, 1]"}
CASE_B_REGIONS = {
    0: "[0, 1/3] x [0, 1/3]",
    1: "[0, 1/3] x (1/3, 1]",
    2: "(1/3, 1] x [0, 1/3]",
    3: "(1/3, 1] x (1/3, 1]",
}


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """Features, targets and optional ground-truth region labels."""

    xs: np.ndarray
    ys: np.ndarray
    region_labels: np.ndarray | None = None
    region_names: dict = field(default_factory=dict)
    feature_names: tuple = ()

    def __post_init__(self):
        xs = np.asarray(self.xs, dtype=float)
        if xs.ndim == 1:
            xs = xs[:, None]
        ys = np.asarray(self.ys, dtype=float).reshape(-1)
        if xs.shape[0] != ys.shape[0]:
            raise InvalidParameterError(f"{xs.shape[0]} feature rows but {ys.shape[0]} targets")
        labels = self.region_labels
        if labels is not None:
            labels = np.asarray(labels, dtype=np.int64).reshape(-1)
            if labels.shape[0] != ys.shape[0]:
                raise InvalidParameterError("region_labels length differs from targets")
            if self.region_names and not set(np.unique(labels)) <= set(self.region_names):
                raise InvalidParameterError("region label outside the declared region table")
        names = tuple(self.feature_names) or tuple(f"x{i + 1}" for i in range(xs.shape[1]))
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)
        object.__setattr__(self, "region_labels", labels)
        object.__setattr__(self, "feature_names", names)

    @property
    def n(self) -> int:
        return self.ys.shape[0]

    @property
    def dim(self) -> int:
        return self.xs.shape[1]

    def take(self, idx) -> "LabeledDataset":
        idx = np.asarray(idx)
        labels = None if self.region_labels is None else self.region_labels[idx]
        return LabeledDataset(self.xs[idx], self.ys[idx], labels, self.region_names, self.feature_names)


def _square_wave(v, period_half, height, offset):
    k = np.floor(v / period_half).astype(np.int64)
    return height * np.where(k % 2 == 0, -1.0, 1.0) + offset


def _f1(x):
    return _square_wave(x, 0.01, 0.05, 0.05)


def _f2(x):
    return 3.0 * np.cbrt(x)


def case_a_target(x) -> np.ndarray:
    """Noiseless Case A target."""
    x = np.asarray(x, dtype=float)
    c2 = _f1(0.125) - _f2(0.125)
    c3 = _f2(0.5) - _f2(0.125) + 0.5
    return np.where(x <= 0.125, _f1(x), np.where(x <= 0.5, _f2(x) + c2, -x + c3))


def case_a_region(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.where(x <= 0.125, 0, np.where(x <= 0.5, 1, 2)).astype(np.int64)


def case_b_target(x1, x2) -> np.ndarray:
    """Noiseless Case B target."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    wave = _square_wave(x1 + x2, 0.1, 0.05, 0.45)
    rough = wave + (x1 + x2) / 3.0
    cube = (np.cbrt(x1) + np.cbrt(x2)) / 2.0
    flat = (x1 + x2) / 6.0 + 0.6
    lo1, lo2 = x1 <= 1 / 3, x2 <= 1 / 3
    return np.where(lo1 & lo2, rough, np.where(lo1 ^ lo2, cube, flat))


def case_b_region(x1, x2) -> np.ndarray:
    hi1 = np.asarray(x1) > 1 / 3
    hi2 = np.asarray(x2) > 1 / 3
    return (2 * hi1 + hi2).astype(np.int64)


def _check_n(n):
    if int(n) != n or n < 1:
        raise InvalidParameterError(f"n must be a positive integer, got {n}")
    return int(n)


def gen_case_a(n: int, noise_sd: float = 0.01, rng: RngLike = 0) -> LabeledDataset:
    """Draw ``n`` uniform points of Case A with Gaussian noise."""
    n = _check_n(n)
    if noise_sd < 0:
        raise InvalidParameterError("noise_sd must be nonnegative")
    gen = as_generator(rng)
    x = gen.random(n)
    y = case_a_target(x) + noise_sd * gen.standard_normal(n)
    return LabeledDataset(x[:, None], y, case_a_region(x), dict(CASE_A_REGIONS))


def gen_case_b(n: int, noise_sd: float = 0.01, rng: RngLike = 0) -> LabeledDataset:
    """Draw ``n`` uniform points of Case B with Gaussian noise."""
    n = _check_n(n)
    if noise_sd < 0:
        raise InvalidParameterError("noise_sd must be nonnegative")
    gen = as_generator(rng)
    x = gen.random((n, 2))
    y = case_b_target(x[:, 0], x[:, 1]) + noise_sd * gen.standard_normal(n)
    return LabeledDataset(x, y, case_b_region(x[:, 0], x[:, 1]), dict(CASE_B_REGIONS))


# raw feature scales of the tabular generator (features are not in [0, 1])
_TABULAR_SCALE = np.array([1.0, 10.0, 100.0, 1.0, 5.0, 50.0, 1.0, 1000.0])
_TABULAR_SHIFT = np.array([0.0, -5.0, 20.0, 3.0, 0.0, -25.0, -1.0, 0.0])


def tabular_target(u) -> np.ndarray:
    """Noiseless tabular target on unit-scaled features ``u`` (n x 8).

    A smooth additive part plus a jagged patch where ``u0 < 0.3`` and
    ``u1 < 0.3``; features 5-7 do not enter the target.
    """
    u = np.asarray(u, dtype=float)
    smooth = np.sin(np.pi * u[:, 0]) + u[:, 1] ** 2 + 0.5 * u[:, 2] * u[:, 3] + 0.3 * u[:, 4]
    patch = (u[:, 0] < 0.3) & (u[:, 1] < 0.3)
    jag = 0.4 * _square_wave(u[:, 0] + u[:, 1], 0.05, 1.0, 0.0)
    return smooth + np.where(patch, jag, 0.0)


def gen_tabular(n: int, noise_sd: float = 0.05, rng: RngLike = 0) -> LabeledDataset:
    """Synthetic 8-feature regression table with mixed feature scales.

    Region label 1 marks the jagged patch, 0 the smooth remainder.
    """
    n = _check_n(n)
    gen = as_generator(rng)
    u = gen.random((n, 8))
    y = tabular_target(u) + noise_sd * gen.standard_normal(n)
    labels = ((u[:, 0] < 0.3) & (u[:, 1] < 0.3)).astype(np.int64)
    return LabeledDataset(u * _TABULAR_SCALE + _TABULAR_SHIFT, y, labels, {0: "smooth", 1: "jagged patch"})


def save_csv(ds: LabeledDataset, path, target_column: str = "y", region_column: str = "region") -> None:
    """Write a dataset as CSV with 17 significant digits per float."""
    header = list(ds.feature_names) + [target_column]
    if ds.region_labels is not None:
        header.append(region_column)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(ds.n):
            row = [f"{v:.17g}" for v in ds.xs[i]] + [f"{ds.ys[i]:.17g}"]
            if ds.region_labels is not None:
                row.append(str(int(ds.region_labels[i])))
            w.writerow(row)


def load_csv(path, target_column: str = "y", region_column: str | None = "region", drop_columns=()) -> LabeledDataset:
    """Read a headered numeric CSV into a dataset.

    The ``region_column`` (if present in the header) becomes region labels;
    ``drop_columns`` are ignored; every other column is a feature.

    Raises
    ------
    DataError
        Missing file, missing target column, ragged or non-numeric rows,
        or a file with no data rows.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if target_column not in header:
            raise DataError(f"{path}: no target column {target_column!r}")
        drop = set(drop_columns)
        missing = drop - set(header)
        if missing:
            raise DataError(f"{path}: cannot drop unknown columns {sorted(missing)}")
        if target_column in drop:
            raise DataError(f"{path}: the target column cannot be dropped")
        # dropped columns are never parsed, so they may hold text (dates, ids)
        keep = [i for i, h in enumerate(header) if h not in drop]
        width = len(header)
        header = [header[i] for i in keep]
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != width:
                raise DataError(f"{path}:{line_no}: expected {width} fields, got {len(row)}")
            try:
                rows.append([float(row[i]) for i in keep])
            except ValueError as exc:
                raise DataError(f"{path}:{line_no}: {exc}") from None
    if not rows:
        raise DataError(f"{path}: no data rows")
    table = np.asarray(rows, dtype=float)
    if not np.all(np.isfinite(table)):
        raise DataError(f"{path}: non-finite values")
    has_region = region_column is not None and region_column in header
    feature_cols = [i for i, h in enumerate(header) if h != target_column and not (has_region and h == region_column)]
    labels = None
    if has_region:
        raw = table[:, header.index(region_column)]
        if np.any(raw != np.round(raw)):
            raise DataError(f"{path}: region labels must be integers")
        labels = raw.astype(np.int64)
    return LabeledDataset(
        table[:, feature_cols],
        table[:, header.index(target_column)],
        labels,
        feature_names=tuple(header[i] for i in feature_cols),
    )


@dataclass(frozen=True)
class ScaleParams:
    """Per-feature min-max scaling fitted on a training sample."""

    lo: np.ndarray
    hi: np.ndarray

    @classmethod
    def fit(cls, xs) -> "ScaleParams":
        x = np.asarray(xs, dtype=float)
        return cls(x.min(axis=0), x.max(axis=0))

    def apply(self, xs) -> np.ndarray:
        x = np.asarray(xs, dtype=float)
        span = self.hi - self.lo
        const = span == 0
        with np.errstate(invalid="ignore", divide="ignore"):
            out = (x - self.lo) / np.where(const, 1.0, span)
        out[:, const] = 0.5
        # values beyond the training range are clamped into the unit cube
        return np.clip(out, 0.0, 1.0)


def scale_features(ds: LabeledDataset, params: ScaleParams | None = None) -> tuple[LabeledDataset, ScaleParams]:
    """Min-max scale features to ``[0, 1]``; fits ``params`` on ``ds`` if not given."""
    params = ScaleParams.fit(ds.xs) if params is None else params
    scaled = LabeledDataset(params.apply(ds.xs), ds.ys, ds.region_labels, ds.region_names, ds.feature_names)
    return scaled, params


@dataclass(frozen=True)
class TargetScaler:
    """z-scoring of targets fitted on training data."""

    mean: float
    sd: float

    @classmethod
    def fit(cls, ys) -> "TargetScaler":
        y = np.asarray(ys, dtype=float)
        sd = float(np.std(y))
        return cls(float(np.mean(y)), sd if sd > 0 else 1.0)

    def apply(self, ds: LabeledDataset) -> LabeledDataset:
        return LabeledDataset(ds.xs, (ds.ys - self.mean) / self.sd, ds.region_labels, ds.region_names, ds.feature_names)


@dataclass(frozen=True)
class SplitSpec:
    """Train/validation/test fractions and the shuffle seed."""

    fractions: tuple = (0.4, 0.4, 0.2)
    seed: int = 0

    def __post_init__(self):
        f = tuple(float(v) for v in self.fractions)
        if len(f) != 3 or any(v <= 0 for v in f) or not math.isclose(sum(f), 1.0, abs_tol=1e-9):
            raise InvalidParameterError(f"fractions must be three positive numbers summing to 1, got {f}")
        object.__setattr__(self, "fractions", f)


def split_sizes(n: int, fractions) -> tuple[int, int, int]:
    n_train = int(round(n * fractions[0]))
    n_val = int(round(n * fractions[1]))
    n_val = min(n_val, n - n_train)
    return n_train, n_val, n - n_train - n_val


def split(ds: LabeledDataset, spec: SplitSpec, rng: RngLike | None = None):
    """Seeded shuffle into disjoint (train, val, test) datasets."""
    gen = as_generator(spec.seed if rng is None else rng)
    perm = gen.permutation(ds.n)
    a, b, _ = split_sizes(ds.n, spec.fractions)
    return ds.take(perm[:a]), ds.take(perm[a:a + b]), ds.take(perm[a + b:])


def load_manifest(path=None) -> dict:
    """Expected shapes and preprocessing notes of the real benchmark datasets."""
    if path is None:
        path = Path(__file__).with_name("data") / "manifest.json"
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
