"""Boosted histogram transforms for regression.

Random rotated-and-shifted histograms serve as base learners for three
estimators:

* :func:`fit_peht` -- a parallel ensemble (plain average);
* :func:`fit_bht` -- gradient boosting with a fixed bin width;
* :func:`fit_abht` -- staged boosting that picks a bin width per stage,
  freezes regions that are already well fitted and keeps refining the
  rest with smaller bins.

Binary histograms (purely random axis-aligned trees) can replace the
equal-width grids in higher dimensions.
"""

from .adaptive import ABHTModel, StageRecord, fit_abht, predict_abht
from .boosting import BHTModel, fit_bht, predict_bht
from .data import (
    LabeledDataset,
    SplitSpec,
    gen_case_a,
    gen_case_b,
    gen_tabular,
    load_csv,
    save_csv,
    scale_features,
    split,
)
from .evaluation import ExperimentConfig, grid_search, mse, region_mse, run_experiment
from .exceptions import HTBoostError
from .learners import (
    BinaryPartition,
    HTRegressor,
    fit_binary,
    fit_ht,
    predict_ht,
    sample_binary_partition,
)
from .parallel import PEHTModel, fit_peht, predict_peht
from .regions import RegionPartition, initial_partition
from .rng import RngStream, householder_qr, sample_rotation
from .serialize import load_model, save_model
from .transform import HistogramTransform, apply, bin_key, sample_transform

__version__ = "0.1.0"

__all__ = [
    "ABHTModel",
    "BHTModel",
    "BinaryPartition",
    "ExperimentConfig",
    "HTBoostError",
    "HTRegressor",
    "HistogramTransform",
    "LabeledDataset",
    "PEHTModel",
    "RegionPartition",
    "RngStream",
    "SplitSpec",
    "StageRecord",
    "apply",
    "bin_key",
    "fit_abht",
    "fit_binary",
    "fit_bht",
    "fit_ht",
    "fit_peht",
    "gen_case_a",
    "gen_case_b",
    "gen_tabular",
    "grid_search",
    "householder_qr",
    "initial_partition",
    "load_csv",
    "load_model",
    "mse",
    "predict_abht",
    "predict_bht",
    "predict_ht",
    "predict_peht",
    "region_mse",
    "run_experiment",
    "sample_binary_partition",
    "sample_rotation",
    "sample_transform",
    "save_csv",
    "save_model",
    "scale_features",
    "split",
]
