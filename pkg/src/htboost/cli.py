"""Command-line interface: ``htboost {gen,fit,predict,experiment,trace}``.

Experiments are described by a flat JSON config whose keys are the fields
of :class:`~htboost.evaluation.ExperimentConfig`, plus ``sweep_n_train``
(a list of training sizes for a size sweep).  Unknown keys are rejected.
Global flags override the file: ``--seed`` replaces ``seed``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 internal
error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .data import gen_case_a, gen_case_b, load_csv, save_csv
from .evaluation import ExperimentConfig, grid_search, mse, region_mse, repetition_data, run_experiment
from .exceptions import (
    ConfigError,
    DataError,
    HTBoostError,
    InvalidInputError,
    InvalidParameterError,
    ModelFormatError,
    OutOfDomainError,
)
from .rng import RngStream
from .serialize import load_model, save_model

log = logging.getLogger("htboost")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_INTERNAL = 0, 2, 3, 4

CLI_KEYS = {"sweep_n_train"}


def load_config(path, seed=None) -> tuple[ExperimentConfig, dict]:
    """Read a JSON experiment config; returns (config, cli-only extras)."""
    if path is None:
        raise ConfigError("this command needs --config")
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        raw = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: invalid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{p}: top level must be an object")
    extras = {k: raw.pop(k) for k in list(raw) if k in CLI_KEYS}
    if seed is not None:
        raw["seed"] = seed
    try:
        cfg = ExperimentConfig.from_dict(raw)
    except (InvalidParameterError, TypeError) as exc:
        raise ConfigError(f"{p}: {exc}") from None
    if cfg.data_path is not None and not Path(cfg.data_path).is_absolute():
        cfg = replace(cfg, data_path=str((p.parent / cfg.data_path).resolve()))
    sweep = extras.get("sweep_n_train")
    if sweep is not None and (not isinstance(sweep, list) or not all(isinstance(n, int) and n > 0 for n in sweep)):
        raise ConfigError(f"{p}: sweep_n_train must be a list of positive integers")
    return cfg, extras


def _default_config(args) -> ExperimentConfig:
    if args.config:
        return load_config(args.config, args.seed)[0]
    return ExperimentConfig(seed=args.seed or 0)


def _out(args, name) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out / name


def cmd_gen(args) -> int:
    gen = gen_case_a if args.case == "A" else gen_case_b
    if args.n < 1:
        raise ConfigError("--n must be positive")
    ds = gen(args.n, args.noise_sd, RngStream(args.seed or 0))
    path = Path(args.out) if args.out else _out(args, f"case_{args.case.lower()}.csv")
    path.parent.mkdir(parents=True, exist_ok=True)
    save_csv(ds, path)
    log.info("wrote %d rows to %s", ds.n, path)
    return EXIT_OK


def cmd_fit(args) -> int:
    cfg = _default_config(args)
    train = load_csv(args.train, args.target, args.region_column)
    val = load_csv(args.val, args.target, args.region_column)
    result = grid_search(args.method, train, val, cfg, RngStream(cfg.seed))
    path = Path(args.out) if args.out else _out(args, f"{args.method.lower()}_model.json")
    path.parent.mkdir(parents=True, exist_ok=True)
    save_model(result.model, path)
    print(json.dumps({"method": args.method.upper(), "params": result.params, "val_mse": result.val_mse,
                      "model": str(path)}, sort_keys=True))
    return EXIT_OK


def cmd_predict(args) -> int:
    model = load_model(args.model)
    ds = load_csv(args.data, args.target, args.region_column) if args.has_target else None
    if ds is None:
        xs = np.loadtxt(args.data, delimiter=",", skiprows=1, ndmin=2)
    else:
        xs = ds.xs
    preds = model.predict(xs)
    path = Path(args.out) if args.out else _out(args, "predictions.csv")
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["prediction"])
        w.writerows([[f"{v:.17g}"] for v in preds])
    if ds is not None:
        print(json.dumps({"mse": mse(preds, ds.ys), "n": ds.n}))
    return EXIT_OK


def _plan(cfg: ExperimentConfig, extras: dict) -> list[str]:
    sizes = extras.get("sweep_n_train") or [cfg.n_train]
    data = f"case {cfg.case}" if cfg.data_path is None else cfg.data_path
    lines = []
    for n in sizes:
        for m in cfg.methods:
            grid = f"depth={list(cfg.depth_grid)}" if cfg.depth_grid else f"h={list(cfg.h_grid)}"
            lines.append(f"{m} on {data} n_train={n if cfg.data_path is None else '-'} reps={cfg.repetitions} "
                         f"{grid} rho={list(cfg.rho_grid)} T={list(cfg.T_grid)} seed={cfg.seed}")
    return lines


def cmd_experiment(args) -> int:
    cfg, extras = load_config(args.config, args.seed)
    if args.dry_run:
        for line in _plan(cfg, extras):
            print(line)
        return EXIT_OK
    sweep = extras.get("sweep_n_train")
    if sweep:
        rows = []
        for n in sweep:
            res = run_experiment(replace(cfg, n_train=n), workers=args.threads)
            _write_reports(args, res, suffix=f"_n{n}")
            for m, rep in res.reports.items():
                rows.append([n, m, "all", repr(rep.overall_mse), repr(rep.overall_sd), rep.repetitions])
                for k, (v, _) in sorted(rep.per_region.items()):
                    rows.append([n, m, k, repr(v), repr(rep.per_region_sd.get(k, math.nan)), rep.repetitions])
        with open(_out(args, "sweep.csv"), "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["n_train", "method", "region", "mse", "sd", "repetitions"])
            w.writerows(rows)
        return EXIT_OK
    res = run_experiment(cfg, workers=args.threads)
    _write_reports(args, res)
    print(res.table(), end="")
    failed = [r for r in res.raw if r["error"]]
    if failed:
        log.warning("%d method runs failed; see raw.csv", len(failed))
    return EXIT_OK


def _write_reports(args, res, suffix=""):
    for m in res.reports:
        _out(args, f"{m.lower()}{suffix}.csv").write_text(res.report_csv(m), encoding="utf-8")
    _out(args, f"raw{suffix}.csv").write_text(res.raw_csv(), encoding="utf-8")
    _out(args, f"table{suffix}.txt").write_text(res.table(), encoding="utf-8")


def stage_trace(cfg: ExperimentConfig) -> list[dict]:
    """Per-stage records of one seeded ABHT run on the first repetition's data."""
    base = None
    if cfg.data_path is not None:
        base = load_csv(cfg.data_path, cfg.target_column, cfg.region_column, cfg.drop_columns)
    stream = RngStream(int(cfg.seed)).child(0)
    (train, val, test), names = repetition_data(cfg, stream, base)
    # same substream as ABHT in repetition 0 of run_experiment
    idx = cfg.methods.index("ABHT") if "ABHT" in cfg.methods else 0
    result = grid_search("ABHT", train, val, cfg, stream.child(100 + idx))
    model = result.model
    records = []
    for k, st in enumerate(model.stages, start=1):
        rep = region_mse(model.truncate(k).predict(test.xs), test.ys, test.region_labels, names)
        records.append({
            "stage": st.stage,
            "bin_width": st.bin_width,
            "size_param": st.size_param,
            "rho": st.learning_rate,
            "T": st.n_iters,
            "stopped_cells": st.stopped.describe_cells(),
            "n_working_cells": int(st.working.n_active),
            "n_refined_cells": int(st.refined.n_active),
            "test_mse": rep.overall_mse,
            "test_region_mse": {str(r): m for r, (m, _) in sorted(rep.per_region.items())},
        })
    return records


def cmd_trace(args) -> int:
    cfg, _ = load_config(args.config, args.seed)
    records = stage_trace(cfg)
    path = Path(args.out) if args.out else _out(args, "trace.jsonl")
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    print(f"{len(records)} stages written to {path}")
    return EXIT_OK


def _add_common(p, suppress=False):
    # subcommands repeat the global flags without defaults, so a flag given
    # before the subcommand is not reset by the subparser
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--seed", type=int, default=d(None), help="root seed (overrides the config)")
    p.add_argument("--threads", type=int, default=d(1), help="worker processes for repetitions")
    p.add_argument("--out-dir", default=d("."), help="directory for output files")
    p.add_argument("--config", default=d(None), help="JSON experiment config")
    p.add_argument("-v", "--verbose", action="count", default=d(0))


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    _add_common(common, suppress=True)
    p = argparse.ArgumentParser(prog="htboost", description="Histogram-transform boosting experiments.")
    _add_common(p)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", parents=[common], help="generate a synthetic dataset")
    g.add_argument("--case", choices=("A", "B"), required=True)
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--noise-sd", type=float, default=0.01)
    g.add_argument("--out", default=None)
    g.set_defaults(func=cmd_gen)

    f = sub.add_parser("fit", parents=[common], help="grid-search and fit one method, save the model")
    f.add_argument("--method", choices=("PEHT", "BHT", "ABHT", "peht", "bht", "abht"), required=True)
    f.add_argument("--train", required=True)
    f.add_argument("--val", required=True)
    f.add_argument("--target", default="y")
    f.add_argument("--region-column", default="region")
    f.add_argument("--out", default=None)
    f.set_defaults(func=cmd_fit)

    pr = sub.add_parser("predict", parents=[common], help="predict with a saved model")
    pr.add_argument("--model", required=True)
    pr.add_argument("--data", required=True)
    pr.add_argument("--target", default="y")
    pr.add_argument("--region-column", default="region")
    pr.add_argument("--no-target", dest="has_target", action="store_false",
                    help="the data file holds features only")
    pr.add_argument("--out", default=None)
    pr.set_defaults(func=cmd_predict)

    e = sub.add_parser("experiment", parents=[common], help="run a repeated experiment from --config")
    e.add_argument("--dry-run", action="store_true", help="print the planned runs and exit")
    e.set_defaults(func=cmd_experiment)

    t = sub.add_parser("trace", parents=[common], help="write the stage trace of one ABHT run")
    t.add_argument("--out", default=None)
    t.set_defaults(func=cmd_trace)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, InvalidInputError, OutOfDomainError, ModelFormatError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except InvalidParameterError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (HTBoostError, AssertionError, ArithmeticError) as exc:
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
