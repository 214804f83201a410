"""Versioned JSON serialization of fitted models.

A model file is a JSON object::

    {"format": "htboost-model", "version": 1,
     "checksum": "<sha256 of the canonical payload>",
     "payload": {"kind": ..., ...}}

Floats are written with ``repr`` precision, so a load reproduces every
stored number exactly.  Transforms are stored as (rotation entries, bin
width, translation), HT bin maps as parallel key/value lists, and staged
models as their stage records in order.
"""

from __future__ import annotations

import hashlib
import json
import math

import numpy as np

from .adaptive import ABHTModel, StageRecord
from .boosting import BHTModel
from .exceptions import ModelFormatError
from .learners import BinaryHistRegressor, BinaryPartition, BinarySampler, HTRegressor, HTSampler
from .parallel import PEHTModel
from .regions import RegionPartition, TreeRegionPartition
from .transform import HistogramTransform

__all__ = ["FORMAT", "VERSION", "model_to_dict", "model_from_dict", "dumps", "loads", "save_model", "load_model"]

FORMAT = "htboost-model"
VERSION = 1


def _f(v):
    v = float(v)
    return None if math.isnan(v) else v


def _unf(v):
    return float("nan") if v is None else float(v)


def _sampler_out(s):
    if isinstance(s, HTSampler):
        return {"type": "ht", "bin_width": s.bin_width}
    return {"type": "binary", "depth": int(s.depth), "split_rule": s.split_rule}


def _sampler_in(d):
    if d["type"] == "ht":
        return HTSampler(float(d["bin_width"]))
    return BinarySampler(int(d["depth"]), d["split_rule"])


def _tree_out(p: BinaryPartition):
    return {"dim": p.dim, "depth": p.depth, "features": p.features.tolist(), "thresholds": p.thresholds.tolist()}


def _tree_in(d) -> BinaryPartition:
    return BinaryPartition(
        int(d["dim"]), int(d["depth"]),
        np.asarray(d["features"], dtype=np.int64), np.asarray(d["thresholds"], dtype=float),
    )


def _learner_out(m):
    if isinstance(m, HTRegressor):
        t = m.transform
        return {
            "type": "ht",
            "rotation": t.rotation.tolist(),
            "bin_width": t.bin_width,
            "translation": t.translation.tolist(),
            "keys": m.keys.tolist(),
            "values": m.values.tolist(),
            "clip_bound": m.clip_bound,
            "default_value": m.default_value,
        }
    return {
        "type": "binary",
        "partition": _tree_out(m.partition),
        "values": m.values.tolist(),
        "occupied": m.occupied.astype(int).tolist(),
        "clip_bound": m.clip_bound,
        "default_value": m.default_value,
    }


def _learner_in(d):
    if d["type"] == "ht":
        t = HistogramTransform(np.asarray(d["rotation"]), d["bin_width"], np.asarray(d["translation"]))
        keys = np.asarray(d["keys"], dtype=np.int64).reshape(-1, t.dim)
        return HTRegressor(t, keys, np.asarray(d["values"], dtype=float), d["clip_bound"], d["default_value"])
    return BinaryHistRegressor(
        _tree_in(d["partition"]),
        np.asarray(d["values"], dtype=float),
        np.asarray(d["occupied"], dtype=bool),
        d["clip_bound"],
        d["default_value"],
    )


def _region_out(r):
    if r is None:
        return None
    if isinstance(r, RegionPartition):
        return {
            "type": "grid", "dim": r.dim, "cell_width": r.cell_width,
            "active": r.active.tolist(), "parent": _region_out(r.parent),
        }
    return {"type": "tree", "tree": _tree_out(r.tree), "depth": r.depth, "active": r.active.tolist()}


def _region_in(d):
    if d is None:
        return None
    if d["type"] == "grid":
        return RegionPartition(int(d["dim"]), float(d["cell_width"]), np.asarray(d["active"], dtype=np.int64),
                               _region_in(d["parent"]))
    return TreeRegionPartition(_tree_in(d["tree"]), int(d["depth"]), np.asarray(d["active"], dtype=np.int64))


def _bht_out(m: BHTModel):
    return {
        "kind": "bht",
        "learning_rate": m.learning_rate,
        "sampler": _sampler_out(m.sampler),
        "dim": m.dim,
        "clip_bound": m.clip_bound,
        "learners": [_learner_out(lr) for lr in m.learners],
        "mse_trace": m.mse_trace.tolist(),
        "initial_mse": m.initial_mse,
        "truncated": m.truncated,
        "n_rejected": m.n_rejected,
    }


def _bht_in(d) -> BHTModel:
    return BHTModel(
        learners=tuple(_learner_in(x) for x in d["learners"]),
        learning_rate=float(d["learning_rate"]),
        sampler=_sampler_in(d["sampler"]),
        dim=int(d["dim"]),
        clip_bound=float(d["clip_bound"]),
        mse_trace=np.asarray(d["mse_trace"], dtype=float),
        initial_mse=float(d["initial_mse"]),
        truncated=bool(d["truncated"]),
        n_rejected=int(d["n_rejected"]),
    )


def _nan_list(a):
    return [_f(v) for v in np.asarray(a, dtype=float)]


def model_to_dict(model) -> dict:
    """Plain-JSON payload of a fitted model."""
    if isinstance(model, BHTModel):
        return _bht_out(model)
    if isinstance(model, PEHTModel):
        return {
            "kind": "peht",
            "dim": model.dim,
            "clip_bound": model.clip_bound,
            "samplers": [_sampler_out(s) for s in model.samplers],
            "learners": [_learner_out(lr) for lr in model.learners],
        }
    if isinstance(model, ABHTModel):
        stages = []
        for s in model.stages:
            stages.append({
                "stage": s.stage,
                "sampler": _sampler_out(s.sampler),
                "n_iters": s.n_iters,
                "learning_rate": s.learning_rate,
                "boosted": _bht_out(s.boosted),
                "working": _region_out(s.working),
                "refined": _region_out(s.refined),
                "stopped": _region_out(s.stopped),
                "cell_choice": _nan_list(s.cell_choice),
                "refined_choice": _nan_list(s.refined_choice),
                "stop_reason": np.asarray(s.stop_reason).astype(int).tolist(),
                "val_mse": _f(s.val_mse),
            })
        return {
            "kind": "abht",
            "dim": model.dim,
            "shrinkage": model.shrinkage,
            "clip_bound": model.clip_bound,
            "used_training_fallback": model.used_training_fallback,
            "final_working": _region_out(model.final_working),
            "stages": stages,
        }
    if isinstance(model, (HTRegressor, BinaryHistRegressor)):
        return {"kind": "learner", "learner": _learner_out(model)}
    raise ModelFormatError(f"cannot serialize {type(model).__name__}")


def model_from_dict(d: dict):
    """Inverse of :func:`model_to_dict`."""
    try:
        kind = d["kind"]
        if kind == "bht":
            return _bht_in(d)
        if kind == "peht":
            return PEHTModel(
                learners=tuple(_learner_in(x) for x in d["learners"]),
                samplers=tuple(_sampler_in(s) for s in d["samplers"]),
                dim=int(d["dim"]),
                clip_bound=float(d["clip_bound"]),
            )
        if kind == "abht":
            stages = tuple(
                StageRecord(
                    stage=int(s["stage"]),
                    sampler=_sampler_in(s["sampler"]),
                    n_iters=int(s["n_iters"]),
                    learning_rate=float(s["learning_rate"]),
                    boosted=_bht_in(s["boosted"]),
                    working=_region_in(s["working"]),
                    refined=_region_in(s["refined"]),
                    stopped=_region_in(s["stopped"]),
                    cell_choice=np.array([_unf(v) for v in s["cell_choice"]]),
                    refined_choice=np.array([_unf(v) for v in s["refined_choice"]]),
                    stop_reason=np.asarray(s["stop_reason"], dtype=np.int64),
                    val_mse=_unf(s["val_mse"]),
                )
                for s in d["stages"]
            )
            clip = d["clip_bound"]
            return ABHTModel(
                stages=stages,
                shrinkage=float(d["shrinkage"]),
                dim=int(d["dim"]),
                clip_bound=None if clip is None else float(clip),
                used_training_fallback=bool(d["used_training_fallback"]),
                final_working=_region_in(d["final_working"]),
            )
        if kind == "learner":
            return _learner_in(d["learner"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"malformed model payload: {exc}") from exc
    raise ModelFormatError(f"unknown model kind {kind!r}")


def _canonical(payload) -> bytes:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), allow_nan=False).encode("utf-8")


def dumps(model) -> str:
    payload = model_to_dict(model)
    digest = hashlib.sha256(_canonical(payload)).hexdigest()
    doc = {"format": FORMAT, "version": VERSION, "checksum": digest, "payload": payload}
    return json.dumps(doc, sort_keys=True, allow_nan=False)


def loads(text: str):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"model file is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != FORMAT:
        raise ModelFormatError("not an htboost model file")
    if doc.get("version") != VERSION:
        raise ModelFormatError(f"model format version {doc.get('version')!r} is not supported (expected {VERSION})")
    payload = doc.get("payload")
    if not isinstance(payload, dict):
        raise ModelFormatError("model file has no payload")
    if hashlib.sha256(_canonical(payload)).hexdigest() != doc.get("checksum"):
        raise ModelFormatError("checksum mismatch: model file is corrupt")
    return model_from_dict(payload)


def save_model(model, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(model))


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())
