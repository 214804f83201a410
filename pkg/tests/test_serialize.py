"""Model files: exact round trips and corruption detection."""

import json

import numpy as np
import pytest

from htboost.adaptive import fit_abht
from htboost.boosting import fit_bht
from htboost.data import gen_case_a, gen_case_b
from htboost.exceptions import ModelFormatError
from htboost.learners import fit_binary, fit_ht, sample_binary_partition
from htboost.parallel import fit_peht
from htboost.rng import RngStream
from htboost.serialize import dumps, load_model, loads, save_model
from htboost.transform import sample_transform


def _models():
    root = RngStream(42)
    a_tr, a_va = gen_case_a(300, rng=root.child(1)), gen_case_a(300, rng=root.child(2))
    b_tr, b_va = gen_case_b(400, rng=root.child(3)), gen_case_b(400, rng=root.child(4))
    small = dict(rho_grid=(0.2,), T_grid=(20,))
    return {
        "ht": (fit_ht(b_tr.xs, b_tr.ys, sample_transform(0.1, 2, root.child(5))), 2),
        "binary": (fit_binary(b_tr.xs, b_tr.ys, sample_binary_partition(2, 4, root.child(6))), 2),
        "bht": (fit_bht(b_tr.xs, b_tr.ys, 0.1, 0.2, 30, rng=root.child(7))[0], 2),
        "bht_depth": (fit_bht(b_tr.xs, b_tr.ys, depth=5, learning_rate=0.2, max_iters=30, rng=root.child(8))[0], 2),
        "peht": (fit_peht(a_tr.xs, a_tr.ys, [0.1, 0.05, 0.02], rng=root.child(9)), 1),
        "abht": (fit_abht(a_tr, a_va, h_grid=(0.1, 0.03, 0.015), rng=root.child(10), **small), 1),
        "abht_2d": (fit_abht(b_tr, b_va, h_grid=(0.2, 0.15, 0.1), rng=root.child(11), **small), 2),
        "abht_depth": (fit_abht(b_tr, b_va, depth_grid=(2, 4, 6), initial_depth=2, rng=root.child(12), **small), 2),
    }


MODELS = _models()


@pytest.mark.parametrize("name", sorted(MODELS))
def test_round_trip_predictions(name, tmp_path):
    model, d = MODELS[name]
    path = tmp_path / "m.json"
    save_model(model, path)
    back = load_model(path)
    q = RngStream(1).generator().random((1000, d))
    assert np.max(np.abs(back.predict(q) - model.predict(q))) <= 1e-15
    assert dumps(back) == dumps(model)


def test_abht_stage_records_survive():
    model, _ = MODELS["abht"]
    back = loads(dumps(model))
    assert [s.bin_width for s in back.stages] == [s.bin_width for s in model.stages]
    for a, b in zip(model.stages, back.stages):
        assert np.array_equal(a.stopped.active, b.stopped.active)
        assert np.array_equal(a.cell_choice, b.cell_choice, equal_nan=True)


def _doc():
    return json.loads(dumps(MODELS["bht"][0]))


def test_checksum_detects_edits():
    doc = _doc()
    doc["payload"]["learning_rate"] = 0.25
    with pytest.raises(ModelFormatError, match="checksum"):
        loads(json.dumps(doc))


def test_version_mismatch():
    doc = _doc()
    doc["version"] = 99
    with pytest.raises(ModelFormatError, match="version"):
        loads(json.dumps(doc))


@pytest.mark.parametrize("text", ["{not json", "[]", '{"format": "other"}'])
def test_foreign_files(text):
    with pytest.raises(ModelFormatError):
        loads(text)


def test_unknown_object():
    with pytest.raises(ModelFormatError):
        dumps(object())
