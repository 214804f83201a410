"""End-to-end acceptance checks.

Each test prints one ``acceptance N PASS/FAIL`` line (also collected in the
terminal summary) and then asserts the same condition.  The experiment
tests take minutes; run them alone with ``pytest -m slow -s``.
"""

import time
from collections import defaultdict
from importlib.resources import files

import numpy as np
import pytest
from scipy import stats

from conftest import record
from htboost.adaptive import STOP_BEST, candidate_stream, fit_abht
from htboost.boosting import fit_bht
from htboost.data import gen_case_a
from htboost.evaluation import ExperimentConfig, grid_search, repetition_data, run_experiment
from htboost.learners import fit_ht, sample_binary_partition
from htboost.parallel import fit_peht
from htboost.regions import initial_partition
from htboost.rng import RngStream, sample_rotation
from htboost.transform import bin_key, sample_transform

pytestmark = pytest.mark.slow

# published region-wise reference MSEs on Case A: region -> (PEHT, BHT, ABHT)
REFERENCE_A = {
    "all": (2.589e-4, 1.687e-4, 1.500e-4),
    0: (1.220e-3, 4.631e-4, 3.877e-4),
    1: (1.283e-4, 1.270e-4, 1.233e-4),
    2: (1.145e-4, 1.259e-4, 1.101e-4),
}

CASE_B_GRID = dict(h_grid=(0.1, 0.05, 0.02))


def _mse(report, region):
    return report.overall_mse if region == "all" else report.per_region[region][0]


def test_acceptance_1_case_a_ordering():
    res = run_experiment(ExperimentConfig(case="A", repetitions=30, seed=0))
    rep = res.reports
    a, b, p = (rep[m].overall_mse for m in ("ABHT", "BHT", "PEHT"))
    rough = _mse(rep["PEHT"], 0) / _mse(rep["ABHT"], 0)
    factors = {}
    for region, refs in REFERENCE_A.items():
        for method, ref in zip(("PEHT", "BHT", "ABHT"), refs):
            factors[(method, region)] = _mse(rep[method], region) / ref
    within = all(0.5 <= f <= 2.0 for f in factors.values())
    ok = a < b and a < p and rough >= 2.0 and within
    worst = max(factors.items(), key=lambda kv: abs(np.log(kv[1])))
    record(1, "Case A ordering", ok,
           f"ABHT {a:.3e} BHT {b:.3e} PEHT {p:.3e}; PEHT/ABHT on [0,1/8) {rough:.2f} (need >= 2); "
           f"worst reference factor {worst[1]:.2f} at {worst[0]}")
    print(res.table())
    assert ok


def test_acceptance_2_case_b_ordering():
    cfg = ExperimentConfig(case="B", methods=("PEHT", "ABHT"), n_train=5000, n_val=5000, n_test=20000,
                           repetitions=10, seed=0, **CASE_B_GRID)
    rep = run_experiment(cfg).reports
    p, a = rep["PEHT"].overall_mse, rep["ABHT"].overall_mse
    ratios = {k: rep["PEHT"].per_region[k][0] / rep["ABHT"].per_region[k][0] for k in rep["ABHT"].per_region}
    largest = max(ratios, key=ratios.get)
    ok = a < p and ratios[0] >= 1.3 and largest == 0
    record(2, "Case B ordering", ok,
           f"ABHT {a:.3e} PEHT {p:.3e}; PEHT/ABHT by region "
           + ", ".join(f"{k}: {r:.2f}" for k, r in sorted(ratios.items()))
           + f"; rough block is region 0 (need ratio >= 1.3 and the largest), largest is region {largest}")
    assert ok


def test_acceptance_3_training_size_trend():
    means = defaultdict(list)
    for n in (1000, 3000, 10000):
        cfg = ExperimentConfig(case="A", methods=("PEHT", "ABHT"), n_train=n, n_val=n, repetitions=5, seed=0)
        rep = run_experiment(cfg).reports
        for m in ("PEHT", "ABHT"):
            means[m].append(rep[m].overall_mse)
    mono = all(np.all(np.diff(v) <= 0) for v in means.values())
    ratio = [p / a for p, a in zip(means["PEHT"], means["ABHT"])]
    ok = mono and ratio[-1] <= ratio[0]
    record(3, "training-size trend", ok,
           "n 1000/3000/10000: " + "; ".join(f"{m} " + " ".join(f"{v:.3e}" for v in means[m]) for m in means)
           + f"; PEHT/ABHT {ratio[0]:.2f} -> {ratio[-1]:.2f}")
    assert ok


def test_acceptance_4_stage_trace():
    grid = np.linspace(0.0, 1.0, 20001)[:, None]
    smooth = grid[grid[:, 0] >= 0.5]
    rough = grid[grid[:, 0] < 0.125]
    early, clean, notes = 0, 0, []
    for seed in range(10):
        cfg = ExperimentConfig(case="A", seed=seed)
        stream = RngStream(seed).child(0)
        (train, val, _), _ = repetition_data(cfg, stream)
        model = grid_search("ABHT", train, val, cfg, stream.child(100 + cfg.methods.index("ABHT"))).model
        # stopped within the first two stages; a region left over at the end does not count
        stopped = np.zeros(smooth.shape[0], dtype=bool)
        for rec in model.stages[:2]:
            stopped |= rec.stopped.contains(smooth)
        early += bool(stopped.all())
        first = model.stages[0]
        hit = first.stopped.contains(rough)
        reasons = first.stop_reason[first.refined.labels(rough[hit])] if hit.any() else np.array([], int)
        bad = int(np.sum(reasons == STOP_BEST))
        clean += bad == 0
        notes.append(f"s{seed}:{'E' if stopped.all() else '-'}{'' if bad == 0 else 'X'}")
    ok = early >= 7 and clean == 10
    record(4, "stage trace", ok,
           f"[1/2,1] stopped by stage 2 in {early}/10 (need >= 7); "
           f"[0,1/8) untouched at stage 1 in {clean}/10 (need 10); {' '.join(notes)}")
    assert ok


# --- property suites -------------------------------------------------------------

def _rotations():
    gen = RngStream(1).generator()
    worst = 0.0
    for d in range(1, 9):
        for _ in range(1000):
            r = sample_rotation(d, gen)
            worst = max(worst, np.max(np.abs(r.T @ r - np.eye(d))), abs(np.linalg.det(r) - 1))
    theta = [np.arctan2(r[1, 0], r[0, 0]) for r in (sample_rotation(2, gen) for _ in range(10000))]
    p = stats.kstest(np.mod(theta, 2 * np.pi), stats.uniform(0, 2 * np.pi).cdf).pvalue
    return worst <= 1e-10 and p > 0.01, f"rotation err {worst:.1e}, KS p {p:.2f}"


def _partitions():
    gen = RngStream(2).generator()
    ok = True
    for d, w in ((1, 0.03), (2, 0.07), (3, 0.25)):
        r = initial_partition(d, w)
        r = r.subset(np.flatnonzero(gen.random(r.n_active) < 0.6))
        x = np.vstack([gen.random((10000, d)), np.floor(gen.random((500, d)) / w) * w])
        lo, hi = r.boxes()
        inside = np.all((x[:, None, :] >= lo[None]) & (x[:, None, :] < hi[None]), axis=2)
        ok &= inside.sum(axis=1).max() <= 1 and np.array_equal(inside.any(axis=1), r.contains(x))
    for d, depth in ((1, 5), (2, 8), (5, 10)):
        part = sample_binary_partition(d, depth, gen)
        lo, hi = part.leaf_bounds()
        x = gen.random((10000, d))
        # grid points on every threshold: the upper leaf owns its lower edge
        x[:500] = lo[gen.integers(0, lo.shape[0], 500)]
        inside = np.all((x[:, None, :] >= lo[None]) & (x[:, None, :] < hi[None]), axis=2)
        ok &= np.all(inside.sum(axis=1) == 1)
        ok &= np.array_equal(np.argmax(inside, axis=1), part.leaf_ids(x))
    return bool(ok), "grid and binary covers disjoint"


def _oracle():
    worst = 0.0
    for i in range(100):
        gen = RngStream(3).child(i).generator()
        d = int(gen.integers(1, 5))
        h = float(gen.choice([0.2, 0.05, 0.01, 0.002]))
        n = int(gen.integers(1, 300))
        x, y = gen.random((n, d)), 3 * gen.standard_normal(n)
        clip = float(gen.uniform(0.5, 4))
        t = sample_transform(h, d, gen)
        groups = defaultdict(list)
        for xi, yi in zip(x, y):
            groups[bin_key(t, xi)].append(yi)
        expect = {k: min(max(sum(v) / len(v), -clip), clip) for k, v in groups.items()}
        got = fit_ht(x, y, t, clip).value_map()
        if got.keys() != expect.keys():
            return False, f"fit {i}: cells differ"
        worst = max(worst, max(abs(got[k] - expect[k]) for k in expect))
    return worst <= 1e-12, f"oracle err {worst:.1e}"


def _boosting():
    ok = True
    for i in range(50):
        gen = RngStream(4).child(i).generator()
        d = int(gen.integers(1, 4))
        x = gen.random((150, d))
        y = np.sin(6 * x.sum(axis=1)) + 0.1 * gen.standard_normal(150)
        model, _ = fit_bht(x, y, float(gen.choice([0.3, 0.1, 0.03])), float(gen.choice([0.01, 0.2, 1.0])), 15,
                           rng=RngStream(4).child(i, 1))
        ok &= bool(np.all(np.diff(np.concatenate([[model.initial_mse], model.mse_trace])) <= 0))
    worst = 0.0
    for rho in (0.1, 0.5, 0.9):
        c = 0.8
        model, _ = fit_bht(RngStream(5).generator().random((100, 2)), np.full(100, c), 0.2, rho, 10, rng=RngStream(5))
        t = np.arange(1, 11)
        worst = max(worst, np.max(np.abs(model.mse_trace - c**2 * (1 - rho) ** (2 * t))))
    return ok and worst <= 1e-10, f"decay err {worst:.1e}"


def _degeneracy():
    worst = 0.0
    q = np.linspace(0, 1, 1001)
    for seed in range(20):
        root = RngStream(seed)
        train, val = gen_case_a(200, rng=root.child(1)), gen_case_a(200, rng=root.child(2))
        m = fit_abht(train, val, h_grid=(0.05,), rho_grid=(0.1,), T_grid=(30,), max_stages=1, rng=root)
        ref, _ = fit_bht(train.xs, train.ys, 0.05, 0.1, 30, rng=candidate_stream(root, 1, 0, 0))
        worst = max(worst, np.max(np.abs(m.predict(q) - ref.predict(q))))
    return worst <= 1e-12, f"one-stage err {worst:.1e}"


def _peht_identity():
    worst = 0.0
    for i in range(50):
        gen = RngStream(6).child(i).generator()
        d = int(gen.integers(1, 4))
        x, y = gen.random((120, d)), gen.normal(size=120)
        m = fit_peht(x, y, float(gen.choice([0.3, 0.1, 0.04])), int(gen.integers(1, 30)), rng=RngStream(6).child(i, 1))
        q = gen.random((300, d))
        worst = max(worst, np.max(np.abs(m.predict(q) - np.mean([lr.predict(q) for lr in m.learners], axis=0))))
    return worst <= 1e-12, f"mean err {worst:.1e}"


def _determinism():
    # all methods and the full pipeline, at reduced sizes to fit the time budget
    cfg = ExperimentConfig(case="A", n_train=300, n_val=300, n_test=2000, repetitions=2, seed=11,
                           h_grid=(0.1, 0.05, 0.02), rho_grid=(0.1, 0.2), T_grid=(20, 50))
    a, b = run_experiment(cfg), run_experiment(cfg)
    same = all(a.report_csv(m) == b.report_csv(m) for m in cfg.methods) and a.raw_csv() == b.raw_csv()
    return same, "reports byte-identical" if same else "reports differ"


def test_acceptance_5_property_suites():
    start = time.perf_counter()
    results = {name: fn() for name, fn in (
        ("rotation", _rotations), ("partition", _partitions), ("oracle", _oracle), ("boosting", _boosting),
        ("degeneracy", _degeneracy), ("peht", _peht_identity), ("determinism", _determinism),
    )}
    elapsed = time.perf_counter() - start
    ok = all(r[0] for r in results.values()) and elapsed < 60
    record(5, "property suites", ok,
           f"{elapsed:.1f}s (need < 60); " + "; ".join(f"{k} {'ok' if r[0] else 'FAIL'} ({r[1]})" for k, r in results.items()))
    assert ok


def test_acceptance_6_tabular_smoke():
    path = str(files("htboost") / "data" / "tabular_demo.csv")
    cfg = ExperimentConfig(case=None, data_path=path, region_column="region", methods=("PEHT", "ABHT"),
                           depth_grid=(4, 6, 8), initial_depth=4, split_fractions=(0.4, 0.4, 0.2),
                           repetitions=3, max_stages=3, seed=0)
    res = run_experiment(cfg)
    errors = [row["error"] for row in res.raw if row["error"]]
    p, a = res.reports["PEHT"].overall_mse, res.reports["ABHT"].overall_mse
    ok = not errors and a <= 1.05 * p
    record(6, "tabular smoke", ok, f"ABHT {a:.4f} PEHT {p:.4f} ratio {a / p:.3f} (need <= 1.05); failures {len(errors)}")
    assert ok
