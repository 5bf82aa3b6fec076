"""Acceptance criteria 1-12 at desk scale.

Every test appends one PASS/FAIL line (shown in the terminal summary and on
stdout with ``-s``) before asserting, so a failing criterion is still
reported next to the others.
"""

import functools
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES, split_80_20
from dpboost.boosting import PrivacyConfig, subset_schedule, train
from dpboost.cli import error_rate, rmse
from dpboost.data import LabelScale, make_synthetic
from dpboost.estimator import DPBoostClassifier, DPBoostRegressor
from dpboost.verify import (
    check_expmech,
    check_gain_sensitivity,
    check_gdf_bound,
    check_laplace,
    check_leaf_sensitivity,
)

SEEDS = range(5)
N_TREES = 50
_seconds_per_tree: dict[str, float] = {}


def record(criterion: str, passed: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append((criterion, bool(passed), detail))
    print(f"{'PASS' if passed else 'FAIL'}  criterion {criterion}: {detail}")


@functools.lru_cache(maxsize=None)
def synthetic(task: str, seed: int):
    return split_80_20(*make_synthetic(task, seed=seed))


@functools.lru_cache(maxsize=None)
def fit(task: str, mode: str, seed: int, eps: float = 1.0, glc: bool = True):
    """Train on the first 80% of the seed's synthetic set; returns (test metric, estimator)."""
    Xtr, ytr, Xte, yte = synthetic(task, seed)
    cls = DPBoostClassifier if task == "classification" else DPBoostRegressor
    est = cls(mode=mode, epsilon=eps, n_trees=N_TREES, glc=glc, random_state=seed).fit(Xtr, ytr)
    metric = error_rate if task == "classification" else rmse
    _seconds_per_tree[f"{task}/{mode}/eps={eps}/glc={glc}/seed={seed}"] = est.seconds_per_tree_
    return metric(yte, est.predict(Xte)), est


def test_criterion_01_sensitivity_soundness():
    start = time.perf_counter()
    gain = check_gain_sensitivity(trials=100_000, seed=0)
    leaf = check_leaf_sensitivity(trials=100_000, seed=0)
    seconds = time.perf_counter() - start
    ok = gain.passed and leaf.passed and gain.violations == 0 and leaf.violations == 0 and seconds < 30
    record("1", ok, f"gain violations={gain.violations} (max ratio {gain.details['max_ratio']:.3f}), "
                    f"leaf violations={leaf.violations} (extremal ratio {leaf.details['extremal_ratio']:.3f}), "
                    f"{seconds:.1f}s")
    assert ok


def test_criterion_02_gdf_error_bound():
    start = time.perf_counter()
    rep = check_gdf_bound(trials=10_000, seed=0)
    seconds = time.perf_counter() - start
    ok = rep.violations == 0 and seconds < 10
    record("2", ok, f"violations={rep.violations}, max error/bound {rep.details['max_error_to_bound']:.3f}, "
                    f"{seconds:.1f}s")
    assert ok


def test_criterion_03_mechanism_calibration():
    start = time.perf_counter()
    lap = check_laplace(draws=1_000_000, scale=1.0, seed=0)
    em = check_expmech(draws=100_000, seed=0)
    seconds = time.perf_counter() - start
    var_ok = abs(lap.details["variance"] - 2.0) <= 0.02 * 2.0
    em_ok = em.details["max_abs_deviation"] <= 0.01
    ok = var_ok and em_ok and seconds < 30
    record("3", ok, f"Laplace variance {lap.details['variance']:.4f} (target 2), "
                    f"softmax max deviation {em.details['max_abs_deviation']:.4f}, {seconds:.1f}s")
    assert ok


def test_criterion_04_budget_exactness():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(200, 4))
    y = rng.uniform(-1, 1, 200)
    results = []
    for eps, T, te in [(1.0, 50, 50), (100.0, 1000, 50), (5.0, 20, 20)]:
        for mode in ("dpboost", "seq", "para"):
            model, _ = train(X, y, PrivacyConfig(eps, T, te, mode=mode), max_depth=1)
            results.append((eps, T, te, mode, model.ledger.total()))
    bad = [r for r in results if abs(r[4] - r[0]) > 1e-9]
    record("4", not bad, f"{len(results) - len(bad)}/{len(results)} (config, mode) totals equal eps within 1e-9")
    assert not bad


@pytest.fixture(scope="module")
def glc_run():
    X, y = make_synthetic("regression", seed=0)  # 10k instances
    scale = LabelScale.fit(y)
    config = PrivacyConfig(1.0, 100, 50)
    start = time.perf_counter()
    model, logs = train(X, scale.transform(y), config, seed=0, task="regression", label_scale=scale,
                        keep_drawn=True)
    return config, model, logs, time.perf_counter() - start


def test_criterion_05_ensemble_disjointness(glc_run):
    config, _, logs, _ = glc_run
    n = 10_000
    schedule = subset_schedule(n, 0.1, config.trees_per_ensemble)
    problems = []
    for e in range(config.n_ensembles):
        members = [l for l in logs if l.ensemble == e]
        drawn = np.concatenate([l.drawn for l in members])
        if np.unique(drawn).size != drawn.size:
            problems.append(f"ensemble {e} reuses rows")
        if [l.n_drawn for l in members] != schedule:
            problems.append(f"ensemble {e} sizes differ from schedule")
    ok = not problems and sum(schedule) == n
    record("5", ok, f"{config.n_ensembles} ensembles of {config.trees_per_ensemble}, schedule sum {sum(schedule)}"
                    + (f"; {problems}" if problems else ""))
    assert ok


def test_criterion_06_glc_postcondition(glc_run):
    config, _, logs, seconds = glc_run
    worst = 0.0
    violations = 0
    for l in logs:
        bound = 0.9 ** (config.glc_index(l.t) - 1)
        for v in l.trace.clipped_leaves:
            violations += abs(v) > bound
            worst = max(worst, abs(v) / bound)
    ok = violations == 0 and seconds < 60
    record("6", ok, f"{sum(len(l.trace.clipped_leaves) for l in logs)} leaves, violations={violations}, "
                    f"max |V|/bound {worst:.3f}, {seconds:.1f}s")
    assert ok


def test_criterion_07_np_utility():
    start = time.perf_counter()
    err, _ = fit("regression", "np", 0)
    seconds = time.perf_counter() - start
    baseline = synthetic("regression", 0)[3].std()
    ok = err < 0.9 * baseline and seconds < 60
    record("7", ok, f"NP RMSE {err:.2f} vs 0.9 x label std {0.9 * baseline:.2f}, {seconds:.1f}s")
    assert ok


def test_criterion_08_error_vs_eps():
    means = {eps: np.mean([fit("classification", "dpboost", s, eps)[0] for s in SEEDS]) for eps in (1.0, 10.0, 100.0)}
    np_mean = np.mean([fit("classification", "np", s)[0] for s in SEEDS])
    trend = means[10.0] <= means[1.0] + 0.02 and means[100.0] <= means[10.0] + 0.02
    close = means[100.0] - np_mean <= 0.05
    ok = trend and close
    record("8", ok, "mean test error " + ", ".join(f"eps={e:g}: {m:.3f}" for e, m in means.items())
           + f", NP: {np_mean:.3f}")
    assert ok


def test_criterion_09_baseline_ordering():
    rows = []
    for s in SEEDS:
        dp = fit("classification", "dpboost", s, 1.0)[0]
        para = fit("classification", "para", s, 1.0)[0]
        seq = fit("classification", "seq", s, 1.0)[0]
        rows.append((dp, para, seq))
    wins = sum(dp <= para and dp <= seq for dp, para, seq in rows)
    means = np.mean(rows, axis=0)
    ok = wins >= 4
    record("9", ok, f"DPBoost <= PARA and <= SEQ in {wins}/5 seeds; mean error DPBoost {means[0]:.3f}, "
                    f"PARA {means[1]:.3f}, SEQ {means[2]:.3f}")
    assert ok


def test_criterion_10_glc_ablation():
    pairs = [(fit("regression", "dpboost", s, 1.0, True)[0], fit("regression", "dpboost", s, 1.0, False)[0])
             for s in SEEDS]
    wins = sum(a <= b for a, b in pairs)
    ok = wins >= 4
    record("10", ok, f"with-GLC RMSE <= without in {wins}/5 seeds; mean {np.mean([a for a, _ in pairs]):.1f} "
                     f"vs {np.mean([b for _, b in pairs]):.1f}")
    assert ok


def test_criterion_11_filtered_ratio():
    eps = 5.0  # the per-ensemble budget of the reference configuration
    first, later = [], []
    for s in SEEDS:
        logs = fit("regression", "dpboost", s, eps)[1].training_log_
        first.append(logs[0].filter.p)
        later.extend(l.filter.p for l in logs[1:])
    ok = all(p == 0 for p in first) and max(later) < 0.10
    record("11", ok, f"eps={eps:g}: iteration-1 p = {max(first):g}, max later p = {max(later):.3f}, "
                     f"mean later p = {np.mean(later):.4f}")
    assert ok


def test_criterion_12_throughput():
    # make sure every trainer has been timed even when run in isolation
    for mode in ("dpboost", "seq", "para", "np"):
        fit("classification", mode, 0, 1.0)
    fit("regression", "dpboost", 0, 1.0)
    worst_key = max(_seconds_per_tree, key=_seconds_per_tree.get)
    worst = _seconds_per_tree[worst_key]
    ok = worst < 3.0
    record("12", ok, f"slowest {worst:.3f}s per tree ({worst_key}) over {len(_seconds_per_tree)} runs")
    assert ok
