"""Brute-force and Monte-Carlo checks of every provable bound the trainers rely on.

Each ``check_*`` returns a :class:`CheckReport`; none of them raise on a
violation, the CLI turns ``passed`` into the exit status.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from .boosting import PrivacyConfig, charge_dpboost_tree, gdf_filter
from .dp_tree import split_budget
from .mechanisms import (
    PARALLEL,
    SEQUENTIAL,
    BudgetLedger,
    exp_mechanism_index,
    laplace_samples,
    make_rng,
    selection_probabilities,
)
from .tree import leaf_value, split_gain


@dataclass
class CheckReport:
    name: str
    passed: bool
    trials: int
    violations: int = 0
    seconds: float = 0.0
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def _adjacent_sets(rng: np.random.Generator, trials: int, max_n: int, g_star: float, lambdas):
    """Random adjacent pairs I1 and I2 = I1 + {s}, with an arbitrary split of I1.

    Half of the gradients are drawn at the extremes +-g_star, and a quarter
    of the trials use the worst-case layout (all of I_L at one extreme,
    the extra instance at the other).
    """
    n = rng.integers(0, max_n + 1, size=trials)
    g = rng.uniform(-g_star, g_star, size=(trials, max_n))
    extreme = rng.random((trials, max_n)) < 0.5
    g[extreme] = g_star * rng.choice([-1.0, 1.0], size=int(extreme.sum()))
    g[np.arange(max_n)[None, :] >= n[:, None]] = 0.0
    g_s = rng.uniform(-g_star, g_star, size=trials)
    g_s = np.where(rng.random(trials) < 0.5, g_star * np.sign(g_s), g_s)
    n_left = rng.integers(0, n + 1)
    in_left = np.arange(max_n)[None, :] < n_left[:, None]

    worst = rng.random(trials) < 0.25
    sign = rng.choice([-1.0, 1.0], size=trials)
    g[worst] = np.where(in_left[worst], sign[worst, None] * g_star, g[worst])
    g_s[worst] = -sign[worst] * g_star

    lam = rng.choice(np.asarray(lambdas, dtype=np.float64), size=trials)
    s_left = (g * in_left).sum(axis=1)
    s_right = g.sum(axis=1) - s_left
    extra_left = rng.random(trials) < 0.5
    return n, n_left, s_left, s_right, g_s, extra_left, lam


def check_gain_sensitivity(trials: int = 100_000, seed: int = 0, max_n: int = 50,
                           g_star: float = 1.0, lambdas=(0.0, 0.1, 1.0)) -> CheckReport:
    """|G(I2) - G(I1)| <= 3 g*^2 for every random adjacent pair."""
    start = time.perf_counter()
    rng = make_rng(seed)
    n, n_left, s_left, s_right, g_s, extra_left, lam = _adjacent_sets(rng, trials, max_n, g_star, lambdas)
    n_right = n - n_left
    g1 = split_gain(s_left, n_left, s_right, n_right, lam)
    g2 = split_gain(
        s_left + np.where(extra_left, g_s, 0.0), n_left + extra_left,
        s_right + np.where(extra_left, 0.0, g_s), n_right + ~extra_left, lam,
    )
    bound = 3.0 * g_star ** 2
    delta = np.abs(g2 - g1)
    bad = int((delta > bound * (1 + 1e-12)).sum())
    return CheckReport(
        "sensitivity-gain", bad == 0, trials, bad, time.perf_counter() - start,
        {"bound": bound, "max_delta": float(delta.max()), "max_ratio": float(delta.max() / bound)},
    )


def _leaf_values(s, n, lam):
    den = n + lam
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(n > 0, -s / np.where(den > 0, den, 1.0), 0.0)


def check_leaf_sensitivity(trials: int = 100_000, seed: int = 0, max_n: int = 50,
                           g_star: float = 1.0, lambdas=(0.0, 0.1, 1.0)) -> CheckReport:
    """|V(I2) - V(I1)| <= g*/(1+lambda), plus tightness at the extremal point.

    The extremal configuration (one instance at -g*, the added one at +g*,
    lambda = 0) must reach at least 95% of the bound.
    """
    start = time.perf_counter()
    rng = make_rng(seed)
    n, _n_left, s_left, s_right, g_s, _extra, lam = _adjacent_sets(rng, trials, max_n, g_star, lambdas)
    s = s_left + s_right
    delta = np.abs(_leaf_values(s + g_s, n + 1, lam) - _leaf_values(s, n, lam))
    bound = g_star / (1.0 + lam)
    ratio = delta / bound
    bad = int((ratio > 1 + 1e-12).sum())

    extremal = abs(leaf_value(-g_star + g_star, 2, 0.0) - leaf_value(-g_star, 1, 0.0)) / g_star
    passed = bad == 0 and extremal >= 0.95
    return CheckReport(
        "sensitivity-leaf", passed, trials, bad, time.perf_counter() - start,
        {"max_ratio": float(ratio.max()), "extremal_ratio": extremal},
    )


def check_gdf_bound(trials: int = 10_000, seed: int = 0, max_n: int = 50, g_star: float = 1.0,
                    lambdas=(0.0, 0.1, 1.0)) -> CheckReport:
    """|V(I) - V(kept)| <= p (|mean filtered gradient| + g*) on random sets
    whose gradients range over [-3 g*, 3 g*]."""
    start = time.perf_counter()
    rng = make_rng(seed)
    bad = 0
    worst = 0.0
    for _ in range(trials):
        n = int(rng.integers(1, max_n + 1))
        lam = float(rng.choice(lambdas))
        spread = rng.choice([1.2, 2.0, 3.0])
        g = rng.uniform(-spread * g_star, spread * g_star, size=n)
        kept, report = gdf_filter(np.arange(n), g, g_star)
        err = abs(leaf_value(g.sum(), n, lam) - leaf_value(g[kept].sum(), kept.size, lam))
        if err > report.error_bound + 1e-12:
            bad += 1
        if report.error_bound > 0:
            worst = max(worst, err / report.error_bound)
    return CheckReport("gdf-bound", bad == 0, trials, bad, time.perf_counter() - start,
                       {"max_error_to_bound": worst})


def check_laplace(draws: int = 1_000_000, scale: float = 1.0, seed: int = 0) -> CheckReport:
    """Moments, tail mass and KS distance of the Laplace sampler."""
    start = time.perf_counter()
    x = laplace_samples(make_rng(seed), scale, draws)
    var = float(x.var())
    mean = float(x.mean())
    tail = float(np.mean(np.abs(x) > scale * math.log(100.0)))
    ks = float(stats.kstest(x, stats.laplace(scale=scale).cdf).statistic)
    true_var = 2.0 * scale ** 2
    checks = {
        "variance": abs(var - true_var) <= 0.02 * true_var,
        "mean": abs(mean) <= 0.01 * scale,
        "tail": abs(tail - 0.01) <= 0.002,
        "ks": ks < 0.005,
    }
    return CheckReport(
        "laplace", all(checks.values()), draws, sum(not v for v in checks.values()),
        time.perf_counter() - start,
        {"variance": var, "expected_variance": true_var, "mean": mean, "tail": tail, "ks": ks, "checks": checks},
    )


def check_expmech(draws: int = 100_000, seed: int = 0) -> CheckReport:
    """Selection frequencies on scaled scores {0, ln 2, ln 4} versus {1/7, 2/7, 4/7}."""
    start = time.perf_counter()
    eps, sens = 2.0, 1.0  # eps / (2 sens) = 1, so utilities are the scaled scores
    utilities = np.array([0.0, math.log(2.0), math.log(4.0)])
    expected = np.array([1.0, 2.0, 4.0]) / 7.0
    rng = make_rng(seed)
    counts = np.zeros(3, dtype=np.int64)
    for _ in range(draws):
        counts[exp_mechanism_index(rng, utilities, eps, sens)] += 1
    freq = counts / draws
    max_dev = float(np.abs(freq - expected).max())
    p_value = float(stats.chisquare(counts, expected * draws).pvalue)
    analytic = selection_probabilities(utilities, eps, sens)
    passed = max_dev <= 0.01 and p_value > 0.001 and np.allclose(analytic, expected, atol=1e-12)
    return CheckReport("expmech", passed, draws, int(max_dev > 0.01), time.perf_counter() - start,
                       {"frequencies": freq.tolist(), "expected": expected.tolist(),
                        "max_abs_deviation": max_dev, "chi2_pvalue": p_value})


def check_ledger(total_eps: float = 100.0, n_trees: int = 1000, trees_per_ensemble: int = 50,
                 max_depth: int = 6) -> CheckReport:
    """Composed budget of every mode equals the requested epsilon."""
    start = time.perf_counter()
    config = PrivacyConfig(total_eps, n_trees, trees_per_ensemble)
    dp = BudgetLedger()
    for t in range(n_trees):
        charge_dpboost_tree(dp, config, t)
    seq = BudgetLedger()
    for t in range(n_trees):
        seq.record(f"tree {t + 1}", total_eps / n_trees, SEQUENTIAL)
    para = BudgetLedger()
    for _ in range(n_trees):
        para.record("para", total_eps, PARALLEL)
    b = split_budget(config.eps_per_tree, max_depth)
    totals = {
        "dpboost": dp.total(),
        "seq": seq.total(),
        "para": para.total(),
        "per_tree": b.eps_leaf + max_depth * b.eps_nleaf,
    }
    expected = {"dpboost": total_eps, "seq": total_eps, "para": total_eps, "per_tree": config.eps_per_tree}
    errs = {k: abs(totals[k] - expected[k]) for k in totals}
    bad = sum(e > 1e-9 * max(1.0, expected[k]) for k, e in errs.items())
    return CheckReport("ledger", bad == 0, len(totals), bad, time.perf_counter() - start,
                       {"totals": totals, "n_ensembles": config.n_ensembles,
                        "eps_per_tree": config.eps_per_tree})


CHECKS = {
    "sensitivity-gain": check_gain_sensitivity,
    "sensitivity-leaf": check_leaf_sensitivity,
    "gdf-bound": check_gdf_bound,
    "laplace": check_laplace,
    "expmech": check_expmech,
    "ledger": check_ledger,
}
