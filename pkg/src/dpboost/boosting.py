"""Boosting drivers: DPBoost (ensemble of ensembles) and the SEQ / PARA / NP baselines.

All trainers take a dense feature matrix and labels already scaled to
[-1, 1] and return ``(GbdtModel, logs)`` where ``logs`` holds one
:class:`IterationLog` per trained tree.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .data import CLASSIFICATION, IDENTITY_SCALE, LabelScale, sample_disjoint
from .dp_tree import TreeTrace, glc_clip, split_budget, train_greedy_tree, train_single_tree
from .mechanisms import (
    PARALLEL,
    PURPOSE_SAMPLE,
    PURPOSE_TREE,
    SEQUENTIAL,
    BudgetLedger,
    derive_seed,
    make_rng,
)
from .tree import DEFAULT_BINS, SQUARE_LOSS, GbdtModel, LossKind

__all__ = [
    "MODES",
    "PrivacyConfig",
    "FilterReport",
    "IterationLog",
    "gdf_filter",
    "glc_bound",
    "glc_clip",
    "leaf_sensitivity",
    "gain_sensitivity",
    "subset_schedule",
    "charge_dpboost_tree",
    "train_dpboost",
    "train_seq",
    "train_para",
    "train_np",
    "train",
]

logger = logging.getLogger(__name__)

MODES = ("dpboost", "seq", "para", "np")
GLC_INDEX_MODES = ("ensemble", "global")


@dataclass(frozen=True)
class PrivacyConfig:
    total_eps: float
    n_trees: int
    trees_per_ensemble: int
    glc: bool = True
    glc_index_mode: str = "ensemble"
    mode: str = "dpboost"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.mode != "np" and not (self.total_eps > 0 and math.isfinite(self.total_eps)):
            raise ValueError(f"total_eps must be positive and finite, got {self.total_eps}")
        if self.n_trees < 1:
            raise ValueError(f"n_trees must be >= 1, got {self.n_trees}")
        if not 1 <= self.trees_per_ensemble <= self.n_trees:
            raise ValueError(
                f"trees_per_ensemble must be in [1, n_trees={self.n_trees}], got {self.trees_per_ensemble}"
            )
        if self.glc_index_mode not in GLC_INDEX_MODES:
            raise ValueError(f"glc_index_mode must be one of {GLC_INDEX_MODES}, got {self.glc_index_mode!r}")

    @property
    def n_ensembles(self) -> int:
        return -(-self.n_trees // self.trees_per_ensemble)

    @property
    def eps_per_tree(self) -> float:
        return self.total_eps / self.n_ensembles

    def glc_index(self, t: int) -> int:
        """1-based clipping index for 0-based tree number ``t``."""
        if self.glc_index_mode == "global":
            return t + 1
        return t % self.trees_per_ensemble + 1


@dataclass(frozen=True)
class FilterReport:
    p: float
    mean_filtered_gradient: float
    n_total: int
    n_filtered: int
    g_star: float

    @property
    def error_bound(self) -> float:
        """Upper bound on the leaf-value shift caused by the filtering."""
        return self.p * (abs(self.mean_filtered_gradient) + self.g_star)


def gdf_filter(idx, gradients, g_star: float) -> tuple[np.ndarray, FilterReport]:
    """Keep the rows of ``idx`` whose |gradient| is at most ``g_star``."""
    idx = np.asarray(idx, dtype=np.intp)
    g = np.asarray(gradients, dtype=np.float64)[idx]
    keep = np.abs(g) <= g_star
    n_f = int(idx.size - keep.sum())
    report = FilterReport(
        p=n_f / idx.size if idx.size else 0.0,
        mean_filtered_gradient=float(g[~keep].mean()) if n_f else 0.0,
        n_total=int(idx.size),
        n_filtered=n_f,
        g_star=g_star,
    )
    return idx[keep], report


def glc_bound(index: int, eta: float, g_star: float = 1.0) -> float:
    """Leaf clipping threshold ``g_star * (1 - eta)**(index - 1)``."""
    if index < 1:
        raise ValueError(f"index is 1-based, got {index}")
    return g_star * (1.0 - eta) ** (index - 1)


def leaf_sensitivity(index: int, eta: float, g_star: float = 1.0, reg_lambda: float = 0.1) -> float:
    return min(g_star / (1.0 + reg_lambda), 2.0 * glc_bound(index, eta, g_star))


def gain_sensitivity(g_star: float = 1.0) -> float:
    return 3.0 * g_star * g_star


def subset_schedule(n_total: int, eta: float, trees_per_ensemble: int) -> list[int]:
    """Rows drawn by each tree of an ensemble, largest first.

    Position ``j`` (1-based) gets ``floor(n * eta * (1-eta)**(j-1) / (1 - (1-eta)**T_e))``;
    the flooring remainder goes to the last position so the sizes sum to
    ``n_total``.
    """
    if trees_per_ensemble < 1:
        raise ValueError("trees_per_ensemble must be >= 1")
    if not 0 < eta < 1:
        raise ValueError(f"eta must be in (0, 1), got {eta}")
    denom = 1.0 - (1.0 - eta) ** trees_per_ensemble
    sizes = [math.floor(n_total * eta * (1.0 - eta) ** j / denom) for j in range(trees_per_ensemble)]
    # float rounding can push the first entry one past n when T_e == 1
    sizes = [min(s, n_total) for s in sizes]
    sizes[-1] += n_total - sum(sizes)
    if min(sizes) == 0:
        logger.warning("subset schedule gives some trees no rows (n=%d, T_e=%d)", n_total, trees_per_ensemble)
    return sizes


@dataclass
class IterationLog:
    t: int
    ensemble: int
    n_drawn: int
    eps_t: float
    delta_v: float | None
    filter: FilterReport | None
    trace: TreeTrace
    seconds: float
    glc_index: int | None = None
    drawn: np.ndarray | None = field(default=None, repr=False)


def charge_dpboost_tree(ledger: BudgetLedger, config: PrivacyConfig, t: int) -> None:
    """Record tree ``t``: a parallel member of its ensemble's group."""
    ledger.record(f"ensemble {t // config.trees_per_ensemble + 1}", config.eps_per_tree, PARALLEL)


def _model(trees, ledger, *, eta, reg_lambda, loss, task, label_scale, n_features, params):
    return GbdtModel(
        trees=trees,
        eta=eta,
        reg_lambda=reg_lambda,
        loss=loss,
        task=task,
        label_scale=label_scale,
        ledger=ledger,
        n_features=n_features,
        params=params,
    )


def train_dpboost(
    X: np.ndarray,
    y: np.ndarray,
    config: PrivacyConfig,
    *,
    max_depth: int = 6,
    reg_lambda: float = 0.1,
    eta: float = 0.1,
    n_bins: int | None = DEFAULT_BINS,
    seed: int = 0,
    loss: LossKind = SQUARE_LOSS,
    task: str = CLASSIFICATION,
    label_scale: LabelScale = IDENTITY_SCALE,
    keep_drawn: bool = False,
) -> tuple[GbdtModel, list[IterationLog]]:
    """Ensemble-of-ensembles DP boosting.

    Trees inside an ensemble see disjoint row subsets drawn from a pool
    that is refilled at each ensemble start, so they compose in parallel;
    ensembles compose sequentially. Every tree gets ``eps / N_e``.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = X.shape[0]
    g_star = loss.g_star
    schedule = subset_schedule(n, eta, config.trees_per_ensemble)
    delta_g = gain_sensitivity(g_star)
    budget = split_budget(config.eps_per_tree, max_depth)

    raw = np.zeros(n)
    ledger = BudgetLedger()
    trees, logs = [], []
    pool = np.arange(n)
    for t in range(config.n_trees):
        start = time.perf_counter()
        position = t % config.trees_per_ensemble
        if position == 0:
            pool = np.arange(n)
        g = loss.gradients(raw, y)
        want = schedule[position]
        if want > pool.size:
            logger.debug("tree %d: scheduled %d rows, only %d left", t, want, pool.size)
        drawn, pool = sample_disjoint(pool, min(want, pool.size), make_rng(seed, PURPOSE_SAMPLE, t))
        kept, report = gdf_filter(drawn, g, g_star)

        glc_index = config.glc_index(t)
        if config.glc:
            clip = glc_bound(glc_index, eta, g_star)
            delta_v = leaf_sensitivity(glc_index, eta, g_star, reg_lambda)
        else:
            clip, delta_v = None, g_star / (1.0 + reg_lambda)
        tree, trace = train_single_tree(
            X, g, kept, budget, delta_g, delta_v, derive_seed(seed, PURPOSE_TREE, t),
            reg_lambda=reg_lambda, n_bins=n_bins, clip_bound=clip,
        )
        charge_dpboost_tree(ledger, config, t)
        trees.append(tree)
        raw += eta * tree.predict(X)
        logs.append(IterationLog(
            t, t // config.trees_per_ensemble, drawn.size, budget.eps_t, delta_v, report, trace,
            time.perf_counter() - start, glc_index, drawn if keep_drawn else None,
        ))

    params = {
        "mode": "dpboost", "eps": config.total_eps, "n_trees": config.n_trees,
        "trees_per_ensemble": config.trees_per_ensemble, "glc": config.glc,
        "glc_index": config.glc_index_mode, "max_depth": max_depth, "n_bins": n_bins, "seed": seed,
    }
    model = _model(trees, ledger, eta=eta, reg_lambda=reg_lambda, loss=loss, task=task,
                   label_scale=label_scale, n_features=X.shape[1], params=params)
    return model, logs


def train_seq(
    X: np.ndarray,
    y: np.ndarray,
    total_eps: float,
    n_trees: int,
    *,
    max_depth: int = 6,
    reg_lambda: float = 0.1,
    eta: float = 0.1,
    n_bins: int | None = DEFAULT_BINS,
    seed: int = 0,
    loss: LossKind = SQUARE_LOSS,
    task: str = CLASSIFICATION,
    label_scale: LabelScale = IDENTITY_SCALE,
) -> tuple[GbdtModel, list[IterationLog]]:
    """Every tree on all rows (after gradient filtering) with ``eps / T`` each."""
    PrivacyConfig(total_eps, n_trees, n_trees, mode="seq")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = X.shape[0]
    g_star = loss.g_star
    eps_t = total_eps / n_trees
    budget = split_budget(eps_t, max_depth)
    delta_v = g_star / (1.0 + reg_lambda)
    everyone = np.arange(n)

    raw = np.zeros(n)
    ledger = BudgetLedger()
    trees, logs = [], []
    for t in range(n_trees):
        start = time.perf_counter()
        g = loss.gradients(raw, y)
        kept, report = gdf_filter(everyone, g, g_star)
        tree, trace = train_single_tree(
            X, g, kept, budget, gain_sensitivity(g_star), delta_v, derive_seed(seed, PURPOSE_TREE, t),
            reg_lambda=reg_lambda, n_bins=n_bins,
        )
        ledger.record(f"tree {t + 1}", eps_t, SEQUENTIAL)
        trees.append(tree)
        raw += eta * tree.predict(X)
        logs.append(IterationLog(t, 0, n, eps_t, delta_v, report, trace, time.perf_counter() - start))

    params = {"mode": "seq", "eps": total_eps, "n_trees": n_trees, "max_depth": max_depth,
              "n_bins": n_bins, "seed": seed}
    model = _model(trees, ledger, eta=eta, reg_lambda=reg_lambda, loss=loss, task=task,
                   label_scale=label_scale, n_features=X.shape[1], params=params)
    return model, logs


def train_para(
    X: np.ndarray,
    y: np.ndarray,
    total_eps: float,
    n_trees: int,
    *,
    max_depth: int = 6,
    reg_lambda: float = 0.1,
    eta: float = 0.1,
    n_bins: int | None = DEFAULT_BINS,
    seed: int = 0,
    loss: LossKind = SQUARE_LOSS,
    task: str = CLASSIFICATION,
    label_scale: LabelScale = IDENTITY_SCALE,
    keep_drawn: bool = False,
) -> tuple[GbdtModel, list[IterationLog]]:
    """Each tree takes half of the still-unused rows and the full budget.

    Training stops once fewer than two unused rows remain, so at most
    ``floor(log2 n) + 1`` trees are built whatever ``n_trees`` says.
    """
    PrivacyConfig(total_eps, n_trees, n_trees, mode="para")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = X.shape[0]
    g_star = loss.g_star
    budget = split_budget(total_eps, max_depth)
    delta_v = g_star / (1.0 + reg_lambda)

    raw = np.zeros(n)
    ledger = BudgetLedger()
    trees, logs = [], []
    pool = np.arange(n)
    for t in range(n_trees):
        if pool.size < 2:
            logger.info("PARA stopped after %d trees: unused pool exhausted", t)
            break
        start = time.perf_counter()
        g = loss.gradients(raw, y)
        drawn, pool = sample_disjoint(pool, -(-pool.size // 2), make_rng(seed, PURPOSE_SAMPLE, t))
        kept, report = gdf_filter(drawn, g, g_star)
        tree, trace = train_single_tree(
            X, g, kept, budget, gain_sensitivity(g_star), delta_v, derive_seed(seed, PURPOSE_TREE, t),
            reg_lambda=reg_lambda, n_bins=n_bins,
        )
        ledger.record("para", total_eps, PARALLEL)
        trees.append(tree)
        raw += eta * tree.predict(X)
        logs.append(IterationLog(t, 0, drawn.size, total_eps, delta_v, report, trace,
                                 time.perf_counter() - start, None, drawn if keep_drawn else None))

    params = {"mode": "para", "eps": total_eps, "n_trees": n_trees, "max_depth": max_depth,
              "n_bins": n_bins, "seed": seed}
    model = _model(trees, ledger, eta=eta, reg_lambda=reg_lambda, loss=loss, task=task,
                   label_scale=label_scale, n_features=X.shape[1], params=params)
    return model, logs


def train_np(
    X: np.ndarray,
    y: np.ndarray,
    n_trees: int,
    *,
    max_depth: int = 6,
    reg_lambda: float = 0.1,
    eta: float = 0.1,
    n_bins: int | None = DEFAULT_BINS,
    seed: int = 0,
    loss: LossKind = SQUARE_LOSS,
    task: str = CLASSIFICATION,
    label_scale: LabelScale = IDENTITY_SCALE,
) -> tuple[GbdtModel, list[IterationLog]]:
    """Plain greedy GBDT: no noise, no filtering, empty ledger."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = X.shape[0]
    everyone = np.arange(n)
    raw = np.zeros(n)
    trees, logs = [], []
    for t in range(n_trees):
        start = time.perf_counter()
        g = loss.gradients(raw, y)
        tree, trace = train_greedy_tree(X, g, everyone, max_depth, reg_lambda=reg_lambda, n_bins=n_bins)
        trees.append(tree)
        raw += eta * tree.predict(X)
        logs.append(IterationLog(t, 0, n, math.inf, None, None, trace, time.perf_counter() - start))

    params = {"mode": "np", "n_trees": n_trees, "max_depth": max_depth, "n_bins": n_bins, "seed": seed}
    model = _model(trees, BudgetLedger(), eta=eta, reg_lambda=reg_lambda, loss=loss, task=task,
                   label_scale=label_scale, n_features=X.shape[1], params=params)
    return model, logs


def train(X, y, config: PrivacyConfig, **hyper) -> tuple[GbdtModel, list[IterationLog]]:
    """Dispatch on ``config.mode``."""
    if config.mode == "dpboost":
        return train_dpboost(X, y, config, **hyper)
    if config.mode in ("seq", "np"):
        hyper.pop("keep_drawn", None)
    if config.mode == "seq":
        return train_seq(X, y, config.total_eps, config.n_trees, **hyper)
    if config.mode == "para":
        return train_para(X, y, config.total_eps, config.n_trees, **hyper)
    return train_np(X, y, config.n_trees, **hyper)
