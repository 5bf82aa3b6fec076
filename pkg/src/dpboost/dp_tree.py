"""Level-wise tree growth, private (exponential + Laplace mechanisms) and greedy."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .mechanisms import (
    PARALLEL,
    PURPOSE_LEAF,
    PURPOSE_SPLIT,
    BudgetLedger,
    exp_mechanism_index,
    laplace_sample,
    make_rng,
)
from .tree import DEFAULT_BINS, CandidateSet, Tree, TreeBuilder, enumerate_candidates, leaf_value


@dataclass(frozen=True)
class TreeBudget:
    eps_t: float
    eps_leaf: float
    eps_nleaf: float
    depth_max: int


def split_budget(eps_t: float, depth_max: int) -> TreeBudget:
    """Half of ``eps_t`` to the leaves, the other half shared equally by the
    ``depth_max`` internal levels."""
    if not eps_t > 0:
        raise ValueError(f"eps_t must be positive, got {eps_t}")
    if depth_max < 1:
        raise ValueError(f"depth_max must be >= 1, got {depth_max}")
    return TreeBudget(eps_t, eps_t / 2.0, eps_t / (2.0 * depth_max), int(depth_max))


@dataclass
class TreeTrace:
    """In-memory training diagnostics for one tree. Never serialised:
    pre-noise leaf values are not private."""

    n_instances: int = 0
    clip_bound: float | None = None
    delta_v: float | None = None
    raw_leaves: list = field(default_factory=list)
    clipped_leaves: list = field(default_factory=list)
    level_nodes: list = field(default_factory=list)


@dataclass
class _Leaf:
    node: int
    heap_id: int
    idx: np.ndarray


Chooser = Callable[[CandidateSet, int], int]


def _grow(X, gradients, idx, depth_max, reg_lambda, n_bins, choose: Chooser, trace: TreeTrace):
    """Grow level by level; returns the builder, the leaves, and the heap ids
    of nodes split at each level."""
    b = TreeBuilder()
    frontier = [(b.add(), 0, np.asarray(idx, dtype=np.intp))]
    leaves: list[_Leaf] = []
    split_levels: list[list[int]] = []
    for _depth in range(depth_max):
        trace.level_nodes.append([(h, nodes.size) for _, h, nodes in frontier])
        nxt, split_here = [], []
        for node, heap_id, nodes in frontier:
            cands = enumerate_candidates(X, gradients, nodes, n_bins, reg_lambda) if nodes.size >= 2 else None
            if not cands:
                leaves.append(_Leaf(node, heap_id, nodes))
                continue
            c = choose(cands, heap_id)
            f, thr = int(cands.feature[c]), float(cands.threshold[c])
            go_left = X[nodes, f] <= thr
            left, right = b.add(), b.add()
            b.set_split(node, f, thr, left, right)
            nxt.append((left, 2 * heap_id + 1, nodes[go_left]))
            nxt.append((right, 2 * heap_id + 2, nodes[~go_left]))
            split_here.append(heap_id)
        split_levels.append(split_here)
        frontier = nxt
    trace.level_nodes.append([(h, nodes.size) for _, h, nodes in frontier])
    leaves.extend(_Leaf(node, h, nodes) for node, h, nodes in frontier)
    return b, leaves, split_levels


def glc_clip(value: float, bound: float) -> float:
    """Clip ``value`` into ``[-bound, bound]`` keeping its sign."""
    if not bound > 0:
        raise ValueError(f"clip bound must be positive, got {bound}")
    if abs(value) <= bound:
        return value
    return bound if value > 0 else -bound


def train_single_tree(
    X: np.ndarray,
    gradients: np.ndarray,
    idx,
    budget: TreeBudget,
    delta_g: float,
    delta_v: float,
    seed: int,
    *,
    reg_lambda: float = 0.1,
    n_bins: int | None = DEFAULT_BINS,
    clip_bound: float | None = None,
    add_noise: bool = True,
) -> tuple[Tree, TreeTrace]:
    """Train one ``budget.eps_t``-DP regression tree on rows ``idx``.

    Each internal node picks its split with the exponential mechanism
    (``eps_nleaf``, sensitivity ``delta_g``) over all feature/threshold
    candidates jointly. Every leaf, including empty or early-stopped ones,
    gets its exact value, then clipping to ``clip_bound`` (if given), then
    Laplace noise of scale ``delta_v / eps_leaf``. ``add_noise=False``
    exists for testing only and voids the privacy guarantee.

    Randomness is drawn from generators derived from ``(seed, purpose,
    node)``, so the result does not depend on traversal order. Filtering
    rows by gradient is the caller's job.
    """
    trace = TreeTrace(n_instances=int(np.size(idx)), clip_bound=clip_bound, delta_v=delta_v)
    eps_nleaf = budget.eps_nleaf

    def choose(cands: CandidateSet, heap_id: int) -> int:
        rng = make_rng(seed, PURPOSE_SPLIT, heap_id)
        return exp_mechanism_index(rng, cands.gain, eps_nleaf, delta_g)

    b, leaves, split_levels = _grow(X, gradients, idx, budget.depth_max, reg_lambda, n_bins, choose, trace)

    noise_scale = delta_v / budget.eps_leaf
    for leaf in leaves:
        v = leaf_value(gradients[leaf.idx].sum(), leaf.idx.size, reg_lambda)
        trace.raw_leaves.append(v)
        if clip_bound is not None:
            v = glc_clip(v, clip_bound)
        trace.clipped_leaves.append(v)
        if add_noise:
            v += laplace_sample(make_rng(seed, PURPOSE_LEAF, leaf.heap_id), noise_scale)
        b.set_leaf(leaf.node, v)

    ledger = BudgetLedger()
    for level, heap_ids in enumerate(split_levels, start=1):
        # a level with no split still spends its share
        for _ in heap_ids or [None]:
            ledger.record(f"level {level}", eps_nleaf, PARALLEL)
    for _ in leaves:
        ledger.record("leaves", budget.eps_leaf, PARALLEL)
    return b.build(ledger), trace


def train_greedy_tree(
    X: np.ndarray,
    gradients: np.ndarray,
    idx,
    depth_max: int,
    *,
    reg_lambda: float = 0.1,
    n_bins: int | None = DEFAULT_BINS,
) -> tuple[Tree, TreeTrace]:
    """Non-private tree: max-gain splits (first maximum on ties), exact leaves."""
    trace = TreeTrace(n_instances=int(np.size(idx)))
    b, leaves, _ = _grow(X, gradients, idx, depth_max, reg_lambda, n_bins,
                         lambda cands, _h: int(np.argmax(cands.gain)), trace)
    for leaf in leaves:
        v = leaf_value(gradients[leaf.idx].sum(), leaf.idx.size, reg_lambda)
        trace.raw_leaves.append(v)
        trace.clipped_leaves.append(v)
        b.set_leaf(leaf.node, v)
    return b.build(), trace
