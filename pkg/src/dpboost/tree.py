"""Non-private GBDT machinery shared by every trainer.

Square loss only: each instance has unit hessian, so the second-order
statistics reduce to instance counts.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .data import CLASSIFICATION, IDENTITY_SCALE, LabelScale, normalize_task
from .mechanisms import BudgetLedger

MODEL_FORMAT_VERSION = 1
DEFAULT_BINS = 32


@dataclass(frozen=True)
class LossKind:
    """Loss descriptor. ``g_star`` bounds |gradient| at raw prediction 0
    over labels in [-1, 1]; it depends on the loss only, never on data."""

    kind: str = "square"
    g_star: float = 1.0

    def gradients(self, raw, y):
        # d/dp 0.5 * (p - y)^2
        return np.asarray(raw, dtype=np.float64) - np.asarray(y, dtype=np.float64)


SQUARE_LOSS = LossKind()


def split_gain(sum_g_left, n_left, sum_g_right, n_right, reg_lambda):
    """Split score ``S_L^2/(n_L+lam) + S_R^2/(n_R+lam)``.

    Works elementwise on arrays. An empty side contributes 0, including the
    0/0 case when ``reg_lambda == 0``.
    """
    return _side_score(sum_g_left, n_left, reg_lambda) + _side_score(sum_g_right, n_right, reg_lambda)


def _side_score(s, n, reg_lambda):
    s = np.asarray(s, dtype=np.float64)
    den = np.asarray(n, dtype=np.float64) + reg_lambda
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(den > 0, s * s / np.where(den > 0, den, 1.0), 0.0)
    return out if out.ndim else float(out)


def leaf_value(sum_g: float, n: int, reg_lambda: float) -> float:
    """Optimal leaf weight ``-sum_g / (n + lam)``; 0 for an empty leaf."""
    if n == 0:
        return 0.0
    den = n + reg_lambda
    if den <= 0:
        raise ValueError(f"degenerate leaf: n={n}, lambda={reg_lambda}")
    return -float(sum_g) / den


@dataclass
class CandidateSet:
    """Split candidates for one node, flattened across features.

    ``n_left[i]`` counts the node's instances with
    ``x[feature[i]] <= threshold[i]``.
    """

    feature: np.ndarray
    threshold: np.ndarray
    gain: np.ndarray
    n_left: np.ndarray

    def __len__(self) -> int:
        return self.feature.size


_EMPTY = CandidateSet(np.empty(0, np.intp), np.empty(0), np.empty(0), np.empty(0, np.intp))


def enumerate_candidates(X: np.ndarray, gradients, idx, n_bins: int | None = DEFAULT_BINS,
                         reg_lambda: float = 0.1) -> CandidateSet:
    """All ``x[f] <= v`` splits of the node ``idx`` with their gains.

    Thresholds are observed values. A feature with at most ``n_bins``
    distinct values in the node contributes every distinct value but its
    maximum; otherwise the ``n_bins - 1`` quantile cut points of the node's
    values are used (deduplicated). ``n_bins=None`` means exhaustive.
    Splits leaving a side empty never appear.
    """
    idx = np.asarray(idx, dtype=np.intp)
    m = idx.size
    if m < 2:
        return _EMPTY
    Xn = np.ascontiguousarray(X[idx].T)  # (d, m): sort along contiguous rows
    g = np.asarray(gradients, dtype=np.float64)[idx]
    order = np.argsort(Xn, axis=1)
    sv = np.take_along_axis(Xn, order, axis=1)
    cg = np.cumsum(g[order], axis=1)
    total = cg[:, -1]

    run_end = sv[:, :-1] < sv[:, 1:]  # (d, m-1): column k is the last of its value run
    mask = run_end
    if n_bins is not None:
        n_distinct = run_end.sum(axis=1) + 1
        wide = np.flatnonzero(n_distinct > n_bins)
        if wide.size:
            mask = run_end.copy()
            mask[wide] = _quantile_cuts(run_end[wide], m, n_bins)

    f, k = np.nonzero(mask)
    if f.size == 0:
        return _EMPTY
    s_left = cg[f, k]
    n_left = k + 1
    gain = split_gain(s_left, n_left, total[f] - s_left, m - n_left, reg_lambda)
    return CandidateSet(f.astype(np.intp), sv[f, k], np.asarray(gain), n_left)


def _quantile_cuts(run_end: np.ndarray, m: int, n_bins: int) -> np.ndarray:
    """Boolean (d', m-1) mask of quantile cut positions for each row."""
    d = run_end.shape[0]
    # last index of the value run containing each position
    ends = np.hstack([np.where(run_end, np.arange(m - 1), m), np.full((d, 1), m - 1)])
    last_of_run = np.minimum.accumulate(ends[:, ::-1], axis=1)[:, ::-1]
    ranks = np.ceil(np.arange(1, n_bins) * m / n_bins).astype(np.intp) - 1
    pos = last_of_run[:, ranks]  # (d', n_bins-1)
    out = np.zeros_like(run_end)
    rows = np.broadcast_to(np.arange(d)[:, None], pos.shape)
    keep = pos < m - 1
    out[rows[keep], pos[keep]] = True
    return out


@dataclass
class Tree:
    """Array-backed binary tree. ``feature[i] == -1`` marks a leaf.

    Nodes are stored in breadth-first creation order; ``left``/``right``
    index into the same arrays.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    ledger: BudgetLedger = field(default_factory=BudgetLedger)

    @property
    def n_nodes(self) -> int:
        return self.feature.size

    @property
    def n_leaves(self) -> int:
        return int((self.feature < 0).sum())

    def is_leaf(self, i: int) -> bool:
        return self.feature[i] < 0

    def depth(self) -> int:
        d = np.zeros(self.n_nodes, dtype=np.intp)
        for i in range(self.n_nodes):
            if not self.is_leaf(i):
                d[self.left[i]] = d[self.right[i]] = d[i] + 1
        return int(d.max()) if d.size else 0

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Index of the leaf reached by each row of ``X``."""
        node = np.zeros(X.shape[0], dtype=np.intp)
        active = np.flatnonzero(self.feature[node] >= 0)
        while active.size:
            nd = node[active]
            go_left = X[active, self.feature[nd]] <= self.threshold[nd]
            node[active] = np.where(go_left, self.left[nd], self.right[nd])
            active = active[self.feature[node[active]] >= 0]
        return node

    def max_feature(self) -> int:
        return int(self.feature.max()) if self.n_nodes else -1

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_dict(self) -> dict:
        nodes = []
        for i in range(self.n_nodes):
            if self.is_leaf(i):
                nodes.append({"leaf": float(self.value[i])})
            else:
                nodes.append({
                    "feature": int(self.feature[i]),
                    "threshold": float(self.threshold[i]),
                    "left": int(self.left[i]),
                    "right": int(self.right[i]),
                })
        out = {"nodes": nodes}
        if len(self.ledger):
            out["ledger"] = self.ledger.to_dict()
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        b = TreeBuilder()
        for node in d["nodes"]:
            b.add()
        for i, node in enumerate(d["nodes"]):
            if "leaf" in node:
                b.set_leaf(i, node["leaf"])
            else:
                b.set_split(i, node["feature"], node["threshold"], node["left"], node["right"])
        ledger = BudgetLedger.from_dict(d["ledger"]) if "ledger" in d else BudgetLedger()
        return b.build(ledger)

    @classmethod
    def leaf(cls, value: float) -> "Tree":
        b = TreeBuilder()
        b.set_leaf(b.add(), value)
        return b.build()


class TreeBuilder:
    """Mutable scratch space used while growing a :class:`Tree`."""

    def __init__(self):
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[float] = []

    def add(self) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(0.0)
        return len(self.feature) - 1

    def set_split(self, i, feature, threshold, left, right):
        self.feature[i] = int(feature)
        self.threshold[i] = float(threshold)
        self.left[i] = int(left)
        self.right[i] = int(right)

    def set_leaf(self, i, value):
        self.feature[i] = -1
        self.value[i] = float(value)

    def build(self, ledger: BudgetLedger | None = None) -> Tree:
        return Tree(
            np.asarray(self.feature, dtype=np.intp),
            np.asarray(self.threshold, dtype=np.float64),
            np.asarray(self.left, dtype=np.intp),
            np.asarray(self.right, dtype=np.intp),
            np.asarray(self.value, dtype=np.float64),
            ledger if ledger is not None else BudgetLedger(),
        )


@dataclass
class GbdtModel:
    """Trained ensemble: raw score is ``sum_t eta * tree_t(x)``."""

    trees: list[Tree] = field(default_factory=list)
    eta: float = 0.1
    reg_lambda: float = 0.1
    loss: LossKind = SQUARE_LOSS
    task: str = CLASSIFICATION
    label_scale: LabelScale = IDENTITY_SCALE
    ledger: BudgetLedger = field(default_factory=BudgetLedger)
    n_features: int = 0
    params: dict = field(default_factory=dict)

    def raw_predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2:
            raise ValueError(f"expected a 2-d feature matrix, got shape {X.shape}")
        width = max([self.n_features] + [t.max_feature() + 1 for t in self.trees])
        if X.shape[1] < width:
            # unseen trailing features read as the implicit zero
            X = np.hstack([X, np.zeros((X.shape[0], width - X.shape[1]))])
        out = np.zeros(X.shape[0])
        for tree in self.trees:
            out += self.eta * tree.predict(X)
        return out

    def predict(self, X) -> np.ndarray:
        """Class labels in {-1, +1} (ties to +1) or regression values in
        original label units (score clamped to [-1, 1] first)."""
        score = self.raw_predict(X)
        if self.task == CLASSIFICATION:
            return np.where(score >= 0, 1.0, -1.0)
        return self.label_scale.inverse(np.clip(score, -1.0, 1.0))

    def to_dict(self) -> dict:
        return {
            "version": MODEL_FORMAT_VERSION,
            "task": self.task,
            "eta": self.eta,
            "lambda": self.reg_lambda,
            "loss": {"kind": self.loss.kind, "g_star": self.loss.g_star},
            "label_scale": self.label_scale.to_dict(),
            "n_features": self.n_features,
            "params": self.params,
            "ledger": self.ledger.to_dict(),
            "trees": [t.to_dict() for t in self.trees],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: dict) -> "GbdtModel":
        if d.get("version") != MODEL_FORMAT_VERSION:
            raise ValueError(f"unsupported model format version {d.get('version')!r}")
        return cls(
            trees=[Tree.from_dict(t) for t in d["trees"]],
            eta=float(d["eta"]),
            reg_lambda=float(d["lambda"]),
            loss=LossKind(d["loss"]["kind"], float(d["loss"]["g_star"])),
            task=normalize_task(d["task"]),
            label_scale=LabelScale.from_dict(d["label_scale"]),
            ledger=BudgetLedger.from_dict(d["ledger"]),
            n_features=int(d.get("n_features", 0)),
            params=dict(d.get("params", {})),
        )

    @classmethod
    def from_json(cls, s: str) -> "GbdtModel":
        return cls.from_dict(json.loads(s))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "GbdtModel":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(fh.read())


def compute_gradients(model: GbdtModel, X, y) -> np.ndarray:
    """Per-instance gradients of the square loss at the model's raw score."""
    return model.loss.gradients(model.raw_predict(X), y)
