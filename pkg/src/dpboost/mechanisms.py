"""Seeded randomness, Laplace / exponential mechanisms and a budget ledger."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

# Purpose tags mixed into derived seeds. Values are part of the on-disk
# reproducibility contract; do not renumber.
PURPOSE_SPLIT = 1
PURPOSE_LEAF = 2
PURPOSE_SAMPLE = 3
PURPOSE_TREE = 4
PURPOSE_FOLD = 5

SEQUENTIAL = "sequential"
PARALLEL = "parallel"
_KINDS = (SEQUENTIAL, PARALLEL)


def make_rng(seed: int, *keys: int) -> np.random.Generator:
    """Return a PCG64 generator for ``seed`` and an optional derivation path.

    The same ``(seed, *keys)`` always yields the same stream, and distinct
    paths give statistically independent streams, so per-node generators do
    not depend on the order nodes are visited in.
    """
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    ss = np.random.SeedSequence(int(seed) & (2**64 - 1), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.PCG64(ss))


def derive_seed(seed: int, *keys: int) -> int:
    """Derive a child 63-bit integer seed (for recording in run results)."""
    ss = np.random.SeedSequence(int(seed) & (2**64 - 1), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def _check_scale(scale: float) -> None:
    if not (scale > 0) or not math.isfinite(scale):
        raise ValueError(f"Laplace scale must be positive and finite, got {scale}")


def _laplace_from_uniform(u):
    # u in (-0.5, 0.5); the endpoint would map to an infinite draw.
    return -np.sign(u) * np.log1p(-2.0 * np.abs(u))


def _open_uniform(rng: np.random.Generator, size=None):
    u = rng.random(size) - 0.5
    if size is None:
        while u == -0.5:
            u = rng.random() - 0.5
        return u
    bad = u == -0.5
    while bad.any():
        u[bad] = rng.random(int(bad.sum())) - 0.5
        bad = u == -0.5
    return u


def laplace_sample(rng: np.random.Generator, scale: float) -> float:
    """One draw from Laplace(0, scale) by inverse CDF."""
    _check_scale(scale)
    return float(scale * _laplace_from_uniform(_open_uniform(rng)))


def laplace_samples(rng: np.random.Generator, scale: float, size: int) -> np.ndarray:
    """Vectorised :func:`laplace_sample`; same transform, ``size`` draws."""
    _check_scale(scale)
    return scale * _laplace_from_uniform(_open_uniform(rng, size))


@dataclass(frozen=True)
class ScoredCandidate:
    id: object
    utility: float


def selection_probabilities(utilities, eps: float, sensitivity: float) -> np.ndarray:
    """Softmax of ``eps * u / (2 * sensitivity)`` with max-score subtraction."""
    u = np.asarray(utilities, dtype=np.float64)
    if u.size == 0:
        raise ValueError("exponential mechanism needs at least one candidate")
    if not np.all(np.isfinite(u)):
        raise ValueError("candidate utilities must be finite")
    if not eps > 0 or not sensitivity > 0:
        raise ValueError("eps and sensitivity must be positive")
    scores = (eps / (2.0 * sensitivity)) * u
    w = np.exp(scores - scores.max())
    return w / w.sum()


def exp_mechanism_index(rng: np.random.Generator, utilities, eps: float, sensitivity: float) -> int:
    """Index of the candidate chosen by the exponential mechanism."""
    p = selection_probabilities(utilities, eps, sensitivity)
    cdf = np.cumsum(p)
    i = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    return min(i, p.size - 1)


def exp_mechanism_select(
    rng: np.random.Generator,
    candidates: Sequence[ScoredCandidate],
    eps: float,
    sensitivity: float,
):
    """Pick one candidate id with probability proportional to
    ``exp(eps * utility / (2 * sensitivity))``."""
    if not candidates:
        raise ValueError("exponential mechanism needs at least one candidate")
    i = exp_mechanism_index(rng, [c.utility for c in candidates], eps, sensitivity)
    return candidates[i].id


@dataclass(frozen=True)
class LedgerEntry:
    scope: str
    eps: float
    kind: str


@dataclass
class BudgetLedger:
    """Append-only log of privacy charges.

    Sequential entries add up. Parallel entries sharing a ``scope`` label form
    one group over disjoint data and contribute the maximum of their members.
    """

    entries: list[LedgerEntry] = field(default_factory=list)

    def record(self, scope: str, eps: float, kind: str = SEQUENTIAL) -> "BudgetLedger":
        if not eps > 0 or not math.isfinite(eps):
            raise ValueError(f"ledger charge must be positive and finite, got {eps}")
        if kind not in _KINDS:
            raise ValueError(f"unknown composition kind {kind!r}")
        self.entries.append(LedgerEntry(str(scope), float(eps), kind))
        return self

    def total(self) -> float:
        seq = []
        groups: dict[str, float] = {}
        for e in self.entries:
            if e.kind == SEQUENTIAL:
                seq.append(e.eps)
            else:
                groups[e.scope] = max(groups.get(e.scope, 0.0), e.eps)
        return math.fsum(seq + list(groups.values()))

    def extend(self, entries: Iterable[LedgerEntry]) -> "BudgetLedger":
        for e in entries:
            self.record(e.scope, e.eps, e.kind)
        return self

    def to_dict(self) -> dict:
        return {
            "entries": [{"scope": e.scope, "eps": e.eps, "kind": e.kind} for e in self.entries],
            "total": self.total(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BudgetLedger":
        ledger = cls()
        for e in d.get("entries", []):
            ledger.record(e["scope"], e["eps"], e["kind"])
        return ledger

    def __len__(self) -> int:
        return len(self.entries)


def ledger_record(ledger: BudgetLedger, scope: str, eps: float, kind: str) -> BudgetLedger:
    return ledger.record(scope, eps, kind)


def ledger_total(ledger: BudgetLedger) -> float:
    return ledger.total()
