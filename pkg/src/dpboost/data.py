"""LIBSVM ingestion, label scaling, k-fold splits and disjoint subsampling."""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Iterator

import numpy as np
import scipy.sparse as sp

from .mechanisms import make_rng

CLASSIFICATION = "classification"
REGRESSION = "regression"

_TASK_ALIASES = {
    "cls": CLASSIFICATION,
    "classification": CLASSIFICATION,
    "reg": REGRESSION,
    "regression": REGRESSION,
}


class LibsvmParseError(ValueError):
    """Raised for malformed LIBSVM input; carries the 1-based line number."""

    def __init__(self, lineno: int, msg: str):
        super().__init__(f"line {lineno}: {msg}")
        self.lineno = lineno


def normalize_task(task: str) -> str:
    try:
        return _TASK_ALIASES[task]
    except KeyError:
        raise ValueError(f"unknown task {task!r}; expected one of {sorted(_TASK_ALIASES)}") from None


@dataclass(frozen=True)
class LabelScale:
    """Affine map ``scaled = (raw - offset) / factor``."""

    offset: float = 0.0
    factor: float = 1.0

    @classmethod
    def fit(cls, y) -> "LabelScale":
        y = np.asarray(y, dtype=np.float64)
        if y.size == 0:
            raise ValueError("cannot fit a label scale on no labels")
        lo, hi = float(y.min()), float(y.max())
        half = (hi - lo) / 2.0
        # constant labels: centre only
        return cls(offset=(hi + lo) / 2.0, factor=half if half > 0 else 1.0)

    def transform(self, y):
        return (np.asarray(y, dtype=np.float64) - self.offset) / self.factor

    def inverse(self, y):
        return np.asarray(y, dtype=np.float64) * self.factor + self.offset

    def to_dict(self) -> dict:
        return {"offset": self.offset, "factor": self.factor}

    @classmethod
    def from_dict(cls, d) -> "LabelScale":
        return cls(float(d["offset"]), float(d["factor"]))


IDENTITY_SCALE = LabelScale()


@dataclass(frozen=True)
class Instance:
    features: dict
    label: float


@dataclass(frozen=True)
class Dataset:
    """Immutable sparse dataset with labels already mapped into [-1, 1].

    ``X`` is CSR with 0-based columns; ``index_base`` is the index base
    detected in the source file and is used when presenting or writing
    feature indices, so that round trips preserve the original numbering.
    """

    X: sp.csr_matrix
    y: np.ndarray
    task: str
    label_scale: LabelScale = IDENTITY_SCALE
    index_base: int = 0

    @property
    def n_instances(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    def __len__(self) -> int:
        return self.n_instances

    @property
    def raw_labels(self) -> np.ndarray:
        return self.label_scale.inverse(self.y)

    def instances(self) -> Iterator[Instance]:
        X = self.X
        for i in range(X.shape[0]):
            lo, hi = X.indptr[i], X.indptr[i + 1]
            feats = {int(j) + self.index_base: float(v) for j, v in zip(X.indices[lo:hi], X.data[lo:hi])}
            yield Instance(feats, float(self.y[i]))

    def dense(self) -> np.ndarray:
        return self.X.toarray()

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.intp)
        return Dataset(self.X[idx], self.y[idx], self.task, self.label_scale, self.index_base)


def _parse_lines(lines) -> tuple[list, list, list, list]:
    labels, rows, cols, vals = [], [], [], []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        try:
            label = float(tokens[0])
        except ValueError:
            raise LibsvmParseError(lineno, f"bad label {tokens[0]!r}") from None
        r = len(labels)
        prev = -1
        for tok in tokens[1:]:
            idx_s, sep, val_s = tok.partition(":")
            if not sep:
                raise LibsvmParseError(lineno, f"expected idx:val, got {tok!r}")
            try:
                j = int(idx_s)
                v = float(val_s)
            except ValueError:
                raise LibsvmParseError(lineno, f"bad feature token {tok!r}") from None
            if j < 0:
                raise LibsvmParseError(lineno, f"negative feature index {j}")
            if j <= prev:
                raise LibsvmParseError(lineno, f"feature indices not strictly increasing at {j}")
            prev = j
            rows.append(r)
            cols.append(j)
            vals.append(v)
        labels.append(label)
    return labels, rows, cols, vals


def map_binary_labels(raw) -> np.ndarray:
    """Map binary labels in {0, 1} or {-1, +1} onto {-1, +1}."""
    raw = np.asarray(raw, dtype=np.float64)
    ok = np.isin(raw, (-1.0, 0.0, 1.0))
    if not ok.all():
        bad = raw[~ok][0]
        raise ValueError(f"classification labels must be in {{0, 1, -1, +1}}, got {bad}")
    return np.where(raw > 0, 1.0, -1.0)


def load_libsvm(path: str | os.PathLike, task: str, n_features: int | None = None) -> Dataset:
    """Read a LIBSVM text file.

    Classification labels become -1/+1; regression labels are scaled to
    [-1, 1] using the file's min/max, and the map is kept in ``label_scale``.
    Indices are treated as 1-based unless a 0 index occurs in the file.
    """
    task = normalize_task(task)
    with open(path, "r", encoding="utf-8") as fh:
        labels, rows, cols, vals = _parse_lines(fh)
    if not labels:
        raise ValueError(f"{path}: no instances found")

    cols_arr = np.asarray(cols, dtype=np.int64)
    base = 0 if (cols_arr.size and cols_arr.min() == 0) else 1
    cols_arr -= base
    d = int(cols_arr.max()) + 1 if cols_arr.size else 0
    if n_features is not None:
        if n_features < d:
            raise ValueError(f"file has {d} features but n_features={n_features}")
        d = n_features
    X = sp.csr_matrix(
        (np.asarray(vals, dtype=np.float64), (np.asarray(rows, dtype=np.int64), cols_arr)),
        shape=(len(labels), d),
    )
    X.sort_indices()

    raw = np.asarray(labels, dtype=np.float64)
    if task == CLASSIFICATION:
        return Dataset(X, map_binary_labels(raw), task, IDENTITY_SCALE, base)
    scale = LabelScale.fit(raw)
    return Dataset(X, scale.transform(raw), task, scale, base)


def dump_libsvm(dataset: Dataset, path: str | os.PathLike, raw_labels: bool = False) -> None:
    """Write ``dataset`` in LIBSVM format using its original index base."""
    y = dataset.raw_labels if raw_labels else dataset.y
    X = dataset.X
    with open(path, "w", encoding="utf-8") as fh:
        for i in range(X.shape[0]):
            lo, hi = X.indptr[i], X.indptr[i + 1]
            parts = [repr(float(y[i]))]
            parts += [f"{int(j) + dataset.index_base}:{float(v)!r}" for j, v in zip(X.indices[lo:hi], X.data[lo:hi])]
            fh.write(" ".join(parts) + "\n")


def kfold_split(n, k: int, seed: int) -> np.ndarray:
    """Fold index in ``[0, k)`` for each of ``n`` instances.

    ``n`` may be a count or anything with a length (e.g. a Dataset). A
    seeded permutation is dealt round-robin, so fold sizes differ by at
    most one.
    """
    if not isinstance(n, (int, np.integer)):
        n = len(n)
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    if k > n:
        raise ValueError(f"cannot split {n} instances into {k} folds")
    perm = make_rng(seed).permutation(n)
    folds = np.empty(n, dtype=np.int64)
    folds[perm] = np.arange(n) % k
    return folds


def sample_disjoint(pool, count: int, rng: np.random.Generator | int) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``count`` items uniformly without replacement from ``pool``.

    Returns ``(picked, remaining)``; ``picked`` is sorted and ``remaining``
    keeps the pool's order.
    """
    pool = np.asarray(pool, dtype=np.intp)
    if count < 0 or count > pool.size:
        raise ValueError(f"cannot draw {count} items from a pool of {pool.size}")
    if not isinstance(rng, np.random.Generator):
        rng = make_rng(int(rng))
    chosen = np.zeros(pool.size, dtype=bool)
    chosen[rng.choice(pool.size, size=count, replace=False)] = True
    return np.sort(pool[chosen]), pool[~chosen]


def make_synthetic(task: str, n_samples: int = 10_000, n_features: int = 20, seed: int = 0):
    """Synthetic benchmark data from scikit-learn's generators at their
    default settings. Returns raw ``(X, y)``; classification labels are 0/1.
    """
    from sklearn.datasets import make_classification, make_regression

    if normalize_task(task) == CLASSIFICATION:
        return make_classification(n_samples=n_samples, n_features=n_features, random_state=seed)
    return make_regression(n_samples=n_samples, n_features=n_features, random_state=seed)


def to_dataset(X, y, task: str) -> Dataset:
    """Wrap in-memory arrays as a :class:`Dataset`, scaling labels as on load."""
    task = normalize_task(task)
    X = sp.csr_matrix(X, dtype=np.float64)
    if task == CLASSIFICATION:
        return Dataset(X, map_binary_labels(y), task)
    scale = LabelScale.fit(y)
    return Dataset(X, scale.transform(y), task, scale)
