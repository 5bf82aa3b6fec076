"""scikit-learn compatible estimators wrapping the boosting drivers."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .boosting import PrivacyConfig, train
from .data import CLASSIFICATION, REGRESSION, IDENTITY_SCALE, LabelScale
from .tree import DEFAULT_BINS


def _dense(X):
    return X.toarray() if hasattr(X, "toarray") else np.asarray(X, dtype=np.float64)


class _DPBoostBase(BaseEstimator):
    """Shared parameters. ``mode`` selects the trainer:

    - ``"dpboost"``: ensemble of ensembles with gradient filtering and
      geometric leaf clipping,
    - ``"seq"``: every tree on all rows with ``epsilon / n_trees`` each,
    - ``"para"``: each tree on half of the unused rows with the full budget,
    - ``"np"``: non-private greedy boosting (``epsilon`` ignored).

    ``trees_per_ensemble=None`` puts every tree in a single ensemble.
    """

    _task: str = CLASSIFICATION

    def __init__(
        self,
        mode: str = "dpboost",
        epsilon: float = 1.0,
        n_trees: int = 50,
        trees_per_ensemble: int | None = None,
        max_depth: int = 6,
        reg_lambda: float = 0.1,
        learning_rate: float = 0.1,
        n_bins: int | None = DEFAULT_BINS,
        glc: bool = True,
        glc_index: str = "ensemble",
        random_state: int = 0,
    ):
        self.mode = mode
        self.epsilon = epsilon
        self.n_trees = n_trees
        self.trees_per_ensemble = trees_per_ensemble
        self.max_depth = max_depth
        self.reg_lambda = reg_lambda
        self.learning_rate = learning_rate
        self.n_bins = n_bins
        self.glc = glc
        self.glc_index = glc_index
        self.random_state = random_state

    def _privacy_config(self) -> PrivacyConfig:
        return PrivacyConfig(
            total_eps=float(self.epsilon),
            n_trees=int(self.n_trees),
            trees_per_ensemble=int(self.trees_per_ensemble or self.n_trees),
            glc=bool(self.glc),
            glc_index_mode=self.glc_index,
            mode=self.mode,
        )

    def _fit_scaled(self, X, y_scaled, label_scale: LabelScale):
        if self.max_depth < 1:
            raise ValueError(f"max_depth must be >= 1, got {self.max_depth}")
        if not 0 < self.learning_rate < 1:
            raise ValueError(f"learning_rate must be in (0, 1), got {self.learning_rate}")
        if self.reg_lambda < 0:
            raise ValueError(f"reg_lambda must be non-negative, got {self.reg_lambda}")
        config = self._privacy_config()
        self.model_, self.training_log_ = train(
            X,
            y_scaled,
            config,
            max_depth=int(self.max_depth),
            reg_lambda=float(self.reg_lambda),
            eta=float(self.learning_rate),
            n_bins=self.n_bins,
            seed=int(self.random_state),
            task=self._task,
            label_scale=label_scale,
        )
        self.n_features_in_ = X.shape[1]
        return self

    def _validate_X(self, X) -> np.ndarray:
        check_is_fitted(self, "model_")
        X = _dense(check_array(X, accept_sparse="csr", dtype=np.float64))
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, estimator was fitted with {self.n_features_in_}")
        return X

    def decision_function(self, X) -> np.ndarray:
        """Raw boosted score on the scaled label axis."""
        return self.model_.raw_predict(self._validate_X(X))

    @property
    def ledger_(self):
        check_is_fitted(self, "model_")
        return self.model_.ledger

    @property
    def seconds_per_tree_(self) -> float:
        check_is_fitted(self, "model_")
        logs = self.training_log_
        return sum(l.seconds for l in logs) / len(logs) if logs else 0.0


class DPBoostRegressor(RegressorMixin, _DPBoostBase):
    """Private GBDT regressor.

    Targets are min/max scaled to [-1, 1] on the training data; predictions
    are clamped to that range and mapped back to the original units.
    """

    _task = REGRESSION

    def fit(self, X, y):
        X, y = check_X_y(X, y, accept_sparse="csr", dtype=np.float64, y_numeric=True)
        scale = LabelScale.fit(y)
        return self._fit_scaled(_dense(X), scale.transform(y), scale)

    def predict(self, X) -> np.ndarray:
        X = self._validate_X(X)
        return self.model_.predict(X)


class DPBoostClassifier(ClassifierMixin, _DPBoostBase):
    """Private GBDT binary classifier (square loss on -1/+1 targets)."""

    _task = CLASSIFICATION

    def fit(self, X, y):
        X, y = check_X_y(X, y, accept_sparse="csr", dtype=np.float64)
        self.classes_ = np.unique(y)
        if self.classes_.size != 2:
            raise ValueError(f"binary classification only; got {self.classes_.size} classes")
        y_pm = np.where(y == self.classes_[1], 1.0, -1.0)
        return self._fit_scaled(_dense(X), y_pm, IDENTITY_SCALE)

    def predict(self, X) -> np.ndarray:
        # score ties go to the positive class
        return self.classes_[(self.decision_function(X) >= 0).astype(np.intp)]
