"""Differentially private gradient boosted decision trees."""

from .boosting import (
    FilterReport,
    PrivacyConfig,
    gdf_filter,
    glc_bound,
    glc_clip,
    leaf_sensitivity,
    subset_schedule,
    train_dpboost,
    train_np,
    train_para,
    train_seq,
)
from .data import Dataset, LabelScale, kfold_split, load_libsvm, sample_disjoint
from .estimator import DPBoostClassifier, DPBoostRegressor
from .mechanisms import BudgetLedger
from .tree import GbdtModel

__version__ = "0.1.0"

__all__ = [
    "BudgetLedger",
    "DPBoostClassifier",
    "DPBoostRegressor",
    "Dataset",
    "FilterReport",
    "GbdtModel",
    "LabelScale",
    "PrivacyConfig",
    "gdf_filter",
    "glc_bound",
    "glc_clip",
    "kfold_split",
    "leaf_sensitivity",
    "load_libsvm",
    "sample_disjoint",
    "subset_schedule",
    "train_dpboost",
    "train_np",
    "train_para",
    "train_seq",
]
