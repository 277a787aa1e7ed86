"""Binary indicator aggregation for change-point diagnostics.

Simulated signals are turned into hundreds of binary indicators from
sliding-window two-sample tests, the indicators are ranked by mRMR, and a
random forest fuses them into one normal/anomalous decision.
"""
from .backend import NAME as BACKEND
from .experiment import ExperimentConfig, ExperimentReport, run_experiment, split_dataset
from .forest import Forest, ForestParams, oob_accuracy, predict, train_forest
from .indicators import IndicatorConfig, IndicatorMatrix, build_grid, compute_indicator_vector, compute_matrix
from .selection import mrmr_rank, mutual_information
from .signals import AnomalyKind, DatasetSpec, LabeledSignal, gen_dataset
from .stattests import TestKind, kolmogorov_smirnov_2, mann_whitney_u, f_test_variance

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "AnomalyKind", "DatasetSpec", "ExperimentConfig", "ExperimentReport", "Forest",
    "ForestParams", "IndicatorConfig", "IndicatorMatrix", "LabeledSignal", "TestKind",
    "build_grid", "compute_indicator_vector", "compute_matrix", "f_test_variance", "gen_dataset",
    "kolmogorov_smirnov_2", "mann_whitney_u", "mrmr_rank", "mutual_information", "oob_accuracy",
    "predict", "run_experiment", "split_dataset", "train_forest",
]
