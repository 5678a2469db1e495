"""Anchored LSTM ensembles with Student-t heads for calibrated power prediction."""

from .data import (
    CycleSpec,
    NoiseSpec,
    NormStats,
    SeriesFrame,
    VehicleSpec,
    WindowedDataset,
    fit_normalize,
    generate_synthetic,
    load_csv,
    make_windows,
    split_70_30,
    write_csv,
)
from .estimator import METHODS, AnchoredLSTMRegressor
from .metrics import CalibrationReport, MetricsReport, coverage_test, evaluate, mae, r2_ev, rmse
from .uncertainty import PredictiveSummary, QuantileSummary, student_t_quantile, summarize_quantile, summarize_t

__version__ = "0.1.0"

__all__ = [
    "AnchoredLSTMRegressor",
    "CalibrationReport",
    "CycleSpec",
    "METHODS",
    "MetricsReport",
    "NoiseSpec",
    "NormStats",
    "PredictiveSummary",
    "QuantileSummary",
    "SeriesFrame",
    "VehicleSpec",
    "WindowedDataset",
    "coverage_test",
    "evaluate",
    "fit_normalize",
    "generate_synthetic",
    "load_csv",
    "mae",
    "make_windows",
    "r2_ev",
    "rmse",
    "split_70_30",
    "student_t_quantile",
    "summarize_quantile",
    "summarize_t",
    "write_csv",
]
