"""Frame-level training, prediction and evaluation shared by the CLI and tests."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .config import RunConfig
from .data import NormStats, SeriesFrame, WindowedDataset, fit_normalize, make_windows, split_70_30
from .estimator import AnchoredLSTMRegressor
from .exceptions import ConfigError
from .metrics import CalibrationReport, MetricsReport, evaluate

SPLITS = ("all", "train", "test")


def select_split(frame: SeriesFrame, split: str, window_length: int) -> SeriesFrame:
    if split == "all":
        return frame
    if split not in SPLITS:
        raise ConfigError(f"split must be one of {SPLITS}, got {split!r}")
    train, test = split_70_30(frame, window_length)
    return train if split == "train" else test


def fit_frame(
    frame: SeriesFrame, run: RunConfig, split: str = "train", verbose: int = 0
) -> tuple[AnchoredLSTMRegressor, NormStats, WindowedDataset]:
    """Fit scaling ranges and the ensemble on ``split`` of ``frame``."""
    part = select_split(frame, split, run.window_length)
    scaled, stats = fit_normalize(part, [*run.features, run.target])
    windows = make_windows(scaled, run.features, run.window_length)
    estimator = run.estimator(verbose).fit(windows.inputs, windows.targets)
    return estimator, stats, windows


@dataclass
class FramePrediction:
    """Denormalized predictions, one per window; ``y_true`` is None without targets."""

    summary: object
    y_true: Optional[np.ndarray]
    t_index: np.ndarray


def predict_frame(
    estimator: AnchoredLSTMRegressor,
    stats: NormStats,
    frame: SeriesFrame,
    features,
    alpha: float = 0.1,
    split: str = "all",
    has_target: bool = True,
) -> FramePrediction:
    part = select_split(frame, split, estimator.window_length_)
    cols = [*features, frame.target] if has_target else list(features)
    scaled, _ = fit_normalize(part, cols, stats)
    windows = make_windows(scaled, features, estimator.window_length_)
    summary = estimator.predict_interval(windows.inputs, alpha)
    summary = summary.affine(stats.span(frame.target), stats.mins[frame.target])
    y_true = None
    if has_target:
        # raw source values: scaled targets may have been clamped
        y_true = part[frame.target][windows.target_rows - part.rows[0]]
    return FramePrediction(summary, y_true, windows.target_rows)


def evaluate_frame(
    estimator: AnchoredLSTMRegressor,
    stats: NormStats,
    frame: SeriesFrame,
    features,
    alpha: float = 0.1,
    split: str = "all",
) -> tuple[MetricsReport, CalibrationReport]:
    pred = predict_frame(estimator, stats, frame, features, alpha, split)
    return evaluate(pred.y_true, pred.summary)
