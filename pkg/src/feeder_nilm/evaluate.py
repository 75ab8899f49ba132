"""MAE-centered metrics and reports for trained count regressors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .featurize import FeatureDataset, apply_normalization
from .model import RegressorParams, count_from_output, forward_batch

__all__ = [
    "EvalReport",
    "mae",
    "report_from_predictions",
    "evaluate",
    "median_count",
    "baseline_report",
]


@dataclass(frozen=True)
class EvalReport:
    """Continuous and rounded MAE plus a per-true-count error breakdown."""

    n_test_windows: int
    mae_continuous: float
    mae_rounded: float
    exact_count_accuracy: float
    per_count: tuple[tuple[int, int, float], ...]  # (true count, n windows, rounded MAE)
    fingerprint: str = ""


def mae(predictions, targets) -> float:
    """Mean absolute error between equal-length, non-empty sequences."""
    p = np.asarray(predictions, dtype=np.float64).reshape(-1)
    t = np.asarray(targets, dtype=np.float64).reshape(-1)
    if p.size == 0 or p.size != t.size:
        raise ValueError("predictions and targets must be non-empty and equal-length")
    return float(np.mean(np.abs(p - t)))


def report_from_predictions(
    continuous, rounded, targets, fingerprint: str = ""
) -> EvalReport:
    """Assemble an EvalReport from already-computed predictions."""
    cont = np.asarray(continuous, dtype=np.float64).reshape(-1)
    rnd = np.asarray(rounded, dtype=np.int64).reshape(-1)
    y = np.asarray(targets, dtype=np.int64).reshape(-1)
    if not (cont.size == rnd.size == y.size) or y.size == 0:
        raise ValueError("predictions and targets must be non-empty and equal-length")
    rounded_err = np.abs(rnd - y)
    per_count = tuple(
        (int(c), int(np.sum(y == c)), float(np.mean(rounded_err[y == c])))
        for c in np.unique(y)
    )
    return EvalReport(
        n_test_windows=int(y.size),
        mae_continuous=mae(cont, y),
        mae_rounded=float(np.mean(rounded_err)),
        exact_count_accuracy=float(np.mean(rounded_err == 0)),
        per_count=per_count,
        fingerprint=fingerprint,
    )


def evaluate(params: RegressorParams, test_dataset: FeatureDataset, fingerprint: str = "") -> EvalReport:
    """Evaluate a trained model on a raw (unnormalized) feature dataset.

    The dataset must carry the same feature layout the model's
    normalization statistics were fit on; invalid windows are excluded.
    """
    if params.norm_stats is None:
        raise ValueError("model carries no normalization statistics")
    if test_dataset.feature_spec.features != params.norm_stats.input_feature_ids:
        raise ValueError("dataset feature layout does not match the model's feature spec")
    subset = test_dataset.rows(test_dataset.valid)
    if subset.n_windows == 0:
        raise ValueError("no valid windows to evaluate")
    X = apply_normalization(subset.X, params.norm_stats)
    continuous = forward_batch(params, X)
    rounded = np.array([count_from_output(v) for v in continuous], dtype=np.int64)
    return report_from_predictions(continuous, rounded, subset.y, fingerprint)


def median_count(train_y) -> int:
    """Integer median of the training counts (lower middle on even length)."""
    y = np.sort(np.asarray(train_y, dtype=np.int64).reshape(-1))
    if y.size == 0:
        raise ValueError("train_y must be non-empty")
    return int(y[(y.size - 1) // 2])


def baseline_report(train_y, test_y) -> EvalReport:
    """Constant predict-the-training-median baseline evaluated on the test targets.

    The median minimizes MAE among constant predictors, so this is the
    floor any trained model must beat.
    """
    constant = median_count(train_y)
    test = np.asarray(test_y, dtype=np.int64).reshape(-1)
    if test.size == 0:
        raise ValueError("test_y must be non-empty")
    predictions = np.full(test.size, constant, dtype=np.int64)
    return report_from_predictions(predictions.astype(np.float64), predictions, test)
