"""Rolling-window feature extraction, feature ranking, and normalization.

Turns an aligned feeder (voltage, current) pair into a rectangular
dataset: one row of window features x_t next to the integer target y_t
(number of medical devices running within the window). Feature columns
follow the order given in the FeatureSpec and that order is frozen into
dataset files.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import signals
from .signals import UndefinedFeatureError, Waveform
from .simulate import GroundTruthSeries, window_targets

__all__ = [
    "FEATURE_IDS",
    "DEFAULT_FEATURES",
    "FeatureSpec",
    "FeatureDataset",
    "NormStats",
    "evaluate_window",
    "featurize",
    "rank_features",
    "fit_normalization",
    "apply_normalization",
    "denormalize",
]

# Harmonic-magnitude features cover orders 2..7 of the grid frequency.
FEATURE_IDS = (
    "i_rms",
    "i_form_factor",
    "i_crest_factor",
    "phase_shift",
    "active_power",
    "reactive_power",
    "thd",
    "h2",
    "h3",
    "h4",
    "h5",
    "h6",
    "h7",
)

DEFAULT_FEATURES = FEATURE_IDS


@dataclass(frozen=True)
class FeatureSpec:
    """Ordered feature identifiers plus the grid frequency they refer to."""

    features: tuple[str, ...] = DEFAULT_FEATURES
    f0_hz: float = 60.0
    max_harmonic: int = 7

    def __post_init__(self) -> None:
        object.__setattr__(self, "features", tuple(self.features))
        if not self.features:
            raise ValueError("feature list must be non-empty")
        if len(set(self.features)) != len(self.features):
            raise ValueError("feature identifiers must be unique")
        if not self.f0_hz > 0.0:
            raise ValueError("f0_hz must be positive")
        if self.max_harmonic < 2:
            raise ValueError("max_harmonic must be at least 2")
        for name in self.features:
            if name not in FEATURE_IDS:
                raise ValueError(f"unknown feature identifier {name!r}")
            if name.startswith("h") and name[1:].isdigit() and int(name[1:]) > self.max_harmonic:
                raise ValueError(f"feature {name!r} exceeds max_harmonic={self.max_harmonic}")

    def __len__(self) -> int:
        return len(self.features)


def evaluate_window(
    v_window: np.ndarray, i_window: np.ndarray, spec: FeatureSpec, sample_rate_hz: float
) -> tuple[np.ndarray, bool]:
    """One feature row for an aligned (voltage, current) window.

    Undefined features (all-zero current, say) are reported as 0.0 and
    flip the window's validity flag to False; the row stays rectangular.
    """
    v = np.asarray(v_window, dtype=np.float64)
    i = np.asarray(i_window, dtype=np.float64)
    if v.shape != i.shape or v.ndim != 1 or v.size == 0:
        raise ValueError("voltage and current windows must be equal-length 1-D arrays")
    row = np.zeros(len(spec.features), dtype=np.float64)
    valid = True
    for idx, name in enumerate(spec.features):
        try:
            row[idx] = _single_feature(name, v, i, spec, sample_rate_hz)
        except UndefinedFeatureError:
            row[idx] = 0.0
            valid = False
    return row, valid


def _single_feature(name: str, v: np.ndarray, i: np.ndarray, spec: FeatureSpec, fs: float) -> float:
    if name == "i_rms":
        return signals.rms(i)
    if name == "i_form_factor":
        return signals.form_factor(i)
    if name == "i_crest_factor":
        return signals.crest_factor(i)
    if name == "phase_shift":
        return signals.phase_shift(v, i, spec.f0_hz, fs)
    if name == "active_power":
        return float(np.mean(v * i))
    if name == "reactive_power":
        return signals.active_reactive_power(v, i, spec.f0_hz, fs)[1]
    if name == "thd":
        return signals.thd(i, spec.f0_hz, fs, spec.max_harmonic)
    if name.startswith("h"):
        return signals.harmonic_magnitude(i, int(name[1:]), spec.f0_hz, fs)
    raise ValueError(f"unknown feature identifier {name!r}")


@dataclass(frozen=True, eq=False)
class FeatureDataset:
    """Window features X, integer targets y, and per-window bookkeeping."""

    X: np.ndarray
    y: np.ndarray
    t_start_s: np.ndarray
    valid: np.ndarray
    window_s: float
    stride_s: float
    feature_spec: FeatureSpec

    def __post_init__(self) -> None:
        X = np.ascontiguousarray(self.X, dtype=np.float64)
        y = np.ascontiguousarray(self.y, dtype=np.int64)
        t_start = np.ascontiguousarray(self.t_start_s, dtype=np.float64)
        valid = np.ascontiguousarray(self.valid, dtype=bool)
        if X.ndim != 2 or X.shape[1] != len(self.feature_spec.features):
            raise ValueError("X must be (n_windows, n_features)")
        if not (X.shape[0] == y.size == t_start.size == valid.size):
            raise ValueError("X, y, t_start_s and valid must agree on the window count")
        if not np.isfinite(X).all():
            raise ValueError("feature matrix contains non-finite values")
        if y.size and y.min() < 0:
            raise ValueError("targets must be non-negative")
        for arr, name in ((X, "X"), (y, "y"), (t_start, "t_start_s"), (valid, "valid")):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def n_windows(self) -> int:
        return int(self.X.shape[0])

    def rows(self, index) -> "FeatureDataset":
        """Dataset restricted to the given row index (slice or boolean mask)."""
        return FeatureDataset(
            self.X[index],
            self.y[index],
            self.t_start_s[index],
            self.valid[index],
            self.window_s,
            self.stride_s,
            self.feature_spec,
        )


def featurize(
    voltage: Waveform,
    current: Waveform,
    truth: GroundTruthSeries,
    window_s: float,
    stride_s: float,
    spec: FeatureSpec,
) -> FeatureDataset:
    """Window the aligned trace and evaluate the feature spec per window.

    n_windows = floor((duration - window_s) / stride_s) + 1; window k
    covers [k*stride_s, k*stride_s + window_s). Targets come from
    ``window_targets`` over the same window grid.
    """
    if (
        voltage.n_samples != current.n_samples
        or voltage.sample_rate_hz != current.sample_rate_hz
        or voltage.start_time_s != current.start_time_s
    ):
        raise ValueError("voltage and current waveforms must be aligned")
    fs = voltage.sample_rate_hz
    window_len = int(round(window_s * fs))
    stride_len = int(round(stride_s * fs))
    if window_len < 1 or stride_len < 1:
        raise ValueError("window_s and stride_s must cover at least one sample")
    if window_len > voltage.n_samples:
        raise ValueError("window_s exceeds the trace duration")
    n_windows = (voltage.n_samples - window_len) // stride_len + 1

    y = window_targets(truth, window_s, stride_s, n_windows=n_windows)
    X = np.zeros((n_windows, len(spec.features)), dtype=np.float64)
    valid = np.zeros(n_windows, dtype=bool)
    t_start = np.zeros(n_windows, dtype=np.float64)
    for k in range(n_windows):
        offset = k * stride_len
        v_win = voltage.samples[offset : offset + window_len]
        i_win = current.samples[offset : offset + window_len]
        X[k], valid[k] = evaluate_window(v_win, i_win, spec, fs)
        t_start[k] = voltage.start_time_s + offset / fs
    return FeatureDataset(X, y, t_start, valid, window_s, stride_s, spec)


def rank_features(
    per_class_signatures: dict[str, list[np.ndarray]], feature_ids: tuple[str, ...]
) -> list[tuple[str, float]]:
    """Fisher score per feature, sorted descending; ties keep spec order.

    score_j = Var_c(mean of class c) / Mean_c(within-class variance).
    A feature with zero within-class variance scores +inf when the class
    means separate and 0.0 when they do not (constant feature).
    """
    if len(per_class_signatures) < 2:
        raise ValueError("feature ranking needs at least two device classes")
    n_features = len(feature_ids)
    class_means = []
    class_vars = []
    for class_name, vectors in per_class_signatures.items():
        matrix = np.asarray(vectors, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[0] < 2:
            raise ValueError(f"class {class_name!r} needs at least two signature vectors")
        if matrix.shape[1] != n_features:
            raise ValueError(f"class {class_name!r} vectors disagree with the feature list")
        class_means.append(matrix.mean(axis=0))
        class_vars.append(matrix.var(axis=0, ddof=1))
    means = np.asarray(class_means)
    between = means.var(axis=0)  # population variance of the class means
    within = np.asarray(class_vars).mean(axis=0)
    scores = np.empty(n_features, dtype=np.float64)
    for j in range(n_features):
        if within[j] == 0.0:
            scores[j] = math.inf if between[j] > 0.0 else 0.0
        else:
            scores[j] = between[j] / within[j]
    order = sorted(range(n_features), key=lambda j: (-scores[j], j))
    return [(feature_ids[j], float(scores[j])) for j in order]


@dataclass(frozen=True)
class NormStats:
    """Per-feature z-score statistics fit on the training split.

    Zero-variance features are dropped at fit time and recorded;
    ``kept_indices`` refer to columns of the original feature layout.
    """

    input_feature_ids: tuple[str, ...]
    kept_indices: tuple[int, ...]
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "input_feature_ids", tuple(self.input_feature_ids))
        object.__setattr__(self, "kept_indices", tuple(int(i) for i in self.kept_indices))
        mean = np.ascontiguousarray(self.mean, dtype=np.float64)
        std = np.ascontiguousarray(self.std, dtype=np.float64)
        if mean.shape != (len(self.kept_indices),) or std.shape != mean.shape:
            raise ValueError("mean/std must match the kept feature count")
        if len(self.kept_indices) and std.min() <= 0.0:
            raise ValueError("retained features must have positive std")
        mean.flags.writeable = False
        std.flags.writeable = False
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    @property
    def kept_feature_ids(self) -> tuple[str, ...]:
        return tuple(self.input_feature_ids[i] for i in self.kept_indices)

    @property
    def dropped_feature_ids(self) -> tuple[str, ...]:
        kept = set(self.kept_indices)
        return tuple(fid for i, fid in enumerate(self.input_feature_ids) if i not in kept)


def fit_normalization(train_X: np.ndarray, feature_ids: tuple[str, ...]) -> NormStats:
    """Fit per-feature z-score statistics; drop (and warn about) constant features."""
    X = np.asarray(train_X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("train_X must be a non-empty 2-D matrix")
    if X.shape[1] != len(feature_ids):
        raise ValueError("train_X width must match feature_ids")
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    kept = [j for j in range(X.shape[1]) if std[j] > 1e-12 * (1.0 + abs(mean[j]))]
    dropped = [feature_ids[j] for j in range(X.shape[1]) if j not in kept]
    if dropped:
        warnings.warn(f"dropping zero-variance features: {', '.join(dropped)}", stacklevel=2)
    return NormStats(tuple(feature_ids), tuple(kept), mean[kept], std[kept])


def apply_normalization(X: np.ndarray, stats: NormStats) -> np.ndarray:
    """Z-score the kept feature columns using training statistics only."""
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != len(stats.input_feature_ids):
        raise ValueError("X width must match the layout the stats were fit on")
    kept = list(stats.kept_indices)
    return (arr[:, kept] - stats.mean) / stats.std


def denormalize(X_normalized: np.ndarray, stats: NormStats) -> np.ndarray:
    """Inverse of ``apply_normalization`` on the kept feature columns."""
    arr = np.asarray(X_normalized, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != len(stats.kept_indices):
        raise ValueError("X width must match the kept feature count")
    return arr * stats.std + stats.mean
