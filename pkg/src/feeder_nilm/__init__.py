"""Feeder-level load disaggregation toolkit.

Simulates high-frequency distribution-feeder waveforms with in-home
medical devices among background loads, extracts windowed electrical
features, and trains a regressor that predicts how many medical devices
are running behind the feeder.
"""

from .devices import DeviceMode, DeviceModel, HarmonicSpec, default_library
from .evaluate import EvalReport, baseline_report, evaluate, mae
from .featurize import FeatureDataset, FeatureSpec, NormStats, featurize, rank_features
from .model import RegressorParams, TrainConfig, init_params, forward, predict_count, train
from .signals import Waveform, WindowView
from .simulate import (
    GroundTruthSeries,
    ScenarioConfig,
    Schedule,
    generate_schedule,
    ground_truth_counts,
    synthesize_feeder,
    window_targets,
)

__version__ = "0.1.0"

__all__ = [
    "Waveform",
    "WindowView",
    "HarmonicSpec",
    "DeviceMode",
    "DeviceModel",
    "default_library",
    "ScenarioConfig",
    "Schedule",
    "GroundTruthSeries",
    "generate_schedule",
    "synthesize_feeder",
    "ground_truth_counts",
    "window_targets",
    "FeatureSpec",
    "FeatureDataset",
    "NormStats",
    "featurize",
    "rank_features",
    "RegressorParams",
    "TrainConfig",
    "init_params",
    "forward",
    "predict_count",
    "train",
    "EvalReport",
    "mae",
    "evaluate",
    "baseline_report",
    "__version__",
]
