"""Adaptive condition monitoring: open-set fault detection on MLP embeddings,
cluster-assisted labeling, and few-shot continual model updates."""

from .data import Dataset, SampleRecord, ScenarioSpec, load_csv, save_csv
from .detector import Decision, DetectorBank, decide, fit_detector, pca_fit
from .mlp import (
    FreezeSpec,
    MlpModel,
    TrainConfig,
    embed,
    expand_output,
    forward,
    gradients,
    init_mlp,
    train,
)

__all__ = [
    "Dataset",
    "Decision",
    "DetectorBank",
    "FreezeSpec",
    "MlpModel",
    "SampleRecord",
    "ScenarioSpec",
    "TrainConfig",
    "decide",
    "embed",
    "expand_output",
    "fit_detector",
    "forward",
    "gradients",
    "init_mlp",
    "load_csv",
    "pca_fit",
    "save_csv",
    "train",
]

__version__ = "0.1.0"
