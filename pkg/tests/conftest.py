"""Shared fixtures: trained pipelines at two scales.

The default-scale run mirrors the main experimental protocol (d=20, hidden
150/100/50); the fast run uses a small net and fewer epochs for service/CLI
tests where training time dominates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pytest

from weldwatch.config import DEFAULT_KNOWN, DEFAULT_UNKNOWN
from weldwatch.data import Dataset, ScenarioSpec, ScenarioSplit, scenario_split, synth_generate
from weldwatch.detector import DetectorBank, fit_detector
from weldwatch.mlp import MlpModel, TrainConfig, init_mlp, train


@dataclass
class PipelineRun:
    spec: ScenarioSpec
    split: ScenarioSplit
    label_map: list[str]
    model: MlpModel
    bank: DetectorBank
    train_cfg: TrainConfig

    @property
    def X_train(self) -> np.ndarray:
        return self.split.train_known.feature_matrix()

    @property
    def y_train(self) -> np.ndarray:
        return self.split.train_known.encode_labels(self.label_map)


def build_run(
    spec: ScenarioSpec,
    seed: int,
    hidden=(150, 100, 50),
    train_cfg: TrainConfig | None = None,
    embed_layer: int = 2,
    r_policy: int | float = 0.9,
) -> PipelineRun:
    dataset = synth_generate(spec, seed=seed)
    split = scenario_split(dataset, spec, n_folds=5, test_fold=0, seed=seed)
    label_map = split.train_known.class_names()
    X = split.train_known.feature_matrix()
    y = split.train_known.encode_labels(label_map)
    cfg = train_cfg or TrainConfig(shuffle_seed=seed)
    model = train(init_mlp([spec.dimension, *hidden, len(label_map)], seed), X, y, cfg).model
    bank = fit_detector(model, X, y, layer=embed_layer, r_policy=r_policy, class_labels=label_map)
    return PipelineRun(spec, split, label_map, model, bank, cfg)


FAST_SPEC = ScenarioSpec(
    known_classes=["new_clean", "new_contaminated", "worn_clean", "worn_contaminated"],
    unknown_classes=["damaged_clean", "damaged_contaminated"],
    samples_per_class=18,
    dimension=12,
)
FAST_TRAIN = TrainConfig(learning_rate=3e-3, epochs=80, shuffle_seed=5)


@pytest.fixture(scope="session")
def default_run() -> PipelineRun:
    spec = ScenarioSpec(
        known_classes=list(DEFAULT_KNOWN), unknown_classes=list(DEFAULT_UNKNOWN)
    )
    return build_run(spec, seed=0)


@pytest.fixture(scope="session")
def fast_run() -> PipelineRun:
    return build_run(FAST_SPEC, seed=5, hidden=(48, 24), train_cfg=FAST_TRAIN)


@pytest.fixture()
def withheld_by_class(default_run) -> dict[str, list]:
    return default_run.split.withheld_unknown.by_class()


def as_dataset(records) -> Dataset:
    return Dataset(list(records))
