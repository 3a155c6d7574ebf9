"""Few-shot model updates: output expansion, frozen-layer fine-tuning, refit.

The update dataset combines retained known-class samples (replay, on by
default) with the few labeled shots of each new class; the expanded model is
fine-tuned with the early hidden layers frozen, and the detector bank is
refit over all classes with the updated model. `run_sweep` repeats the
update over a (new-class count x shots) grid to measure few-shot behavior.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import Dataset, SampleRecord
from .detector import (
    DEFAULT_VARIANCE_FRACTION,
    DetectorBank,
    fit_detector,
)
from .errors import ConfigurationError, DataError
from .mlp import (
    FreezeSpec,
    MlpModel,
    TrainConfig,
    expand_output,
    predict_batch,
    train,
)


@dataclass
class UpdateRequest:
    """Few-shot adaptation request: new classes with their labeled samples.

    The default freeze keeps the first two hidden layers fixed; replay mixes
    the retained known-class data into the update set.
    """

    new_classes: list[tuple[str, list[SampleRecord]]]
    shots_per_class: int | None = None
    include_known_replay: bool = True
    freeze: FreezeSpec = field(default_factory=lambda: FreezeSpec.first_hidden(2))
    train_cfg: TrainConfig = field(default_factory=TrainConfig)
    r_policy: int | float = DEFAULT_VARIANCE_FRACTION
    expand_seed: int = 0

    def __post_init__(self) -> None:
        names = [name for name, _ in self.new_classes]
        if len(names) != len(set(names)):
            raise ConfigurationError(f"duplicate new class labels: {names}")
        for name, samples in self.new_classes:
            if len(samples) == 0:
                raise ConfigurationError(f"new class {name!r} has no samples")
            if self.shots_per_class is not None and len(samples) > self.shots_per_class:
                raise ConfigurationError(
                    f"new class {name!r} exceeds shots_per_class={self.shots_per_class}"
                )


@dataclass(frozen=True)
class UpdateResult:
    model: MlpModel
    bank: DetectorBank
    label_map: tuple[str, ...]
    epoch_losses: tuple[float, ...]


def build_update_set(known: Dataset, request: UpdateRequest) -> tuple[Dataset, list[str]]:
    """Replayed knowns plus the few-shot samples, relabeled over C+k classes.

    Returns (dataset, new_label_names); new classes take ids C..C+k-1 in
    request order when encoded against the extended label map.
    """
    existing = set(known.class_names())
    records: list[SampleRecord] = known.records if request.include_known_replay else []
    new_names: list[str] = []
    for name, samples in request.new_classes:
        if name in existing:
            raise ConfigurationError(f"new class label {name!r} already exists")
        new_names.append(name)
        for rec in samples:
            records.append(SampleRecord(rec.sample_id, rec.features, name))
    return Dataset(records), new_names


def update_model(
    model: MlpModel,
    bank: DetectorBank,
    request: UpdateRequest,
    known: Dataset,
) -> UpdateResult:
    """Expand, fine-tune with freezing, and refit the detector bank.

    Frozen parameters are preserved bit for bit; the bank is refit over all
    C+k classes from the update dataset using the updated model.
    """
    label_map = list(bank.class_labels)
    update_ds, new_names = build_update_set(known, request)
    full_map = label_map + new_names

    expanded = expand_output(model, len(new_names), request.expand_seed)
    X = update_ds.feature_matrix()
    y = update_ds.encode_labels(full_map)
    result = train(expanded, X, y, request.train_cfg, request.freeze)
    new_bank = fit_detector(
        result.model,
        X,
        y,
        layer=bank.embed_layer,
        r_policy=request.r_policy,
        class_labels=full_map,
    )
    return UpdateResult(
        model=result.model,
        bank=new_bank,
        label_map=tuple(full_map),
        epoch_losses=result.epoch_losses,
    )


def classification_accuracy(model: MlpModel, X: np.ndarray, y: np.ndarray) -> float:
    if len(X) == 0:
        raise DataError("empty evaluation set")
    pred = np.argmax(predict_batch(model, X), axis=1)
    return float(np.mean(pred == np.asarray(y)))


@dataclass
class SweepScenario:
    """Everything one sweep trial needs: base artifacts plus withheld pools."""

    model: MlpModel
    bank: DetectorBank
    known_train: Dataset
    known_test: Dataset
    withheld: Dataset  # labeled with the withheld class names
    train_cfg: TrainConfig = field(default_factory=TrainConfig)
    freeze: FreezeSpec = field(default_factory=lambda: FreezeSpec.first_hidden(2))
    r_policy: int | float = DEFAULT_VARIANCE_FRACTION

    def withheld_by_class(self) -> dict[str, list[SampleRecord]]:
        return self.withheld.by_class()


@dataclass(frozen=True)
class SweepTrial:
    num_new_classes: int
    shots: int
    repeat: int
    seed: int
    overall_accuracy: float
    known_accuracy: float
    new_class_accuracy: float


@dataclass(frozen=True)
class SweepCell:
    num_new_classes: int
    shots: int
    trials: tuple[SweepTrial, ...]

    @property
    def accuracies(self) -> np.ndarray:
        return np.array([t.overall_accuracy for t in self.trials])

    @property
    def mean(self) -> float:
        return float(self.accuracies.mean())

    @property
    def std(self) -> float:
        # N-1 denominator; a single repeat reports 0 by convention (flagged).
        if len(self.trials) < 2:
            return 0.0
        return float(self.accuracies.std(ddof=1))

    @property
    def std_is_degenerate(self) -> bool:
        return len(self.trials) < 2


@dataclass(frozen=True)
class SweepResult:
    cells: dict[tuple[int, int], SweepCell]
    repeats: int

    def cell(self, num_new_classes: int, shots: int) -> SweepCell:
        return self.cells[(num_new_classes, shots)]


def run_sweep(
    scenario: SweepScenario,
    classes_range: Sequence[int] = (1, 2, 3),
    shots_range: Sequence[int] = (2, 3, 4, 5, 6),
    repeats: int = 20,
    base_seed: int = 0,
) -> SweepResult:
    """Grid of few-shot updates; deterministic under base_seed.

    Each trial introduces the first `nc` withheld classes (scenario order),
    draws `shots` samples per class at random, updates the model, and scores
    classification accuracy on the known holdout plus the undrawn withheld
    samples.
    """
    if repeats < 1:
        raise ConfigurationError("repeats must be >= 1")
    pools = scenario.withheld_by_class()
    pool_names = sorted(pools)
    max_classes = max(classes_range)
    if max_classes > len(pool_names):
        raise DataError(
            f"scenario has {len(pool_names)} withheld classes, sweep needs {max_classes}"
        )
    max_shots = max(shots_range)
    for name in pool_names[:max_classes]:
        if len(pools[name]) < max_shots + 1:
            raise DataError(
                f"cell ({max_classes} classes, {max_shots} shots): withheld class "
                f"{name!r} has only {len(pools[name])} samples"
            )

    label_map = list(scenario.bank.class_labels)
    X_known = scenario.known_test.feature_matrix()
    y_known = scenario.known_test.encode_labels(label_map)

    cells: dict[tuple[int, int], SweepCell] = {}
    for nc in classes_range:
        chosen = pool_names[:nc]
        for shots in shots_range:
            trials: list[SweepTrial] = []
            for rep in range(repeats):
                ss = np.random.SeedSequence((base_seed, nc, shots, rep))
                seed = int(ss.generate_state(1)[0])
                rng = np.random.default_rng(ss)
                new_classes: list[tuple[str, list[SampleRecord]]] = []
                holdout: list[SampleRecord] = []
                for name in chosen:
                    pool = pools[name]
                    idx = rng.choice(len(pool), size=shots, replace=False)
                    picked = set(int(i) for i in idx)
                    new_classes.append((name, [pool[i] for i in sorted(picked)]))
                    holdout.extend(p for i, p in enumerate(pool) if i not in picked)
                request = UpdateRequest(
                    new_classes=new_classes,
                    shots_per_class=shots,
                    freeze=scenario.freeze,
                    train_cfg=scenario.train_cfg,
                    r_policy=scenario.r_policy,
                    expand_seed=seed,
                )
                updated = update_model(
                    scenario.model, scenario.bank, request, scenario.known_train
                )
                holdout_ds = Dataset(holdout)
                X_new = holdout_ds.feature_matrix()
                y_new = holdout_ds.encode_labels(updated.label_map)
                known_acc = classification_accuracy(updated.model, X_known, y_known)
                new_acc = classification_accuracy(updated.model, X_new, y_new)
                n_k, n_n = len(y_known), len(y_new)
                overall = (known_acc * n_k + new_acc * n_n) / (n_k + n_n)
                trials.append(
                    SweepTrial(nc, shots, rep, seed, overall, known_acc, new_acc)
                )
            cells[(nc, shots)] = SweepCell(nc, shots, tuple(trials))
    return SweepResult(cells=cells, repeats=repeats)


def export_sweep(result: SweepResult, trials_path, summary_path) -> None:
    """Per-trial CSV plus a mean/std summary per cell (rows sorted by cell, repeat)."""
    keys = sorted(result.cells)
    with Path(trials_path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "num_new_classes",
                "shots",
                "repeat",
                "seed",
                "overall_accuracy",
                "known_accuracy",
                "new_class_accuracy",
            ]
        )
        for key in keys:
            for t in result.cells[key].trials:
                writer.writerow(
                    [
                        t.num_new_classes,
                        t.shots,
                        t.repeat,
                        t.seed,
                        repr(t.overall_accuracy),
                        repr(t.known_accuracy),
                        repr(t.new_class_accuracy),
                    ]
                )
    with Path(summary_path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["num_new_classes", "shots", "repeats", "mean_accuracy", "std_accuracy", "std_degenerate"]
        )
        for key in keys:
            cell = result.cells[key]
            writer.writerow(
                [
                    cell.num_new_classes,
                    cell.shots,
                    len(cell.trials),
                    repr(cell.mean),
                    repr(cell.std),
                    int(cell.std_is_degenerate),
                ]
            )
