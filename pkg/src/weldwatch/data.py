"""Dataset schema, CSV ingestion, synthetic scenario generation, and splits.

The synthetic generator is the desk-scale stand-in for the proprietary
multi-sensor dataset: per-class isotropic Gaussians in R^d with configurable
means, optionally with one deliberately hard (close) pair of classes.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .errors import ConfigurationError, DataError, ParseError


@dataclass(frozen=True)
class SampleRecord:
    """One observation: feature vector, optional class label, stable id."""

    sample_id: str
    features: np.ndarray
    label: str | None = None


class Dataset:
    """An ordered collection of SampleRecords with uniform dimensionality.

    Validates on construction: unique ids, finite features, one shared d.
    """

    def __init__(self, records: Sequence[SampleRecord]):
        records = list(records)
        seen: set[str] = set()
        d: int | None = None
        for rec in records:
            if rec.sample_id in seen:
                raise DataError(f"duplicate sample_id {rec.sample_id!r}")
            seen.add(rec.sample_id)
            f = np.asarray(rec.features, dtype=float)
            if f.ndim != 1:
                raise DataError(f"sample {rec.sample_id!r}: features must be 1-D")
            if d is None:
                d = f.shape[0]
            elif f.shape[0] != d:
                raise DataError(
                    f"sample {rec.sample_id!r}: dimension {f.shape[0]} != {d}"
                )
            if not np.all(np.isfinite(f)):
                raise DataError(f"sample {rec.sample_id!r}: non-finite feature")
        self._records = records
        self._dim = d

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self) -> Iterator[SampleRecord]:
        return iter(self._records)

    def __getitem__(self, i: int) -> SampleRecord:
        return self._records[i]

    @property
    def records(self) -> list[SampleRecord]:
        return list(self._records)

    @property
    def feature_dim(self) -> int | None:
        return self._dim

    def feature_matrix(self) -> np.ndarray:
        if not self._records:
            return np.zeros((0, 0))
        return np.stack([np.asarray(r.features, dtype=float) for r in self._records])

    def labels(self) -> list[str | None]:
        return [r.label for r in self._records]

    def class_names(self) -> list[str]:
        """Sorted unique labels of the labeled records."""
        return sorted({r.label for r in self._records if r.label is not None})

    def by_class(self) -> dict[str, list[SampleRecord]]:
        groups: dict[str, list[SampleRecord]] = {}
        for rec in self._records:
            if rec.label is not None:
                groups.setdefault(rec.label, []).append(rec)
        return groups

    def subset(self, sample_ids: Sequence[str]) -> "Dataset":
        wanted = set(sample_ids)
        return Dataset([r for r in self._records if r.sample_id in wanted])

    def concat(self, other: "Dataset") -> "Dataset":
        return Dataset(self.records + other.records)

    def encode_labels(self, label_map: Sequence[str]) -> np.ndarray:
        """Map string labels to integer ids per label_map order."""
        index = {name: i for i, name in enumerate(label_map)}
        ids = []
        for rec in self._records:
            if rec.label is None:
                raise DataError(f"sample {rec.sample_id!r} is unlabeled")
            if rec.label not in index:
                raise DataError(f"sample {rec.sample_id!r}: unknown label {rec.label!r}")
            ids.append(index[rec.label])
        return np.asarray(ids, dtype=int)


def load_csv(path) -> Dataset:
    """Parse `sample_id,f1,...,fd[,label]` CSV into a Dataset.

    Rejects ragged rows, duplicate ids, non-numeric or non-finite features;
    errors carry the 1-based line number.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        if not header or header[0] != "sample_id":
            raise ParseError(f"{path}, line 1: header must start with 'sample_id'")
        has_label = len(header) > 1 and header[-1] == "label"
        n_features = len(header) - 1 - (1 if has_label else 0)
        if n_features < 1:
            raise ParseError(f"{path}, line 1: no feature columns")

        records: list[SampleRecord] = []
        seen: set[str] = set()
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(
                    f"{path}, line {lineno}: expected {len(header)} fields, got {len(row)}"
                )
            sample_id = row[0]
            if sample_id in seen:
                raise ParseError(f"{path}, line {lineno}: duplicate sample_id {sample_id!r}")
            seen.add(sample_id)
            raw = row[1 : 1 + n_features]
            try:
                feats = np.array([float(v) for v in raw], dtype=float)
            except ValueError:
                raise ParseError(
                    f"{path}, line {lineno}: non-numeric feature value"
                ) from None
            if not np.all(np.isfinite(feats)):
                raise ParseError(f"{path}, line {lineno}: non-finite feature value")
            label = row[-1] if has_label and row[-1] != "" else None
            records.append(SampleRecord(sample_id, feats, label))
    return Dataset(records)


def save_csv(dataset: Dataset, path) -> None:
    """Write `sample_id,f1..fd,label` (empty label cell for unlabeled rows)."""
    d = dataset.feature_dim or 0
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id"] + [f"f{i + 1}" for i in range(d)] + ["label"])
        for rec in dataset:
            feats = [repr(float(v)) for v in rec.features]
            writer.writerow([rec.sample_id] + feats + [rec.label or ""])


@dataclass
class ScenarioSpec:
    """Declarative description of a known/withheld class scenario.

    Default geometry: known-class means sit at mean_separation * scale along
    distinct coordinate axes (pairwise distance sqrt(2) * separation). Each
    withheld class defaults to a mixture of `unknown_mixture_size` known axes
    at unknown_separation * scale - an unseen combination of known factors,
    which keeps it >= 8 sigma from everything while displacing it along
    directions the trained network actually encodes. Set
    unknown_mixture_size=0 to give unknowns their own axes instead.
    hard_pair moves one class next to another at `sep` sigmas as a stressor.
    """

    known_classes: list[str]
    unknown_classes: list[str] = field(default_factory=list)
    samples_per_class: dict[str, int] | int = 30
    dimension: int = 20
    covariance_scale: float = 1.0
    mean_separation: float = 10.0
    unknown_separation: float = 14.0
    unknown_mixture_size: int = 3
    class_means: dict[str, np.ndarray] | None = None
    hard_pair: tuple[str, str, float] | None = None

    def __post_init__(self) -> None:
        overlap = set(self.known_classes) & set(self.unknown_classes)
        if overlap:
            raise ConfigurationError(f"classes both known and unknown: {sorted(overlap)}")
        if not self.known_classes:
            raise ConfigurationError("at least one known class required")
        if self.covariance_scale <= 0:
            raise ConfigurationError("covariance_scale must be > 0")
        if any(n < 1 for n in self.counts().values()):
            raise ConfigurationError("per-class sample counts must be >= 1")
        if self.hard_pair is not None:
            a, b, _sep = self.hard_pair
            for name in (a, b):
                if name not in self.all_classes:
                    raise ConfigurationError(f"hard_pair references unknown class {name!r}")

    @property
    def all_classes(self) -> list[str]:
        return list(self.known_classes) + list(self.unknown_classes)

    def counts(self) -> dict[str, int]:
        if isinstance(self.samples_per_class, int):
            return {name: self.samples_per_class for name in self.all_classes}
        return dict(self.samples_per_class)

    def resolve_means(self) -> dict[str, np.ndarray]:
        classes = self.all_classes
        if self.class_means is not None:
            means = {}
            for name in classes:
                if name not in self.class_means:
                    raise ConfigurationError(f"no mean configured for class {name!r}")
                m = np.asarray(self.class_means[name], dtype=float)
                if m.shape != (self.dimension,):
                    raise ConfigurationError(
                        f"mean for {name!r} has shape {m.shape}, expected ({self.dimension},)"
                    )
                means[name] = m
            return means
        mixture = min(self.unknown_mixture_size, len(self.known_classes))
        n_axes = (
            len(classes)
            if mixture < 1 or not self.unknown_classes
            else len(self.known_classes)
        )
        if self.dimension < n_axes:
            raise ConfigurationError(
                f"dimension {self.dimension} < {n_axes}: "
                "axis-aligned means need one dimension per known class"
            )
        scale = self.covariance_scale
        means = {}
        for i, name in enumerate(self.known_classes):
            m = np.zeros(self.dimension)
            m[i] = self.mean_separation * scale
            means[name] = m
        if mixture >= 1 and self.unknown_classes:
            combos = itertools.combinations(range(len(self.known_classes)), mixture)
            for name, axes in zip(self.unknown_classes, combos):
                m = np.zeros(self.dimension)
                m[list(axes)] = self.unknown_separation * scale
                means[name] = m
            if len(means) < len(classes):
                raise ConfigurationError(
                    f"not enough {mixture}-axis combinations for "
                    f"{len(self.unknown_classes)} withheld classes"
                )
        else:
            for j, name in enumerate(self.unknown_classes):
                m = np.zeros(self.dimension)
                m[len(self.known_classes) + j] = self.mean_separation * scale
                means[name] = m
        if self.hard_pair is not None:
            a, b, sep = self.hard_pair
            offset = np.zeros(self.dimension)
            offset[classes.index(b)] = sep * scale
            means[b] = means[a] + offset
        return means


def synth_generate(spec: ScenarioSpec, seed: int) -> Dataset:
    """Per-class isotropic Gaussian samples; pure function of (spec, seed)."""
    rng = np.random.default_rng(seed)
    means = spec.resolve_means()
    counts = spec.counts()
    records: list[SampleRecord] = []
    for name in spec.all_classes:
        n = counts[name]
        draws = means[name] + spec.covariance_scale * rng.standard_normal(
            (n, spec.dimension)
        )
        width = max(3, int(math.log10(max(n, 1))) + 1)
        for i in range(n):
            records.append(SampleRecord(f"{name}-{i:0{width}d}", draws[i], name))
    return Dataset(records)


def stratified_kfold(dataset: Dataset, k: int, seed: int) -> list[Dataset]:
    """Shuffle each class and deal round-robin: per-class fold counts differ by <= 1."""
    if k < 1:
        raise ConfigurationError("k must be >= 1")
    groups = dataset.by_class()
    if sum(len(g) for g in groups.values()) != len(dataset):
        raise DataError("stratified split requires every record to be labeled")
    rng = np.random.default_rng(seed)
    fold_indices: list[list[int]] = [[] for _ in range(k)]
    index_of = {rec.sample_id: i for i, rec in enumerate(dataset)}
    for name in sorted(groups):
        members = groups[name]
        if len(members) < k:
            raise DataError(
                f"class {name!r} has {len(members)} samples, fewer than k={k}"
            )
        order = rng.permutation(len(members))
        for j, pos in enumerate(order):
            fold_indices[j % k].append(index_of[members[pos].sample_id])
    return [
        Dataset([dataset[i] for i in sorted(idxs)]) for idxs in fold_indices
    ]


@dataclass(frozen=True)
class ScenarioSplit:
    train_known: Dataset
    test_known: Dataset
    withheld_unknown: Dataset


def scenario_split(
    dataset: Dataset,
    spec: ScenarioSpec,
    n_folds: int = 5,
    test_fold: int = 0,
    seed: int = 0,
) -> ScenarioSplit:
    """Withheld classes never reach training; knowns split by stratified k-fold."""
    labels_present = set(dataset.class_names())
    missing = [c for c in spec.all_classes if c not in labels_present]
    if missing:
        raise ConfigurationError(f"scenario classes missing from data: {missing}")
    extra = labels_present - set(spec.all_classes)
    if extra:
        raise ConfigurationError(f"data contains classes not in the scenario: {sorted(extra)}")

    known = Dataset([r for r in dataset if r.label in set(spec.known_classes)])
    withheld = Dataset([r for r in dataset if r.label in set(spec.unknown_classes)])
    if n_folds == 1:
        return ScenarioSplit(known, Dataset([]), withheld)
    if not 0 <= test_fold < n_folds:
        raise ConfigurationError(f"test_fold {test_fold} out of range for {n_folds} folds")
    folds = stratified_kfold(known, n_folds, seed)
    test = folds[test_fold]
    train_records: list[SampleRecord] = []
    for i, fold in enumerate(folds):
        if i != test_fold:
            train_records.extend(fold.records)
    return ScenarioSplit(Dataset(train_records), test, withheld)
