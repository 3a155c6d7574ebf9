"""Declarative experiment configuration: INI files with per-class blocks.

Every experiment knob the CLI accepts can also be set here; command-line
flags override file values. Per-class `[class.NAME]` blocks override the
sample count or mean of a single class.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .clustering import DEFAULT_BRANCHING, DEFAULT_REPRESENTATIVES, DEFAULT_THRESHOLD
from .data import ScenarioSpec
from .detector import DEFAULT_VARIANCE_FRACTION
from .errors import ConfigurationError, ParseError
from .mlp import DEFAULT_HIDDEN_SIZES, TrainConfig

# Paper protocol mirror: six known tool/surface combinations, damaged withheld.
DEFAULT_KNOWN = [
    "new_clean",
    "new_contaminated",
    "new_polished",
    "worn_clean",
    "worn_contaminated",
    "worn_polished",
]
DEFAULT_UNKNOWN = ["damaged_clean", "damaged_contaminated", "damaged_polished"]


@dataclass
class DetectorConfig:
    embed_layer: int = 2
    r_policy: int | float = DEFAULT_VARIANCE_FRACTION


@dataclass
class UpdateConfig:
    train_cfg: TrainConfig = field(default_factory=TrainConfig)
    freeze_hidden: int = 2
    include_known_replay: bool = True
    shots_per_class: int = 5


@dataclass
class ClusteringConfig:
    threshold: float = DEFAULT_THRESHOLD
    branching: int = DEFAULT_BRANCHING
    representatives: int = DEFAULT_REPRESENTATIVES


@dataclass
class ExperimentConfig:
    scenario: ScenarioSpec = field(
        default_factory=lambda: ScenarioSpec(
            known_classes=list(DEFAULT_KNOWN), unknown_classes=list(DEFAULT_UNKNOWN)
        )
    )
    hidden_sizes: tuple[int, ...] = DEFAULT_HIDDEN_SIZES
    train_cfg: TrainConfig = field(default_factory=TrainConfig)
    folds: int = 5
    test_fold: int = 0
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    update: UpdateConfig = field(default_factory=UpdateConfig)
    clustering: ClusteringConfig = field(default_factory=ClusteringConfig)


def _split_list(raw: str) -> list[str]:
    return [part.strip() for part in raw.split(",") if part.strip()]


def _floats(raw: str) -> list[float]:
    return [float(part) for part in _split_list(raw)]


def load_config(path) -> ExperimentConfig:
    """Parse an INI experiment file; unset keys keep their defaults."""
    path = Path(path)
    parser = configparser.ConfigParser()
    try:
        read = parser.read(path)
    except configparser.Error as exc:
        raise ParseError(f"{path}: {exc}") from exc
    if not read:
        raise ParseError(f"config file not found: {path}")

    try:
        return _build(parser)
    except (ValueError, KeyError) as exc:
        raise ParseError(f"{path}: invalid config value: {exc}") from exc


def _build(parser: configparser.ConfigParser) -> ExperimentConfig:
    cfg = ExperimentConfig()

    if parser.has_section("scenario"):
        sec = parser["scenario"]
        known = _split_list(sec.get("known", ", ".join(DEFAULT_KNOWN)))
        unknown = _split_list(sec.get("unknown", ", ".join(DEFAULT_UNKNOWN)))
        counts: dict[str, int] | int = sec.getint("samples_per_class", 30)
        hard_pair = None
        if sec.get("hard_pair"):
            parts = [p.strip() for p in sec["hard_pair"].split(":")]
            if len(parts) != 3:
                raise ConfigurationError(
                    f"hard_pair must be 'classA : classB : sigmas', got {sec['hard_pair']!r}"
                )
            hard_pair = (parts[0], parts[1], float(parts[2]))
        means: dict[str, np.ndarray] = {}
        per_class_counts: dict[str, int] = {}
        for section in parser.sections():
            if not section.startswith("class."):
                continue
            name = section[len("class.") :]
            block = parser[section]
            if "count" in block:
                per_class_counts[name] = block.getint("count")
            if "mean" in block:
                means[name] = np.asarray(_floats(block["mean"]))
        if per_class_counts:
            base = counts if isinstance(counts, int) else 30
            counts = {n: per_class_counts.get(n, base) for n in known + unknown}
        cfg.scenario = ScenarioSpec(
            known_classes=known,
            unknown_classes=unknown,
            samples_per_class=counts,
            dimension=sec.getint("dimension", 20),
            covariance_scale=sec.getfloat("covariance_scale", 1.0),
            mean_separation=sec.getfloat("mean_separation", 10.0),
            unknown_separation=sec.getfloat("unknown_separation", 14.0),
            unknown_mixture_size=sec.getint("unknown_mixture_size", 3),
            class_means=means or None,
            hard_pair=hard_pair,
        )

    if parser.has_section("train"):
        sec = parser["train"]
        if "hidden_sizes" in sec:
            cfg.hidden_sizes = tuple(int(float(v)) for v in _split_list(sec["hidden_sizes"]))
        cfg.train_cfg = TrainConfig(
            learning_rate=sec.getfloat("learning_rate", cfg.train_cfg.learning_rate),
            epochs=sec.getint("epochs", cfg.train_cfg.epochs),
            batch_size=sec.getint("batch_size", cfg.train_cfg.batch_size),
            shuffle_seed=sec.getint("shuffle_seed", cfg.train_cfg.shuffle_seed),
        )
        cfg.folds = sec.getint("folds", cfg.folds)
        cfg.test_fold = sec.getint("test_fold", cfg.test_fold)

    if parser.has_section("detector"):
        sec = parser["detector"]
        cfg.detector.embed_layer = sec.getint("embed_layer", cfg.detector.embed_layer)
        if "fixed_components" in sec:
            cfg.detector.r_policy = sec.getint("fixed_components")
        elif "variance_fraction" in sec:
            cfg.detector.r_policy = sec.getfloat("variance_fraction")

    if parser.has_section("update"):
        sec = parser["update"]
        base = cfg.update.train_cfg
        cfg.update.train_cfg = TrainConfig(
            learning_rate=sec.getfloat("learning_rate", base.learning_rate),
            epochs=sec.getint("epochs", base.epochs),
            batch_size=sec.getint("batch_size", base.batch_size),
            shuffle_seed=sec.getint("shuffle_seed", base.shuffle_seed),
        )
        cfg.update.freeze_hidden = sec.getint("freeze_hidden", cfg.update.freeze_hidden)
        cfg.update.include_known_replay = sec.getboolean(
            "replay", cfg.update.include_known_replay
        )
        cfg.update.shots_per_class = sec.getint(
            "shots_per_class", cfg.update.shots_per_class
        )

    if parser.has_section("clustering"):
        sec = parser["clustering"]
        cfg.clustering.threshold = sec.getfloat("threshold", cfg.clustering.threshold)
        cfg.clustering.branching = sec.getint("branching", cfg.clustering.branching)
        cfg.clustering.representatives = sec.getint(
            "representatives", cfg.clustering.representatives
        )

    return cfg
