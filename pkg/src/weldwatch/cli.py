"""Command-line entry point: the full monitoring loop as file-based steps.

    weldwatch simulate     synthetic scenario dataset -> CSV
    weldwatch train        scenario split + MLP training -> model.json
    weldwatch fit-detector per-class PCA three-sigma bank -> bank.json
    weldwatch detect       decisions CSV (+ metrics when the batch is labeled)
    weldwatch eval         metrics only
    weldwatch cluster      similarity-space BIRCH report -> CSVs
    weldwatch update       few-shot update -> new model.json/bank.json
    weldwatch sweep        (new classes x shots x repeats) grid -> CSVs
    weldwatch serve        HTTP service over a persistent state directory

Every knob is also settable in the INI config file; flags override it.
Exit codes: 0 success, 1 runtime/I-O failure (diagnostic on stderr), 2 usage.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .clustering import export_cluster_report
from .config import ExperimentConfig, load_config
from .continual import (
    SweepScenario,
    UpdateRequest,
    export_sweep,
    run_sweep,
    update_model,
)
from .data import Dataset, load_csv, save_csv, scenario_split, synth_generate
from .detector import (
    DetectorBank,
    evaluate_detection,
    fit_detector,
    load_bank,
    save_bank,
)
from .errors import ConfigurationError, DataError, WeldwatchError
from .mlp import FreezeSpec, MlpModel, init_mlp, load_model, save_model, train
from .service import MonitorService, metrics_json


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="INI experiment config file")
    parser.add_argument("--seed", type=int, default=0, help="run seed (default 0)")
    parser.add_argument("--out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="weldwatch", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic scenario dataset")
    _add_common(p)

    p = sub.add_parser("train", help="split the scenario and train the base model")
    _add_common(p)
    p.add_argument("--data", required=True, help="labeled dataset CSV")

    p = sub.add_parser("fit-detector", help="fit the per-class detector bank")
    _add_common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True, help="known-class training CSV")

    p = sub.add_parser("detect", help="decide a batch and write decisions")
    _add_common(p)
    p.add_argument("--model")
    p.add_argument("--bank")
    p.add_argument("--run", help="directory with model.json/bank.json defaults")
    p.add_argument("--data", required=True, help="batch CSV (labels = ground truth)")
    p.add_argument("--state-dir", help="also route through a persistent service state")
    p.add_argument("--train-data", help="known training CSV (state-dir bootstrap)")

    p = sub.add_parser("eval", help="evaluate detection metrics on a labeled batch")
    _add_common(p)
    p.add_argument("--model")
    p.add_argument("--bank")
    p.add_argument("--run")
    p.add_argument("--data", required=True)

    p = sub.add_parser("cluster", help="cluster flagged samples in similarity space")
    _add_common(p)
    p.add_argument("--model")
    p.add_argument("--bank")
    p.add_argument("--run")
    p.add_argument("--data", help="flagged-sample CSV (file mode)")
    p.add_argument("--known", help="known-class training CSV (file mode)")
    p.add_argument("--state-dir", help="cluster the service state's flagged pool")

    p = sub.add_parser("update", help="few-shot update with new class samples")
    _add_common(p)
    p.add_argument("--model")
    p.add_argument("--bank")
    p.add_argument("--run")
    p.add_argument("--known", help="known-class training CSV for replay")
    p.add_argument(
        "--new-class",
        action="append",
        default=[],
        metavar="NAME=CSV",
        help="new class label and its few-shot CSV (repeatable)",
    )

    p = sub.add_parser("sweep", help="few-shot grid: classes x shots x repeats")
    _add_common(p)
    p.add_argument("--model")
    p.add_argument("--bank")
    p.add_argument("--run")
    p.add_argument("--known-train")
    p.add_argument("--known-test")
    p.add_argument("--withheld")
    p.add_argument("--classes", default="1..3", help="e.g. 1..3 or 2 (default 1..3)")
    p.add_argument("--shots", default="2..6", help="e.g. 2..6 (default 2..6)")
    p.add_argument("--repeats", type=int, default=20)

    p = sub.add_parser("serve", help="HTTP service over a state directory")
    _add_common(p)
    p.add_argument("--state-dir", required=True)
    p.add_argument("--model", help="bootstrap artifacts when the state is empty")
    p.add_argument("--bank")
    p.add_argument("--run")
    p.add_argument("--train-data")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8300)
    p.add_argument("--frontend", help="static directory to serve at /")

    return parser


def _load_cfg(args) -> ExperimentConfig:
    return load_config(args.config) if args.config else ExperimentConfig()


def _out_dir(args) -> Path:
    if not args.out:
        raise ConfigurationError("--out directory is required for this command")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _resolve(args, attr: str, default_name: str) -> Path:
    explicit = getattr(args, attr, None)
    if explicit:
        return Path(explicit)
    run = getattr(args, "run", None)
    if run:
        return Path(run) / default_name
    raise ConfigurationError(f"--{attr.replace('_', '-')} (or --run) is required")


def _parse_range(raw: str) -> list[int]:
    raw = raw.strip()
    if ".." in raw:
        lo, hi = raw.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    if "," in raw:
        return [int(v) for v in raw.split(",") if v.strip()]
    return [int(raw)]


def _label_map(dataset: Dataset) -> list[str]:
    names = dataset.class_names()
    if not names:
        raise DataError("dataset has no labeled records")
    return names


def _encode(dataset: Dataset, label_map: list[str]) -> tuple[np.ndarray, np.ndarray]:
    return dataset.feature_matrix(), dataset.encode_labels(label_map)


def _freeze(cfg: ExperimentConfig) -> FreezeSpec:
    return FreezeSpec.first_hidden(cfg.update.freeze_hidden)


# ---------------------------------------------------------------- subcommands


def _cmd_simulate(args) -> int:
    cfg = _load_cfg(args)
    out = _out_dir(args)
    dataset = synth_generate(cfg.scenario, seed=args.seed)
    save_csv(dataset, out / "dataset.csv")
    print(f"wrote {len(dataset)} samples to {out / 'dataset.csv'}")
    return 0


def _cmd_train(args) -> int:
    cfg = _load_cfg(args)
    out = _out_dir(args)
    dataset = load_csv(args.data)
    split = scenario_split(
        dataset, cfg.scenario, n_folds=cfg.folds, test_fold=cfg.test_fold, seed=args.seed
    )
    label_map = _label_map(split.train_known)
    X, y = _encode(split.train_known, label_map)
    sizes = [dataset.feature_dim, *cfg.hidden_sizes, len(label_map)]
    model = init_mlp(sizes, seed=args.seed)
    train_cfg = cfg.train_cfg
    if args.seed:
        from dataclasses import replace as dc_replace

        train_cfg = dc_replace(train_cfg, shuffle_seed=args.seed)
    result = train(model, X, y, train_cfg)

    save_model(result.model, out / "model.json")
    save_csv(split.train_known, out / "train_known.csv")
    save_csv(split.test_known, out / "test_known.csv")
    save_csv(split.withheld_unknown, out / "withheld.csv")
    with (out / "loss_history.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "mean_loss"])
        for i, loss in enumerate(result.epoch_losses):
            writer.writerow([i + 1, repr(loss)])
    print(
        f"trained {sizes} on {len(X)} samples; "
        f"loss {result.epoch_losses[0]:.4f} -> {result.epoch_losses[-1]:.4f}"
    )
    return 0


def _cmd_fit_detector(args) -> int:
    cfg = _load_cfg(args)
    out = _out_dir(args)
    model = load_model(args.model)
    dataset = load_csv(args.data)
    label_map = _label_map(dataset)
    X, y = _encode(dataset, label_map)
    bank = fit_detector(
        model,
        X,
        y,
        layer=cfg.detector.embed_layer,
        r_policy=cfg.detector.r_policy,
        class_labels=label_map,
    )
    save_bank(bank, out / "bank.json")
    rs = [d.r for d in bank.detectors]
    print(f"fit {bank.n_classes} detectors (layer {bank.embed_layer}, r per class {rs})")
    return 0


def _load_model_bank(args) -> tuple[MlpModel, DetectorBank]:
    model = load_model(_resolve(args, "model", "model.json"))
    bank = load_bank(_resolve(args, "bank", "bank.json"))
    return model, bank


def _write_decisions(path: Path, ids, decisions, label_map) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", "outcome", "class_id", "class_label", "indicator"])
        for sid, dec in zip(ids, decisions):
            label = label_map[dec.class_id] if dec.class_id is not None else ""
            indicator = "".join("1" if b else "0" for b in dec.indicator)
            writer.writerow(
                [sid, dec.outcome, "" if dec.class_id is None else dec.class_id, label, indicator]
            )


def _cmd_detect(args) -> int:
    out = _out_dir(args)
    model, bank = _load_model_bank(args)
    batch = load_csv(args.data)
    label_map = list(bank.class_labels)

    if args.state_dir:
        service = _open_or_bootstrap(args, model, bank)
        response = service.detect(batch.records)
        decisions_payload = response["decisions"]
        with (out / "decisions.csv").open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["sample_id", "outcome", "class_id", "class_label", "indicator"])
            for d in decisions_payload:
                writer.writerow(
                    [
                        d["sample_id"],
                        d["outcome"],
                        "" if d["class_id"] is None else d["class_id"],
                        d["class_label"] or "",
                        "".join("1" if b else "0" for b in d["indicator"]),
                    ]
                )
        if response["metrics"] is not None:
            (out / "metrics.json").write_text(json.dumps(response["metrics"], indent=1))
        print(
            f"state revision {response['revision']}: "
            f"{response['flagged_added']} newly flagged, {response['flagged_total']} pooled"
        )
        return 0

    from .detector import detect_batch

    X = batch.feature_matrix()
    decisions = detect_batch(bank, model, X)
    _write_decisions(out / "decisions.csv", [r.sample_id for r in batch], decisions, label_map)
    flagged = sum(1 for d in decisions if d.outcome == "unknown")
    if all(r.label is not None for r in batch):
        index = {name: i for i, name in enumerate(label_map)}
        truth = np.array([index.get(r.label, -1) for r in batch])
        metrics = evaluate_detection(bank, model, X, truth)
        (out / "metrics.json").write_text(json.dumps(metrics_json(metrics), indent=1))
        print(
            f"{len(batch)} samples: {flagged} flagged unknown; "
            f"overall accuracy {metrics.overall_accuracy:.3f}"
        )
    else:
        print(f"{len(batch)} samples: {flagged} flagged unknown")
    return 0


def _cmd_eval(args) -> int:
    out = _out_dir(args)
    model, bank = _load_model_bank(args)
    batch = load_csv(args.data)
    if any(r.label is None for r in batch):
        raise DataError("eval requires a fully labeled batch")
    label_map = list(bank.class_labels)
    index = {name: i for i, name in enumerate(label_map)}
    truth = np.array([index.get(r.label, -1) for r in batch])
    metrics = evaluate_detection(bank, model, batch.feature_matrix(), truth)
    (out / "metrics.json").write_text(json.dumps(metrics_json(metrics), indent=1))
    print(json.dumps(metrics_json(metrics), indent=1))
    return 0


def _cmd_cluster(args) -> int:
    cfg = _load_cfg(args)
    out = _out_dir(args)

    if args.state_dir:
        service = MonitorService.open(args.state_dir)
        cache = service.cluster_report(refresh=True)
        report = cache.report
        vectors = cache.vectors
    else:
        if not args.data or not args.known:
            raise ConfigurationError("file mode needs --data and --known")
        model, bank = _load_model_bank(args)
        flagged = load_csv(args.data)
        known = load_csv(args.known)
        groups = known.by_class()
        known_sets = {
            name: np.stack([r.features for r in groups[name]])
            for name in bank.class_labels
            if name in groups
        }
        from .clustering import SimilarityTransform, birch_fit, standardize_vectors

        transform = SimilarityTransform(model, bank.embed_layer, known_sets)
        raw = transform.transform_batch(flagged.feature_matrix())
        standardized = standardize_vectors(raw) if len(raw) > 1 else raw
        ids = [r.sample_id for r in flagged]
        truth = (
            {r.sample_id: r.label for r in flagged}
            if all(r.label is not None for r in flagged)
            else None
        )
        report = birch_fit(
            standardized,
            threshold=cfg.clustering.threshold,
            branching=cfg.clustering.branching,
            sample_ids=ids,
            truth_labels=truth,
            n_representatives=cfg.clustering.representatives,
        )
        vectors = {sid: standardized[i] for i, sid in enumerate(ids)}

    export_cluster_report(report, vectors, out / "clusters.csv", out / "clusters_summary.csv")
    sizes = [len(c.member_ids) for c in report.clusters]
    note = f", purity {report.purity:.3f}" if report.purity is not None else ""
    print(f"{len(report.clusters)} clusters, sizes {sizes}{note}")
    return 0


def _cmd_update(args) -> int:
    cfg = _load_cfg(args)
    out = _out_dir(args)
    model, bank = _load_model_bank(args)
    known = load_csv(_resolve(args, "known", "train_known.csv"))
    new_classes = []
    for spec in args.new_class:
        if "=" not in spec:
            raise ConfigurationError(f"--new-class expects NAME=CSV, got {spec!r}")
        name, path = spec.split("=", 1)
        new_classes.append((name.strip(), load_csv(path).records))
    request = UpdateRequest(
        new_classes=new_classes,
        include_known_replay=cfg.update.include_known_replay,
        freeze=_freeze(cfg),
        train_cfg=cfg.update.train_cfg,
        r_policy=cfg.detector.r_policy,
        expand_seed=args.seed,
    )
    result = update_model(model, bank, request, known)
    save_model(result.model, out / "model.json")
    save_bank(result.bank, out / "bank.json")
    print(
        f"updated to {len(result.label_map)} classes: {list(result.label_map)}; "
        f"final loss {result.epoch_losses[-1]:.4f}"
    )
    return 0


def _cmd_sweep(args) -> int:
    cfg = _load_cfg(args)
    out = _out_dir(args)
    model, bank = _load_model_bank(args)
    known_train = load_csv(_resolve(args, "known_train", "train_known.csv"))
    known_test = load_csv(_resolve(args, "known_test", "test_known.csv"))
    withheld = load_csv(_resolve(args, "withheld", "withheld.csv"))
    scenario = SweepScenario(
        model=model,
        bank=bank,
        known_train=known_train,
        known_test=known_test,
        withheld=withheld,
        train_cfg=cfg.update.train_cfg,
        freeze=_freeze(cfg),
        r_policy=cfg.detector.r_policy,
    )
    result = run_sweep(
        scenario,
        classes_range=_parse_range(args.classes),
        shots_range=_parse_range(args.shots),
        repeats=args.repeats,
        base_seed=args.seed,
    )
    export_sweep(result, out / "sweep_trials.csv", out / "sweep_summary.csv")
    n_trials = sum(len(c.trials) for c in result.cells.values())
    print(f"{len(result.cells)} cells, {n_trials} trials -> {out / 'sweep_trials.csv'}")
    return 0


def _open_or_bootstrap(args, model=None, bank=None) -> MonitorService:
    state_dir = Path(args.state_dir)
    if (state_dir / "CURRENT").exists():
        return MonitorService.open(state_dir)
    cfg = _load_cfg(args)
    if model is None or bank is None:
        model = load_model(_resolve(args, "model", "model.json"))
        bank = load_bank(_resolve(args, "bank", "bank.json"))
    train_path = getattr(args, "train_data", None)
    if not train_path and getattr(args, "run", None):
        train_path = Path(args.run) / "train_known.csv"
    if not train_path:
        raise ConfigurationError(
            "state directory is empty: provide --train-data (or --run) to bootstrap"
        )
    train_ds = load_csv(train_path)
    return MonitorService.bootstrap(
        model,
        bank,
        train_ds,
        detector_r_policy=cfg.detector.r_policy,
        update_cfg=cfg.update,
        clustering_cfg=cfg.clustering,
        state_dir=state_dir,
    )


def _cmd_serve(args) -> int:
    from .http_api import serve

    service = _open_or_bootstrap(args)
    info = service.state_info()
    print(
        f"serving revision {info['revision']} "
        f"({info['counts']['known_classes']} classes, "
        f"{info['counts']['flagged']} flagged) on {args.host}:{args.port}",
        flush=True,
    )
    serve(service, host=args.host, port=args.port, static_dir=args.frontend)
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "train": _cmd_train,
    "fit-detector": _cmd_fit_detector,
    "detect": _cmd_detect,
    "eval": _cmd_eval,
    "cluster": _cmd_cluster,
    "update": _cmd_update,
    "sweep": _cmd_sweep,
    "serve": _cmd_serve,
}


def cli_run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except WeldwatchError as exc:
        print(f"weldwatch {args.command}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"weldwatch {args.command}: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli_run())


if __name__ == "__main__":
    main()
