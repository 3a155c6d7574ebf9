"""Monitoring service state: detect into a flagged pool, cluster on demand,
apply operator labels, run few-shot updates, persist every revision.

State is an immutable snapshot; every mutation builds a complete new snapshot,
persists it (when a state directory is attached), and only then swaps it in -
on any error the observable state is exactly the pre-call state. Revisions
strictly increase and previously written revisions are never modified, so any
revision stays independently restorable.
"""

from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .clustering import (
    ClusterReport,
    Cluster,
    SimilarityTransform,
    birch_fit,
    purity,
    standardize_vectors,
)
from .config import ClusteringConfig, UpdateConfig
from .continual import UpdateRequest, update_model
from .data import Dataset, SampleRecord
from .detector import (
    Decision,
    DetectorBank,
    DetectionMetrics,
    OUTCOME_UNKNOWN,
    bank_from_document,
    bank_to_document,
    detect_batch,
    metrics_from_decisions,
)
from .errors import RequestError, RestoreError
from .mlp import (
    FreezeSpec,
    MlpModel,
    model_from_document,
    model_to_document,
)

_STATE_FORMAT = "weldwatch-state"


@dataclass(frozen=True)
class LabelAssignment:
    """Label one cluster, with optional per-sample overrides."""

    cluster_id: int
    label: str
    overrides: Mapping[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class DecisionEntry:
    revision: int
    outcome: str
    class_id: int | None
    class_label: str | None


@dataclass(frozen=True)
class CachedReport:
    report: ClusterReport
    revision: int  # state revision the report was computed at
    similarity: dict[str, np.ndarray]  # raw similarity vectors per sample
    vectors: dict[str, np.ndarray] = field(default_factory=dict)  # clustering space


@dataclass(frozen=True)
class MonitorState:
    """One immutable revision of the monitoring loop's state."""

    model: MlpModel
    bank: DetectorBank
    train: Dataset
    revision: int
    detector_r_policy: int | float
    update_cfg: UpdateConfig
    clustering_cfg: ClusteringConfig
    flagged: dict[str, SampleRecord] = field(default_factory=dict)
    staged: tuple[SampleRecord, ...] = ()  # labeled, awaiting an explicit update
    truth_labels: dict[str, str] = field(default_factory=dict)
    decision_log: dict[str, tuple[DecisionEntry, ...]] = field(default_factory=dict)
    metrics: DetectionMetrics | None = None
    cluster_cache: CachedReport | None = None
    tokens: dict[str, dict] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not (
            self.model.n_classes
            == self.bank.n_classes
            == len(self.bank.class_labels)
        ):
            raise RequestError(
                "inconsistent state: model classes, bank detectors, and labels differ"
            )

    @property
    def label_map(self) -> tuple[str, ...]:
        return self.bank.class_labels


class MonitorService:
    """Serializes mutations behind a lock; readers always see a full snapshot."""

    def __init__(self, state: MonitorState, state_dir=None):
        self._lock = threading.Lock()
        self._state = state
        self.state_dir = Path(state_dir) if state_dir is not None else None
        if self.state_dir is not None and not _revision_dir(
            self.state_dir, state.revision
        ).exists():
            persist(state, self.state_dir)

    @classmethod
    def bootstrap(
        cls,
        model: MlpModel,
        bank: DetectorBank,
        train: Dataset,
        detector_r_policy: int | float = 0.9,
        update_cfg: UpdateConfig | None = None,
        clustering_cfg: ClusteringConfig | None = None,
        state_dir=None,
    ) -> "MonitorService":
        state = MonitorState(
            model=model,
            bank=bank,
            train=train,
            revision=1,
            detector_r_policy=detector_r_policy,
            update_cfg=update_cfg or UpdateConfig(),
            clustering_cfg=clustering_cfg or ClusteringConfig(),
        )
        return cls(state, state_dir=state_dir)

    @classmethod
    def open(cls, state_dir, revision: int | None = None) -> "MonitorService":
        return cls(restore(state_dir, revision), state_dir=state_dir)

    @property
    def state(self) -> MonitorState:
        return self._state

    def _commit(self, new_state: MonitorState) -> None:
        if self.state_dir is not None:
            persist(new_state, self.state_dir)
        self._state = new_state

    def _replay(self, token: str | None, endpoint: str) -> dict | None:
        if token is None:
            return None
        cached = self._state.tokens.get(token)
        if cached is None:
            return None
        if cached["endpoint"] != endpoint:
            raise RequestError(
                f"request token {token!r} was already used for {cached['endpoint']}"
            )
        response = dict(cached["response"])
        response["replayed"] = True
        return response

    # ------------------------------------------------------------------ detect

    def detect(self, records: Sequence[SampleRecord], token: str | None = None) -> dict:
        """Run the online decision for a batch; flagged unknowns join the pool.

        Record labels, when present on every sample, are treated as ground
        truth (names outside the label map count as truly unknown) and refresh
        the stored evaluation metrics.
        """
        with self._lock:
            replayed = self._replay(token, "detect")
            if replayed is not None:
                return replayed
            state = self._state
            ds = Dataset(list(records))
            if len(ds) == 0:
                raise RequestError("empty detection batch")
            X = ds.feature_matrix()
            decisions = detect_batch(state.bank, state.model, X)

            label_map = state.label_map
            new_flagged = dict(state.flagged)
            new_log = dict(state.decision_log)
            new_truth = dict(state.truth_labels)
            flagged_added = 0
            payload = []
            next_rev = state.revision + 1
            for rec, dec in zip(ds, decisions):
                class_label = (
                    label_map[dec.class_id] if dec.class_id is not None else None
                )
                entry = DecisionEntry(next_rev, dec.outcome, dec.class_id, class_label)
                new_log[rec.sample_id] = new_log.get(rec.sample_id, ()) + (entry,)
                if dec.outcome == OUTCOME_UNKNOWN:
                    if rec.sample_id not in new_flagged:
                        flagged_added += 1
                    new_flagged[rec.sample_id] = SampleRecord(
                        rec.sample_id, rec.features, None
                    )
                if rec.label is not None:
                    new_truth[rec.sample_id] = rec.label
                payload.append(_decision_json(rec.sample_id, dec, class_label))

            metrics = state.metrics
            batch_metrics = None
            if all(rec.label is not None for rec in ds):
                index = {name: i for i, name in enumerate(label_map)}
                truth = np.array([index.get(rec.label, -1) for rec in ds])
                batch_metrics = metrics_from_decisions(decisions, truth)
                metrics = batch_metrics

            response = {
                "revision": next_rev,
                "decisions": payload,
                "flagged_added": flagged_added,
                "flagged_total": len(new_flagged),
                "metrics": metrics_json(batch_metrics) if batch_metrics else None,
            }
            new_state = replace(
                state,
                revision=next_rev,
                flagged=new_flagged,
                decision_log=new_log,
                truth_labels=new_truth,
                metrics=metrics,
                cluster_cache=None,  # pool changed; report is stale
                tokens=_with_token(state.tokens, token, "detect", response),
            )
            self._commit(new_state)
            return response

    # ----------------------------------------------------------------- cluster

    def cluster_report(self, refresh: bool = False) -> CachedReport:
        """Cluster the flagged pool (cached per revision; recomputed when stale)."""
        with self._lock:
            state = self._state
            cache = state.cluster_cache
            if cache is not None and cache.revision == state.revision and not refresh:
                return cache
            if not state.flagged:
                cache = CachedReport(ClusterReport(clusters=()), state.revision, {})
            else:
                cache = _compute_report(state)
            # Derived cache only: no revision bump, recomputable at will.
            self._state = replace(state, cluster_cache=cache)
            return cache

    # ------------------------------------------------------------------ labels

    def apply_labels(
        self,
        assignments: Sequence[LabelAssignment],
        token: str | None = None,
        expected_revision: int | None = None,
        update: bool = True,
    ) -> dict:
        """Move labeled samples out of the pool; by default run the model update.

        With update=False the labeled samples are staged for a later explicit
        `update()` call. Stale expected_revision is rejected so concurrent
        operator sessions cannot clobber each other.
        """
        with self._lock:
            replayed = self._replay(token, "labels")
            if replayed is not None:
                return replayed
            state = self._state
            if expected_revision is not None and expected_revision != state.revision:
                raise RequestError(
                    f"stale submission: expected revision {expected_revision}, "
                    f"state is at {state.revision}; refresh and retry"
                )
            if not assignments:
                raise RequestError("no label assignments supplied")
            cache = state.cluster_cache
            if cache is None or cache.revision != state.revision:
                raise RequestError(
                    "no current cluster report; fetch clusters before labeling"
                )
            labeled = _collect_labels(state, cache.report, assignments)

            if update:
                # An update consumes everything pending: this submission plus
                # any previously staged labels.
                new_state, summary = _run_update(
                    state, staged=tuple(labeled) + state.staged, remaining_staged=()
                )
            else:
                new_flagged = {
                    sid: rec
                    for sid, rec in state.flagged.items()
                    if sid not in {r.sample_id for r in labeled}
                }
                new_state = replace(
                    state,
                    revision=state.revision + 1,
                    flagged=new_flagged,
                    staged=state.staged + tuple(labeled),
                    cluster_cache=None,
                )
                summary = {"updated": False, "staged_total": len(new_state.staged)}

            response = {
                "revision": new_state.revision,
                "class_labels": list(new_state.label_map),
                "flagged_total": len(new_state.flagged),
                **summary,
            }
            new_state = replace(
                new_state, tokens=_with_token(state.tokens, token, "labels", response)
            )
            self._commit(new_state)
            return response

    # ------------------------------------------------------------------ update

    def update(self, token: str | None = None, train_cfg=None, freeze_hidden=None) -> dict:
        """Explicit update trigger: consume staged labels (k=0 replay fine-tune
        when nothing is staged)."""
        with self._lock:
            replayed = self._replay(token, "update")
            if replayed is not None:
                return replayed
            state = self._state
            update_cfg = state.update_cfg
            if train_cfg is not None:
                update_cfg = replace(update_cfg, train_cfg=train_cfg)
            if freeze_hidden is not None:
                update_cfg = replace(update_cfg, freeze_hidden=freeze_hidden)
            work = replace(state, update_cfg=update_cfg)
            new_state, summary = _run_update(work, staged=state.staged, remaining_staged=())
            # Request knobs are transient; the persisted defaults stay put.
            new_state = replace(new_state, update_cfg=state.update_cfg)
            response = {
                "revision": new_state.revision,
                "class_labels": list(new_state.label_map),
                "flagged_total": len(new_state.flagged),
                **summary,
            }
            new_state = replace(
                new_state, tokens=_with_token(state.tokens, token, "update", response)
            )
            self._commit(new_state)
            return response

    # ----------------------------------------------------------------- queries

    def state_info(self) -> dict:
        state = self._state
        return {
            "revision": state.revision,
            "class_labels": list(state.label_map),
            "counts": {
                "known_classes": len(state.label_map),
                "flagged": len(state.flagged),
                "staged": len(state.staged),
                "train_samples": len(state.train),
            },
        }

    def clusters_json(self, refresh: bool = False) -> dict:
        cache = self.cluster_report(refresh=refresh)
        state = self._state
        clusters = []
        for cluster in cache.report.clusters:
            members = []
            for sid in cluster.member_ids:
                sim = cache.similarity.get(sid)
                vec = cache.vectors.get(sid)
                dist = (
                    float(np.linalg.norm(vec - cluster.centroid))
                    if vec is not None
                    else None
                )
                members.append(
                    {
                        "sample_id": sid,
                        "similarity": None if sim is None else [float(v) for v in sim],
                        "distance_to_centroid": dist,
                    }
                )
            sims = [
                cache.similarity[sid]
                for sid in cluster.member_ids
                if sid in cache.similarity
            ]
            profile = (
                [float(v) for v in np.mean(sims, axis=0)] if sims else None
            )
            clusters.append(
                {
                    "cluster_id": cluster.cluster_id,
                    "size": len(cluster.member_ids),
                    "radius": float(cluster.radius),
                    "similarity_profile": profile,
                    "representatives": list(cluster.representative_ids),
                    "members": members,
                }
            )
        return {
            "revision": state.revision,
            "computed_at_revision": cache.revision,
            "class_labels": list(state.label_map),
            "flagged_total": len(state.flagged),
            "purity": cache.report.purity,
            "clusters": clusters,
        }

    def sample_json(self, sample_id: str) -> dict:
        state = self._state
        record = state.flagged.get(sample_id)
        if record is None:
            for rec in state.train:
                if rec.sample_id == sample_id:
                    record = rec
                    break
        if record is None and sample_id not in state.decision_log:
            raise RequestError(f"unknown sample {sample_id!r}")
        similarity = None
        if record is not None:
            transform = _similarity_transform(state)
            similarity = [float(v) for v in transform.transform_features(record.features)]
        return {
            "sample_id": sample_id,
            "features": None
            if record is None
            else [float(v) for v in record.features],
            "label": None if record is None else record.label,
            "similarity": similarity,
            "decisions": [
                {
                    "revision": e.revision,
                    "outcome": e.outcome,
                    "class_id": e.class_id,
                    "class_label": e.class_label,
                }
                for e in state.decision_log.get(sample_id, ())
            ],
        }

    def metrics_json(self) -> dict:
        state = self._state
        return {
            "revision": state.revision,
            "available": state.metrics is not None,
            "metrics": metrics_json(state.metrics) if state.metrics else None,
        }


# --------------------------------------------------------------------- helpers


def _decision_json(sample_id: str, dec: Decision, class_label: str | None) -> dict:
    return {
        "sample_id": sample_id,
        "outcome": dec.outcome,
        "class_id": dec.class_id,
        "class_label": class_label,
        "indicator": [bool(b) for b in dec.indicator],
        "softmax": None if dec.softmax is None else [float(p) for p in dec.softmax],
    }


def metrics_json(metrics: DetectionMetrics) -> dict:
    return {
        "n_total": metrics.n_total,
        "n_known": metrics.n_known,
        "n_unknown": metrics.n_unknown,
        "unknown_recall": metrics.unknown_recall,
        "false_alarm_rate": metrics.false_alarm_rate,
        "known_accuracy": metrics.known_accuracy,
        "overall_accuracy": metrics.overall_accuracy,
        "case_histogram": dict(metrics.case_histogram),
    }


def _with_token(tokens: dict, token: str | None, endpoint: str, response: dict) -> dict:
    if token is None:
        return tokens
    new_tokens = dict(tokens)
    new_tokens[token] = {"endpoint": endpoint, "response": response}
    return new_tokens


def _similarity_transform(state: MonitorState) -> SimilarityTransform:
    groups = state.train.by_class()
    known_sets = {
        name: np.stack([np.asarray(r.features, dtype=float) for r in groups[name]])
        for name in state.label_map
        if name in groups
    }
    return SimilarityTransform(state.model, state.bank.embed_layer, known_sets)


def _compute_report(state: MonitorState) -> CachedReport:
    transform = _similarity_transform(state)
    ids = list(state.flagged)
    raw = np.stack(
        [transform.transform_features(state.flagged[sid].features) for sid in ids]
    )
    vectors = standardize_vectors(raw) if len(raw) > 1 else raw
    truth = None
    if all(sid in state.truth_labels for sid in ids):
        truth = {sid: state.truth_labels[sid] for sid in ids}
    report = birch_fit(
        vectors,
        threshold=state.clustering_cfg.threshold,
        branching=state.clustering_cfg.branching,
        sample_ids=ids,
        truth_labels=truth,
        n_representatives=state.clustering_cfg.representatives,
    )
    similarity = {sid: raw[i] for i, sid in enumerate(ids)}
    clustering_space = {sid: vectors[i] for i, sid in enumerate(ids)}
    return CachedReport(
        report=report,
        revision=state.revision,
        similarity=similarity,
        vectors=clustering_space,
    )


def _collect_labels(
    state: MonitorState,
    report: ClusterReport,
    assignments: Sequence[LabelAssignment],
) -> list[SampleRecord]:
    by_id: dict[int, Cluster] = {c.cluster_id: c for c in report.clusters}
    seen_clusters: set[int] = set()
    labeled: list[SampleRecord] = []
    taken: set[str] = set()
    for assignment in assignments:
        if not assignment.label or not assignment.label.strip():
            raise RequestError("empty label")
        cluster = by_id.get(assignment.cluster_id)
        if cluster is None:
            raise RequestError(f"unknown cluster id {assignment.cluster_id}")
        if assignment.cluster_id in seen_clusters:
            raise RequestError(f"cluster {assignment.cluster_id} labeled twice")
        seen_clusters.add(assignment.cluster_id)
        members = set(cluster.member_ids)
        for sid in assignment.overrides:
            if sid not in members:
                raise RequestError(
                    f"override for {sid!r} which is not in cluster {assignment.cluster_id}"
                )
        for sid in cluster.member_ids:
            label = assignment.overrides.get(sid, assignment.label)
            if not label or not label.strip():
                raise RequestError(f"empty override label for {sid!r}")
            record = state.flagged.get(sid)
            if record is None:
                raise RequestError(f"sample {sid!r} is no longer in the flagged pool")
            if sid in taken:
                raise RequestError(f"sample {sid!r} labeled twice")
            taken.add(sid)
            labeled.append(SampleRecord(sid, record.features, label.strip()))
    return labeled


def _run_update(
    state: MonitorState,
    staged: tuple[SampleRecord, ...],
    remaining_staged: tuple[SampleRecord, ...],
) -> tuple[MonitorState, dict]:
    """Few-shot update over staged labeled samples; returns (state', summary)."""
    label_map = list(state.label_map)
    existing: dict[str, list[SampleRecord]] = {}
    new_by_label: dict[str, list[SampleRecord]] = {}
    for rec in staged:
        target = existing if rec.label in label_map else new_by_label
        target.setdefault(rec.label, []).append(rec)  # type: ignore[arg-type]

    known = state.train
    extra_known = [rec for recs in existing.values() for rec in recs]
    if extra_known:
        known = known.concat(Dataset(extra_known))

    update_cfg = state.update_cfg
    request = UpdateRequest(
        new_classes=[(name, recs) for name, recs in new_by_label.items()],
        include_known_replay=update_cfg.include_known_replay,
        freeze=FreezeSpec.first_hidden(update_cfg.freeze_hidden),
        train_cfg=update_cfg.train_cfg,
        r_policy=state.detector_r_policy,
        expand_seed=state.revision,
    )
    result = update_model(state.model, state.bank, request, known)

    new_train = known.concat(
        Dataset([rec for recs in new_by_label.values() for rec in recs])
    )
    labeled_ids = {rec.sample_id for rec in staged}
    new_flagged = {
        sid: rec for sid, rec in state.flagged.items() if sid not in labeled_ids
    }
    new_state = replace(
        state,
        model=result.model,
        bank=result.bank,
        train=new_train,
        revision=state.revision + 1,
        flagged=new_flagged,
        staged=remaining_staged,
        cluster_cache=None,
        metrics=state.metrics,
    )
    summary = {
        "updated": True,
        "new_classes": sorted(new_by_label),
        "labeled_samples": len(staged),
        "epoch_losses": [float(v) for v in result.epoch_losses[-5:]],
    }
    return new_state, summary


# ----------------------------------------------------------------- persistence


def _revision_dir(state_dir: Path, revision: int) -> Path:
    return Path(state_dir) / f"rev_{revision:06d}"


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _record_json(rec: SampleRecord) -> dict:
    return {
        "sample_id": rec.sample_id,
        "features": [float(v) for v in rec.features],
        "label": rec.label,
    }


def _record_from_json(doc: dict) -> SampleRecord:
    return SampleRecord(
        str(doc["sample_id"]),
        np.asarray(doc["features"], dtype=float),
        doc.get("label"),
    )


def persist(state: MonitorState, state_dir) -> Path:
    """Write one immutable revision directory and repoint CURRENT atomically."""
    state_dir = Path(state_dir)
    state_dir.mkdir(parents=True, exist_ok=True)
    rev_dir = _revision_dir(state_dir, state.revision)
    if rev_dir.exists():
        raise RestoreError(f"revision {state.revision} already persisted at {rev_dir}")
    tmp_dir = state_dir / f".tmp_rev_{state.revision:06d}"
    if tmp_dir.exists():
        for p in tmp_dir.iterdir():
            p.unlink()
    tmp_dir.mkdir(exist_ok=True)

    files = {
        "model.json": model_to_document(state.model),
        "bank.json": bank_to_document(state.bank),
        "state.json": json.dumps(_state_json(state), indent=1),
    }
    manifest = {"format": _STATE_FORMAT, "revision": state.revision, "files": {}}
    for name, text in files.items():
        data = text.encode()
        (tmp_dir / name).write_bytes(data)
        manifest["files"][name] = _sha256(data)
    (tmp_dir / "manifest.json").write_text(json.dumps(manifest, indent=1))
    tmp_dir.rename(rev_dir)

    current_tmp = state_dir / ".CURRENT.tmp"
    current_tmp.write_text(str(state.revision))
    current_tmp.rename(state_dir / "CURRENT")
    return rev_dir


def _state_json(state: MonitorState) -> dict:
    return {
        "format": _STATE_FORMAT,
        "version": 1,
        "revision": state.revision,
        "detector_r_policy": state.detector_r_policy,
        "update": {
            "learning_rate": state.update_cfg.train_cfg.learning_rate,
            "epochs": state.update_cfg.train_cfg.epochs,
            "batch_size": state.update_cfg.train_cfg.batch_size,
            "shuffle_seed": state.update_cfg.train_cfg.shuffle_seed,
            "freeze_hidden": state.update_cfg.freeze_hidden,
            "replay": state.update_cfg.include_known_replay,
            "shots_per_class": state.update_cfg.shots_per_class,
        },
        "clustering": {
            "threshold": state.clustering_cfg.threshold,
            "branching": state.clustering_cfg.branching,
            "representatives": state.clustering_cfg.representatives,
        },
        "train_records": [_record_json(r) for r in state.train],
        "flagged": [_record_json(r) for r in state.flagged.values()],
        "staged": [_record_json(r) for r in state.staged],
        "truth_labels": dict(state.truth_labels),
        "decision_log": {
            sid: [
                {
                    "revision": e.revision,
                    "outcome": e.outcome,
                    "class_id": e.class_id,
                    "class_label": e.class_label,
                }
                for e in entries
            ]
            for sid, entries in state.decision_log.items()
        },
        "metrics": metrics_json(state.metrics) if state.metrics else None,
        "tokens": state.tokens,
    }


def restore(state_dir, revision: int | None = None) -> MonitorState:
    """Load a persisted revision, verifying the manifest checksums."""
    from .mlp import TrainConfig  # local import to avoid cycle noise

    state_dir = Path(state_dir)
    if revision is None:
        current = state_dir / "CURRENT"
        if not current.exists():
            raise RestoreError(f"no CURRENT revision marker in {state_dir}")
        try:
            revision = int(current.read_text().strip())
        except ValueError as exc:
            raise RestoreError(f"corrupt CURRENT marker in {state_dir}") from exc
    rev_dir = _revision_dir(state_dir, revision)
    if not rev_dir.exists():
        raise RestoreError(f"revision {revision} not found in {state_dir}")

    manifest_path = rev_dir / "manifest.json"
    if not manifest_path.exists():
        raise RestoreError(f"{rev_dir}: manifest.json missing")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise RestoreError(f"{rev_dir}: manifest is not valid JSON") from exc
    texts: dict[str, str] = {}
    for name, digest in manifest.get("files", {}).items():
        path = rev_dir / name
        if not path.exists():
            raise RestoreError(f"{rev_dir}: {name} missing")
        data = path.read_bytes()
        if _sha256(data) != digest:
            raise RestoreError(
                f"{rev_dir}: integrity check failed for {name} "
                f"(expected sha256 {digest[:12]}..., file is corrupt or truncated)"
            )
        texts[name] = data.decode()
    for required in ("model.json", "bank.json", "state.json"):
        if required not in texts:
            raise RestoreError(f"{rev_dir}: {required} not covered by manifest")

    model = model_from_document(texts["model.json"])
    bank = bank_from_document(texts["bank.json"])
    try:
        doc = json.loads(texts["state.json"])
        upd = doc["update"]
        update_cfg = UpdateConfig(
            train_cfg=TrainConfig(
                learning_rate=float(upd["learning_rate"]),
                epochs=int(upd["epochs"]),
                batch_size=int(upd["batch_size"]),
                shuffle_seed=int(upd["shuffle_seed"]),
            ),
            freeze_hidden=int(upd["freeze_hidden"]),
            include_known_replay=bool(upd["replay"]),
            shots_per_class=int(upd["shots_per_class"]),
        )
        clu = doc["clustering"]
        clustering_cfg = ClusteringConfig(
            threshold=float(clu["threshold"]),
            branching=int(clu["branching"]),
            representatives=int(clu["representatives"]),
        )
        r_policy: int | float = doc["detector_r_policy"]
        r_policy = int(r_policy) if isinstance(r_policy, int) else float(r_policy)
        flagged_records = [_record_from_json(r) for r in doc["flagged"]]
        state = MonitorState(
            model=model,
            bank=bank,
            train=Dataset([_record_from_json(r) for r in doc["train_records"]]),
            revision=int(doc["revision"]),
            detector_r_policy=r_policy,
            update_cfg=update_cfg,
            clustering_cfg=clustering_cfg,
            flagged={r.sample_id: r for r in flagged_records},
            staged=tuple(_record_from_json(r) for r in doc["staged"]),
            truth_labels={str(k): str(v) for k, v in doc["truth_labels"].items()},
            decision_log={
                sid: tuple(
                    DecisionEntry(
                        int(e["revision"]),
                        str(e["outcome"]),
                        e["class_id"],
                        e["class_label"],
                    )
                    for e in entries
                )
                for sid, entries in doc["decision_log"].items()
            },
            metrics=_metrics_from_json(doc.get("metrics")),
            tokens={str(k): dict(v) for k, v in doc["tokens"].items()},
        )
    except (KeyError, TypeError, ValueError, RequestError) as exc:
        raise RestoreError(f"{rev_dir}: state.json is malformed: {exc}") from exc
    if state.revision != revision:
        raise RestoreError(
            f"{rev_dir}: recorded revision {state.revision} != directory revision {revision}"
        )
    return state


def _metrics_from_json(doc: dict | None) -> DetectionMetrics | None:
    if doc is None:
        return None
    return DetectionMetrics(
        n_total=int(doc["n_total"]),
        n_known=int(doc["n_known"]),
        n_unknown=int(doc["n_unknown"]),
        unknown_recall=doc["unknown_recall"],
        false_alarm_rate=doc["false_alarm_rate"],
        known_accuracy=doc["known_accuracy"],
        overall_accuracy=float(doc["overall_accuracy"]),
        case_histogram={str(k): int(v) for k, v in doc["case_histogram"].items()},
    )


def list_revisions(state_dir) -> list[int]:
    state_dir = Path(state_dir)
    revisions = []
    for path in state_dir.glob("rev_*"):
        try:
            revisions.append(int(path.name.split("_", 1)[1]))
        except (IndexError, ValueError):
            continue
    return sorted(revisions)
