"""Cosine-similarity transform and a from-scratch BIRCH CF-tree.

Flagged samples are mapped to a C-dimensional vector of average cosine
similarities against each known class's embeddings, then grouped by a
single-pass CF-tree so an operator can label whole clusters from a few
representative points.

The tree keeps (N, LS, SS) clustering features per subcluster: centroid is
LS/N and radius is sqrt(SS/N - ||LS/N||^2), the RMS distance of members to
the centroid. A point joins the closest leaf subcluster when the post-merge
radius stays within the threshold, otherwise it opens a new subcluster;
nodes split at the branching limit. Final clusters are the leaf subclusters
(cluster count comes out automatically), with members assigned to the
nearest final centroid.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigurationError, DataError
from .mlp import MlpModel, embed_batch
from .numutil import standardize_columns

DEFAULT_THRESHOLD = 2.0  # radius bound used throughout the clustering study
DEFAULT_BRANCHING = 50
DEFAULT_REPRESENTATIVES = 5


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """dot(a,b) / (|a||b|), clamped to [-1, 1].

    A zero-norm input (ReLU can zero an embedding) yields 0 with a warning
    rather than an error.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise DataError(f"cosine needs equal-length vectors, got {a.shape} and {b.shape}")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        warnings.warn("zero-norm vector in cosine; similarity defined as 0", RuntimeWarning)
        return 0.0
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


@dataclass(frozen=True)
class SimilarityVector:
    sample_id: str
    values: np.ndarray  # (C,), entries in [-1, 1]


class SimilarityTransform:
    """Precomputes known-class embeddings so batches transform cheaply.

    known_sets maps class name -> feature matrix (n_i, d) of that class's
    samples, in the class order the output vector should follow.
    """

    def __init__(self, model: MlpModel, layer: int, known_sets: Mapping[str, np.ndarray]):
        if not known_sets:
            raise ConfigurationError("at least one known class required")
        self.model = model
        self.layer = layer
        self.class_names = list(known_sets)
        self._normed: list[np.ndarray] = []
        for name in self.class_names:
            feats = np.asarray(known_sets[name], dtype=float)
            if feats.ndim != 2 or len(feats) == 0:
                raise ConfigurationError(f"class {name!r}: empty or non-2D sample set")
            Z = embed_batch(model, feats, layer)
            norms = np.linalg.norm(Z, axis=1)
            zero = norms == 0.0
            if np.any(zero):
                warnings.warn(
                    f"class {name!r}: {int(zero.sum())} zero-norm embeddings "
                    "contribute similarity 0",
                    RuntimeWarning,
                )
            norms[zero] = 1.0  # rows stay zero after division -> cosine 0
            self._normed.append(Z / norms[:, None])

    def transform_features(self, x: np.ndarray) -> np.ndarray:
        """Similarity values s(x) for one raw feature vector."""
        z = embed_batch(self.model, np.asarray(x, dtype=float)[None, :], self.layer)[0]
        nz = float(np.linalg.norm(z))
        if nz == 0.0:
            warnings.warn("zero-norm embedding; similarity vector is 0", RuntimeWarning)
            return np.zeros(len(self.class_names))
        zn = z / nz
        values = np.array([float(np.mean(Zn @ zn)) for Zn in self._normed])
        return np.clip(values, -1.0, 1.0)

    def transform_batch(self, X: np.ndarray) -> np.ndarray:
        return np.stack([self.transform_features(x) for x in np.asarray(X, dtype=float)])


def similarity_vector(
    x: np.ndarray,
    model: MlpModel,
    layer: int,
    known_sets: Mapping[str, np.ndarray],
    sample_id: str = "",
) -> SimilarityVector:
    """Average cosine similarity of z(x) against each known class's embeddings."""
    transform = SimilarityTransform(model, layer, known_sets)
    return SimilarityVector(sample_id, transform.transform_features(x))


@dataclass
class CFEntry:
    """Clustering feature: count, linear sum, and sum of squared norms.

    Merging is additive in all three fields; member indices are tracked on
    leaf entries for radius verification and reporting.
    """

    n: int
    ls: np.ndarray
    ss: float
    member_indices: list[int] = field(default_factory=list)

    @classmethod
    def of_point(cls, x: np.ndarray, index: int | None = None) -> "CFEntry":
        members = [] if index is None else [index]
        return cls(1, np.asarray(x, dtype=float).copy(), float(np.dot(x, x)), members)

    @property
    def centroid(self) -> np.ndarray:
        return self.ls / self.n

    @property
    def radius(self) -> float:
        c = self.centroid
        return float(np.sqrt(max(self.ss / self.n - float(np.dot(c, c)), 0.0)))

    def merged(self, other: "CFEntry") -> "CFEntry":
        return CFEntry(
            self.n + other.n,
            self.ls + other.ls,
            self.ss + other.ss,
            self.member_indices + other.member_indices,
        )

    def absorb(self, other: "CFEntry") -> None:
        self.n += other.n
        self.ls = self.ls + other.ls
        self.ss += other.ss
        self.member_indices.extend(other.member_indices)


class _CFNode:
    __slots__ = ("leaf", "entries", "children")

    def __init__(self, leaf: bool):
        self.leaf = leaf
        self.entries: list[CFEntry] = []
        self.children: list["_CFNode"] = []


class CFTree:
    """Single-pass CF-tree over Euclidean distance to subcluster centroids."""

    def __init__(self, threshold: float, branching: int = DEFAULT_BRANCHING):
        if threshold <= 0:
            raise ConfigurationError("threshold must be > 0")
        if branching < 2:
            raise ConfigurationError("branching factor must be >= 2")
        self.threshold = threshold
        self.branching = branching
        self.root: _CFNode | None = None

    def insert(self, x: np.ndarray, index: int) -> None:
        point = CFEntry.of_point(x, index)
        if self.root is None:
            self.root = _CFNode(leaf=True)
            self.root.entries.append(point)
            return
        split = self._insert(self.root, point)
        if split is not None:
            (e1, n1), (e2, n2) = split
            new_root = _CFNode(leaf=False)
            new_root.entries = [e1, e2]
            new_root.children = [n1, n2]
            self.root = new_root

    def _insert(self, node: _CFNode, point: CFEntry):
        """Returns None, or ((entry, node), (entry, node)) when this node split."""
        x = point.ls  # point CF: ls is the coordinate itself
        if node.leaf:
            best, best_dist = None, np.inf
            for entry in node.entries:
                d = float(np.linalg.norm(entry.centroid - x))
                if d < best_dist:
                    best, best_dist = entry, d
            assert best is not None
            if best.merged(point).radius <= self.threshold:
                best.absorb(point)
                return None
            node.entries.append(point)
        else:
            centroids = [e.centroid for e in node.entries]
            i = int(np.argmin([np.linalg.norm(c - x) for c in centroids]))
            result = self._insert(node.children[i], point)
            if result is None:
                # internal summaries track CF sums only, not member lists
                node.entries[i].absorb(CFEntry(point.n, point.ls, point.ss))
                return None
            (e1, n1), (e2, n2) = result
            node.entries[i : i + 1] = [e1, e2]
            node.children[i : i + 1] = [n1, n2]
        if len(node.entries) <= self.branching:
            return None
        return self._split(node)

    def _split(self, node: _CFNode):
        """Farthest-pair seeding; entries go to the closer seed."""
        centroids = np.stack([e.centroid for e in node.entries])
        diffs = centroids[:, None, :] - centroids[None, :, :]
        dists = np.linalg.norm(diffs, axis=2)
        i, j = np.unravel_index(int(np.argmax(dists)), dists.shape)
        left = _CFNode(leaf=node.leaf)
        right = _CFNode(leaf=node.leaf)
        for k, entry in enumerate(node.entries):
            target = left if dists[k, i] <= dists[k, j] else right
            target.entries.append(entry)
            if not node.leaf:
                target.children.append(node.children[k])
        summary = []
        for part in (left, right):
            total = CFEntry(0, np.zeros_like(node.entries[0].ls), 0.0)
            for entry in part.entries:
                total.absorb(
                    CFEntry(entry.n, entry.ls, entry.ss)  # summaries carry no members
                )
            summary.append((total, part))
        return summary[0], summary[1]

    def leaf_entries(self) -> list[CFEntry]:
        """Leaf subclusters in left-to-right order."""
        out: list[CFEntry] = []

        def walk(node: _CFNode) -> None:
            if node.leaf:
                out.extend(node.entries)
            else:
                for child in node.children:
                    walk(child)

        if self.root is not None:
            walk(self.root)
        return out


@dataclass(frozen=True)
class Cluster:
    cluster_id: int
    member_ids: tuple[str, ...]
    centroid: np.ndarray
    radius: float
    representative_ids: tuple[str, ...]


@dataclass(frozen=True)
class ClusterReport:
    clusters: tuple[Cluster, ...]
    purity: float | None = None

    @property
    def n_clustered(self) -> int:
        return sum(len(c.member_ids) for c in self.clusters)

    def assignment(self) -> dict[str, int]:
        return {
            sid: c.cluster_id for c in self.clusters for sid in c.member_ids
        }


def representatives(
    member_ids: Sequence[str],
    vectors: Mapping[str, np.ndarray],
    centroid: np.ndarray,
    m: int,
) -> list[str]:
    """The min(m, n) members closest to the centroid; ties break by sample id."""
    if m < 1:
        raise ConfigurationError("representative count must be >= 1")
    ranked = sorted(
        member_ids,
        key=lambda sid: (float(np.linalg.norm(vectors[sid] - centroid)), sid),
    )
    return ranked[: min(m, len(ranked))]


def birch_fit(
    vectors: np.ndarray,
    threshold: float = DEFAULT_THRESHOLD,
    branching: int = DEFAULT_BRANCHING,
    sample_ids: Sequence[str] | None = None,
    truth_labels: Mapping[str, str] | None = None,
    n_representatives: int = DEFAULT_REPRESENTATIVES,
) -> ClusterReport:
    """Single-pass CF-tree clustering with automatic cluster count.

    Vectors are inserted as given (standardize upstream when clustering
    similarity vectors). Members are assigned to the nearest final centroid;
    purity is computed when truth labels are supplied.
    """
    vectors = np.asarray(vectors, dtype=float)
    if vectors.ndim != 2 or len(vectors) == 0:
        raise DataError("clustering input must be a non-empty 2-D matrix")
    if sample_ids is None:
        sample_ids = [str(i) for i in range(len(vectors))]
    if len(sample_ids) != len(vectors):
        raise DataError(f"{len(sample_ids)} ids for {len(vectors)} vectors")
    if len(set(sample_ids)) != len(sample_ids):
        raise DataError("sample_ids must be unique")

    tree = CFTree(threshold, branching)
    for i, x in enumerate(vectors):
        tree.insert(x, i)

    entries = tree.leaf_entries()
    centroids = np.stack([e.centroid for e in entries])
    dists = np.linalg.norm(vectors[:, None, :] - centroids[None, :, :], axis=2)
    nearest = np.argmin(dists, axis=1)

    by_id = {sid: vectors[i] for i, sid in enumerate(sample_ids)}
    clusters: list[Cluster] = []
    for entry_idx, entry in enumerate(entries):
        members = [sample_ids[i] for i in range(len(vectors)) if nearest[i] == entry_idx]
        if not members:
            continue  # every point found a closer centroid; drop the empty shell
        reps = representatives(members, by_id, entry.centroid, n_representatives)
        clusters.append(
            Cluster(
                cluster_id=len(clusters),
                member_ids=tuple(members),
                centroid=entry.centroid,
                radius=entry.radius,
                representative_ids=tuple(reps),
            )
        )

    report_purity = None
    if truth_labels is not None:
        report_purity = purity([list(c.member_ids) for c in clusters], truth_labels)
    return ClusterReport(tuple(clusters), purity=report_purity)


def purity(clusters: Sequence[Sequence[str]], truth_labels: Mapping[str, str]) -> float:
    """Sum over clusters of the majority-label count, divided by total members."""
    total = 0
    majority = 0
    for members in clusters:
        counts: dict[str, int] = {}
        for sid in members:
            if sid not in truth_labels:
                raise DataError(f"no truth label for clustered sample {sid!r}")
            counts[truth_labels[sid]] = counts.get(truth_labels[sid], 0) + 1
        total += len(members)
        if counts:
            majority += max(counts.values())
    if total == 0:
        raise DataError("purity of an empty clustering is undefined")
    return majority / total


def standardize_vectors(vectors: np.ndarray) -> np.ndarray:
    """Z-score per dimension (sample std, floored) - the pre-clustering step."""
    return standardize_columns(vectors)


def export_cluster_report(
    report: ClusterReport,
    vectors: Mapping[str, np.ndarray],
    members_path,
    summary_path,
) -> None:
    """Per-sample CSV (sample_id, cluster_id, distance, is_representative) + summary."""
    with Path(members_path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", "cluster_id", "distance_to_centroid", "is_representative"])
        for cluster in report.clusters:
            reps = set(cluster.representative_ids)
            for sid in cluster.member_ids:
                dist = float(np.linalg.norm(vectors[sid] - cluster.centroid))
                writer.writerow([sid, cluster.cluster_id, repr(dist), int(sid in reps)])
    with Path(summary_path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["cluster_id", "size", "radius", "representatives"])
        for cluster in report.clusters:
            writer.writerow(
                [
                    cluster.cluster_id,
                    len(cluster.member_ids),
                    repr(cluster.radius),
                    " ".join(cluster.representative_ids),
                ]
            )
