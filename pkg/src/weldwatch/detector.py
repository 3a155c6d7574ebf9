"""Open-set detector: per-class PCA of hidden embeddings with three-sigma bounds.

Offline, each known class gets its own z-score standardization of the chosen
hidden-layer embedding, a PCA projection fit on the standardized embeddings,
and a per-component threshold of three sample standard deviations of the
training scores. Online, a sample passes a class's test when every projected
score component stays inside its bound; the per-class booleans form the fault
indicator that drives the three-case decision:

    no class accepts   -> unknown fault
    exactly one        -> that class
    several            -> softmax argmax resolves the ambiguity
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    ConfigurationError,
    DataError,
    FitError,
    RestoreError,
    ShapeError,
)
from .mlp import MlpModel, embed_batch, predict_batch
from .numutil import STD_FLOOR, column_stats

_BANK_FORMAT = "weldwatch-detector-bank"

OUTCOME_UNKNOWN = "unknown"
OUTCOME_KNOWN = "known"
OUTCOME_SOFTMAX = "softmax_resolved"

# Default retained-components policy: smallest r reaching this explained
# variance, never more than the cap.
DEFAULT_VARIANCE_FRACTION = 0.90
DEFAULT_MAX_COMPONENTS = 10


@dataclass(frozen=True)
class PcaResult:
    projection: np.ndarray  # (q, r), orthonormal columns, eigenvalue-descending
    scores: np.ndarray  # (n, r) = rows @ projection
    explained_variance: np.ndarray  # (r,) covariance eigenvalues


@dataclass(frozen=True)
class ClassDetector:
    class_id: int
    mean: np.ndarray  # (q,)
    std: np.ndarray  # (q,), sample std floored at STD_FLOOR
    projection: np.ndarray  # (q, r)
    thresholds: np.ndarray  # (r,), 3 * sample std of training scores

    @property
    def r(self) -> int:
        return self.projection.shape[1]

    @property
    def q(self) -> int:
        return self.projection.shape[0]

    def scores(self, z: np.ndarray) -> np.ndarray:
        """Standardize an embedding batch with class stats and project."""
        z = np.atleast_2d(np.asarray(z, dtype=float))
        if z.shape[1] != self.q:
            raise ShapeError(f"embedding dim {z.shape[1]} != detector dim {self.q}")
        return ((z - self.mean) / self.std) @ self.projection

    def accepts(self, z: np.ndarray) -> np.ndarray:
        """Component-wise |score| <= threshold for all r components (boundary passes)."""
        u = self.scores(z)
        return np.all(np.abs(u) <= self.thresholds, axis=1)


@dataclass(frozen=True)
class DetectorBank:
    detectors: tuple[ClassDetector, ...]
    embed_layer: int
    class_labels: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(self.detectors) != len(self.class_labels):
            raise ConfigurationError("one detector per class label required")
        qs = {d.q for d in self.detectors}
        if len(qs) > 1:
            raise ConfigurationError(f"detectors disagree on embedding dim: {qs}")

    @property
    def n_classes(self) -> int:
        return len(self.detectors)


@dataclass(frozen=True)
class Decision:
    """Fault indicator plus the resolved outcome for one sample."""

    indicator: tuple[bool, ...]
    outcome: str  # OUTCOME_UNKNOWN | OUTCOME_KNOWN | OUTCOME_SOFTMAX
    class_id: int | None
    softmax: tuple[float, ...] | None = None  # present for softmax-resolved only


@dataclass(frozen=True)
class DetectionMetrics:
    n_total: int
    n_known: int
    n_unknown: int
    unknown_recall: float | None  # unknowns flagged / unknowns
    false_alarm_rate: float | None  # knowns flagged unknown / knowns
    known_accuracy: float | None  # knowns assigned their true class / knowns
    overall_accuracy: float
    case_histogram: dict[str, int]


def pca_fit(rows: np.ndarray, r: int) -> PcaResult:
    """PCA of the sample covariance (N-1 denominator) of `rows`.

    Projection columns are unit eigenvectors in descending eigenvalue order,
    signed so the largest-magnitude entry of each column is positive. Scores
    are rows @ projection without re-centering (callers pass standardized,
    zero-mean rows).
    """
    rows = np.asarray(rows, dtype=float)
    if rows.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got shape {rows.shape}")
    n, q = rows.shape
    if n < 2:
        raise DataError(f"PCA needs at least 2 rows, got {n}")
    if not np.all(np.isfinite(rows)):
        raise DataError("non-finite value in PCA input")
    if not 1 <= r <= min(n - 1, q):
        raise ConfigurationError(
            f"r={r} out of range: must satisfy 1 <= r <= min(n-1={n - 1}, q={q})"
        )

    cov = np.atleast_2d(np.cov(rows, rowvar=False))
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals = np.maximum(eigvals[order], 0.0)
    eigvecs = eigvecs[:, order]
    if eigvals[0] <= 0.0:
        raise ConfigurationError("degenerate input: covariance has no positive eigenvalue")

    P = eigvecs[:, :r].copy()
    for j in range(r):
        if P[np.argmax(np.abs(P[:, j])), j] < 0:
            P[:, j] = -P[:, j]
    return PcaResult(projection=P, scores=rows @ P, explained_variance=eigvals[:r])


def _choose_r(eigvals: np.ndarray, n: int, q: int, r_policy: int | float, name: str) -> int:
    """Fixed-int policy is strict; fraction policy clamps to what the data allows."""
    hard_cap = min(n - 1, q)
    positive = int(np.sum(eigvals > eigvals[0] * 1e-12)) if eigvals[0] > 0 else 0
    if positive == 0:
        raise FitError(f"class {name!r}: degenerate embeddings (zero covariance)")
    if isinstance(r_policy, (int, np.integer)) and not isinstance(r_policy, bool):
        r = int(r_policy)
        if r < 1:
            raise ConfigurationError(f"fixed r must be >= 1, got {r}")
        if r > hard_cap:
            raise FitError(
                f"class {name!r}: r={r} needs more samples (have {n}, dim {q})"
            )
        if r > positive:
            raise FitError(f"class {name!r}: only {positive} non-degenerate components")
        return r
    fraction = float(r_policy)
    if not 0 < fraction <= 1:
        raise ConfigurationError(f"variance fraction must be in (0, 1], got {fraction}")
    cum = np.cumsum(eigvals) / np.sum(eigvals)
    r = int(np.searchsorted(cum, fraction - 1e-12) + 1)
    return max(1, min(r, DEFAULT_MAX_COMPONENTS, hard_cap, positive))


def fit_detector(
    model: MlpModel,
    X: np.ndarray,
    y: np.ndarray,
    layer: int = 2,
    r_policy: int | float = DEFAULT_VARIANCE_FRACTION,
    class_labels=None,
) -> DetectorBank:
    """Offline phase: per-class standardization + PCA + three-sigma thresholds.

    y holds integer class ids 0..C-1; class_labels (optional) names them.
    r_policy: a float in (0, 1] picks the smallest r reaching that explained
    variance (capped at DEFAULT_MAX_COMPONENTS); an int fixes r for every class.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    if len(X) != len(y):
        raise ShapeError(f"{len(X)} samples but {len(y)} labels")
    if len(X) == 0:
        raise DataError("empty training set")
    C = int(y.max()) + 1 if len(y) else 0
    if class_labels is None:
        class_labels = tuple(f"class_{c}" for c in range(C))
    else:
        class_labels = tuple(str(n) for n in class_labels)
        if len(class_labels) != C:
            raise ConfigurationError(
                f"{len(class_labels)} labels for {C} classes present in y"
            )

    detectors = []
    for c in range(C):
        name = class_labels[c]
        Xc = X[y == c]
        n_c = len(Xc)
        if n_c < 2:
            raise FitError(f"class {name!r}: needs at least 2 samples, has {n_c}")
        Z = embed_batch(model, Xc, layer)
        if not np.all(np.isfinite(Z)):
            raise DataError(f"class {name!r}: non-finite embedding")
        mean, std = column_stats(Z, floor=STD_FLOOR)
        Zt = (Z - mean) / std

        cov = np.atleast_2d(np.cov(Zt, rowvar=False))
        eigvals = np.sort(np.linalg.eigvalsh(cov))[::-1]
        eigvals = np.maximum(eigvals, 0.0)
        r = _choose_r(eigvals, n_c, Zt.shape[1], r_policy, name)
        try:
            pca = pca_fit(Zt, r)
        except ConfigurationError as exc:
            raise FitError(f"class {name!r}: {exc}") from exc
        score_std = pca.scores.std(axis=0, ddof=1)
        thresholds = 3.0 * score_std
        if np.any(thresholds <= 0):
            raise FitError(f"class {name!r}: zero-variance training score column")
        detectors.append(
            ClassDetector(
                class_id=c,
                mean=mean,
                std=std,
                projection=pca.projection,
                thresholds=thresholds,
            )
        )
    return DetectorBank(tuple(detectors), embed_layer=layer, class_labels=class_labels)


def indicator_batch(bank: DetectorBank, model: MlpModel, X: np.ndarray) -> np.ndarray:
    """Fault indicators I(x) for a batch, shape (n, C) boolean."""
    Z = embed_batch(model, X, bank.embed_layer)
    out = np.zeros((len(Z), bank.n_classes), dtype=bool)
    for c, det in enumerate(bank.detectors):
        out[:, c] = det.accepts(Z)
    return out


def indicator(bank: DetectorBank, model: MlpModel, x: np.ndarray) -> np.ndarray:
    """Fault indicator for one sample: per-class acceptance booleans."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ShapeError(f"expected a 1-D input vector, got shape {x.shape}")
    return indicator_batch(bank, model, x[None, :])[0]


def decide(I: np.ndarray, softmax: np.ndarray) -> Decision:
    """Three-case resolution of a fault indicator.

    Zero accepts -> unknown; one -> that class; several -> softmax argmax
    (ties broken toward the lowest class index).
    """
    I = np.asarray(I, dtype=bool)
    softmax = np.asarray(softmax, dtype=float)
    if I.shape != softmax.shape:
        raise ShapeError(f"indicator shape {I.shape} != softmax shape {softmax.shape}")
    trues = int(I.sum())
    if trues == 0:
        return Decision(tuple(bool(b) for b in I), OUTCOME_UNKNOWN, None)
    if trues == 1:
        return Decision(tuple(bool(b) for b in I), OUTCOME_KNOWN, int(np.argmax(I)))
    return Decision(
        tuple(bool(b) for b in I),
        OUTCOME_SOFTMAX,
        int(np.argmax(softmax)),
        softmax=tuple(float(p) for p in softmax),
    )


def detect_batch(bank: DetectorBank, model: MlpModel, X: np.ndarray) -> list[Decision]:
    """Online phase over a batch: indicators, then the three-case decision."""
    if bank.n_classes != model.n_classes:
        raise ConfigurationError(
            f"bank covers {bank.n_classes} classes but model predicts {model.n_classes}"
        )
    indicators = indicator_batch(bank, model, X)
    probs = predict_batch(model, X)
    return [decide(indicators[i], probs[i]) for i in range(len(indicators))]


def evaluate_detection(
    bank: DetectorBank,
    model: MlpModel,
    X: np.ndarray,
    truth: np.ndarray,
) -> DetectionMetrics:
    """Score decisions against ground truth (truth[i] = class id, or -1 for unknown).

    A truly-unknown sample is correct when flagged; a known sample is correct
    when assigned its true class (whether directly or softmax-resolved).
    """
    truth = np.asarray(truth, dtype=int)
    if len(truth) != len(X):
        raise ShapeError(f"{len(X)} samples but {len(truth)} truth entries")
    return metrics_from_decisions(detect_batch(bank, model, X), truth)


def metrics_from_decisions(decisions: list[Decision], truth: np.ndarray) -> DetectionMetrics:
    """Aggregate already-computed decisions against ground-truth class ids."""
    truth = np.asarray(truth, dtype=int)
    if len(truth) == 0:
        raise DataError("empty evaluation set")
    if len(truth) != len(decisions):
        raise ShapeError(f"{len(decisions)} decisions but {len(truth)} truth entries")

    histogram = {OUTCOME_UNKNOWN: 0, OUTCOME_KNOWN: 0, OUTCOME_SOFTMAX: 0}
    n_known = int(np.sum(truth >= 0))
    n_unknown = int(np.sum(truth < 0))
    flagged_unknowns = 0
    flagged_knowns = 0
    correct_known = 0
    correct_total = 0
    for dec, t in zip(decisions, truth):
        histogram[dec.outcome] += 1
        if t < 0:
            if dec.outcome == OUTCOME_UNKNOWN:
                flagged_unknowns += 1
                correct_total += 1
        else:
            if dec.outcome == OUTCOME_UNKNOWN:
                flagged_knowns += 1
            elif dec.class_id == t:
                correct_known += 1
                correct_total += 1

    def _rate(num: int, den: int) -> float | None:
        return num / den if den else None

    return DetectionMetrics(
        n_total=len(truth),
        n_known=n_known,
        n_unknown=n_unknown,
        unknown_recall=_rate(flagged_unknowns, n_unknown),
        false_alarm_rate=_rate(flagged_knowns, n_known),
        known_accuracy=_rate(correct_known, n_known),
        overall_accuracy=correct_total / len(truth),
        case_histogram=histogram,
    )


def bank_to_document(bank: DetectorBank) -> str:
    doc = {
        "format": _BANK_FORMAT,
        "version": 1,
        "embed_layer": bank.embed_layer,
        "class_labels": list(bank.class_labels),
        "detectors": [
            {
                "class_id": d.class_id,
                "mean": d.mean.tolist(),
                "std": d.std.tolist(),
                "projection": d.projection.tolist(),
                "thresholds": d.thresholds.tolist(),
                "r": d.r,
            }
            for d in bank.detectors
        ],
    }
    return json.dumps(doc, indent=1)


def bank_from_document(text: str) -> DetectorBank:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise RestoreError(f"detector bank document is not valid JSON: {exc}") from exc
    try:
        if doc["format"] != _BANK_FORMAT:
            raise RestoreError(f"unexpected document format {doc['format']!r}")
        detectors = []
        for entry in doc["detectors"]:
            det = ClassDetector(
                class_id=int(entry["class_id"]),
                mean=np.asarray(entry["mean"], dtype=float),
                std=np.asarray(entry["std"], dtype=float),
                projection=np.asarray(entry["projection"], dtype=float),
                thresholds=np.asarray(entry["thresholds"], dtype=float),
            )
            if det.projection.ndim != 2 or det.r != int(entry["r"]):
                raise RestoreError(f"class {det.class_id}: inconsistent projection")
            detectors.append(det)
        return DetectorBank(
            tuple(detectors),
            embed_layer=int(doc["embed_layer"]),
            class_labels=tuple(str(n) for n in doc["class_labels"]),
        )
    except (KeyError, TypeError, ValueError, ConfigurationError) as exc:
        raise RestoreError(f"detector bank document is malformed: {exc}") from exc


def save_bank(bank: DetectorBank, path) -> None:
    Path(path).write_text(bank_to_document(bank))


def load_bank(path) -> DetectorBank:
    p = Path(path)
    if not p.exists():
        raise RestoreError(f"detector bank file not found: {p}")
    return bank_from_document(p.read_text())
