"""Deterministic feed-forward network engine.

Dense ReLU MLP with a softmax head: He-uniform initialization, exact
backprop gradients for mean categorical cross-entropy, Adam training with
selective layer freezing, output-layer expansion for newly discovered
classes, and a text persistence format.

Everything here is a pure function of its inputs and seeds; trained models
are immutable values, so mutation-style operations (train, expand_output)
return new models.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DataError, RestoreError, ShapeError

# Paper protocol: three hidden layers of 150/100/50 ReLU units.
DEFAULT_HIDDEN_SIZES = (150, 100, 50)

_MODEL_FORMAT = "weldwatch-mlp"
_MODEL_VERSION = 1


@dataclass(frozen=True)
class MlpModel:
    """Layer sizes plus per-layer parameters.

    weights[l] has shape (layer_sizes[l+1], layer_sizes[l]) - rows are output
    units; biases[l] has length layer_sizes[l+1]. Hidden activations are ReLU,
    the output is a softmax over layer_sizes[-1] classes.
    """

    layer_sizes: tuple[int, ...]
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]
    seed: int
    activation: str = "relu"
    output: str = "softmax"

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_classes(self) -> int:
        return self.layer_sizes[-1]

    @property
    def n_hidden(self) -> int:
        return len(self.layer_sizes) - 2

    @property
    def n_param_layers(self) -> int:
        return len(self.weights)


@dataclass(frozen=True)
class FreezeSpec:
    """Parameter layers whose weights/biases are immutable during training.

    Index 0 is the input->first-hidden layer; the output layer is index
    n_param_layers - 1.
    """

    frozen_layer_indices: frozenset[int] = frozenset()

    @classmethod
    def first_hidden(cls, n: int = 2) -> "FreezeSpec":
        """Freeze the first `n` hidden layers (the continual-learning default)."""
        return cls(frozenset(range(n)))

    def validate(self, n_param_layers: int) -> None:
        for idx in self.frozen_layer_indices:
            if not 0 <= idx < n_param_layers:
                raise ConfigurationError(
                    f"frozen layer index {idx} out of range for {n_param_layers} layers"
                )
        if len(self.frozen_layer_indices) == n_param_layers:
            raise ConfigurationError("all layers frozen: nothing to train")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    epochs: int = 200
    batch_size: int = 16
    shuffle_seed: int = 0

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ConfigurationError("learning_rate must be > 0")
        if not 0 < self.adam_beta1 < 1 or not 0 < self.adam_beta2 < 1:
            raise ConfigurationError("Adam betas must lie strictly in (0, 1)")
        if self.adam_epsilon <= 0:
            raise ConfigurationError("adam_epsilon must be > 0")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigurationError("epochs and batch_size must be positive")


@dataclass(frozen=True)
class ForwardTrace:
    """Per-layer pre/post activations for one sample.

    post_activations[l] is h^(l+1): ReLU outputs for hidden layers, softmax
    probabilities for the final layer.
    """

    pre_activations: tuple[np.ndarray, ...]
    post_activations: tuple[np.ndarray, ...]
    logits: np.ndarray
    probabilities: np.ndarray


@dataclass(frozen=True)
class TrainResult:
    model: MlpModel
    epoch_losses: tuple[float, ...]


def init_mlp(layer_sizes, seed: int) -> MlpModel:
    """He-uniform initialized model: W ~ U(-sqrt(6/fan_in), +sqrt(6/fan_in)), b = 0.

    Deterministic: the same (layer_sizes, seed) reproduces identical
    parameters bit for bit.
    """
    sizes = tuple(int(s) for s in layer_sizes)
    if len(sizes) < 2:
        raise ConfigurationError("layer_sizes needs at least input and output sizes")
    if any(s < 1 for s in sizes):
        raise ConfigurationError(f"layer sizes must be positive, got {sizes}")

    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpModel(sizes, tuple(weights), tuple(biases), seed=int(seed))


def softmax_rows(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max-subtraction, safe for extreme logits."""
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _check_batch(model: MlpModel, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.input_dim:
        raise ShapeError(
            f"expected inputs of shape (n, {model.input_dim}), got {X.shape}"
        )
    if not np.all(np.isfinite(X)):
        raise DataError("non-finite value in input features")
    return X


def forward_batch(model: MlpModel, X: np.ndarray):
    """Forward pass over a batch. Returns (pre, post) lists of (n, width) arrays."""
    X = _check_batch(model, X)
    pre: list[np.ndarray] = []
    post: list[np.ndarray] = []
    h = X
    last = model.n_param_layers - 1
    for l, (W, b) in enumerate(zip(model.weights, model.biases)):
        z = h @ W.T + b
        pre.append(z)
        h = np.maximum(z, 0.0) if l < last else softmax_rows(z)
        post.append(h)
    return pre, post


def forward(model: MlpModel, x: np.ndarray) -> ForwardTrace:
    """Single-sample forward pass with the full activation trace."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ShapeError(f"expected a 1-D input vector, got shape {x.shape}")
    pre, post = forward_batch(model, x[None, :])
    pre1 = tuple(z[0] for z in pre)
    post1 = tuple(h[0] for h in post)
    return ForwardTrace(pre1, post1, logits=pre1[-1], probabilities=post1[-1])


def predict_batch(model: MlpModel, X: np.ndarray) -> np.ndarray:
    """Softmax probabilities for a batch, shape (n, C)."""
    _, post = forward_batch(model, X)
    return post[-1]


def embed_batch(model: MlpModel, X: np.ndarray, layer: int) -> np.ndarray:
    """Post-activation of hidden layer `layer` (1-indexed) for a batch."""
    if not 1 <= layer <= model.n_hidden:
        raise ConfigurationError(
            f"embedding layer must be in [1, {model.n_hidden}], got {layer}"
        )
    X = _check_batch(model, X)
    h = X
    for l in range(layer):
        h = np.maximum(h @ model.weights[l].T + model.biases[l], 0.0)
    return h


def embed(model: MlpModel, x: np.ndarray, layer: int) -> np.ndarray:
    """Hidden-layer embedding z(x) of a single sample."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ShapeError(f"expected a 1-D input vector, got shape {x.shape}")
    return embed_batch(model, x[None, :], layer)[0]


def _check_labels(model: MlpModel, y: np.ndarray) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 1:
        raise ShapeError(f"expected a 1-D label vector, got shape {y.shape}")
    if y.size and (y.min() < 0 or y.max() >= model.n_classes):
        raise DataError(
            f"label out of range: got {int(y.min())}..{int(y.max())} "
            f"for {model.n_classes} classes"
        )
    return y.astype(int)


def cross_entropy(model: MlpModel, X: np.ndarray, y: np.ndarray) -> float:
    """Mean categorical cross-entropy of the batch."""
    y = _check_labels(model, y)
    probs = predict_batch(model, X)
    picked = probs[np.arange(len(y)), y]
    return float(-np.mean(np.log(np.maximum(picked, 1e-300))))


def gradients(model: MlpModel, X: np.ndarray, y: np.ndarray):
    """Exact analytic gradient of mean cross-entropy over the batch.

    Returns (weight_grads, bias_grads, loss). Freezing is not applied here;
    `train` decides which layers get updates.
    """
    y = _check_labels(model, y)
    X = _check_batch(model, X)
    if len(X) != len(y):
        raise ShapeError(f"{len(X)} samples but {len(y)} labels")
    if len(X) == 0:
        raise DataError("empty batch")

    pre, post = forward_batch(model, X)
    n = len(X)
    probs = post[-1]
    loss = float(-np.mean(np.log(np.maximum(probs[np.arange(n), y], 1e-300))))

    delta = probs.copy()
    delta[np.arange(n), y] -= 1.0
    delta /= n

    L = model.n_param_layers
    dW: list[np.ndarray] = [None] * L  # type: ignore[list-item]
    db: list[np.ndarray] = [None] * L  # type: ignore[list-item]
    for l in range(L - 1, -1, -1):
        h_prev = X if l == 0 else post[l - 1]
        dW[l] = delta.T @ h_prev
        db[l] = delta.sum(axis=0)
        if l > 0:
            delta = (delta @ model.weights[l]) * (pre[l - 1] > 0)
    return dW, db, loss


def train(
    model: MlpModel,
    X: np.ndarray,
    y: np.ndarray,
    cfg: TrainConfig | None = None,
    freeze: FreezeSpec = FreezeSpec(),
) -> TrainResult:
    """Adam mini-batch training of the non-frozen layers.

    Shuffling is deterministic under cfg.shuffle_seed; frozen layers come out
    bit-identical (they receive neither gradients nor moment state). The
    returned TrainResult carries the mean per-epoch loss trace.
    """
    cfg = cfg or TrainConfig()
    X = _check_batch(model, X)
    y = _check_labels(model, y)
    if len(X) == 0:
        raise DataError("empty training set")
    if len(X) != len(y):
        raise ShapeError(f"{len(X)} samples but {len(y)} labels")
    L = model.n_param_layers
    freeze.validate(L)
    trainable = [l for l in range(L) if l not in freeze.frozen_layer_indices]

    W = [w.copy() for w in model.weights]
    b = [v.copy() for v in model.biases]
    mW = {l: np.zeros_like(W[l]) for l in trainable}
    vW = {l: np.zeros_like(W[l]) for l in trainable}
    mb = {l: np.zeros_like(b[l]) for l in trainable}
    vb = {l: np.zeros_like(b[l]) for l in trainable}

    rng = np.random.default_rng(cfg.shuffle_seed)
    n = len(X)
    b1, b2, eps, lr = cfg.adam_beta1, cfg.adam_beta2, cfg.adam_epsilon, cfg.learning_rate
    last = L - 1
    step = 0
    losses: list[float] = []

    for _ in range(cfg.epochs):
        perm = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            Xb, yb = X[idx], y[idx]
            nb = len(idx)

            # forward
            pre: list[np.ndarray] = []
            post: list[np.ndarray] = []
            h = Xb
            for l in range(L):
                z = h @ W[l].T + b[l]
                pre.append(z)
                h = np.maximum(z, 0.0) if l < last else softmax_rows(z)
                post.append(h)
            probs = post[-1]
            epoch_loss += float(
                -np.sum(np.log(np.maximum(probs[np.arange(nb), yb], 1e-300)))
            )

            # backward
            delta = probs.copy()
            delta[np.arange(nb), yb] -= 1.0
            delta /= nb
            step += 1
            corr1 = 1.0 - b1**step
            corr2 = 1.0 - b2**step
            for l in range(L - 1, -1, -1):
                if l in mW:
                    h_prev = Xb if l == 0 else post[l - 1]
                    gW = delta.T @ h_prev
                    gb = delta.sum(axis=0)
                if l > 0:
                    delta = (delta @ W[l]) * (pre[l - 1] > 0)
                if l not in mW:
                    continue
                mW[l] = b1 * mW[l] + (1 - b1) * gW
                vW[l] = b2 * vW[l] + (1 - b2) * gW**2
                mb[l] = b1 * mb[l] + (1 - b1) * gb
                vb[l] = b2 * vb[l] + (1 - b2) * gb**2
                W[l] -= lr * (mW[l] / corr1) / (np.sqrt(vW[l] / corr2) + eps)
                b[l] -= lr * (mb[l] / corr1) / (np.sqrt(vb[l] / corr2) + eps)
        losses.append(epoch_loss / n)

    new_model = replace(model, weights=tuple(W), biases=tuple(b))
    return TrainResult(model=new_model, epoch_losses=tuple(losses))


def expand_output(model: MlpModel, k: int, seed: int) -> MlpModel:
    """Add k output rows (He-uniform) and k zero biases; old parameters kept bitwise."""
    if k < 0:
        raise ConfigurationError(f"cannot expand output by {k} classes")
    if k == 0:
        return model
    fan_in = model.layer_sizes[-2]
    rng = np.random.default_rng(seed)
    bound = np.sqrt(6.0 / fan_in)
    new_rows = rng.uniform(-bound, bound, size=(k, fan_in))
    W_out = np.vstack([model.weights[-1], new_rows])
    b_out = np.concatenate([model.biases[-1], np.zeros(k)])
    return replace(
        model,
        layer_sizes=model.layer_sizes[:-1] + (model.n_classes + k,),
        weights=model.weights[:-1] + (W_out,),
        biases=model.biases[:-1] + (b_out,),
    )


def model_to_document(model: MlpModel) -> str:
    """Self-describing JSON text; floats round-trip bit-exactly."""
    doc = {
        "format": _MODEL_FORMAT,
        "version": _MODEL_VERSION,
        "layer_sizes": list(model.layer_sizes),
        "seed": model.seed,
        "activation": model.activation,
        "output": model.output,
        "layers": [
            {"weights": w.tolist(), "bias": b.tolist()}
            for w, b in zip(model.weights, model.biases)
        ],
    }
    return json.dumps(doc, indent=1)


def model_from_document(text: str) -> MlpModel:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise RestoreError(f"model document is not valid JSON: {exc}") from exc
    try:
        if doc["format"] != _MODEL_FORMAT:
            raise RestoreError(f"unexpected document format {doc['format']!r}")
        sizes = tuple(int(s) for s in doc["layer_sizes"])
        weights = tuple(np.asarray(l["weights"], dtype=float) for l in doc["layers"])
        biases = tuple(np.asarray(l["bias"], dtype=float) for l in doc["layers"])
        model = MlpModel(
            sizes, weights, biases,
            seed=int(doc["seed"]),
            activation=str(doc.get("activation", "relu")),
            output=str(doc.get("output", "softmax")),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise RestoreError(f"model document is malformed: {exc}") from exc
    _validate_shapes(model)
    return model


def _validate_shapes(model: MlpModel) -> None:
    sizes = model.layer_sizes
    if len(model.weights) != len(sizes) - 1 or len(model.biases) != len(sizes) - 1:
        raise RestoreError("layer count does not match layer_sizes")
    for l, (w, b) in enumerate(zip(model.weights, model.biases)):
        if w.shape != (sizes[l + 1], sizes[l]) or b.shape != (sizes[l + 1],):
            raise RestoreError(
                f"layer {l}: expected shapes {(sizes[l + 1], sizes[l])}/"
                f"{(sizes[l + 1],)}, got {w.shape}/{b.shape}"
            )
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise RestoreError(f"layer {l}: non-finite parameter value")


def save_model(model: MlpModel, path) -> None:
    Path(path).write_text(model_to_document(model))


def load_model(path) -> MlpModel:
    p = Path(path)
    if not p.exists():
        raise RestoreError(f"model file not found: {p}")
    return model_from_document(p.read_text())
