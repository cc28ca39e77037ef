"""Multinomial logistic head training with Adam.

One trainer core serves both the CNN head fine-tuner and the classical
feature baselines, so the two paths are update-for-update identical.  The
head is a single dense layer trained with softmax cross-entropy (mean
reduction) and Adam (lr 0.01, beta1 0.9, beta2 0.999, eps 1e-8, batch 100
by default).  All math runs in float64 and every random choice flows from
one seed, so training is bitwise reproducible.

Weights are handled in augmented form: an (d+1, k) matrix whose last row is
the bias.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UsageError
from .model_io import ModelContainer

DEFAULT_BATCH_SIZE = 100
DEFAULT_LR = 0.01
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
DEFAULT_SEED = 20240


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _augment(x: np.ndarray) -> np.ndarray:
    return np.hstack([x, np.ones((x.shape[0], 1), dtype=x.dtype)])


def head_loss(weights: np.ndarray, features: np.ndarray, labels: np.ndarray) -> float:
    """Mean softmax cross-entropy of an augmented-weight head on a batch."""
    xa = _augment(np.asarray(features, dtype=np.float64))
    logits = xa @ weights
    z = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    picked = z[np.arange(len(labels)), labels]
    return float(np.mean(log_norm - picked))


def head_gradient(weights: np.ndarray, features: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Gradient of head_loss w.r.t. the augmented weights (mean reduction)."""
    if len(labels) == 0:
        raise UsageError("gradient of an empty batch is undefined")
    xa = _augment(np.asarray(features, dtype=np.float64))
    probs = _softmax_rows(xa @ weights)
    probs[np.arange(len(labels)), labels] -= 1.0
    return xa.T @ probs / len(labels)


@dataclass(frozen=True)
class TrainResult:
    weights: np.ndarray  # (d, k) float64
    bias: np.ndarray  # (k,) float64
    epoch_losses: tuple[float, ...]  # full-batch loss after each epoch
    accuracy: float  # full-batch training accuracy of the final weights


def train_softmax_head(
    features: np.ndarray,
    labels: np.ndarray,
    n_classes: int,
    *,
    epochs: int,
    batch_size: int = DEFAULT_BATCH_SIZE,
    lr: float = DEFAULT_LR,
    seed: int = DEFAULT_SEED,
    init_weights: np.ndarray | None = None,
    init_bias: np.ndarray | None = None,
) -> TrainResult:
    """Run the shared Adam loop over (features, labels).

    Shuffling is seeded per run; identical inputs give identical outputs.
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if x.ndim != 2:
        raise UsageError(f"features must be 2-D, got shape {x.shape}")
    if x.shape[0] == 0:
        raise UsageError("training set is empty")
    if y.shape != (x.shape[0],):
        raise UsageError("labels must align with feature rows")
    if np.any(y < 0) or np.any(y >= n_classes):
        raise UsageError(f"labels must lie in [0, {n_classes})")
    if epochs < 0 or batch_size < 1:
        raise UsageError("epochs must be >= 0 and batch_size >= 1")

    d = x.shape[1]
    w = np.zeros((d + 1, n_classes), dtype=np.float64)
    if init_weights is not None:
        w[:d] = np.asarray(init_weights, dtype=np.float64)
    if init_bias is not None:
        w[d] = np.asarray(init_bias, dtype=np.float64)

    rng = np.random.default_rng(seed)
    m = np.zeros_like(w)
    v = np.zeros_like(w)
    t = 0
    losses = []
    for _ in range(epochs):
        perm = rng.permutation(x.shape[0])
        for start in range(0, x.shape[0], batch_size):
            idx = perm[start : start + batch_size]
            g = head_gradient(w, x[idx], y[idx])
            t += 1
            m = ADAM_BETA1 * m + (1 - ADAM_BETA1) * g
            v = ADAM_BETA2 * v + (1 - ADAM_BETA2) * g * g
            m_hat = m / (1 - ADAM_BETA1**t)
            v_hat = v / (1 - ADAM_BETA2**t)
            w = w - lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
        losses.append(head_loss(w, x, y))

    logits = _augment(x) @ w
    accuracy = float(np.mean(np.argmax(logits, axis=1) == y))
    return TrainResult(weights=w[:d], bias=w[d], epoch_losses=tuple(losses), accuracy=accuracy)


def finetune_head(
    model: ModelContainer,
    features: np.ndarray,
    labels,
    *,
    epochs: int,
    batch_size: int = DEFAULT_BATCH_SIZE,
    lr: float = DEFAULT_LR,
    seed: int = DEFAULT_SEED,
) -> ModelContainer:
    """Retrain only the final dense layer of a container.

    `features` are penultimate-layer activations; `labels` are label names
    from the container's label list (or integer indices).  Zero epochs
    returns a container with identical bytes.
    """
    y = label_indices(labels, model.labels)
    w0, b0 = model.head_weights()
    if np.asarray(features).ndim != 2 or np.asarray(features).shape[1] != w0.shape[0]:
        raise UsageError(
            f"features must be (n, {w0.shape[0]}) penultimate activations"
        )
    result = train_softmax_head(
        features,
        y,
        n_classes=len(model.labels),
        epochs=epochs,
        batch_size=batch_size,
        lr=lr,
        seed=seed,
        init_weights=w0,
        init_bias=b0,
    )
    return model.with_head(result.weights.astype(np.float32), result.bias.astype(np.float32))


def label_indices(labels, label_set) -> np.ndarray:
    """Map label names (or pass through indices) onto positions in label_set."""
    out = []
    index = {name: i for i, name in enumerate(label_set)}
    for item in labels:
        if isinstance(item, (int, np.integer)):
            if not 0 <= int(item) < len(label_set):
                raise UsageError(f"label index {item} outside the {len(label_set)}-class set")
            out.append(int(item))
        else:
            if item not in index:
                raise UsageError(f"label {item!r} outside the class set {tuple(label_set)}")
            out.append(index[item])
    if not out:
        raise UsageError("training set is empty")
    return np.asarray(out, dtype=np.int64)
