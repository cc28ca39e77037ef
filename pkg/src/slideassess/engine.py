"""Forward-pass engine for small depthwise-separable CNN classifiers.

Feature maps are float32 arrays of shape (height, width, channels);
accumulation happens in float32 to match the stored weight precision.
Spatial convolutions use zero same-padding, so the output side is
ceil(input_side / stride).  A depthwise-separable convolution (per-channel
spatial filter followed by a 1x1 cross-channel mix) equals a standard
convolution whose kernel is the rank-1 product of the two factors.

All operations here are pure; a loaded model can be shared across threads
and classified concurrently with bitwise-identical results.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from .model_io import ModelContainer
    from .slide_io import Patch


@dataclass(frozen=True)
class TilePrediction:
    """Top-k outcome of classifying one tile.

    `probabilities` is the full softmax vector over the model's label list;
    `top1`/`top2` are the two highest-probability labels with ties broken by
    ascending label index.
    """

    row: int
    col: int
    probabilities: np.ndarray
    top1: str
    top2: str

    def __post_init__(self):
        p = self.probabilities
        if p.ndim != 1:
            raise ValueError("probabilities must be a flat vector")
        if np.any(p < -1e-12) or np.any(p > 1 + 1e-12):
            raise ValueError("probabilities outside [0, 1]")
        if abs(float(p.sum()) - 1.0) > 1e-6:
            raise ValueError("probabilities do not sum to 1")


def same_pad(d_f: int, kernel: int, stride: int) -> tuple[int, int, int]:
    """Zero same-padding amounts (before, after) and the output side."""
    d_g = -(-d_f // stride)
    total = max((d_g - 1) * stride + kernel - d_f, 0)
    before = total // 2
    return before, total - before, d_g


def _check_weights(w: np.ndarray) -> None:
    if not np.all(np.isfinite(w)):
        raise ValueError("non-finite values in weight tensor")


def _tap_views(x_pad: np.ndarray, kernel: int, stride: int, d_g: int):
    for ky in range(kernel):
        rows = x_pad[ky::stride][:d_g]
        for kx in range(kernel):
            yield ky, kx, rows[:, kx::stride][:, :d_g]


def standard_conv(x: np.ndarray, weights: np.ndarray, stride: int = 1) -> np.ndarray:
    """Dense 2-D convolution with zero same-padding.

    x: (d_f, d_f, m) float32; weights: (k, k, m, n) in [ky][kx][in][out]
    order.  Returns (ceil(d_f/stride), ceil(d_f/stride), n).
    """
    k = weights.shape[0]
    if weights.ndim != 4 or weights.shape[1] != k:
        raise ValueError(f"expected (k, k, m, n) weights, got {weights.shape}")
    if x.shape[2] != weights.shape[2]:
        raise ValueError(f"channel mismatch: input has {x.shape[2]}, kernel expects {weights.shape[2]}")
    _check_weights(weights)
    before, after, d_g = same_pad(x.shape[0], k, stride)
    x_pad = np.pad(x, ((before, after), (before, after), (0, 0)))
    out = np.zeros((d_g, d_g, weights.shape[3]), dtype=np.float32)
    for ky, kx, tap in _tap_views(x_pad, k, stride, d_g):
        out += tap @ weights[ky, kx]
    return out


def depthwise_conv(x: np.ndarray, weights: np.ndarray, stride: int = 1) -> np.ndarray:
    """Per-channel spatial convolution; weights: (k, k, m)."""
    k = weights.shape[0]
    if weights.ndim != 3 or weights.shape[1] != k:
        raise ValueError(f"expected (k, k, m) depthwise weights, got {weights.shape}")
    if x.shape[2] != weights.shape[2]:
        raise ValueError(f"channel mismatch: input has {x.shape[2]}, kernel expects {weights.shape[2]}")
    _check_weights(weights)
    before, after, d_g = same_pad(x.shape[0], k, stride)
    x_pad = np.pad(x, ((before, after), (before, after), (0, 0)))
    out = np.zeros((d_g, d_g, weights.shape[2]), dtype=np.float32)
    for ky, kx, tap in _tap_views(x_pad, k, stride, d_g):
        out += tap * weights[ky, kx]
    return out


def pointwise_conv(x: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """1x1 cross-channel convolution; weights: (m, n)."""
    if weights.ndim != 2:
        raise ValueError(f"expected (m, n) pointwise weights, got {weights.shape}")
    if x.shape[2] != weights.shape[0]:
        raise ValueError(f"channel mismatch: input has {x.shape[2]}, kernel expects {weights.shape[0]}")
    _check_weights(weights)
    return x @ weights


def depthwise_separable_conv(
    x: np.ndarray, dw_weights: np.ndarray, pw_weights: np.ndarray, stride: int = 1
) -> np.ndarray:
    """Depthwise then pointwise stage; stride applies to the depthwise stage.

    Equals standard_conv on the factored kernel
    w[ky, kx, m, n] = dw[ky, kx, m] * pw[m, n] up to float32 rounding.
    """
    return pointwise_conv(depthwise_conv(x, dw_weights, stride=stride), pw_weights)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def global_average_pool(x: np.ndarray) -> np.ndarray:
    """Collapse (h, w, c) to a per-channel mean vector of length c."""
    return x.mean(axis=(0, 1))


def softmax(logits: np.ndarray) -> np.ndarray:
    """Numerically stable softmax computed in float64."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def top2(probabilities: np.ndarray) -> tuple[int, int]:
    """Indices of the two largest entries, ties broken by ascending index."""
    order = np.lexsort((np.arange(probabilities.shape[0]), -probabilities))
    return int(order[0]), int(order[1])


def resize_nearest(pixels: np.ndarray, side: int) -> np.ndarray:
    """Deterministic nearest-neighbor resample of a square uint8 patch."""
    src = pixels.shape[0]
    if src == side:
        return pixels
    idx = ((2 * np.arange(side) + 1) * src) // (2 * side)
    return pixels[np.ix_(idx, idx)]


def prepare_patch(pixels: np.ndarray, input_size: int, scale: float, shift: float) -> np.ndarray:
    """Resample a uint8 patch to the model input size and normalize it."""
    if pixels.ndim != 3 or pixels.shape[0] != pixels.shape[1] or pixels.shape[2] != 3:
        raise ValueError(f"expected square (s, s, 3) patch, got {pixels.shape}")
    resized = resize_nearest(pixels, input_size)
    return (resized.astype(np.float32) * np.float32(scale)) + np.float32(shift)


def forward(model: "ModelContainer", fmap: np.ndarray):
    """Run the container's layer list over a prepared feature map.

    Returns whatever the final layer produces: a feature map for purely
    convolutional stacks, a probability vector for full classifiers.
    """
    out = fmap
    for spec, tensors in zip(model.layers, model.tensors):
        out = _apply_layer(spec, tensors, out)
    return out


def penultimate_features(model: "ModelContainer", fmap: np.ndarray) -> np.ndarray:
    """Activations entering the final dense head (the fine-tuning features)."""
    head = model.head_index()
    out = fmap
    for spec, tensors in zip(model.layers[:head], model.tensors[:head]):
        out = _apply_layer(spec, tensors, out)
    return np.asarray(out)


def _apply_layer(spec, tensors, x):
    kind = spec.kind
    if kind == "standard":
        x = standard_conv(x, tensors[0], stride=spec.stride)
    elif kind == "depthwise":
        x = depthwise_conv(x, tensors[0], stride=spec.stride)
    elif kind == "pointwise":
        x = pointwise_conv(x, tensors[0])
    elif kind == "dense":
        x = x @ tensors[0] + tensors[1]
    elif kind == "global-average-pool":
        x = global_average_pool(x)
    elif kind == "softmax":
        return softmax(x)
    else:  # pragma: no cover - descriptors are validated at load time
        raise ValueError(f"unknown layer kind {kind!r}")
    if spec.activation == "relu":
        x = relu(x)
    return x


def predict_probabilities(model: "ModelContainer", pixels: np.ndarray) -> np.ndarray:
    """Full classifier forward pass on one uint8 patch."""
    fmap = prepare_patch(pixels, model.input_size, model.scale, model.shift)
    probs = forward(model, fmap)
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 1 or probs.shape[0] != len(model.labels):
        raise ValueError("model does not end in a probability vector over its labels")
    return probs


def prediction_from_probabilities(
    probabilities: np.ndarray, labels, row: int = 0, col: int = 0
) -> TilePrediction:
    i1, i2 = top2(probabilities)
    return TilePrediction(
        row=row, col=col, probabilities=probabilities, top1=labels[i1], top2=labels[i2]
    )


def classify_patch(model: "ModelContainer", patch: "Patch") -> TilePrediction:
    """Classify one tile; deterministic for a fixed model and patch."""
    probs = predict_probabilities(model, patch.pixels)
    return prediction_from_probabilities(probs, model.labels, row=patch.row, col=patch.col)
