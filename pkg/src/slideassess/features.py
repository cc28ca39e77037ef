"""Classical texture baselines: HOG and per-channel uniform LBP.

HOG follows the canonical detector configuration: 9 unsigned orientation
bins over [0, 180), 8x8-pixel cells, 2x2-cell blocks at one-cell stride,
L2-Hys block normalization with a 0.2 clip.  Gradients come from central
differences (one-sided at the borders) on the channel-sum grayscale image
(integer-exact, so a constant brightness shift cannot perturb them), with
hard assignment of each magnitude to its orientation bin.

Color LBP computes the uniform LBP(8,1) code of every interior pixel using
the plain 3x3 square neighborhood (no interpolation, so any strictly
increasing per-channel intensity remap leaves the codes unchanged),
histograms the codes into 59 bins per RGB channel, and L1-normalizes each
channel histogram; the concatenated descriptor has 177 values.
"""

from __future__ import annotations

import numpy as np

from .engine import TilePrediction, prediction_from_probabilities, resize_nearest, softmax
from .errors import UsageError
from .labels import LABELS
from .model_io import LayerSpec, ModelContainer
from .training import (
    DEFAULT_BATCH_SIZE,
    DEFAULT_LR,
    DEFAULT_SEED,
    label_indices,
    train_softmax_head,
)

HOG_ORIENTATIONS = 9
HOG_CELL = 8
HOG_BLOCK = 2  # cells per block side
HOG_CLIP = 0.2
_HOG_EPS = 1e-12

LBP_POINTS = 8
LBP_BINS = 59  # 58 uniform patterns + 1 catch-all
COLOR_LBP_LENGTH = 3 * LBP_BINS

FEATURE_ENGINES = ("hog", "color-lbp")


def hog_length(side: int, cell: int = HOG_CELL, block: int = HOG_BLOCK, bins: int = HOG_ORIENTATIONS) -> int:
    """Descriptor length for a square patch; pure function of the config."""
    cells = side // cell
    blocks = cells - block + 1
    return blocks * blocks * block * block * bins


def hog_cell_histograms(gray: np.ndarray) -> np.ndarray:
    """Per-cell orientation histograms, shape (cells, cells, bins).

    Votes are gradient magnitudes assigned to the bin containing the
    unsigned gradient direction.
    """
    side = gray.shape[0]
    cells = side // HOG_CELL
    gy, gx = np.gradient(gray.astype(np.float64))
    mag = np.hypot(gx, gy)
    ang = np.degrees(np.arctan2(gy, gx)) % 180.0
    bins = np.minimum((ang / (180.0 / HOG_ORIENTATIONS)).astype(np.int64), HOG_ORIENTATIONS - 1)
    hist = np.zeros((cells, cells, HOG_ORIENTATIONS), dtype=np.float64)
    for b in range(HOG_ORIENTATIONS):
        votes = np.where(bins == b, mag, 0.0)
        hist[:, :, b] = votes.reshape(cells, HOG_CELL, cells, HOG_CELL).sum(axis=(1, 3))
    return hist


def hog_features(pixels: np.ndarray) -> np.ndarray:
    """Block-normalized HOG descriptor of a square RGB patch.

    The patch side must be divisible by the cell size.  Every block
    sub-vector has L2 norm <= 1 after L2-Hys.
    """
    _check_patch(pixels)
    side = pixels.shape[0]
    if side % HOG_CELL != 0:
        raise UsageError(f"patch side {side} not divisible by cell size {HOG_CELL}")
    gray = pixels.astype(np.float64).sum(axis=2)
    hist = hog_cell_histograms(gray)
    cells = hist.shape[0]
    if cells < HOG_BLOCK:
        raise UsageError(f"patch too small for {HOG_BLOCK}x{HOG_BLOCK}-cell blocks")
    out = []
    for by in range(cells - HOG_BLOCK + 1):
        for bx in range(cells - HOG_BLOCK + 1):
            v = hist[by : by + HOG_BLOCK, bx : bx + HOG_BLOCK].ravel()
            v = v / np.sqrt(np.sum(v * v) + _HOG_EPS)
            v = np.minimum(v, HOG_CLIP)
            v = v / np.sqrt(np.sum(v * v) + _HOG_EPS)
            out.append(v)
    return np.concatenate(out)


def _transitions(code: int) -> int:
    rotated = ((code >> 1) | ((code & 1) << (LBP_POINTS - 1))) & 0xFF
    return bin(code ^ rotated).count("1")


_UNIFORM_CODES = tuple(c for c in range(256) if _transitions(c) <= 2)
_CODE_TO_BIN = np.full(256, LBP_BINS - 1, dtype=np.int64)
for _i, _c in enumerate(_UNIFORM_CODES):
    _CODE_TO_BIN[_c] = _i
assert len(_UNIFORM_CODES) == LBP_BINS - 1

# neighbor offsets (dy, dx), counter-clockwise from east; bit k has weight 2**k
_LBP_OFFSETS = ((0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1), (1, 0), (1, 1))


def lbp_codes(channel: np.ndarray) -> np.ndarray:
    """LBP(8,1) code of every interior pixel of a single channel.

    Bit k is set when the k-th square neighbor is >= the center value.
    """
    if channel.shape[0] < 3 or channel.shape[1] < 3:
        raise UsageError(f"LBP needs at least a 3x3 patch, got {channel.shape}")
    center = channel[1:-1, 1:-1]
    h, w = center.shape
    codes = np.zeros((h, w), dtype=np.uint8)
    for k, (dy, dx) in enumerate(_LBP_OFFSETS):
        neighbor = channel[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w]
        codes |= (neighbor >= center).astype(np.uint8) << k
    return codes


def color_lbp_features(pixels: np.ndarray) -> np.ndarray:
    """Concatenated uniform-LBP histograms of the R, G, B channels (177 values)."""
    _check_patch(pixels, square=False)
    out = []
    for c in range(3):
        codes = lbp_codes(pixels[:, :, c])
        hist = np.bincount(_CODE_TO_BIN[codes.ravel()], minlength=LBP_BINS).astype(np.float64)
        out.append(hist / hist.sum())
    feature = np.concatenate(out)
    assert feature.shape[0] == COLOR_LBP_LENGTH
    return feature


def extract_features(engine: str, pixels: np.ndarray) -> np.ndarray:
    if engine == "hog":
        return hog_features(pixels)
    if engine == "color-lbp":
        return color_lbp_features(pixels)
    raise UsageError(f"unknown feature engine {engine!r}; expected one of {FEATURE_ENGINES}")


def _check_patch(pixels: np.ndarray, square: bool = True) -> None:
    if pixels.ndim != 3 or pixels.shape[2] != 3:
        raise UsageError(f"expected an (h, w, 3) patch, got shape {pixels.shape}")
    if square and pixels.shape[0] != pixels.shape[1]:
        raise UsageError(f"expected a square patch, got {pixels.shape[0]}x{pixels.shape[1]}")


def train_linear(
    features: np.ndarray,
    labels,
    *,
    engine: str,
    patch_size: int,
    epochs: int,
    batch_size: int = DEFAULT_BATCH_SIZE,
    lr: float = DEFAULT_LR,
    seed: int = DEFAULT_SEED,
) -> ModelContainer:
    """Train a linear classifier on feature vectors, packaged as a container.

    Shares the optimizer core with the CNN head fine-tuner, so identical
    inputs produce identical weights.
    """
    if engine not in FEATURE_ENGINES:
        raise UsageError(f"unknown feature engine {engine!r}")
    x = np.asarray(features, dtype=np.float64)
    y = label_indices(labels, LABELS)
    result = train_softmax_head(
        x, y, n_classes=len(LABELS), epochs=epochs, batch_size=batch_size, lr=lr, seed=seed
    )
    layers = (
        LayerSpec(kind="dense", in_channels=x.shape[1], out_channels=len(LABELS)),
        LayerSpec(kind="softmax"),
    )
    model = ModelContainer(
        name=engine,
        labels=LABELS,
        input_size=patch_size,
        scale=1.0,
        shift=0.0,
        layers=layers,
        tensors=((result.weights.astype(np.float32), result.bias.astype(np.float32)), ()),
        engine=engine,
        extra=(("feature_dim", int(x.shape[1])), ("patch_size", int(patch_size))),
    )
    model.validate()
    return model


def classify_linear(model: ModelContainer, features: np.ndarray, row: int = 0, col: int = 0) -> TilePrediction:
    """Softmax prediction of a linear feature model on one feature vector."""
    w, b = model.head_weights()
    x = np.asarray(features, dtype=np.float64)
    if x.shape != (w.shape[0],):
        raise UsageError(f"feature vector has length {x.shape}, model expects ({w.shape[0]},)")
    probs = softmax(x @ w.astype(np.float64) + b.astype(np.float64))
    return prediction_from_probabilities(probs, model.labels, row=row, col=col)


def classify_feature_patch(model: ModelContainer, pixels: np.ndarray, row: int = 0, col: int = 0) -> TilePrediction:
    """Resample a patch to the model's training size, extract, and classify."""
    resized = resize_nearest(pixels, model.input_size)
    return classify_linear(model, extract_features(model.engine, resized), row=row, col=col)
