"""Per-tile information density scores and heat-map rendering.

Each label carries a rank value x; its intensity score is the parabola
S = -x^2 + 256, clamped by construction to [0, 255].  A tile's density is
the weighted combination of its top-2 labels' scores,
I = 0.8 * S(top1) + 0.2 * S(top2) with the default weights.

Heat maps paint one flat rectangle per tile, linearly colored from blue
(I = 0 -> RGB 0,0,255) to yellow (I = 255 -> RGB 255,255,0); overlapping
tiles average their colors, and an optional slide underlay is alpha-blended
per pixel.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .engine import TilePrediction
from .errors import UsageError
from .labels import LABELS, label_index
from .slide_io import SlideImage

DEFAULT_LABEL_X: dict[str, float] = {
    "Dense": 1,
    "EpiOnly": 8,
    "LeukOnly": 8,
    "Edge": 13,
    "Damaged": 13,
    "Crystalized": 15,
    "Dirt": 15,
    "Empty": 16,
}

DEFAULT_OPACITY = 0.6


@dataclass(frozen=True)
class DensityParams:
    """Weights and per-label rank values of the density score."""

    lambda1: float = 0.8
    lambda2: float = 0.2
    lambda3: float = 256.0
    label_x: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_LABEL_X))

    def __post_init__(self):
        if abs(self.lambda1 + self.lambda2 - 1.0) > 1e-12:
            raise UsageError(f"lambda1 + lambda2 must equal 1, got {self.lambda1} + {self.lambda2}")
        missing = [l for l in LABELS if l not in self.label_x]
        if missing:
            raise UsageError(f"label_x missing entries for {missing}")
        for name, x in self.label_x.items():
            s = -float(x) ** 2 + self.lambda3
            if not 0.0 <= s <= 255.0:
                raise UsageError(f"score of {name} (x={x}) is {s}, outside [0, 255]")


@dataclass(frozen=True)
class DensityGrid:
    """Per-tile density values on the tile grid, all within [0, 255]."""

    values: np.ndarray  # (rows, cols) float64

    def __post_init__(self):
        v = self.values
        if v.ndim != 2:
            raise ValueError("density grid must be 2-D")
        if np.any(v < 0.0) or np.any(v > 255.0):
            raise ValueError("density values outside [0, 255]")

    @property
    def rows(self) -> int:
        return int(self.values.shape[0])

    @property
    def cols(self) -> int:
        return int(self.values.shape[1])


def label_score(label: str, params: DensityParams = DensityParams()) -> float:
    """Intensity score S of one label: -x^2 + 256 with the label's rank x."""
    label_index(label)  # reject unknown labels
    x = float(params.label_x[label])
    return -(x * x) + params.lambda3


def density_value(top1: str, top2: str, params: DensityParams = DensityParams()) -> float:
    """Weighted top-2 combination; in [0, 255] for any ordered label pair."""
    return params.lambda1 * label_score(top1, params) + params.lambda2 * label_score(top2, params)


def region_density(prediction: TilePrediction, params: DensityParams = DensityParams()) -> float:
    return density_value(prediction.top1, prediction.top2, params)


def build_density_grid(
    predictions, rows: int, cols: int, params: DensityParams = DensityParams()
) -> DensityGrid:
    """Elementwise density of a complete prediction grid.

    Accepts the predictions in any order; each (row, col) must appear
    exactly once.
    """
    values = np.full((rows, cols), np.nan)
    for pred in predictions:
        if not (0 <= pred.row < rows and 0 <= pred.col < cols):
            raise UsageError(f"prediction at ({pred.row}, {pred.col}) outside {rows}x{cols} grid")
        if not np.isnan(values[pred.row, pred.col]):
            raise UsageError(f"duplicate prediction for tile ({pred.row}, {pred.col})")
        values[pred.row, pred.col] = region_density(pred, params)
    if np.isnan(values).any():
        missing = int(np.isnan(values).sum())
        raise UsageError(f"prediction grid incomplete: {missing} tiles missing")
    return DensityGrid(values=values)


def density_color(value: float) -> tuple[int, int, int]:
    """Blue-to-yellow color of one density value (half-up rounding)."""
    r = int(np.floor(value + 0.5))
    b = int(np.floor((255.0 - value) + 0.5))
    return r, r, b


def render_heatmap(
    grid: DensityGrid,
    tile_size: int,
    stride: int,
    slide: SlideImage | None = None,
    opacity: float = DEFAULT_OPACITY,
) -> SlideImage:
    """Paint the density grid as a raster.

    Without a slide the output is a pure color field covering the grid
    extent; with a slide the colors are blended over it at the given
    opacity.  Overlapping tiles (stride < tile_size) contribute the
    arithmetic mean of their colors, which is order-independent.
    """
    if not 0.0 <= opacity <= 1.0:
        raise UsageError(f"opacity must lie in [0, 1], got {opacity}")
    if tile_size < 1 or not (1 <= stride <= tile_size):
        raise UsageError("tile geometry invalid")
    extent_h = (grid.rows - 1) * stride + tile_size
    extent_w = (grid.cols - 1) * stride + tile_size
    if slide is not None:
        if slide.height > extent_h or slide.width > extent_w:
            raise UsageError(
                f"grid extent {extent_h}x{extent_w} does not cover the {slide.height}x{slide.width} slide"
            )
        height, width = slide.height, slide.width
    else:
        height, width = extent_h, extent_w

    sums = np.zeros((height, width, 3), dtype=np.int64)
    counts = np.zeros((height, width, 1), dtype=np.int64)
    for r in range(grid.rows):
        y0 = r * stride
        y1 = min(y0 + tile_size, height)
        if y0 >= height:
            continue
        for c in range(grid.cols):
            x0 = c * stride
            x1 = min(x0 + tile_size, width)
            if x0 >= width:
                continue
            color = density_color(float(grid.values[r, c]))
            sums[y0:y1, x0:x1] += np.asarray(color, dtype=np.int64)
            counts[y0:y1, x0:x1] += 1
    colors = sums / counts
    if slide is not None:
        colors = opacity * colors + (1.0 - opacity) * slide.pixels.astype(np.float64)
    out = np.clip(np.floor(colors + 0.5), 0, 255).astype(np.uint8)
    return SlideImage(pixels=out)


def write_density_csv(grid: DensityGrid, path) -> None:
    """Row-major CSV export with one decimal place per value."""
    lines = [",".join(f"{v:.1f}" for v in row) for row in grid.values]
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")
