"""Procedural synthetic patches and slides for the eight region classes.

No real microscopy data ships with this repository; these generators
produce visually and statistically distinct textures per class (dense blob
fields for Dense, flat near-white for Empty, scratch strokes for Damaged,
speckle for Crystalized, and so on) so the classification, training, and
assessment paths can be exercised end to end.  Every patch is a pure
function of (seed, label, index), and a slide is a deterministic mosaic of
per-tile textures.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import UsageError
from .labels import LABELS, label_index
from .slide_io import SlideImage, write_image

# Gram-stain-like palette
_PAPER_WHITE = np.array([246, 244, 240], dtype=np.float64)
_VIOLET = np.array([96, 56, 144], dtype=np.float64)
_PINK = np.array([216, 130, 168], dtype=np.float64)
_PALE_PINK = np.array([234, 190, 210], dtype=np.float64)
_BROWN = np.array([118, 92, 58], dtype=np.float64)
_CRYSTAL = np.array([52, 28, 92], dtype=np.float64)
_SCRATCH = np.array([150, 150, 158], dtype=np.float64)
_WASHED = np.array([212, 196, 202], dtype=np.float64)


def _patch_rng(seed: int, label: str, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, label_index(label), index]))


def _canvas(side: int, rng: np.random.Generator, base=_PAPER_WHITE, sigma: float = 2.5) -> np.ndarray:
    noise = rng.normal(0.0, sigma, size=(side, side, 3))
    return np.clip(base + noise, 0, 255)


def _coords(side: int):
    ys = np.arange(side, dtype=np.float64)[:, None]
    xs = np.arange(side, dtype=np.float64)[None, :]
    return ys, xs


def _disk(canvas: np.ndarray, cy: float, cx: float, r: float, color: np.ndarray) -> None:
    ys, xs = _coords(canvas.shape[0])
    mask = (ys - cy) ** 2 + (xs - cx) ** 2 <= r * r
    canvas[mask] = color


def _stroke(canvas: np.ndarray, cy: float, cx: float, angle: float, width: float, color: np.ndarray) -> None:
    ys, xs = _coords(canvas.shape[0])
    dist = np.abs(-np.sin(angle) * (xs - cx) + np.cos(angle) * (ys - cy))
    canvas[dist <= width / 2.0] = color


def _segment(canvas: np.ndarray, cy: float, cx: float, angle: float, length: float,
             width: float, color: np.ndarray) -> None:
    ys, xs = _coords(canvas.shape[0])
    across = np.abs(-np.sin(angle) * (xs - cx) + np.cos(angle) * (ys - cy))
    along = np.abs(np.cos(angle) * (xs - cx) + np.sin(angle) * (ys - cy))
    canvas[(across <= width / 2.0) & (along <= length / 2.0)] = color


_GROWTH_CAP = 5000  # upper bound on disks per coverage-target loop


def _tex_empty(side, rng):
    # clean glass: almost no grain
    return _canvas(side, rng, sigma=1.0)


def _tex_dense(side, rng):
    canvas = _canvas(side, rng)
    # crowded cell field grown to a fixed coverage, scale-invariant
    for _ in range(_GROWTH_CAP):
        if (canvas.sum(axis=2) < 660).mean() >= 0.62:
            break
        color = (_VIOLET, _PINK)[int(rng.integers(2))] + rng.normal(0, 6, size=3)
        _disk(canvas, rng.uniform(0, side), rng.uniform(0, side),
              rng.uniform(side / 40, side / 14), np.clip(color, 0, 255))
    return canvas


def _tex_epi_only(side, rng):
    canvas = _canvas(side, rng, sigma=1.6)
    ys, xs = _coords(side)
    for _ in range(3):
        cy, cx = rng.uniform(side * 0.25, side * 0.75, size=2)
        r = rng.uniform(side / 5.5, side / 4.2)
        _disk(canvas, cy, cx, r, _PINK)
        # crisp membrane ring and a smaller violet nucleus
        dist2 = (ys - cy) ** 2 + (xs - cx) ** 2
        rim = (dist2 <= r * r) & (dist2 >= (r - 2.0) ** 2)
        canvas[rim] = np.clip(_PINK - 70, 0, 255)
        _disk(canvas, cy, cx, r / 3.5, _VIOLET + rng.normal(0, 6, size=3))
    return canvas


def _tex_leuk_only(side, rng):
    canvas = _canvas(side, rng, sigma=2.8)
    # lobed leukocytes: clusters of small violet disks with a darker core
    for _ in range(11):
        cy, cx = rng.uniform(0, side, size=2)
        r = rng.uniform(side / 24, side / 17)
        for _ in range(3):
            _disk(canvas, cy + rng.normal(0, r / 2), cx + rng.normal(0, r / 2), r * rng.uniform(0.6, 1.0), _VIOLET)
        _disk(canvas, cy, cx, r * 0.4, np.clip(_VIOLET - 30, 0, 255))
    # scattered stain granules
    ys = rng.integers(0, side, size=side)
    xs = rng.integers(0, side, size=side)
    canvas[ys, xs] = _VIOLET + rng.normal(0, 12, size=(side, 3))
    return canvas


def _tex_edge(side, rng):
    tissue = _tex_dense(side, rng)
    empty = _canvas(side, rng)
    ys, xs = _coords(side)
    angle = rng.uniform(0, np.pi)
    offset = rng.uniform(-side / 24, side / 24)
    boundary = -np.sin(angle) * (xs - side / 2) + np.cos(angle) * (ys - side / 2)
    out = np.where((boundary > offset)[..., None], tissue, empty)
    # dark smear margin along the tissue boundary
    margin = np.abs(boundary - offset) <= 2.5
    out[margin] = _VIOLET - 20 + rng.normal(0, 8, size=(int(margin.sum()), 3))
    return out


def _tex_damaged(side, rng):
    # handling wear roughens the background grain
    canvas = _canvas(side, rng, sigma=3.6)
    # washed-out remnants of tissue, grown to a fixed coverage
    for _ in range(_GROWTH_CAP):
        if (canvas.sum(axis=2) < 648).mean() >= 0.22:
            break
        _disk(canvas, rng.uniform(0, side), rng.uniform(0, side),
              rng.uniform(side / 14, side / 9), _WASHED + rng.normal(0, 4, size=3))
    # crackle: hairline fractures through the remaining tissue
    for _ in range(8):
        cy, cx = rng.uniform(0, side, size=2)
        _segment(canvas, cy, cx, rng.uniform(0, np.pi), rng.uniform(side / 10, side / 4), 1.0,
                 np.array([120.0, 110.0, 118.0]))
    # scratches scoured to bare glass: bright core flanked by dark tramlines
    for _ in range(4):
        cy, cx = rng.uniform(0, side, size=2)
        angle = rng.uniform(0, np.pi)
        width = rng.uniform(2.0, 4.0)
        _stroke(canvas, cy, cx, angle, width + 3.0, np.array([90.0, 90.0, 100.0]))
        _stroke(canvas, cy, cx, angle, width, np.array([254.0, 254.0, 252.0]))
    return canvas


def _tex_crystalized(side, rng):
    canvas = _canvas(side, rng, base=np.clip(_PAPER_WHITE - 12, 0, 255), sigma=2.0)
    speckle = rng.random((side, side)) < 0.08
    canvas[speckle] = _CRYSTAL + rng.normal(0, 10, size=(int(speckle.sum()), 3))
    # needle-like shards, roughly axis-aligned as dye crystals tend to grow
    base_angle = rng.uniform(0, np.pi)
    for _ in range(max(3, side // 24)):
        _stroke(
            canvas, rng.uniform(0, side), rng.uniform(0, side),
            base_angle + rng.normal(0, 0.15), 1.5, _CRYSTAL,
        )
    return canvas


def _tex_dirt(side, rng):
    canvas = _canvas(side, rng, sigma=2.2)
    # grow clumps until they cover a third of the patch
    cy, cx = rng.uniform(side * 0.3, side * 0.7, size=2)
    r = side / 6.0
    for _ in range(_GROWTH_CAP):
        if (canvas[:, :, 2] < 150).mean() >= 0.32:
            break
        cy = np.clip(cy + rng.normal(0, r / 3), side * 0.15, side * 0.85)
        cx = np.clip(cx + rng.normal(0, r / 3), side * 0.15, side * 0.85)
        _disk(canvas, cy, cx, r * rng.uniform(0.5, 0.8), _BROWN + rng.normal(0, 8, size=3))
    # coarse mottling: mid-scale darker/lighter blotches inside the clumps
    dark = canvas[:, :, 2] < 150
    for _ in range(side):
        my, mx = rng.uniform(0, side, size=2)
        if dark[min(int(my), side - 1), min(int(mx), side - 1)]:
            shade = rng.uniform(-45, 35)
            _disk(canvas, my, mx, rng.uniform(2.0, 5.0), np.clip(_BROWN + shade, 0, 255))
    return canvas


_GENERATORS = {
    "Crystalized": _tex_crystalized,
    "Damaged": _tex_damaged,
    "Dense": _tex_dense,
    "Dirt": _tex_dirt,
    "Edge": _tex_edge,
    "Empty": _tex_empty,
    "EpiOnly": _tex_epi_only,
    "LeukOnly": _tex_leuk_only,
}


def generate_patch(label: str, side: int, seed: int, index: int = 0) -> np.ndarray:
    """One synthetic patch as a (side, side, 3) uint8 array."""
    if label not in _GENERATORS:
        label_index(label)  # raises UnknownLabelError
    if side < 8:
        raise UsageError(f"patch side must be >= 8, got {side}")
    rng = _patch_rng(seed, label, index)
    return np.clip(_GENERATORS[label](side, rng), 0, 255).astype(np.uint8)


def generate_corpus(out_dir, per_class: int, side: int, seed: int) -> dict[str, list[Path]]:
    """Write per_class patches per label under out_dir/<Label>/NNN.png."""
    if per_class < 1:
        raise UsageError("per_class must be >= 1")
    out = Path(out_dir)
    written: dict[str, list[Path]] = {}
    for label in LABELS:
        label_dir = out / label
        label_dir.mkdir(parents=True, exist_ok=True)
        paths = []
        for i in range(per_class):
            path = label_dir / f"{i:04d}.png"
            write_image(SlideImage(pixels=generate_patch(label, side, seed, i)), path)
            paths.append(path)
        written[label] = paths
    return written


def slide_layout(rows: int, cols: int, seed: int) -> list[list[str]]:
    """Deterministic per-tile label layout: a tissue mass with an edge rim,
    empty surroundings, and scattered defects."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 9001]))
    layout = []
    cy, cx = (rows - 1) / 2.0, (cols - 1) / 2.0
    scale = max(rows, cols) / 2.0
    for r in range(rows):
        row = []
        for c in range(cols):
            d = np.hypot((r - cy) / scale, (c - cx) / scale)
            if d < 0.35:
                label = "Dense"
            elif d < 0.55:
                label = "EpiOnly" if (r + c) % 2 == 0 else "LeukOnly"
            elif d < 0.72:
                label = "Edge"
            else:
                label = "Empty"
            roll = rng.random()
            if roll < 0.04:
                label = "Damaged"
            elif roll < 0.08:
                label = "Dirt"
            elif roll < 0.12:
                label = "Crystalized"
            row.append(label)
        layout.append(row)
    return layout


def generate_slide(width: int, height: int, seed: int, tile: int = 128) -> tuple[SlideImage, list[list[str]]]:
    """Compose a synthetic slide as a mosaic of per-tile textures."""
    if width < 1 or height < 1:
        raise UsageError("slide dimensions must be positive")
    rows = -(-height // tile)
    cols = -(-width // tile)
    layout = slide_layout(rows, cols, seed)
    canvas = np.zeros((rows * tile, cols * tile, 3), dtype=np.uint8)
    for r in range(rows):
        for c in range(cols):
            patch = generate_patch(layout[r][c], tile, seed, index=r * cols + c)
            canvas[r * tile : (r + 1) * tile, c * tile : (c + 1) * tile] = patch
    return SlideImage(pixels=canvas[:height, :width].copy()), layout
