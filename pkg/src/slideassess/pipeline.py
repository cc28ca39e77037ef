"""End-to-end orchestration: tile, classify in parallel, score, render.

Tiles are classified by a worker pool and merged by tile index, so results
are independent of the worker count; with timings suppressed the emitted
report and heat map are byte-identical across runs and thread counts.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import assessment, density, engine, features, slide_io
from .errors import UsageError
from .labels import LABELS
from .model_io import ModelContainer

THREADS_ENV_VAR = "SLIDE_ASSESS_THREADS"


def default_threads() -> int:
    env = os.environ.get(THREADS_ENV_VAR)
    if env:
        try:
            value = int(env)
        except ValueError:
            raise UsageError(f"{THREADS_ENV_VAR} must be an integer, got {env!r}") from None
        if value < 1:
            raise UsageError(f"{THREADS_ENV_VAR} must be >= 1")
        return value
    return os.cpu_count() or 1


def make_predictor(model: ModelContainer):
    """Patch-pixels -> TilePrediction callable for the container's engine."""
    if model.engine == "dwnet":
        def predict(pixels: np.ndarray, row: int = 0, col: int = 0) -> engine.TilePrediction:
            probs = engine.predict_probabilities(model, pixels)
            return engine.prediction_from_probabilities(probs, model.labels, row=row, col=col)
    elif model.engine in features.FEATURE_ENGINES:
        def predict(pixels: np.ndarray, row: int = 0, col: int = 0) -> engine.TilePrediction:
            return features.classify_feature_patch(model, pixels, row=row, col=col)
    else:
        raise UsageError(f"container declares unknown engine {model.engine!r}")
    return predict


def classify_grid(
    model: ModelContainer,
    slide: slide_io.SlideImage,
    grid: slide_io.TileGrid,
    threads: int = 1,
) -> list[engine.TilePrediction]:
    """Classify every tile, row-major; deterministic for any thread count."""
    predict = make_predictor(model)
    indices = [(r, c) for r in range(grid.rows) for c in range(grid.cols)]

    def work(rc):
        r, c = rc
        patch = slide_io.extract_patch(slide, grid, r, c)
        return predict(patch.pixels, row=r, col=c)

    if threads <= 1:
        return [work(rc) for rc in indices]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(work, indices))


@dataclass(frozen=True)
class AssessmentOutput:
    report: assessment.AssessmentReport
    heatmap: slide_io.SlideImage
    density_grid: density.DensityGrid
    predictions: list[engine.TilePrediction]


def run_assessment(
    slide_path,
    model: ModelContainer,
    *,
    tile_size: int | None = None,
    stride: int | None = None,
    thresholds: assessment.ThresholdParams | None = None,
    density_params: density.DensityParams | None = None,
    opacity: float = density.DEFAULT_OPACITY,
    overlay: bool = True,
    threads: int = 1,
    include_timings: bool = True,
    slide_id: str | None = None,
) -> AssessmentOutput:
    """Assess one slide file with a loaded model."""
    tile_size = tile_size or model.input_size
    stride = stride or tile_size
    thresholds = thresholds or assessment.ThresholdParams()
    density_params = density_params or density.DensityParams()

    t0 = time.perf_counter()
    slide = slide_io.load_image(slide_path)
    t1 = time.perf_counter()
    grid = slide_io.make_grid(slide, tile_size, stride)
    predictions = classify_grid(model, slide, grid, threads=threads)
    t2 = time.perf_counter()
    dgrid = density.build_density_grid(predictions, grid.rows, grid.cols, density_params)
    t3 = time.perf_counter()
    heat = density.render_heatmap(
        dgrid, tile_size, stride, slide=slide if overlay else None, opacity=opacity
    )
    t4 = time.perf_counter()

    hist = assessment.histogram(predictions)
    verdicts = assessment.verdicts(hist, thresholds)
    timings = assessment.Timings(
        decode=(t1 - t0) * 1000.0 if include_timings else 0.0,
        classify=(t2 - t1) * 1000.0 if include_timings else 0.0,
        density=(t3 - t2) * 1000.0 if include_timings else 0.0,
        render=(t4 - t3) * 1000.0 if include_timings else 0.0,
    )
    report = assessment.AssessmentReport(
        slide=slide_id if slide_id is not None else str(slide_path),
        model=model.name,
        tile_size=tile_size,
        stride=stride,
        grid=(grid.rows, grid.cols),
        histogram=hist.counts,
        mean_density=float(np.mean(dgrid.values)),
        verdicts=verdicts,
        all_empty=hist.non_empty_total == 0,
        timings_ms=timings,
    )
    return AssessmentOutput(report=report, heatmap=heat, density_grid=dgrid, predictions=predictions)


def load_patch_dir(root) -> tuple[list[Path], list[str] | None]:
    """Collect patch files from a directory, labeled or flat.

    A labeled directory contains only subdirectories named after the eight
    classes; a flat directory contains image files directly.  Files are
    returned sorted for determinism.
    """
    root = Path(root)
    if not root.is_dir():
        raise UsageError(f"{root}: not a directory")
    subdirs = sorted(p for p in root.iterdir() if p.is_dir())
    files = sorted(p for p in root.iterdir() if p.is_file() and p.suffix.lower() in (".png", ".ppm", ".pnm"))
    if subdirs:
        for sub in subdirs:
            if sub.name not in LABELS:
                raise UsageError(f"{sub}: unknown label directory (expected one of {', '.join(LABELS)})")
        paths: list[Path] = []
        labels: list[str] = []
        for sub in subdirs:
            for f in sorted(p for p in sub.iterdir() if p.is_file() and p.suffix.lower() in (".png", ".ppm", ".pnm")):
                paths.append(f)
                labels.append(sub.name)
        if not paths:
            raise UsageError(f"{root}: label directories contain no images")
        return paths, labels
    if not files:
        raise UsageError(f"{root}: no images found")
    return files, None


def extract_training_features(
    model_or_engine, paths: list[Path], *, patch_size: int, threads: int = 1
) -> np.ndarray:
    """Feature matrix for training: penultimate CNN activations for a
    container, or the named classical descriptor."""
    if isinstance(model_or_engine, ModelContainer):
        model = model_or_engine

        def featurize(path):
            pixels = slide_io.load_image(path).pixels
            fmap = engine.prepare_patch(pixels, model.input_size, model.scale, model.shift)
            return np.asarray(engine.penultimate_features(model, fmap), dtype=np.float64)
    else:
        engine_id = str(model_or_engine)

        def featurize(path):
            pixels = slide_io.load_image(path).pixels
            resized = engine.resize_nearest(pixels, patch_size)
            return features.extract_features(engine_id, resized)

    if threads <= 1:
        rows = [featurize(p) for p in paths]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(featurize, paths))
    return np.stack(rows)
