"""Throughput harness for patch classifiers.

Runs a warmup pass, then times `count` classifications per repetition and
reports the median over repetitions.  Decode time is measured separately;
both decode-exclusive and decode-inclusive patches-per-second are emitted.
Per-patch outputs are merged by index and must be independent of the worker
count.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from statistics import median

from .errors import BenchAbortedError, UsageError

MIN_COUNT = 100
MIN_WARMUP = 10
MIN_REPS = 3


@dataclass(frozen=True)
class BenchResult:
    engine: str
    count: int
    warmup: int
    threads: int
    wall_ms: float  # median over repetitions, decode excluded
    reps_wall_ms: tuple[float, ...]
    patches_per_second: float
    decode_ms: float
    patches_per_second_inclusive: float

    def __post_init__(self):
        if self.count < MIN_COUNT:
            raise ValueError(f"benchmark needs count >= {MIN_COUNT}")
        if self.warmup < MIN_WARMUP:
            raise ValueError(f"benchmark needs warmup >= {MIN_WARMUP}")
        expected = self.count / (self.wall_ms / 1000.0)
        if abs(expected - self.patches_per_second) > 1e-6 * max(1.0, expected):
            raise ValueError("patches_per_second inconsistent with count and wall time")


def run_bench(
    predict,
    patches,
    *,
    engine_id: str,
    count: int = MIN_COUNT,
    warmup: int = MIN_WARMUP,
    reps: int = MIN_REPS,
    threads: int = 1,
    decode_ms: float = 0.0,
) -> tuple[BenchResult, list]:
    """Time `predict` over a patch stream; returns the result and the
    per-patch outputs of the final repetition (ordered by patch index)."""
    if count < MIN_COUNT:
        raise UsageError(f"count must be >= {MIN_COUNT}, got {count}")
    if warmup < MIN_WARMUP:
        raise UsageError(f"warmup must be >= {MIN_WARMUP}, got {warmup}")
    if reps < MIN_REPS:
        raise UsageError(f"reps must be >= {MIN_REPS}, got {reps}")
    if not patches:
        raise UsageError("no patches supplied")

    stream = [patches[i % len(patches)] for i in range(count)]

    def run_pass(items):
        completed = 0
        try:
            if threads <= 1:
                out = []
                for p in items:
                    out.append(predict(p))
                    completed += 1
                return out
            with ThreadPoolExecutor(max_workers=threads) as pool:
                return list(pool.map(predict, items))
        except Exception as exc:
            raise BenchAbortedError(
                f"{engine_id}: engine failed after {completed} patches ({exc})", completed
            ) from exc

    run_pass([patches[i % len(patches)] for i in range(warmup)])

    walls = []
    outputs: list = []
    for _ in range(reps):
        t0 = time.perf_counter()
        outputs = run_pass(stream)
        walls.append((time.perf_counter() - t0) * 1000.0)

    wall = float(median(walls))
    result = BenchResult(
        engine=engine_id,
        count=count,
        warmup=warmup,
        threads=threads,
        wall_ms=wall,
        reps_wall_ms=tuple(walls),
        patches_per_second=count / (wall / 1000.0),
        decode_ms=decode_ms,
        patches_per_second_inclusive=count / ((wall + decode_ms) / 1000.0),
    )
    return result, outputs


def bench_result_json(result: BenchResult) -> str:
    """One-line JSON rendering for the bench CLI."""
    return json.dumps(
        {
            "engine": result.engine,
            "count": result.count,
            "warmup": result.warmup,
            "threads": result.threads,
            "wall_ms": round(result.wall_ms, 3),
            "reps_wall_ms": [round(w, 3) for w in result.reps_wall_ms],
            "patches_per_second": round(result.patches_per_second, 3),
            "decode_ms": round(result.decode_ms, 3),
            "patches_per_second_inclusive": round(result.patches_per_second_inclusive, 3),
        },
        sort_keys=False,
    )
