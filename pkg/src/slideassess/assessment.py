"""Slide-level verdicts, expert agreement scoring, and the report format.

The tile-label histogram is reduced to three keyword verdicts:

* staining quality (Good / Average / Bad) from the Crystalized ratio among
  non-Empty tiles (Dirt is contamination, not a staining failure, and is
  excluded from the numerator),
* information density (High / Average / Low) from the informative ratio
  (Dense + EpiOnly + LeukOnly + Edge) among non-Empty tiles,
* damage level (Low / Average / Severe) from the Damaged ratio among
  non-Empty tiles.

Threshold boundaries are inclusive toward the worse category for staining
and damage (ratio exactly at the cut -> Bad / Severe) and inclusive toward
High for density.  A slide with no non-Empty tiles gets (Bad, Low, Low)
plus an all-empty flag.

Agreement against an expert panel counts each matching verdict attribute
as one point out of three per slide.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

from .errors import UsageError
from .labels import LABELS, label_index

STAINING_KEYWORDS = ("Good", "Average", "Bad")
DENSITY_KEYWORDS = ("High", "Average", "Low")
DAMAGE_KEYWORDS = ("Low", "Average", "Severe")

INFORMATIVE_LABELS = ("Dense", "EpiOnly", "LeukOnly", "Edge")

VERDICT_ATTRIBUTES = ("staining", "density", "damage")

_REPORT_FLOAT_DECIMALS = 4


@dataclass(frozen=True)
class LabelHistogram:
    """Counts of top-1 labels over a prediction grid."""

    counts: dict[str, int]
    total: int

    def __post_init__(self):
        if set(self.counts) != set(LABELS):
            raise ValueError("histogram must carry all eight labels")
        if any(c < 0 for c in self.counts.values()):
            raise ValueError("negative count")
        if sum(self.counts.values()) != self.total:
            raise ValueError("counts do not sum to total")

    @property
    def ratios(self) -> dict[str, float]:
        return {name: self.counts[name] / self.total for name in LABELS}

    @property
    def non_empty_total(self) -> int:
        return self.total - self.counts["Empty"]

    def scaled(self, factor: int) -> "LabelHistogram":
        return LabelHistogram(
            counts={k: v * factor for k, v in self.counts.items()}, total=self.total * factor
        )


def histogram(predictions) -> LabelHistogram:
    """Count the top-1 label of every tile prediction."""
    counts = {name: 0 for name in LABELS}
    total = 0
    for pred in predictions:
        label_index(pred.top1)
        counts[pred.top1] += 1
        total += 1
    if total == 0:
        raise UsageError("cannot build a histogram from an empty prediction grid")
    return LabelHistogram(counts=counts, total=total)


@dataclass(frozen=True)
class ThresholdParams:
    """Ratio cuts for the three keyword verdicts (configurable via file)."""

    staining_average: float = 0.05  # Crystalized ratio at/above which staining leaves Good
    staining_bad: float = 0.15
    damage_average: float = 0.05
    damage_severe: float = 0.15
    density_high: float = 0.40  # informative ratio at/above which density is High
    density_average: float = 0.15

    def __post_init__(self):
        if not 0 <= self.staining_average <= self.staining_bad <= 1:
            raise UsageError("staining thresholds must satisfy 0 <= average <= bad <= 1")
        if not 0 <= self.damage_average <= self.damage_severe <= 1:
            raise UsageError("damage thresholds must satisfy 0 <= average <= severe <= 1")
        if not 0 <= self.density_average <= self.density_high <= 1:
            raise UsageError("density thresholds must satisfy 0 <= average <= high <= 1")

    @classmethod
    def from_file(cls, path) -> "ThresholdParams":
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        try:
            return cls(
                staining_average=float(raw["staining"]["average"]),
                staining_bad=float(raw["staining"]["bad"]),
                damage_average=float(raw["damage"]["average"]),
                damage_severe=float(raw["damage"]["severe"]),
                density_high=float(raw["density"]["high"]),
                density_average=float(raw["density"]["average"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise UsageError(f"{path}: malformed threshold file ({exc})") from exc


@dataclass(frozen=True)
class Verdicts:
    staining: str
    density: str
    damage: str

    def __post_init__(self):
        if self.staining not in STAINING_KEYWORDS:
            raise ValueError(f"staining verdict must be one of {STAINING_KEYWORDS}")
        if self.density not in DENSITY_KEYWORDS:
            raise ValueError(f"density verdict must be one of {DENSITY_KEYWORDS}")
        if self.damage not in DAMAGE_KEYWORDS:
            raise ValueError(f"damage verdict must be one of {DAMAGE_KEYWORDS}")

    def as_tuple(self) -> tuple[str, str, str]:
        return (self.staining, self.density, self.damage)


def verdicts(hist: LabelHistogram, params: ThresholdParams = ThresholdParams()) -> Verdicts:
    """Map a histogram to the three keyword verdicts.

    Ratios are computed among non-Empty tiles; an all-Empty slide is
    reported as (Bad, Low, Low).
    """
    non_empty = hist.non_empty_total
    if non_empty == 0:
        return Verdicts(staining="Bad", density="Low", damage="Low")
    crystalized = hist.counts["Crystalized"] / non_empty
    damaged = hist.counts["Damaged"] / non_empty
    informative = sum(hist.counts[l] for l in INFORMATIVE_LABELS) / non_empty

    if crystalized >= params.staining_bad:
        staining = "Bad"
    elif crystalized >= params.staining_average:
        staining = "Average"
    else:
        staining = "Good"

    if damaged >= params.damage_severe:
        damage = "Severe"
    elif damaged >= params.damage_average:
        damage = "Average"
    else:
        damage = "Low"

    if informative >= params.density_high:
        density = "High"
    elif informative >= params.density_average:
        density = "Average"
    else:
        density = "Low"

    return Verdicts(staining=staining, density=density, damage=damage)


@dataclass(frozen=True)
class AgreementResult:
    per_slide: tuple[float, ...]
    overall: float


def agreement(system: list[Verdicts], experts: list[Verdicts]) -> AgreementResult:
    """Fraction of matching verdict attributes, per slide and overall.

    Each of the three attributes scores one point when the rankings agree;
    per-slide accuracy is points/3 and the overall score is total points
    over 3 x slides.
    """
    if len(system) != len(experts):
        raise UsageError(f"verdict lists differ in length: {len(system)} vs {len(experts)}")
    if not system:
        raise UsageError("cannot score agreement on zero slides")
    per_slide = []
    total = 0
    for ours, theirs in zip(system, experts):
        matches = sum(a == b for a, b in zip(ours.as_tuple(), theirs.as_tuple()))
        per_slide.append(matches / 3.0)
        total += matches
    return AgreementResult(per_slide=tuple(per_slide), overall=total / (3.0 * len(system)))


def truncate_display(value: float, places: int = 2) -> str:
    """Truncate (not round) for display: 2/3 prints as 0.66."""
    scale = 10**places
    return f"{math.floor(value * scale) / scale:.{places}f}"


# --- report serialization -----------------------------------------------------


@dataclass(frozen=True)
class Timings:
    decode: float
    classify: float
    density: float
    render: float

    def __post_init__(self):
        for name in ("decode", "classify", "density", "render"):
            if getattr(self, name) < 0:
                raise ValueError(f"negative timing {name}")


@dataclass(frozen=True)
class AssessmentReport:
    slide: str
    model: str
    tile_size: int
    stride: int
    grid: tuple[int, int]
    histogram: dict[str, int]
    mean_density: float
    verdicts: Verdicts
    all_empty: bool
    timings_ms: Timings

    @property
    def ratios(self) -> dict[str, float]:
        total = sum(self.histogram.values())
        return {name: self.histogram[name] / total for name in LABELS}


def render_report_json(report: AssessmentReport) -> str:
    """Canonical single-line JSON: fixed key order, floats at 4 decimals.

    Serializing, parsing, and re-serializing a report yields identical
    bytes.
    """
    f = _fmt_float
    hist = ",".join(f'"{name}":{report.histogram[name]}' for name in LABELS)
    ratios = report.ratios
    ratio_items = ",".join(f'"{name}":{f(ratios[name])}' for name in LABELS)
    v = report.verdicts
    t = report.timings_ms
    return (
        "{"
        f'"slide":{json.dumps(report.slide)},'
        f'"model":{json.dumps(report.model)},'
        f'"tile_size":{report.tile_size},'
        f'"stride":{report.stride},'
        f'"grid":[{report.grid[0]},{report.grid[1]}],'
        f'"histogram":{{{hist}}},'
        f'"ratios":{{{ratio_items}}},'
        f'"mean_density":{f(report.mean_density)},'
        f'"verdicts":{{"staining":{json.dumps(v.staining)},"density":{json.dumps(v.density)},'
        f'"damage":{json.dumps(v.damage)}}},'
        f'"all_empty":{"true" if report.all_empty else "false"},'
        f'"timings_ms":{{"decode":{f(t.decode)},"classify":{f(t.classify)},'
        f'"density":{f(t.density)},"render":{f(t.render)}}}'
        "}"
    )


def _fmt_float(x: float) -> str:
    return f"{x:.{_REPORT_FLOAT_DECIMALS}f}"


def parse_report_json(text: str) -> AssessmentReport:
    """Parse and validate a report; raises UsageError on schema violations."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"report is not valid JSON ({exc})") from exc
    return report_from_dict(raw)


def report_from_dict(raw: dict) -> AssessmentReport:
    try:
        grid = raw["grid"]
        hist = raw["histogram"]
        verd = raw["verdicts"]
        times = raw["timings_ms"]
        report = AssessmentReport(
            slide=str(raw["slide"]),
            model=str(raw["model"]),
            tile_size=int(raw["tile_size"]),
            stride=int(raw["stride"]),
            grid=(int(grid[0]), int(grid[1])),
            histogram={name: int(hist[name]) for name in LABELS},
            mean_density=float(raw["mean_density"]),
            verdicts=Verdicts(
                staining=str(verd["staining"]),
                density=str(verd["density"]),
                damage=str(verd["damage"]),
            ),
            all_empty=bool(raw["all_empty"]),
            timings_ms=Timings(
                decode=float(times["decode"]),
                classify=float(times["classify"]),
                density=float(times["density"]),
                render=float(times["render"]),
            ),
        )
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise UsageError(f"malformed report ({exc})") from exc
    _validate_report(report, raw)
    return report


def _validate_report(report: AssessmentReport, raw: dict) -> None:
    if report.tile_size < 1 or not (1 <= report.stride <= report.tile_size):
        raise UsageError("report tile geometry invalid")
    rows, cols = report.grid
    if rows < 1 or cols < 1:
        raise UsageError("report grid dimensions must be positive")
    if sum(report.histogram.values()) != rows * cols:
        raise UsageError("histogram total does not match the grid size")
    if not 0.0 <= report.mean_density <= 255.0:
        raise UsageError("mean density outside [0, 255]")
    declared = raw.get("ratios", {})
    if set(declared) != set(LABELS):
        raise UsageError("ratios must cover exactly the eight labels")
    ratio_sum = sum(float(v) for v in declared.values())
    if abs(ratio_sum - 1.0) > 1e-3:
        raise UsageError(f"ratios sum to {ratio_sum}, expected 1")


def read_expert_file(path) -> list[tuple[str, Verdicts]]:
    """Parse a verdict CSV: one "id,staining,density,damage" line per slide."""
    rows: list[tuple[str, Verdicts]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) != 4:
                raise UsageError(f"{path}:{lineno}: expected 'id,staining,density,damage'")
            try:
                rows.append((parts[0], Verdicts(staining=parts[1], density=parts[2], damage=parts[3])))
            except ValueError as exc:
                raise UsageError(f"{path}:{lineno}: {exc}") from exc
    if not rows:
        raise UsageError(f"{path}: no verdict rows found")
    return rows
