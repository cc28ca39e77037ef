import numpy as np
import pytest

from slideassess import assessment
from slideassess.assessment import (
    AssessmentReport,
    LabelHistogram,
    ThresholdParams,
    Timings,
    Verdicts,
    agreement,
    histogram,
    parse_report_json,
    read_expert_file,
    render_report_json,
    truncate_display,
    verdicts,
)
from slideassess.engine import TilePrediction
from slideassess.errors import UsageError
from slideassess.labels import LABELS

# six-slide verdict panel: system vs. expert rankings with the published
# per-slide and overall agreement
PANEL_SYSTEM = [
    ("01", Verdicts("Bad", "Low", "Average")),
    ("02", Verdicts("Good", "Average", "Severe")),
    ("03", Verdicts("Average", "High", "Low")),
    ("04", Verdicts("Good", "Average", "Low")),
    ("05", Verdicts("Good", "High", "Low")),
    ("06", Verdicts("Average", "Average", "Low")),
]
PANEL_EXPERT = [
    ("01", Verdicts("Bad", "Low", "Low")),
    ("02", Verdicts("Good", "Average", "Severe")),
    ("03", Verdicts("Good", "High", "Low")),
    ("04", Verdicts("Good", "High", "Low")),
    ("05", Verdicts("Good", "High", "Low")),
    ("06", Verdicts("Average", "High", "Low")),
]


def pred(label, row=0, col=0):
    probs = np.full(8, 0.4 / 7)
    probs[LABELS.index(label)] = 0.6
    top2 = LABELS[0] if label != LABELS[0] else LABELS[1]
    return TilePrediction(row=row, col=col, probabilities=probs, top1=label, top2=top2)


def hist_from_counts(**counts):
    full = {name: counts.get(name, 0) for name in LABELS}
    return LabelHistogram(counts=full, total=sum(full.values()))


class TestHistogram:
    def test_all_dense(self):
        h = histogram([pred("Dense", 0, c) for c in range(4)])
        assert h.counts["Dense"] == 4
        assert h.ratios["Dense"] == 1.0

    def test_half_and_half(self):
        preds = [pred("Dense"), pred("Dense"), pred("Empty"), pred("Empty")]
        h = histogram(preds)
        assert h.ratios["Dense"] == 0.5
        assert h.ratios["Empty"] == 0.5

    def test_ratios_sum_to_one(self, rng):
        preds = [pred(LABELS[int(rng.integers(8))]) for _ in range(37)]
        h = histogram(preds)
        assert sum(h.ratios.values()) == pytest.approx(1.0, abs=1e-9)

    def test_empty_grid_rejected(self):
        with pytest.raises(UsageError):
            histogram([])


class TestVerdicts:
    def test_crystalized_half_is_bad(self):
        h = hist_from_counts(Crystalized=5, Dense=5)
        assert verdicts(h).staining == "Bad"

    def test_zero_damage_is_low(self):
        h = hist_from_counts(Dense=10)
        assert verdicts(h).damage == "Low"

    def test_all_empty_flagged_defaults(self):
        h = hist_from_counts(Empty=9)
        v = verdicts(h)
        assert (v.staining, v.density, v.damage) == ("Bad", "Low", "Low")
        assert h.non_empty_total == 0

    def test_boundaries_inclusive_toward_worse(self):
        # exactly 0.15 Crystalized/Damaged -> Bad / Severe
        h = hist_from_counts(Crystalized=3, Damaged=3, Dense=14)
        v = verdicts(h)
        assert v.staining == "Bad"
        assert v.damage == "Severe"
        # exactly 0.40 informative -> High
        h2 = hist_from_counts(Dense=4, Dirt=6)
        assert verdicts(h2).density == "High"
        # exactly 0.05 -> Average
        h3 = hist_from_counts(Crystalized=1, Damaged=1, Dense=18)
        v3 = verdicts(h3)
        assert v3.staining == "Average"
        assert v3.damage == "Average"

    def test_empty_tiles_excluded_from_ratios(self):
        # 1 Crystalized among 2 non-Empty tiles is Bad even with many Empty
        h = hist_from_counts(Crystalized=1, Dense=1, Empty=97)
        assert verdicts(h).staining == "Bad"

    def test_dirt_not_counted_as_staining_failure(self):
        h = hist_from_counts(Dirt=5, Dense=5)
        assert verdicts(h).staining == "Good"

    def test_scale_invariance(self, rng):
        for _ in range(10):
            counts = {name: int(rng.integers(0, 9)) for name in LABELS}
            if sum(counts.values()) == 0:
                counts["Dense"] = 1
            h = LabelHistogram(counts=counts, total=sum(counts.values()))
            for factor in (2, 7, 100):
                assert verdicts(h.scaled(factor)) == verdicts(h)

    def test_damage_monotone(self):
        # raising the Damaged ratio never moves the verdict toward Low
        order = {"Low": 0, "Average": 1, "Severe": 2}
        last = 0
        for damaged in range(0, 21):
            h = hist_from_counts(Damaged=damaged, Dense=20 - damaged)
            level = order[verdicts(h).damage]
            assert level >= last
            last = level

    def test_custom_thresholds_from_file(self, tmp_path):
        path = tmp_path / "thresholds.json"
        path.write_text(
            '{"staining": {"average": 0.2, "bad": 0.5}, "damage": {"average": 0.2, "severe": 0.5},'
            ' "density": {"high": 0.9, "average": 0.5}}'
        )
        params = ThresholdParams.from_file(path)
        h = hist_from_counts(Crystalized=3, Dense=7)
        assert verdicts(h).staining == "Bad"  # default 0.15 cut
        assert verdicts(h, params).staining == "Average"  # relaxed cut


class TestAgreement:
    def test_identical_slide_scores_one(self):
        v = Verdicts("Good", "Average", "Severe")
        result = agreement([v], [v])
        assert result.per_slide == (1.0,)
        assert result.overall == 1.0

    def test_two_of_three(self):
        a = Verdicts("Bad", "Low", "Average")
        b = Verdicts("Bad", "Low", "Low")
        result = agreement([a], [b])
        assert result.per_slide[0] == pytest.approx(2 / 3)
        assert truncate_display(result.per_slide[0]) == "0.66"

    def test_six_slide_panel_overall(self):
        result = agreement([v for _, v in PANEL_SYSTEM], [v for _, v in PANEL_EXPERT])
        assert result.per_slide == tuple(
            pytest.approx(x) for x in (2 / 3, 1.0, 2 / 3, 2 / 3, 1.0, 2 / 3)
        )
        assert f"{result.overall:.3f}" == "0.778"

    def test_symmetry(self, rng):
        def random_verdicts():
            return Verdicts(
                staining=str(rng.choice(assessment.STAINING_KEYWORDS)),
                density=str(rng.choice(assessment.DENSITY_KEYWORDS)),
                damage=str(rng.choice(assessment.DAMAGE_KEYWORDS)),
            )

        a = [random_verdicts() for _ in range(5)]
        b = [random_verdicts() for _ in range(5)]
        ab = agreement(a, b)
        ba = agreement(b, a)
        assert ab.per_slide == ba.per_slide
        assert ab.overall == ba.overall
        self_score = agreement(a, a)
        assert self_score.overall == 1.0
        assert all(x == 1.0 for x in self_score.per_slide)

    def test_overall_is_mean_of_per_slide(self, rng):
        result = agreement([v for _, v in PANEL_SYSTEM], [v for _, v in PANEL_EXPERT])
        assert result.overall == pytest.approx(np.mean(result.per_slide))

    def test_length_mismatch(self):
        v = Verdicts("Good", "High", "Low")
        with pytest.raises(UsageError):
            agreement([v], [v, v])


class TestReportSerialization:
    def make_report(self, **overrides):
        fields = dict(
            slide="slide-01.png",
            model="slidenet-128",
            tile_size=128,
            stride=128,
            grid=(1, 2),
            histogram={name: (1 if name in ("Dense", "Empty") else 0) for name in LABELS},
            mean_density=121.2,
            verdicts=Verdicts("Good", "High", "Low"),
            all_empty=False,
            timings_ms=Timings(decode=1.5, classify=20.25, density=0.1, render=2.0),
        )
        fields.update(overrides)
        return AssessmentReport(**fields)

    def test_roundtrip_byte_identical(self):
        text = render_report_json(self.make_report())
        again = render_report_json(parse_report_json(text))
        assert text == again

    def test_minimal_single_tile_report_valid(self):
        hist = {name: 0 for name in LABELS}
        hist["Dense"] = 1
        report = self.make_report(grid=(1, 1), histogram=hist, mean_density=242.4)
        parsed = parse_report_json(render_report_json(report))
        assert parsed.grid == (1, 1)

    def test_negative_timing_rejected(self):
        with pytest.raises(ValueError):
            Timings(decode=-1.0, classify=0.0, density=0.0, render=0.0)
        text = render_report_json(self.make_report())
        with pytest.raises(UsageError):
            parse_report_json(text.replace('"decode":1.5000', '"decode":-1.5000'))

    def test_histogram_grid_consistency_checked(self):
        text = render_report_json(self.make_report())
        with pytest.raises(UsageError):
            parse_report_json(text.replace('"grid":[1,2]', '"grid":[3,2]'))

    def test_canonical_key_order(self):
        text = render_report_json(self.make_report())
        keys = ["slide", "model", "tile_size", "stride", "grid", "histogram", "ratios",
                "mean_density", "verdicts", "all_empty", "timings_ms"]
        positions = [text.index(f'"{k}"') for k in keys]
        assert positions == sorted(positions)

    def test_floats_have_four_decimals(self):
        text = render_report_json(self.make_report())
        assert '"mean_density":121.2000' in text
        assert '"classify":20.2500' in text


class TestExpertFile:
    def test_parse(self, tmp_path):
        path = tmp_path / "experts.csv"
        path.write_text("# panel\n01,Bad,Low,Low\n02,Good,Average,Severe\n")
        rows = read_expert_file(path)
        assert rows[0][0] == "01"
        assert rows[1][1].damage == "Severe"

    def test_malformed_line(self, tmp_path):
        path = tmp_path / "experts.csv"
        path.write_text("01,Bad,Low\n")
        with pytest.raises(UsageError):
            read_expert_file(path)

    def test_bad_keyword(self, tmp_path):
        path = tmp_path / "experts.csv"
        path.write_text("01,Terrible,Low,Low\n")
        with pytest.raises(UsageError):
            read_expert_file(path)
