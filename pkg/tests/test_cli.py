import json

import numpy as np
import pytest

from slideassess import cli, fixtures, slide_io
from slideassess.model_io import load_model

from conftest import tiny_model
from slideassess.model_io import save_model


@pytest.fixture
def model_path(tmp_path):
    path = tmp_path / "tiny.slnw"
    save_model(tiny_model(), path)
    return str(path)


@pytest.fixture
def slide_path(tmp_path):
    slide, _ = fixtures.generate_slide(64, 64, seed=3, tile=16)
    path = tmp_path / "slide.png"
    slide_io.write_image(slide, path)
    return str(path)


def write_patches(root, labels, per_class=2, side=8, flat=False):
    gen = np.random.default_rng(0)
    paths = []
    for label in labels:
        target = root if flat else root / label
        target.mkdir(parents=True, exist_ok=True)
        for i in range(per_class):
            arr = gen.integers(0, 256, size=(side, side, 3), dtype=np.uint8)
            p = target / f"{label.lower()}_{i}.png"
            slide_io.write_image(slide_io.SlideImage(pixels=arr), p)
            paths.append(p)
    return paths


class TestClassify:
    def test_unlabeled_dir_predictions_only(self, tmp_path, model_path, capsys):
        write_patches(tmp_path / "flat", ["Dense"], per_class=3, flat=True)
        rc = cli.main(["classify", str(tmp_path / "flat"), "--model", model_path])
        out = capsys.readouterr().out
        assert rc == 0
        lines = out.strip().splitlines()
        assert lines[0] == "path,l1,p1,l2,p2"
        assert len(lines) == 4
        assert not any(l.startswith("accuracy") for l in lines)

    def test_labeled_dir_appends_accuracy(self, tmp_path, model_path, capsys):
        write_patches(tmp_path / "data", ["Crystalized", "Dense"], per_class=2)
        rc = cli.main(["classify", str(tmp_path / "data"), "--model", model_path])
        out = capsys.readouterr().out
        assert rc == 0
        # zero head predicts the first label for everything: 2/4 correct
        assert out.strip().splitlines()[-1] == "accuracy,0.5000"

    def test_empty_dir_usage_error(self, tmp_path, model_path, capsys):
        (tmp_path / "empty").mkdir()
        rc = cli.main(["classify", str(tmp_path / "empty"), "--model", model_path])
        assert rc == cli.EXIT_USAGE

    def test_unknown_label_dir(self, tmp_path, model_path):
        write_patches(tmp_path / "data", ["Dense"])
        (tmp_path / "data" / "Foreign").mkdir()
        rc = cli.main(["classify", str(tmp_path / "data"), "--model", model_path])
        assert rc == cli.EXIT_USAGE

    def test_unreadable_patch_skipped_with_warning(self, tmp_path, model_path, capsys):
        write_patches(tmp_path / "flat", ["Dense"], per_class=2, flat=True)
        (tmp_path / "flat" / "broken.png").write_bytes(b"\x89PNG\r\n\x1a\n garbage")
        rc = cli.main(["classify", str(tmp_path / "flat"), "--model", model_path])
        captured = capsys.readouterr()
        assert rc == 0
        assert "skipping" in captured.err
        assert "1 unreadable" in captured.err


class TestAssess:
    def test_writes_report_and_heatmap(self, tmp_path, model_path, slide_path, capsys):
        report_path = tmp_path / "report.json"
        heat_path = tmp_path / "heat.png"
        csv_path = tmp_path / "grid.csv"
        rc = cli.main([
            "assess", slide_path, "--model", model_path, "--tile", "16",
            "--out", str(report_path), "--heatmap", str(heat_path),
            "--density-csv", str(csv_path), "--threads", "2",
        ])
        assert rc == 0
        raw = json.loads(report_path.read_text())
        assert raw["grid"] == [4, 4]
        assert raw["tile_size"] == 16
        assert sum(raw["histogram"].values()) == 16
        heat = slide_io.load_image(heat_path)
        assert (heat.width, heat.height) == (64, 64)
        assert len(csv_path.read_text().strip().splitlines()) == 4

    def test_deterministic_outputs(self, tmp_path, model_path, slide_path):
        outs = []
        for run in range(2):
            report_path = tmp_path / f"r{run}.json"
            heat_path = tmp_path / f"h{run}.png"
            rc = cli.main([
                "assess", slide_path, "--model", model_path, "--tile", "16",
                "--out", str(report_path), "--heatmap", str(heat_path), "--no-timings",
            ])
            assert rc == 0
            outs.append((report_path.read_bytes(), heat_path.read_bytes()))
        assert outs[0] == outs[1]

    def test_missing_model_exit_code(self, slide_path, tmp_path, capsys):
        rc = cli.main(["assess", slide_path, "--model", str(tmp_path / "nope.slnw")])
        assert rc == cli.EXIT_MODEL

    def test_missing_slide_exit_code(self, model_path, tmp_path, capsys):
        rc = cli.main(["assess", str(tmp_path / "nope.png"), "--model", model_path])
        assert rc == cli.EXIT_IO

    def test_bad_opacity_usage_error(self, model_path, slide_path, capsys):
        rc = cli.main(["assess", slide_path, "--model", model_path, "--opacity", "2.0"])
        assert rc == cli.EXIT_USAGE

    def test_env_var_threads(self, tmp_path, model_path, slide_path, monkeypatch, capsys):
        monkeypatch.setenv("SLIDE_ASSESS_THREADS", "2")
        rc = cli.main(["assess", slide_path, "--model", model_path, "--no-timings"])
        assert rc == 0
        monkeypatch.setenv("SLIDE_ASSESS_THREADS", "zero")
        rc = cli.main(["assess", slide_path, "--model", model_path])
        assert rc == cli.EXIT_USAGE


class TestAgree:
    def test_system_csv_against_experts(self, tmp_path, capsys):
        system = tmp_path / "system.csv"
        expert = tmp_path / "expert.csv"
        system.write_text("01,Bad,Low,Average\n02,Good,Average,Severe\n")
        expert.write_text("01,Bad,Low,Low\n02,Good,Average,Severe\n")
        rc = cli.main(["agree", "--system", str(system), "--expert", str(expert)])
        out = capsys.readouterr().out
        assert rc == 0
        lines = out.strip().splitlines()
        assert lines[1].startswith("01,") and lines[1].endswith("0.66")
        assert lines[2].startswith("02,") and lines[2].endswith("1.00")
        assert lines[-1] == "overall,,,0.833"

    def test_report_files_as_system_side(self, tmp_path, model_path, slide_path, capsys):
        report_path = tmp_path / "report.json"
        cli.main(["assess", slide_path, "--model", model_path, "--tile", "16",
                  "--out", str(report_path), "--slide-id", "s1"])
        capsys.readouterr()
        raw = json.loads(report_path.read_text())
        v = raw["verdicts"]
        expert = tmp_path / "expert.csv"
        expert.write_text(f"s1,{v['staining']},{v['density']},{v['damage']}\n")
        rc = cli.main(["agree", str(report_path), "--expert", str(expert)])
        out = capsys.readouterr().out
        assert rc == 0
        assert out.strip().splitlines()[-1] == "overall,,,1.000"

    def test_id_mismatch(self, tmp_path, capsys):
        system = tmp_path / "system.csv"
        expert = tmp_path / "expert.csv"
        system.write_text("01,Bad,Low,Average\n")
        expert.write_text("02,Bad,Low,Low\n")
        rc = cli.main(["agree", "--system", str(system), "--expert", str(expert)])
        assert rc == cli.EXIT_USAGE


class TestFlops:
    def test_reference_arch_table(self, capsys):
        rc = cli.main(["flops", "--arch", "slidenet-128"])
        out = capsys.readouterr().out
        assert rc == 0
        lines = out.strip().splitlines()
        assert lines[0].startswith("layer,kind")
        assert len(lines) == 7  # header + stem + 4 blocks + totals
        assert lines[-1].startswith("total,")

    def test_model_file_table(self, model_path, capsys):
        rc = cli.main(["flops", "--model", model_path])
        assert rc == 0

    def test_requires_exactly_one_source(self, model_path, capsys):
        assert cli.main(["flops"]) == cli.EXIT_USAGE
        rc = cli.main(["flops", "--model", model_path, "--arch", "slidenet-128"])
        assert rc == cli.EXIT_USAGE


class TestTrain:
    def test_feature_engine_end_to_end(self, tmp_path, capsys):
        fixtures.generate_corpus(tmp_path / "corpus", per_class=6, side=16, seed=4)
        out_path = tmp_path / "lbp.slnw"
        rc = cli.main([
            "train", str(tmp_path / "corpus"), "--engine", "color-lbp",
            "--out", str(out_path), "--epochs", "30", "--seed", "4",
        ])
        captured = capsys.readouterr()
        assert rc == 0
        acc_line = [l for l in captured.out.splitlines() if l.startswith("train_accuracy,")][0]
        assert float(acc_line.split(",")[1]) > 0.5
        model = load_model(out_path)
        assert model.engine == "color-lbp"

    def test_seeded_reruns_bit_identical(self, tmp_path, capsys):
        fixtures.generate_corpus(tmp_path / "corpus", per_class=3, side=16, seed=4)
        blobs = []
        for run in range(2):
            out_path = tmp_path / f"m{run}.slnw"
            rc = cli.main([
                "train", str(tmp_path / "corpus"), "--engine", "hog",
                "--out", str(out_path), "--epochs", "5", "--seed", "11",
            ])
            assert rc == 0
            blobs.append(out_path.read_bytes())
        assert blobs[0] == blobs[1]

    def test_dwnet_head_finetune(self, tmp_path, capsys):
        fixtures.generate_corpus(tmp_path / "corpus", per_class=2, side=128, seed=4)
        out_path = tmp_path / "dw.slnw"
        rc = cli.main([
            "train", str(tmp_path / "corpus"), "--engine", "dwnet", "--arch", "slidenet-128",
            "--out", str(out_path), "--epochs", "3", "--seed", "4", "--threads", "2",
        ])
        assert rc == 0
        model = load_model(out_path)
        assert model.engine == "dwnet"
        w, _ = model.head_weights()
        assert w.any()  # head was actually trained

    def test_flat_dir_rejected(self, tmp_path, capsys):
        write_patches(tmp_path / "flat", ["Dense"], flat=True)
        rc = cli.main(["train", str(tmp_path / "flat"), "--engine", "hog",
                       "--out", str(tmp_path / "m.slnw")])
        assert rc == cli.EXIT_USAGE

    def test_missing_class_warns(self, tmp_path, capsys):
        write_patches(tmp_path / "two", ["Dense", "Empty"], per_class=2, side=16)
        rc = cli.main(["train", str(tmp_path / "two"), "--engine", "color-lbp",
                       "--out", str(tmp_path / "m.slnw"), "--epochs", "2"])
        captured = capsys.readouterr()
        assert rc == 0
        assert "no samples for" in captured.err


class TestBench:
    def test_one_engine_json_line(self, capsys):
        rc = cli.main(["bench", "--engine", "color-lbp", "--count", "100",
                       "--warmup", "10", "--reps", "3", "--tile", "32", "--seed", "1"])
        out = capsys.readouterr().out
        assert rc == 0
        parsed = json.loads(out.strip())
        assert parsed["engine"] == "color-lbp"
        assert parsed["patches_per_second"] > 0

    def test_unknown_engine_spec(self, capsys):
        rc = cli.main(["bench", "--engine", "sift", "--count", "100"])
        assert rc == cli.EXIT_USAGE

    def test_mid_stream_failure_maps_to_internal_exit(self, monkeypatch, capsys):
        from slideassess import bench as bench_mod
        from slideassess.errors import BenchAbortedError

        def boom(*args, **kwargs):
            raise BenchAbortedError("engine failed after 12 patches", 12)

        monkeypatch.setattr(bench_mod, "run_bench", boom)
        rc = cli.main(["bench", "--engine", "color-lbp", "--count", "100", "--tile", "16"])
        assert rc == cli.EXIT_INTERNAL


class TestGenFixtures:
    def test_writes_corpus_and_slide(self, tmp_path, capsys):
        rc = cli.main(["gen-fixtures", "--out", str(tmp_path / "fx"), "--per-class", "1",
                       "--tile", "16", "--slide", "48x32", "--seed", "2"])
        out = capsys.readouterr().out
        assert rc == 0
        assert (tmp_path / "fx" / "patches" / "Dense" / "0000.png").exists()
        slide = slide_io.load_image(tmp_path / "fx" / "slide.png")
        assert (slide.width, slide.height) == (48, 32)

    def test_bad_slide_spec(self, tmp_path, capsys):
        rc = cli.main(["gen-fixtures", "--out", str(tmp_path / "fx"), "--per-class", "1",
                       "--slide", "tall"])
        assert rc == cli.EXIT_USAGE
