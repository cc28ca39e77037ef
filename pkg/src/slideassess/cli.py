"""Command-line interface.

Commands: classify, assess, agree, flops, train, bench, gen-fixtures.
Exit codes: 0 success, 2 usage error, 3 I/O or image-format error,
4 model-container error, 5 internal error.
"""

from __future__ import annotations

import os

# Pin BLAS to one thread per call before numpy loads: tile-level parallelism
# comes from the worker pool, and single-threaded kernels keep results
# bit-identical across worker counts.
for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from . import arch, assessment, bench, density, engine, features, fixtures, flops, pipeline, slide_io, training
from .errors import ModelError, SlideAssessError, SlideIOError, UsageError
from .labels import LABELS
from .model_io import ModelContainer, load_model, save_model

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_MODEL = 4
EXIT_INTERNAL = 5

DEFAULT_SEED = training.DEFAULT_SEED
ENGINES = ("dwnet",) + features.FEATURE_ENGINES


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on bad usage
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ModelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except (SlideIOError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except SlideAssessError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # pragma: no cover - safety net
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="slideassess",
        description="Assess digitized microscopy slides: tile classification, density heat maps, verdicts.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("classify", help="classify a directory of patch images")
    p.add_argument("patches", help="patch directory (flat, or one subdirectory per label)")
    p.add_argument("--model", required=True, help="SLNW model container")
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("assess", help="assess a whole slide: report + heat map")
    p.add_argument("slide", help="slide image (PNG or PPM)")
    p.add_argument("--model", required=True)
    p.add_argument("--tile", type=int, default=None, help="tile size (default: model input size)")
    p.add_argument("--stride", type=int, default=None, help="tile stride (default: tile size)")
    p.add_argument("--out", default=None, help="report JSON path (default: stdout)")
    p.add_argument("--heatmap", default=None, help="heat map image path (.png/.ppm)")
    p.add_argument("--pure-heatmap", action="store_true", help="color field only, no slide underlay")
    p.add_argument("--opacity", type=float, default=density.DEFAULT_OPACITY)
    p.add_argument("--thresholds", default=None, help="verdict threshold JSON file")
    p.add_argument("--density-csv", default=None, help="also export the density grid as CSV")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--no-timings", action="store_true", help="zero the timing fields (determinism checks)")
    p.add_argument("--slide-id", default=None, help="slide id recorded in the report (default: path)")
    p.set_defaults(func=cmd_assess)

    p = sub.add_parser("agree", help="score system verdicts against an expert panel")
    p.add_argument("reports", nargs="*", help="assessment report JSON files")
    p.add_argument("--expert", required=True, help="expert CSV: id,staining,density,damage")
    p.add_argument("--system", default=None, help="system CSV in the same format (instead of reports)")
    p.set_defaults(func=cmd_agree)

    p = sub.add_parser("flops", help="per-layer MAC cost table for a model")
    p.add_argument("--model", default=None, help="SLNW container path")
    p.add_argument("--arch", default=None, choices=arch.reference_names(), help="reference descriptor")
    p.set_defaults(func=cmd_flops)

    p = sub.add_parser("train", help="train a classifier head on a labeled patch directory")
    p.add_argument("data", help="labeled patch directory (one subdirectory per label)")
    p.add_argument("--engine", choices=ENGINES, default="dwnet")
    p.add_argument("--model", default=None, help="backbone container to fine-tune (dwnet engine)")
    p.add_argument("--arch", default="slidenet-128", choices=arch.reference_names(),
                   help="reference backbone when no --model is given")
    p.add_argument("--out", required=True, help="output SLNW container path")
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--batch", type=int, default=training.DEFAULT_BATCH_SIZE)
    p.add_argument("--lr", type=float, default=training.DEFAULT_LR)
    p.add_argument("--patch-size", type=int, default=None,
                   help="feature-extraction size for hog/color-lbp (default: image size of first patch)")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("bench", help="patches-per-second benchmark")
    p.add_argument("--engine", action="append", default=None, dest="engines", metavar="SPEC",
                   help="engine spec: dwnet:<arch-or-container>, hog, or color-lbp (repeatable)")
    p.add_argument("--patches", default=None, help="patch directory (default: synthetic patches)")
    p.add_argument("--count", type=int, default=bench.MIN_COUNT)
    p.add_argument("--warmup", type=int, default=bench.MIN_WARMUP)
    p.add_argument("--reps", type=int, default=bench.MIN_REPS)
    p.add_argument("--tile", type=int, default=128, help="synthetic patch size")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("gen-fixtures", help="generate synthetic patches and slides")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--per-class", type=int, default=100)
    p.add_argument("--tile", type=int, default=128)
    p.add_argument("--slide", default=None, metavar="WxH", help="also write slide.png at this size")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.set_defaults(func=cmd_gen_fixtures)

    return parser


def _threads(args) -> int:
    if getattr(args, "threads", None):
        if args.threads < 1:
            raise UsageError("--threads must be >= 1")
        return args.threads
    return pipeline.default_threads()


def _load_model_checked(path) -> ModelContainer:
    """Model-file problems (including a missing file) are model errors."""
    try:
        return load_model(path)
    except OSError as exc:
        raise ModelError(f"cannot read model {path}: {exc}") from exc


def cmd_classify(args) -> int:
    model = _load_model_checked(args.model)
    paths, labels = pipeline.load_patch_dir(args.patches)
    predict = pipeline.make_predictor(model)
    skipped = 0
    correct = 0
    scored = 0
    print("path,l1,p1,l2,p2")
    for i, path in enumerate(paths):
        try:
            pixels = slide_io.load_image(path).pixels
        except (SlideIOError, OSError) as exc:
            print(f"warning: skipping {path}: {exc}", file=sys.stderr)
            skipped += 1
            continue
        pred = predict(pixels)
        p = pred.probabilities
        i1 = model.labels.index(pred.top1)
        i2 = model.labels.index(pred.top2)
        print(f"{path},{pred.top1},{p[i1]:.6f},{pred.top2},{p[i2]:.6f}")
        if labels is not None:
            scored += 1
            correct += int(pred.top1 == labels[i])
    if skipped:
        print(f"warning: {skipped} unreadable patches skipped", file=sys.stderr)
    if labels is not None:
        if scored == 0:
            raise UsageError("no readable labeled patches")
        print(f"accuracy,{correct / scored:.4f}")
    return EXIT_OK


def cmd_assess(args) -> int:
    model = _load_model_checked(args.model)
    thresholds = assessment.ThresholdParams.from_file(args.thresholds) if args.thresholds else None
    tile = args.tile or model.input_size
    stride = args.stride or tile
    output = pipeline.run_assessment(
        args.slide,
        model,
        tile_size=tile,
        stride=stride,
        thresholds=thresholds,
        opacity=args.opacity,
        overlay=not args.pure_heatmap,
        threads=_threads(args),
        include_timings=not args.no_timings,
        slide_id=args.slide_id,
    )
    text = assessment.render_report_json(output.report)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)
    if args.heatmap:
        slide_io.write_image(output.heatmap, args.heatmap)
    if args.density_csv:
        density.write_density_csv(output.density_grid, args.density_csv)
    return EXIT_OK


def cmd_agree(args) -> int:
    experts = assessment.read_expert_file(args.expert)
    if args.system and args.reports:
        raise UsageError("pass either --system or report files, not both")
    if args.system:
        system = assessment.read_expert_file(args.system)
    elif args.reports:
        system = []
        for path in args.reports:
            report = assessment.parse_report_json(Path(path).read_text(encoding="utf-8"))
            system.append((report.slide, report.verdicts))
    else:
        raise UsageError("no system verdicts given (pass report files or --system)")
    expert_ids = [sid for sid, _ in experts]
    system_ids = [sid for sid, _ in system]
    if expert_ids != system_ids:
        raise UsageError(f"slide id mismatch: system {system_ids} vs expert {expert_ids}")
    result = assessment.agreement([v for _, v in system], [v for _, v in experts])
    print("slide,system,expert,accuracy")
    for (sid, ours), (_, theirs), acc in zip(system, experts, result.per_slide):
        print(
            f"{sid},{' '.join(ours.as_tuple())},{' '.join(theirs.as_tuple())},"
            f"{assessment.truncate_display(acc)}"
        )
    print(f"overall,,,{result.overall:.3f}")
    return EXIT_OK


def cmd_flops(args) -> int:
    if bool(args.model) == bool(args.arch):
        raise UsageError("pass exactly one of --model or --arch")
    model = _load_model_checked(args.model) if args.model else arch.build_reference_model(args.arch)
    cost = flops.network_cost(model)
    print("layer,kind,kernel,in,out,spatial,standard_macs,separable_macs,ratio")
    for row in cost.rows:
        print(
            f"{row.name},{row.kind},{row.kernel},{row.in_channels},{row.out_channels},"
            f"{row.spatial},{row.cost.standard_macs},{row.cost.separable_macs},"
            f"{float(row.cost.ratio):.4f}"
        )
    print(f"total,dense_macs={cost.dense_macs},actual_macs={cost.total_macs},"
          f"standard_equivalent_macs={cost.total_standard_macs}")
    return EXIT_OK


def cmd_train(args) -> int:
    paths, labels = pipeline.load_patch_dir(args.data)
    if labels is None:
        raise UsageError(f"{args.data}: training needs label subdirectories")
    present = set(labels)
    missing = [l for l in LABELS if l not in present]
    if missing:
        print(f"warning: no samples for {', '.join(missing)}", file=sys.stderr)
    threads = _threads(args)

    if args.engine == "dwnet":
        backbone = _load_model_checked(args.model) if args.model else arch.build_reference_model(
            args.arch, seed=args.seed
        )
        feats = pipeline.extract_training_features(
            backbone, paths, patch_size=backbone.input_size, threads=threads
        )
        model = training.finetune_head(
            backbone, feats, labels, epochs=args.epochs, batch_size=args.batch,
            lr=args.lr, seed=args.seed,
        )
    else:
        patch_size = args.patch_size or slide_io.load_image(paths[0]).pixels.shape[0]
        feats = pipeline.extract_training_features(
            args.engine, paths, patch_size=patch_size, threads=threads
        )
        model = features.train_linear(
            feats, labels, engine=args.engine, patch_size=patch_size,
            epochs=args.epochs, batch_size=args.batch, lr=args.lr, seed=args.seed,
        )

    y = training.label_indices(labels, model.labels)
    accuracy = _training_accuracy(model, feats, y)
    save_model(model, args.out)
    print(f"train_accuracy,{accuracy:.4f}")
    print(f"model,{args.out}")
    return EXIT_OK


def _training_accuracy(model: ModelContainer, feats: np.ndarray, y: np.ndarray) -> float:
    w, b = model.head_weights()
    logits = np.asarray(feats, dtype=np.float64) @ w.astype(np.float64) + b.astype(np.float64)
    return float(np.mean(np.argmax(logits, axis=1) == y))


def _bench_engine(spec: str, args):
    """Resolve an engine spec into (id, predict_fn, patch_size)."""
    if spec.startswith("dwnet:"):
        target = spec.split(":", 1)[1]
        if target in arch.reference_names():
            model = arch.build_reference_model(target, seed=args.seed)
        else:
            model = _load_model_checked(target)
        predict = pipeline.make_predictor(model)
        return spec, (lambda px: predict(px)), model.input_size
    if spec in features.FEATURE_ENGINES:
        size = args.tile

        def predict_feature(px, _engine=spec, _size=size):
            resized = engine.resize_nearest(px, _size)
            return features.extract_features(_engine, resized)

        return spec, predict_feature, size
    raise UsageError(f"unknown engine spec {spec!r} (use dwnet:<arch-or-path>, hog, color-lbp)")


def cmd_bench(args) -> int:
    specs = args.engines or ["dwnet:slidenet-128", "dwnet:slidenet-224"]
    for spec in specs:
        engine_id, predict, size = _bench_engine(spec, args)
        t0 = time.perf_counter()
        if args.patches:
            paths, _ = pipeline.load_patch_dir(args.patches)
            patch_list = [slide_io.load_image(p).pixels for p in paths]
        else:
            patch_list = [
                fixtures.generate_patch(LABELS[i % len(LABELS)], size, args.seed, index=i)
                for i in range(min(args.count, 64))
            ]
        decode_ms = (time.perf_counter() - t0) * 1000.0
        result, _ = bench.run_bench(
            predict,
            patch_list,
            engine_id=engine_id,
            count=args.count,
            warmup=args.warmup,
            reps=args.reps,
            threads=args.threads,
            decode_ms=decode_ms,
        )
        print(bench.bench_result_json(result))
    return EXIT_OK


def cmd_gen_fixtures(args) -> int:
    out = Path(args.out)
    fixtures.generate_corpus(out / "patches", per_class=args.per_class, side=args.tile, seed=args.seed)
    print(f"patches,{out / 'patches'},{args.per_class * len(LABELS)}")
    if args.slide:
        try:
            w, h = (int(x) for x in args.slide.lower().split("x"))
        except ValueError:
            raise UsageError(f"--slide expects WxH, got {args.slide!r}") from None
        slide, _ = fixtures.generate_slide(w, h, args.seed, tile=args.tile)
        slide_path = out / "slide.png"
        slide_io.write_image(slide, slide_path)
        print(f"slide,{slide_path},{w}x{h}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
