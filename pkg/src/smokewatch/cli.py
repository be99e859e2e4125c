"""Command-line interface.

Subcommands: augment, split, train, infer, eval, eval-det, bench. Exit codes:
0 success, 1 bad usage or validation failure, 2 unreadable or malformed data,
3 internal contract violation.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from . import bench as bench_mod
from . import data as data_mod
from . import metrics as metrics_mod
from . import model as model_mod
from .errors import ContractError, DataError


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on usage errors; the contract here is 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _csv_ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _csv_floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _float_pair(text: str) -> tuple[float, float]:
    values = _csv_floats(text)
    if len(values) != 2:
        raise argparse.ArgumentTypeError(f"expected LO,HI, got {text!r}")
    return values


def _resolution(text: str) -> tuple[int, int]:
    cleaned = text.lower().replace("×", "x")
    parts = cleaned.split("x")
    if len(parts) == 2 and all(p.isdigit() for p in parts):
        return int(parts[0]), int(parts[1])
    raise argparse.ArgumentTypeError(f"expected WIDTHxHEIGHT, got {text!r}")


def _add_model_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--input-size", type=int, default=640,
                        help="square input side, multiple of 32 (default 640)")
    parser.add_argument("--backbone-channels", type=_csv_ints,
                        default=(64, 128, 256, 512, 1024), metavar="C1,..,C5",
                        help="five backbone output widths")
    parser.add_argument("--neck-channels", type=_csv_ints, default=(1024, 1024),
                        metavar="C6,C7", help="two neck output widths")
    parser.add_argument("--hidden-dim", type=int, default=128,
                        help="fully connected hidden width (default 128)")
    parser.add_argument("--num-classes", type=int, default=2)


def _model_config(args) -> model_mod.ModelConfig:
    return model_mod.ModelConfig(
        input_size=args.input_size,
        backbone_channels=tuple(args.backbone_channels),
        neck_channels=tuple(args.neck_channels),
        hidden_dim=args.hidden_dim,
        num_classes=args.num_classes,
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="smokewatch",
                     description="Train, evaluate, and benchmark the smoking-detection classifier.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("augment", help="expand a dataset with seeded augmentations")
    p.add_argument("--manifest", required=True, help="input manifest TSV")
    p.add_argument("--out", required=True, help="output manifest TSV")
    p.add_argument("--variants", type=int, default=2, help="augmented copies per image")
    p.add_argument("--rotation", type=_float_pair, default=(-15.0, 15.0), metavar="LO,HI",
                   help="rotation range in degrees (default -15,15)")
    p.add_argument("--exposure", type=_float_pair, default=(0.5, 1.5), metavar="LO,HI",
                   help="exposure gain range (default 0.5,1.5)")
    p.add_argument("--noise-rate", type=float, default=0.001,
                   help="fraction of pixels hit by salt-and-pepper noise")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("split", help="shuffle and split a manifest into train/val/test")
    p.add_argument("--manifest", required=True)
    p.add_argument("--counts", type=_csv_ints, required=True, metavar="TRAIN,VAL,TEST")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="train from a manifest and save weights")
    p.add_argument("--manifest", required=True)
    p.add_argument("--weights", required=True, help="output weights file")
    _add_model_flags(p)
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="classify one image with saved weights")
    p.add_argument("--weights", required=True)
    p.add_argument("--image", required=True)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="classification metrics over a manifest")
    p.add_argument("--weights", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--model-name", default="Proposed")
    p.add_argument("--json", help="also write the metrics report as JSON")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("eval-det", help="detection metrics from detections + ground truth files")
    p.add_argument("--detections", required=True)
    p.add_argument("--ground-truth", required=True)
    p.add_argument("--iou", type=float, default=0.5)
    p.add_argument("--model-name", default="Proposed")
    p.add_argument("--json", help="also write the metrics report as JSON")
    p.set_defaults(func=cmd_eval_det)

    p = sub.add_parser("bench", help="benchmark the inference pipeline")
    p.add_argument("--mode", choices=("seq", "pipe", "sequential", "pipelined"),
                   default="sequential")
    p.add_argument("--frames", type=int, default=100)
    p.add_argument("--warmup", type=int, default=10)
    p.add_argument("--queue-capacity", type=int, default=4)
    p.add_argument("--resolution", type=_resolution, default=(640, 480), metavar="WxH")
    p.add_argument("--fps-cap", type=float, default=None)
    p.add_argument("--inject-delays", type=_csv_floats, default=None, metavar="PRE,INFER,POST",
                   help="artificial per-stage delays in ms, for pipeline experiments")
    p.add_argument("--frames-dir", help="read frames from a directory instead of synthesizing")
    p.add_argument("--weights", help="benchmark saved weights instead of a fresh model")
    _add_model_flags(p)
    p.add_argument("--device-label", default="cpu")
    p.add_argument("--notes", default="")
    p.add_argument("--json", help="also write the benchmark report as JSON")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_bench)

    return parser


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _rebase_entries(manifest: data_mod.DatasetManifest, src_dir: Path,
                    dst_dir: Path) -> data_mod.DatasetManifest:
    """Rewrite entry paths (relative to src_dir) to be relative to dst_dir."""
    if src_dir.resolve() == dst_dir.resolve():
        return manifest
    entries = []
    for e in manifest:
        p = Path(e.path)
        rebased = e.path if p.is_absolute() else os.path.relpath(src_dir / p, dst_dir)
        entries.append(data_mod.ManifestEntry(rebased, e.annotation, e.provenance))
    return data_mod.DatasetManifest(entries)


def cmd_augment(args) -> int:
    manifest = data_mod.load_manifest(args.manifest)
    spec = data_mod.AugmentSpec(
        rotation_degrees=args.rotation,
        exposure_gain=args.exposure,
        noise_rate=args.noise_rate,
        variants_per_image=args.variants,
        seed=args.seed,
    )
    images_root = Path(args.manifest).parent
    result = data_mod.augment_dataset(manifest, spec, images_root)
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    data_mod.save_manifest(_rebase_entries(result.manifest, images_root, out_path.parent),
                           out_path)
    for path, reason in result.skipped:
        print(f"skipped {path}: {reason}", file=sys.stderr)
    print(f"augmented {len(manifest)} -> {len(result.manifest)} entries "
          f"({len(result.skipped)} skipped)")
    return 0


def cmd_split(args) -> int:
    if len(args.counts) != 3:
        raise ValueError(f"--counts needs TRAIN,VAL,TEST, got {args.counts}")
    manifest = data_mod.load_manifest(args.manifest)
    parts = data_mod.split(manifest, tuple(args.counts), args.seed)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    src_dir = Path(args.manifest).parent
    for name, part in zip(("train", "val", "test"), parts):
        data_mod.save_manifest(_rebase_entries(part, src_dir, out_dir),
                               out_dir / f"{name}.tsv")
    print(f"train {len(parts[0])} val {len(parts[1])} test {len(parts[2])}")
    return 0


def _load_dataset(manifest_path, input_size: int):
    manifest = data_mod.load_manifest(manifest_path)
    samples = []
    for entry in manifest:
        img = data_mod.load_image(data_mod.resolve_entry_path(manifest_path, entry))
        tensor = data_mod.to_tensor(data_mod.letterbox_resize(img, input_size).image)
        samples.append((tensor, entry.annotation.class_id))
    return samples


def cmd_train(args) -> int:
    config = _model_config(args)
    dataset = _load_dataset(args.manifest, config.input_size)
    model = model_mod.build(config, seed=args.seed)
    train_cfg = model_mod.TrainConfig(epochs=args.epochs, learning_rate=args.lr,
                                      seed=args.seed)
    for stats in model_mod.fit(model, dataset, train_cfg):
        print(f"epoch {stats.epoch} loss {stats.loss:.4f} acc {stats.accuracy:.4f}")
    model_mod.save_weights(model, args.weights)
    print(f"saved weights to {args.weights}")
    return 0


def cmd_infer(args) -> int:
    model = model_mod.load_weights(args.weights)
    img = data_mod.load_image(args.image)
    tensor = data_mod.to_tensor(data_mod.letterbox_resize(img, model.config.input_size).image)
    scores = model_mod.forward(model, tensor)
    print(f"{scores.label} {100.0 * scores.confidence:.2f}%")
    return 0


def cmd_eval(args) -> int:
    model = model_mod.load_weights(args.weights)
    manifest = data_mod.load_manifest(args.manifest)
    actual = [e.annotation.class_id for e in manifest]
    bad = [c for c in actual if c >= model.config.num_classes]
    if bad:
        raise ContractError(
            f"manifest class {bad[0]} is outside the model vocabulary "
            f"of {model.config.num_classes} classes"
        )
    predicted = []
    for entry in manifest:
        img = data_mod.load_image(data_mod.resolve_entry_path(args.manifest, entry))
        tensor = data_mod.to_tensor(
            data_mod.letterbox_resize(img, model.config.input_size).image)
        predicted.append(model_mod.forward(model, tensor).predicted_class)
    tp, fp, fn = metrics_mod.binary_confusion(predicted, actual, positive_class=0)
    precision, recall, f1 = metrics_mod.precision_recall_f1(tp, fp, fn)
    report = metrics_mod.MetricsReport(
        model=args.model_name,
        precision=precision,
        recall=recall,
        f1=f1,
        accuracy=metrics_mod.accuracy(predicted, actual),
    )
    print(metrics_mod.render_table1([report]))
    if args.json:
        Path(args.json).write_text(metrics_mod.report_to_json(report), encoding="utf-8")
    return 0


def cmd_eval_det(args) -> int:
    detections = metrics_mod.load_detections(args.detections)
    ground_truths = metrics_mod.load_ground_truths(args.ground_truth)
    match = metrics_mod.match_detections(detections, ground_truths, args.iou)
    precision, recall, f1 = metrics_mod.precision_recall_f1(
        match.true_positives, match.false_positives, match.false_negatives)
    value, per_class = metrics_mod.map50(detections, ground_truths, args.iou)
    report = metrics_mod.MetricsReport(
        model=args.model_name,
        precision=precision,
        recall=recall,
        f1=f1,
        map50=value,
        per_class_ap=per_class,
    )
    print(f"mAP@{round(args.iou * 100)} {100.0 * value:.2f}")
    for c, ap in sorted(per_class.items()):
        print(f"class {c} AP {100.0 * ap:.2f}")
    if args.json:
        Path(args.json).write_text(metrics_mod.report_to_json(report), encoding="utf-8")
    return 0


def cmd_bench(args) -> int:
    mode = {"seq": "sequential", "pipe": "pipelined"}.get(args.mode, args.mode)
    cfg = bench_mod.BenchConfig(
        mode=mode,
        frame_count=args.frames,
        warmup_frames=args.warmup,
        queue_capacity=args.queue_capacity,
        resolution=args.resolution,
        fps_cap=args.fps_cap,
        inject_delays_ms=args.inject_delays,
        seed=args.seed,
    )
    if args.weights:
        model = model_mod.load_weights(args.weights)
    else:
        model = model_mod.build(_model_config(args), seed=args.seed)
    if args.frames_dir:
        frames = bench_mod.directory_source(args.frames_dir)
    else:
        frames = bench_mod.synthetic_source(cfg.frame_count, cfg.resolution, cfg.seed)
    records, _ = bench_mod.run_pipeline(model, frames, cfg)
    report = bench_mod.aggregate(records, device=args.device_label, mode=mode,
                                 resolution=cfg.resolution, notes=args.notes)
    print(bench_mod.render_table2([report]))
    if args.json:
        Path(args.json).write_text(bench_mod.report_to_json(report), encoding="utf-8")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ContractError as exc:
        print(f"contract violation: {exc}", file=sys.stderr)
        return 3
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
