#!/usr/bin/env python3
"""End-to-end demo on a synthetic corpus.

Generates a small labeled image set, augments and splits it, trains the
classifier, then reports train/test accuracy and the metrics table.

Usage:
    python3 scripts/demo_end_to_end.py --workdir /tmp/smokewatch-demo
"""

import argparse
import sys
import time
from pathlib import Path

from smokewatch.data import (
    AugmentSpec,
    augment_dataset,
    letterbox_resize,
    load_image,
    load_manifest,
    resolve_entry_path,
    split,
    to_tensor,
)
from smokewatch.metrics import MetricsReport, accuracy, binary_confusion, precision_recall_f1, render_table1
from smokewatch.model import ModelConfig, TrainConfig, build, class_labels, fit, forward, save_weights
from smokewatch.synthetic import write_corpus


def load_samples(manifest_path, input_size):
    manifest = load_manifest(manifest_path)
    samples = []
    for entry in manifest:
        image = load_image(resolve_entry_path(manifest_path, entry))
        boxed = letterbox_resize(image, input_size)
        samples.append((to_tensor(boxed.image), entry.annotation.class_id))
    return samples


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--workdir", type=Path, default=Path("demo_workdir"))
    parser.add_argument("--images", type=int, default=24, help="raw synthetic images")
    parser.add_argument("--image-size", type=int, default=96, help="synthetic image side (px)")
    parser.add_argument("--variants", type=int, default=2, help="augmented variants per image")
    parser.add_argument("--epochs", type=int, default=40)
    parser.add_argument("--learning-rate", type=float, default=0.01)
    parser.add_argument("--input-size", type=int, default=64, help="model input side (px)")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    config = ModelConfig(input_size=args.input_size,
                         backbone_channels=(8, 16, 32, 64, 128),
                         neck_channels=(128, 128), hidden_dim=128)
    workdir = args.workdir
    workdir.mkdir(parents=True, exist_ok=True)

    print(f"writing {args.images} synthetic images to {workdir}")
    manifest_path = write_corpus(workdir, args.images, args.image_size, seed=args.seed)

    spec = AugmentSpec(variants_per_image=args.variants, seed=args.seed)
    result = augment_dataset(load_manifest(manifest_path), spec, workdir)
    print(f"augmented to {len(result.manifest)} entries ({len(result.skipped)} skipped)")

    n = len(result.manifest)
    n_test = max(2, n // 5)
    n_val = max(2, n // 10)
    train_set, val_set, test_set = split(result.manifest, (n - n_val - n_test, n_val, n_test),
                                         seed=args.seed)
    print(f"split into train={len(train_set)} val={len(val_set)} test={len(test_set)}")

    def materialize(part):
        # split() returns manifests rooted alongside the source manifest
        entries = []
        for entry in part:
            image = load_image(workdir / entry.path)
            boxed = letterbox_resize(image, config.input_size)
            entries.append((to_tensor(boxed.image), entry.annotation.class_id))
        return entries

    train_samples = materialize(train_set)
    test_samples = materialize(test_set)

    model = build(config, seed=args.seed)
    started = time.perf_counter()
    stats = fit(model, train_samples,
                TrainConfig(epochs=args.epochs, learning_rate=args.learning_rate, seed=args.seed))
    for s in stats:
        if s.epoch % 5 == 0 or s.epoch == len(stats):
            print(f"epoch {s.epoch:3d}  loss {s.loss:.4f}  acc {s.accuracy:.4f}")
    print(f"trained {len(stats)} epochs in {time.perf_counter() - started:.1f}s")

    predicted = [forward(model, x).predicted_class for x, _ in test_samples]
    actual = [label for _, label in test_samples]
    tp, fp, fn = binary_confusion(predicted, actual, positive_class=0)
    precision, recall, f1 = precision_recall_f1(tp, fp, fn)
    report = MetricsReport(model="Proposed", accuracy=accuracy(predicted, actual),
                           precision=precision, recall=recall, f1=f1)
    print()
    print(render_table1([report]))

    labels = class_labels(config.num_classes)
    sample_x, sample_label = test_samples[0]
    scores = forward(model, sample_x)
    print(f"\nsample prediction: {scores.label} ({100 * scores.confidence:.2f}%) "
          f"actual={labels[sample_label]}")

    weights_path = workdir / "model.weights"
    save_weights(model, weights_path)
    print(f"saved weights to {weights_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
