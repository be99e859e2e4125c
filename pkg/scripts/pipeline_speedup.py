#!/usr/bin/env python3
"""Compare sequential vs pipelined inference throughput.

Runs the same synthetic frame stream through both scheduling modes with
configurable injected stage delays, verifies the prediction sequences are
identical, and prints both benchmark rows plus the speedup ratio.

Usage:
    python3 scripts/pipeline_speedup.py --frames 210 --inject-delays 5,20,1
"""

import argparse
import sys

import numpy as np

from smokewatch.bench import BenchConfig, aggregate, render_table2, run_pipeline, synthetic_source
from smokewatch.model import ModelConfig, build


def parse_delays(text):
    parts = [float(p) for p in text.split(",")]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected PRE,INFER,POST milliseconds")
    return tuple(parts)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--frames", type=int, default=210)
    parser.add_argument("--warmup", type=int, default=10)
    parser.add_argument("--queue-capacity", type=int, default=4)
    parser.add_argument("--resolution", type=int, default=64, help="square frame side (px)")
    parser.add_argument("--inject-delays", type=parse_delays, default=(5.0, 20.0, 1.0),
                        metavar="PRE,INFER,POST", help="per-stage floor in ms")
    parser.add_argument("--device-label", default="cpu")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    model = build(ModelConfig(input_size=32, backbone_channels=(4, 8, 16, 32, 64),
                              neck_channels=(64, 64), hidden_dim=16), seed=args.seed)

    def run(mode):
        cfg = BenchConfig(mode=mode, frame_count=args.frames, warmup_frames=args.warmup,
                          queue_capacity=args.queue_capacity,
                          resolution=(args.resolution, args.resolution),
                          inject_delays_ms=args.inject_delays, seed=args.seed)
        frames = synthetic_source(cfg.frame_count, cfg.resolution, cfg.seed)
        records, scores = run_pipeline(model, frames, cfg)
        return aggregate(records, device=args.device_label, mode=mode,
                         resolution=cfg.resolution, notes=mode), scores

    print(f"benchmarking {args.frames} frames (warmup {args.warmup}), "
          f"injected delays {args.inject_delays} ms")
    seq_report, seq_scores = run("sequential")
    pipe_report, pipe_scores = run("pipelined")

    identical = len(seq_scores) == len(pipe_scores) and all(
        np.array_equal(a.probabilities, b.probabilities)
        for a, b in zip(seq_scores, pipe_scores))
    print()
    print(render_table2([seq_report, pipe_report]))
    print()
    print(f"prediction sequences identical: {identical}")
    ratio = pipe_report.throughput_fps / seq_report.throughput_fps
    print(f"throughput: sequential {seq_report.throughput_fps:.2f} fps, "
          f"pipelined {pipe_report.throughput_fps:.2f} fps ({ratio:.2f}x)")
    return 0 if identical else 1


if __name__ == "__main__":
    sys.exit(main())
