"""Inference benchmarking.

Runs a frame source through preprocess -> inference -> postprocess either
sequentially or as a three-stage pipeline (one thread per stage, bounded
queues in between), records per-stage wall times, and renders the runtime
table or a JSON report.
"""

from __future__ import annotations

import json
import queue
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Iterator

import numpy as np

from .data import letterbox_resize, load_image, to_tensor
from .errors import DataError
from .model import ClassScores, ProposedModel, class_labels, forward
from .tensor import Tensor

_MODES = ("sequential", "pipelined")


@dataclass
class BenchConfig:
    mode: str = "sequential"
    frame_count: int = 100
    warmup_frames: int = 10
    queue_capacity: int = 4
    resolution: tuple[int, int] = (640, 480)  # (width, height) of source frames
    fps_cap: float | None = None
    inject_delays_ms: tuple[float, float, float] | None = None
    seed: int = 0

    def __post_init__(self):
        if self.mode not in _MODES:
            raise ValueError(f"mode must be one of {_MODES}, got {self.mode!r}")
        if self.frame_count < 1:
            raise ValueError(f"frame_count must be >= 1, got {self.frame_count}")
        if self.warmup_frames < 0:
            raise ValueError(f"warmup_frames must be >= 0, got {self.warmup_frames}")
        if self.frame_count <= self.warmup_frames:
            raise ValueError(
                f"frame_count ({self.frame_count}) must exceed "
                f"warmup_frames ({self.warmup_frames})"
            )
        if self.queue_capacity < 1:
            raise ValueError(f"queue_capacity must be >= 1, got {self.queue_capacity}")
        if min(self.resolution) < 1:
            raise ValueError(f"resolution extents must be >= 1, got {self.resolution}")
        if self.fps_cap is not None and not self.fps_cap > 0:
            raise ValueError(f"fps_cap must be > 0, got {self.fps_cap}")
        if self.inject_delays_ms is not None:
            if len(self.inject_delays_ms) != 3 or min(self.inject_delays_ms) < 0:
                raise ValueError(
                    f"inject_delays_ms must be three values >= 0, got {self.inject_delays_ms}"
                )


@dataclass
class FrameRecord:
    frame_index: int
    pre_ms: float
    infer_ms: float
    post_ms: float
    total_ms: float  # first stage start to last stage end, queue waits included
    start_s: float
    end_s: float


def synthetic_source(count: int, resolution: tuple[int, int], seed: int = 0) -> Iterator[np.ndarray]:
    """Deterministic random frames; frame i depends only on (seed, i)."""
    width, height = resolution
    for i in range(count):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, i])))
        yield rng.integers(0, 256, size=(height, width, 3), dtype=np.uint8)


def directory_source(directory) -> Iterator[np.ndarray]:
    """Frames from a directory of images, sorted by filename."""
    root = Path(directory)
    if not root.is_dir():
        raise DataError(f"{directory}: not a directory")
    paths = sorted(p for p in root.iterdir() if p.suffix.lower() in (".ppm", ".png"))
    if not paths:
        raise DataError(f"{directory}: no .ppm or .png frames found")
    for p in paths:
        yield load_image(p)


def _sleep_ms(ms: float) -> None:
    if ms > 0:
        time.sleep(ms / 1000.0)


def _stages(model: ProposedModel, cfg: BenchConfig) -> tuple[Callable, Callable, Callable]:
    delays = cfg.inject_delays_ms or (0.0, 0.0, 0.0)
    size = model.config.input_size
    labels = class_labels(model.config.num_classes)

    def pre(frame: np.ndarray) -> Tensor:
        _sleep_ms(delays[0])
        return to_tensor(letterbox_resize(frame, size).image)

    def infer(tensor: Tensor) -> Tensor:
        _sleep_ms(delays[1])
        return forward(model, tensor).probabilities

    def post(probs: Tensor) -> ClassScores:
        _sleep_ms(delays[2])
        return ClassScores(probabilities=probs, predicted_class=int(np.argmax(probs)),
                           labels=labels)

    return pre, infer, post


def run_pipeline(model: ProposedModel, frames: Iterable[np.ndarray],
                 cfg: BenchConfig) -> tuple[list[FrameRecord], list[ClassScores]]:
    """Process frames through the three stages in the configured mode.

    Returns per-frame timing records (warmup frames excluded) and the scores
    for every frame in input order. Scores are identical across modes; only
    the timing differs.
    """
    pre, infer, post = _stages(model, cfg)
    frames = _rate_limited(_take(frames, cfg.frame_count), cfg.fps_cap)
    if cfg.mode == "sequential":
        records, scores = _run_sequential(frames, pre, infer, post)
    else:
        records, scores = _run_pipelined(frames, pre, infer, post, cfg.queue_capacity)
    if len(records) < cfg.frame_count:
        raise DataError(
            f"frame source ended early: got {len(records)} frames, "
            f"need {cfg.frame_count}"
        )
    return records[cfg.warmup_frames:], scores


def _take(frames: Iterable[np.ndarray], count: int) -> Iterator[np.ndarray]:
    for i, frame in enumerate(frames):
        if i >= count:
            break
        yield frame


def _rate_limited(frames: Iterator[np.ndarray], fps_cap: float | None) -> Iterator[np.ndarray]:
    if fps_cap is None:
        yield from frames
        return
    interval = 1.0 / fps_cap
    origin = time.perf_counter()
    for i, frame in enumerate(frames):
        due = origin + i * interval
        now = time.perf_counter()
        if now < due:
            time.sleep(due - now)
        yield frame


def _run_sequential(frames, pre, infer, post):
    records, scores = [], []
    for idx, frame in enumerate(frames):
        t0 = time.perf_counter()
        tensor = pre(frame)
        t1 = time.perf_counter()
        probs = infer(tensor)
        t2 = time.perf_counter()
        score = post(probs)
        t3 = time.perf_counter()
        records.append(FrameRecord(idx, (t1 - t0) * 1e3, (t2 - t1) * 1e3,
                                   (t3 - t2) * 1e3, (t3 - t0) * 1e3, t0, t3))
        scores.append(score)
    return records, scores


_DONE = object()


def _run_pipelined(frames, pre, infer, post, capacity):
    q_pre = queue.Queue(maxsize=capacity)
    q_infer = queue.Queue(maxsize=capacity)
    failures: list[BaseException] = []
    results: list[tuple[int, FrameRecord, ClassScores]] = []

    def pre_worker():
        try:
            for idx, frame in enumerate(frames):
                t0 = time.perf_counter()
                tensor = pre(frame)
                t1 = time.perf_counter()
                q_pre.put((idx, tensor, t0, (t1 - t0) * 1e3))
        except BaseException as exc:
            failures.append(exc)
        finally:
            q_pre.put(_DONE)

    def infer_worker():
        try:
            while (item := q_pre.get()) is not _DONE:
                idx, tensor, t0, pre_ms = item
                t_in = time.perf_counter()
                probs = infer(tensor)
                t_out = time.perf_counter()
                q_infer.put((idx, probs, t0, pre_ms, (t_out - t_in) * 1e3))
        except BaseException as exc:
            failures.append(exc)
        finally:
            q_infer.put(_DONE)

    def post_worker():
        try:
            while (item := q_infer.get()) is not _DONE:
                idx, probs, t0, pre_ms, infer_ms = item
                t_in = time.perf_counter()
                score = post(probs)
                t_out = time.perf_counter()
                record = FrameRecord(idx, pre_ms, infer_ms, (t_out - t_in) * 1e3,
                                     (t_out - t0) * 1e3, t0, t_out)
                results.append((idx, record, score))
        except BaseException as exc:
            failures.append(exc)

    threads = [threading.Thread(target=w, name=w.__name__) for w in
               (pre_worker, infer_worker, post_worker)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if failures:
        raise failures[0]

    results.sort(key=lambda item: item[0])
    records = [r for _, r, _ in results]
    scores = [s for _, _, s in results]
    return records, scores


# ---------------------------------------------------------------------------
# Aggregation and rendering
# ---------------------------------------------------------------------------


@dataclass
class StageStats:
    mean_ms: float
    median_ms: float
    p95_ms: float
    min_ms: float
    max_ms: float

    @staticmethod
    def from_samples(samples: list[float]) -> "StageStats":
        if not samples:
            raise ValueError("StageStats needs at least one sample")
        arr = np.asarray(samples, dtype=np.float64)
        return StageStats(
            mean_ms=float(arr.mean()),
            median_ms=float(np.median(arr)),
            p95_ms=float(np.percentile(arr, 95)),
            min_ms=float(arr.min()),
            max_ms=float(arr.max()),
        )


@dataclass
class BenchReport:
    device: str
    mode: str
    resolution: tuple[int, int]
    frames: int
    pre: StageStats
    infer: StageStats
    post: StageStats
    total: StageStats
    throughput_fps: float
    notes: str = ""

    def __post_init__(self):
        if not self.device:
            raise ValueError("device label must be non-empty")
        if self.mode not in _MODES:
            raise ValueError(f"mode must be one of {_MODES}, got {self.mode!r}")
        if self.frames < 1:
            raise ValueError(f"frames must be >= 1, got {self.frames}")


def aggregate(records: list[FrameRecord], *, device: str, mode: str,
              resolution: tuple[int, int], notes: str = "") -> BenchReport:
    """Fold measured frame records into per-stage statistics and throughput.

    Throughput counts measured frames over the wall span from the earliest
    stage start to the latest stage end, so pipelined overlap shows up as
    higher fps rather than shorter per-frame totals.
    """
    if not records:
        raise ValueError("aggregate needs at least one record")
    span_s = max(r.end_s for r in records) - min(r.start_s for r in records)
    if span_s <= 0:
        raise ValueError("records span no wall time")
    return BenchReport(
        device=device,
        mode=mode,
        resolution=resolution,
        frames=len(records),
        pre=StageStats.from_samples([r.pre_ms for r in records]),
        infer=StageStats.from_samples([r.infer_ms for r in records]),
        post=StageStats.from_samples([r.post_ms for r in records]),
        total=StageStats.from_samples([r.total_ms for r in records]),
        throughput_fps=len(records) / span_s,
        notes=notes,
    )


def render_table2(reports: list[BenchReport]) -> str:
    """Render the runtime table: mean per-stage latencies, the source
    resolution, and the observed total-latency range per device row."""
    if not reports:
        raise ValueError("render_table2 needs at least one report")
    lines = ["Device | Pre (ms) | Infer (ms) | Post (ms) | Res (px) | Total (ms) | Notes"]
    for r in reports:
        res = f"{r.resolution[0]}×{r.resolution[1]}"
        total = f"{r.total.min_ms:.1f}–{r.total.max_ms:.1f}"
        lines.append(" | ".join([
            r.device, f"{r.pre.mean_ms:.1f}", f"{r.infer.mean_ms:.1f}",
            f"{r.post.mean_ms:.1f}", res, total, r.notes,
        ]))
    return "\n".join(lines)


def _stats_to_dict(s: StageStats) -> dict:
    return {"mean_ms": s.mean_ms, "median_ms": s.median_ms, "p95_ms": s.p95_ms,
            "min_ms": s.min_ms, "max_ms": s.max_ms}


def report_to_json(report: BenchReport) -> str:
    payload = {
        "device": report.device,
        "mode": report.mode,
        "resolution": list(report.resolution),
        "frames": report.frames,
        "pre": _stats_to_dict(report.pre),
        "infer": _stats_to_dict(report.infer),
        "post": _stats_to_dict(report.post),
        "total": _stats_to_dict(report.total),
        "throughput_fps": report.throughput_fps,
        "notes": report.notes,
    }
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def report_from_json(text: str) -> BenchReport:
    try:
        payload = json.loads(text)
        return BenchReport(
            device=payload["device"],
            mode=payload["mode"],
            resolution=tuple(payload["resolution"]),
            frames=payload["frames"],
            pre=StageStats(**payload["pre"]),
            infer=StageStats(**payload["infer"]),
            post=StageStats(**payload["post"]),
            total=StageStats(**payload["total"]),
            throughput_fps=payload["throughput_fps"],
            notes=payload.get("notes", ""),
        )
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise DataError(f"bad benchmark JSON: {exc}") from exc
