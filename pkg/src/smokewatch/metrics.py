"""Classification and detection metrics.

Covers the confusion-matrix family (accuracy, precision, recall, F1) and
detection quality via IoU matching and mAP@50 with all-point interpolated
average precision. Also owns the plain-text detection / ground-truth file
formats and the results-table renderer.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError

Box = tuple[float, float, float, float]  # (cx, cy, w, h), normalized


@dataclass
class Detection:
    image_id: str
    class_id: int
    confidence: float
    box: Box

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must be in [0, 1], got {self.confidence}")
        if self.class_id < 0:
            raise ValueError(f"class_id must be >= 0, got {self.class_id}")


@dataclass
class GroundTruth:
    image_id: str
    class_id: int
    box: Box

    def __post_init__(self):
        if self.class_id < 0:
            raise ValueError(f"class_id must be >= 0, got {self.class_id}")


def iou(a: Box, b: Box) -> float:
    """Intersection over union of two center-format boxes.

    Degenerate boxes (zero or negative area) always give 0.
    """
    ax0, ay0 = a[0] - a[2] / 2.0, a[1] - a[3] / 2.0
    ax1, ay1 = a[0] + a[2] / 2.0, a[1] + a[3] / 2.0
    bx0, by0 = b[0] - b[2] / 2.0, b[1] - b[3] / 2.0
    bx1, by1 = b[0] + b[2] / 2.0, b[1] + b[3] / 2.0
    area_a = max(0.0, ax1 - ax0) * max(0.0, ay1 - ay0)
    area_b = max(0.0, bx1 - bx0) * max(0.0, by1 - by0)
    if area_a <= 0.0 or area_b <= 0.0:
        return 0.0
    iw = min(ax1, bx1) - max(ax0, bx0)
    ih = min(ay1, by1) - max(ay0, by0)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    return inter / (area_a + area_b - inter)


@dataclass
class MatchResult:
    """Greedy matching outcome: detections in confidence-descending order with
    their TP/FP flags, plus the confusion counts."""

    ordered: list[Detection]
    is_tp: list[bool]
    true_positives: int
    false_positives: int
    false_negatives: int


def match_detections(detections: list[Detection], ground_truths: list[GroundTruth],
                     iou_threshold: float = 0.5) -> MatchResult:
    """Match detections to ground truth greedily by descending confidence.

    A detection is a true positive when some unclaimed ground-truth box of
    the same class in the same image overlaps it with IoU >= threshold; each
    ground truth can be claimed once. Confidence ties keep input order.
    """
    if not 0.0 < iou_threshold <= 1.0:
        raise ValueError(f"iou_threshold must be in (0, 1], got {iou_threshold}")
    order = sorted(range(len(detections)), key=lambda i: -detections[i].confidence)
    gt_by_key: dict[tuple[str, int], list[int]] = {}
    for j, gt in enumerate(ground_truths):
        gt_by_key.setdefault((gt.image_id, gt.class_id), []).append(j)
    claimed = [False] * len(ground_truths)

    ordered, is_tp, tp = [], [], 0
    for i in order:
        det = detections[i]
        best_iou, best_j = 0.0, -1
        for j in gt_by_key.get((det.image_id, det.class_id), []):
            if claimed[j]:
                continue
            overlap = iou(det.box, ground_truths[j].box)
            if overlap >= iou_threshold and overlap > best_iou:
                best_iou, best_j = overlap, j
        hit = best_j >= 0
        if hit:
            claimed[best_j] = True
            tp += 1
        ordered.append(det)
        is_tp.append(hit)
    return MatchResult(
        ordered=ordered,
        is_tp=is_tp,
        true_positives=tp,
        false_positives=len(detections) - tp,
        false_negatives=len(ground_truths) - tp,
    )


def precision_recall_f1(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    """Confusion counts -> (precision, recall, f1), each 0 when undefined."""
    if min(tp, fp, fn) < 0:
        raise ValueError(f"counts must be >= 0, got tp={tp} fp={fp} fn={fn}")
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return precision, recall, f1


def accuracy(predicted: list[int], actual: list[int]) -> float:
    if len(predicted) != len(actual):
        raise ValueError(f"length mismatch: {len(predicted)} predictions vs {len(actual)} labels")
    if not predicted:
        raise ValueError("accuracy needs at least one sample")
    return sum(p == a for p, a in zip(predicted, actual)) / len(predicted)


def binary_confusion(predicted: list[int], actual: list[int],
                     positive_class: int = 0) -> tuple[int, int, int]:
    """Classification (tp, fp, fn) counts treating one class as positive."""
    if len(predicted) != len(actual):
        raise ValueError(f"length mismatch: {len(predicted)} predictions vs {len(actual)} labels")
    tp = sum(p == positive_class and a == positive_class for p, a in zip(predicted, actual))
    fp = sum(p == positive_class and a != positive_class for p, a in zip(predicted, actual))
    fn = sum(p != positive_class and a == positive_class for p, a in zip(predicted, actual))
    return tp, fp, fn


def average_precision(is_tp: list[bool], num_gt: int) -> float:
    """All-point interpolated AP from confidence-ordered TP/FP flags.

    Precision is replaced by its running maximum from the right (the envelope)
    and integrated over recall. No ground truth means no recall axis: 0.
    """
    if num_gt < 0:
        raise ValueError(f"num_gt must be >= 0, got {num_gt}")
    if num_gt == 0:
        return 0.0
    if not is_tp:
        return 0.0
    tps = np.cumsum(np.asarray(is_tp, dtype=np.float64))
    ranks = np.arange(1, len(is_tp) + 1, dtype=np.float64)
    precision = tps / ranks
    recall = tps / num_gt
    # envelope: precision at recall r is the best precision at any recall >= r
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    ap = 0.0
    prev_recall = 0.0
    for k in range(len(is_tp)):
        if is_tp[k]:
            ap += (recall[k] - prev_recall) * envelope[k]
            prev_recall = recall[k]
    return float(ap)


def map50(detections: list[Detection], ground_truths: list[GroundTruth],
          iou_threshold: float = 0.5) -> tuple[float, dict[int, float]]:
    """Mean of per-class AP at the given IoU threshold.

    Classes are taken from the union of detection and ground-truth labels;
    classes with no ground truth are excluded from the mean (their AP is
    undefined). If no class has ground truth the mean itself is undefined.
    """
    classes = sorted({d.class_id for d in detections} | {g.class_id for g in ground_truths})
    per_class: dict[int, float] = {}
    for c in classes:
        dets_c = [d for d in detections if d.class_id == c]
        gts_c = [g for g in ground_truths if g.class_id == c]
        if not gts_c:
            continue
        result = match_detections(dets_c, gts_c, iou_threshold)
        per_class[c] = average_precision(result.is_tp, len(gts_c))
    if not per_class:
        raise ValueError("mAP is undefined: no class has ground-truth boxes")
    return sum(per_class.values()) / len(per_class), per_class


# ---------------------------------------------------------------------------
# Report and rendering
# ---------------------------------------------------------------------------


@dataclass
class MetricsReport:
    model: str
    precision: float
    recall: float
    f1: float
    accuracy: float | None = None
    map50: float | None = None
    per_class_ap: dict[int, float] = field(default_factory=dict)

    def __post_init__(self):
        if not self.model:
            raise ValueError("model name must be non-empty")


def _fmt_pct(value: float | None) -> str:
    return "-" if value is None else f"{100.0 * value:.2f}"


def render_table1(reports: list[MetricsReport]) -> str:
    """Render the headline results table.

    One line per model: name then accuracy, precision, recall, F1 and mAP@50
    as percentages with two decimals, single-space separated; missing values
    render as '-'.
    """
    if not reports:
        raise ValueError("render_table1 needs at least one report")
    lines = ["Model Acc Prec Rec F1 mAP@50"]
    for r in reports:
        cells = [_fmt_pct(r.accuracy), _fmt_pct(r.precision), _fmt_pct(r.recall),
                 _fmt_pct(r.f1), _fmt_pct(r.map50)]
        lines.append(r.model + " " + " ".join(cells))
    return "\n".join(lines)


def report_to_json(report: MetricsReport) -> str:
    payload = {
        "model": report.model,
        "accuracy": report.accuracy,
        "precision": report.precision,
        "recall": report.recall,
        "f1": report.f1,
        "map50": report.map50,
        "per_class_ap": {str(k): v for k, v in sorted(report.per_class_ap.items())},
    }
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def report_from_json(text: str) -> MetricsReport:
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataError(f"bad metrics JSON: {exc}") from exc
    try:
        return MetricsReport(
            model=payload["model"],
            precision=payload["precision"],
            recall=payload["recall"],
            f1=payload["f1"],
            accuracy=payload.get("accuracy"),
            map50=payload.get("map50"),
            per_class_ap={int(k): float(v) for k, v in payload.get("per_class_ap", {}).items()},
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"bad metrics JSON: {exc}") from exc


# ---------------------------------------------------------------------------
# Detection / ground-truth files
# ---------------------------------------------------------------------------


def save_detections(detections: list[Detection], path) -> None:
    """One 'image_id class_id confidence cx cy w h' line per detection."""
    lines = []
    for d in detections:
        lines.append(f"{d.image_id} {d.class_id} {d.confidence!r} "
                     + " ".join(repr(v) for v in d.box))
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def load_detections(path) -> list[Detection]:
    p = Path(path)
    if not p.is_file():
        raise DataError(f"{path}: no such file")
    out = []
    for lineno, line in enumerate(p.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 7:
            raise DataError(
                f"{path}:{lineno}: expected 'image_id class_id confidence cx cy w h'"
            )
        try:
            out.append(Detection(parts[0], int(parts[1]), float(parts[2]),
                                 tuple(float(v) for v in parts[3:])))
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from exc
    return out


def save_ground_truths(ground_truths: list[GroundTruth], path) -> None:
    """One 'image_id class_id cx cy w h' line per ground-truth box."""
    lines = []
    for g in ground_truths:
        lines.append(f"{g.image_id} {g.class_id} " + " ".join(repr(v) for v in g.box))
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def load_ground_truths(path) -> list[GroundTruth]:
    p = Path(path)
    if not p.is_file():
        raise DataError(f"{path}: no such file")
    out = []
    for lineno, line in enumerate(p.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 6:
            raise DataError(f"{path}:{lineno}: expected 'image_id class_id cx cy w h'")
        try:
            out.append(GroundTruth(parts[0], int(parts[1]),
                                   tuple(float(v) for v in parts[2:])))
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from exc
    return out
