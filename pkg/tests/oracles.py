"""Independent oracles used by the test suite.

These deliberately avoid the library's own code paths: gradients come from
central finite differences of the forward functions, and average precision
comes from a brute-force PR-curve enumeration that recounts matches from
scratch for every confidence prefix.
"""

from __future__ import annotations

import numpy as np


def central_difference_grad(f, x: np.ndarray, eps: float = 1e-3) -> np.ndarray:
    """Central finite-difference gradient of scalar-valued f at x.

    Perturbs one element at a time in the array's own dtype (f32 models f32);
    the scalar f itself should accumulate in float64 to keep cancellation
    noise below the comparison tolerances.
    """
    x = np.array(x, copy=True)
    grad = np.zeros(x.shape, dtype=np.float64)
    flat = x.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        f_plus = float(f(x))
        flat[i] = orig - eps
        f_minus = float(f(x))
        flat[i] = orig
        grad.reshape(-1)[i] = (f_plus - f_minus) / (2.0 * eps)
    return grad


def grad_close(analytic, numeric, rtol: float, atol: float = 1e-4) -> bool:
    """Elementwise |a-n| <= atol + rtol*max(|a|,|n|), the usual gradcheck rule."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    return bool(np.all(np.abs(a - n) <= atol + rtol * np.maximum(np.abs(a), np.abs(n))))


def max_relative_error(analytic, numeric, floor: float = 1e-4) -> float:
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom)) if a.size else 0.0


# ---------------------------------------------------------------------------
# Brute-force detection-metric oracle.
#
# Works on plain tuples so it shares no types with the implementation:
#   detection   = (image_id, class_id, confidence, (cx, cy, w, h))
#   groundtruth = (image_id, class_id, (cx, cy, w, h))
# ---------------------------------------------------------------------------


def oracle_iou(a, b) -> float:
    ax1, ay1, ax2, ay2 = a[0] - a[2] / 2, a[1] - a[3] / 2, a[0] + a[2] / 2, a[1] + a[3] / 2
    bx1, by1, bx2, by2 = b[0] - b[2] / 2, b[1] - b[3] / 2, b[0] + b[2] / 2, b[1] + b[3] / 2
    iw = min(ax2, bx2) - max(ax1, bx1)
    ih = min(ay2, by2) - max(ay1, by1)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter
    if union <= 0:
        return 0.0
    return inter / union


def _match_prefix(dets, gts, threshold):
    """Greedy confidence-order matching, recomputed from scratch.

    dets must already be in descending-confidence order. Returns the number
    of true positives among them.
    """
    matched = [False] * len(gts)
    tp = 0
    for det in dets:
        best_iou, best_j = 0.0, -1
        for j, gt in enumerate(gts):
            if matched[j] or gt[0] != det[0] or gt[1] != det[1]:
                continue
            iou = oracle_iou(det[3], gt[2])
            if iou > best_iou:
                best_iou, best_j = iou, j
        if best_j >= 0 and best_iou >= threshold:
            matched[best_j] = True
            tp += 1
    return tp


def oracle_average_precision(dets, gts, threshold=0.5) -> float:
    """AP for a single class via direct PR-curve enumeration.

    For every prefix of the confidence-ranked detections the matching is
    recounted from scratch; the interpolated precision envelope is then
    integrated interval by interval straight from its definition
    P(r) = max{precision_k : recall_k >= r}.
    """
    num_gt = len(gts)
    if num_gt == 0:
        return 0.0
    order = sorted(range(len(dets)), key=lambda i: (-dets[i][2], i))
    ranked = [dets[i] for i in order]
    points = []  # (recall, precision) for each prefix
    for k in range(1, len(ranked) + 1):
        tp = _match_prefix(ranked[:k], gts, threshold)
        points.append((tp / num_gt, tp / k))
    if not points:
        return 0.0
    breaks = sorted({0.0} | {r for r, _ in points})
    ap = 0.0
    for lo, hi in zip(breaks, breaks[1:]):
        env = max((p for r, p in points if r >= hi), default=0.0)
        ap += (hi - lo) * env
    return ap


def oracle_map50(dets, gts, classes, threshold=0.5) -> float:
    """Mean oracle AP over classes that have at least one ground truth."""
    aps = []
    for c in classes:
        class_gts = [g for g in gts if g[1] == c]
        if not class_gts:
            continue
        class_dets = [d for d in dets if d[1] == c]
        aps.append(oracle_average_precision(class_dets, class_gts, threshold))
    if not aps:
        raise ValueError("no class has ground truth")
    return sum(aps) / len(aps)


# ---------------------------------------------------------------------------
# Naive layer oracles: direct-definition implementations in float64, no
# im2col, no GEMM reshaping tricks.
# ---------------------------------------------------------------------------


def naive_conv2d(x, weights, bias, stride: int, padding: int) -> np.ndarray:
    """Cross-correlation computed from its definition with explicit loops."""
    x = np.asarray(x, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64)
    c_in, h, w = x.shape
    c_out, _, k, _ = weights.shape
    if padding:
        x = np.pad(x, ((0, 0), (padding, padding), (padding, padding)))
    h_out = (h + 2 * padding - k) // stride + 1
    w_out = (w + 2 * padding - k) // stride + 1
    out = np.zeros((c_out, h_out, w_out), dtype=np.float64)
    for o in range(c_out):
        for i in range(h_out):
            for j in range(w_out):
                window = x[:, i * stride:i * stride + k, j * stride:j * stride + k]
                out[o, i, j] = np.sum(window * weights[o]) + bias[o]
    return out


def naive_dense(x, weights, bias) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    out = np.asarray(bias, dtype=np.float64).copy()
    for o in range(weights.shape[0]):
        out[o] += float(np.dot(weights[o], x))
    return out
