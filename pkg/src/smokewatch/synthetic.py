"""Seeded synthetic imagery for end-to-end runs without a real corpus.

Class 0 images carry a bright patch on a mid-gray background, class 1 a dark
patch, so a small network can separate them quickly. The patch rectangle is
also available as a normalized box, which makes the corpus usable for the
detection-metrics tooling.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .data import Annotation, DatasetManifest, ManifestEntry, save_manifest, save_ppm, to_tensor
from .metrics import Detection, GroundTruth
from .tensor import Tensor


def make_image(class_id: int, size: int, seed: int) -> tuple[np.ndarray, tuple[float, float, float, float]]:
    """One synthetic image plus the normalized (cx, cy, w, h) of its patch."""
    if class_id not in (0, 1):
        raise ValueError(f"synthetic classes are 0 and 1, got {class_id}")
    if size < 8:
        raise ValueError(f"size must be >= 8, got {size}")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, class_id])))
    img = rng.integers(100, 156, size=(size, size, 3), dtype=np.uint8)
    side = int(rng.integers(size // 4, size // 2 + 1))
    x0 = int(rng.integers(0, size - side + 1))
    y0 = int(rng.integers(0, size - side + 1))
    if class_id == 0:
        patch = rng.integers(205, 256, size=(side, side, 3), dtype=np.uint8)
    else:
        patch = rng.integers(0, 51, size=(side, side, 3), dtype=np.uint8)
    img[y0:y0 + side, x0:x0 + side] = patch
    box = ((x0 + side / 2) / size, (y0 + side / 2) / size, side / size, side / size)
    return img, box


def make_samples(count: int, size: int, seed: int = 0) -> list[tuple[Tensor, int]]:
    """Alternating-class (tensor, label) pairs ready for training."""
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    samples = []
    for i in range(count):
        label = i % 2
        img, _ = make_image(label, size, seed + i)
        samples.append((to_tensor(img), label))
    return samples


def write_corpus(root, count: int, size: int, seed: int = 0) -> Path:
    """Write count synthetic PPMs plus a manifest; returns the manifest path."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    entries = []
    for i in range(count):
        label = i % 2
        img, box = make_image(label, size, seed + i)
        name = f"synthetic_{i:04d}.ppm"
        save_ppm(img, root / name)
        entries.append(ManifestEntry(name, Annotation(label, box)))
    manifest_path = root / "manifest.tsv"
    save_manifest(DatasetManifest(entries), manifest_path)
    return manifest_path


def corpus_ground_truths(manifest: DatasetManifest) -> list[GroundTruth]:
    """Ground-truth boxes for every manifest entry that has one."""
    out = []
    for entry in manifest:
        if entry.annotation.box is not None:
            out.append(GroundTruth(entry.path, entry.annotation.class_id,
                                   entry.annotation.box))
    return out


def jittered_detections(ground_truths: list[GroundTruth], seed: int = 0,
                        jitter: float = 0.02, drop_rate: float = 0.1) -> list[Detection]:
    """Simulated detector output: ground truth with box jitter, random
    confidences, and a fraction of boxes dropped."""
    if not 0.0 <= drop_rate < 1.0:
        raise ValueError(f"drop_rate must be in [0, 1), got {drop_rate}")
    rng = np.random.Generator(np.random.PCG64(seed))
    out = []
    for gt in ground_truths:
        if rng.random() < drop_rate:
            continue
        cx, cy, w, h = gt.box
        cx = float(np.clip(cx + rng.uniform(-jitter, jitter), 0.0, 1.0))
        cy = float(np.clip(cy + rng.uniform(-jitter, jitter), 0.0, 1.0))
        confidence = float(rng.uniform(0.3, 1.0))
        out.append(Detection(gt.image_id, gt.class_id, confidence, (cx, cy, w, h)))
    return out
