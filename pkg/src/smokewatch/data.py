"""Dataset preparation: image I/O, letterbox resizing, the rotation/exposure/
noise augmentations, manifest files, and deterministic splitting.

Images are numpy (H, W, 3) uint8 RGB arrays. Binary PPM (P6) is the native
format; PNG works when Pillow is installed. All randomness is driven by
explicit seeds, so every operation here is reproducible byte for byte.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ImageFormatError, ManifestError
from .tensor import Tensor, as_tensor

PAD_GRAY = 114  # conventional letterbox/rotation fill


def _check_image(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3 or img.dtype != np.uint8:
        raise ValueError(f"image must be (H, W, 3) uint8, got {img.shape} {img.dtype}")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise ValueError(f"image extents must be >= 1, got {img.shape}")
    return img


# ---------------------------------------------------------------------------
# Image files
# ---------------------------------------------------------------------------

_WHITESPACE = b" \t\r\n\v\f"


def _ppm_token(data: bytes, pos: int, path: str) -> tuple[bytes, int]:
    while pos < len(data):
        c = data[pos:pos + 1]
        if c in (b"#",):
            while pos < len(data) and data[pos:pos + 1] != b"\n":
                pos += 1
        elif c in _WHITESPACE:
            pos += 1
        else:
            break
    if pos >= len(data):
        raise ImageFormatError(f"{path}: header ends early at byte offset {pos}")
    start = pos
    while pos < len(data) and data[pos:pos + 1] not in _WHITESPACE:
        pos += 1
    return data[start:pos], pos


def _ppm_int(data: bytes, pos: int, path: str, what: str) -> tuple[int, int]:
    token, end = _ppm_token(data, pos, path)
    if not token.isdigit():
        raise ImageFormatError(
            f"{path}: expected {what} at byte offset {end - len(token)}, got {token!r}"
        )
    return int(token), end


def load_ppm(path) -> np.ndarray:
    """Decode a binary PPM (P6) file into an (H, W, 3) uint8 array."""
    with open(path, "rb") as f:
        data = f.read()
    magic, pos = _ppm_token(data, 0, str(path))
    if magic != b"P6":
        raise ImageFormatError(f"{path}: bad magic {magic!r} at byte offset 0, expected b'P6'")
    width, pos = _ppm_int(data, pos, str(path), "width")
    height, pos = _ppm_int(data, pos, str(path), "height")
    maxval, pos = _ppm_int(data, pos, str(path), "maxval")
    if width < 1 or height < 1:
        raise ImageFormatError(f"{path}: dimensions must be >= 1, got {width}x{height}")
    if maxval != 255:
        raise ImageFormatError(f"{path}: only maxval 255 is supported, got {maxval}")
    if pos >= len(data) or data[pos:pos + 1] not in _WHITESPACE:
        raise ImageFormatError(f"{path}: expected whitespace after maxval at byte offset {pos}")
    pos += 1  # exactly one whitespace byte separates header and payload
    need = width * height * 3
    if len(data) - pos < need:
        raise ImageFormatError(
            f"{path}: truncated pixel data at byte offset {pos}: "
            f"need {need} bytes, found {len(data) - pos}"
        )
    pixels = np.frombuffer(data, dtype=np.uint8, count=need, offset=pos)
    return pixels.reshape(height, width, 3).copy()


def save_ppm(img: np.ndarray, path) -> None:
    img = _check_image(img)
    h, w = img.shape[:2]
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(np.ascontiguousarray(img).tobytes())


def load_image(path) -> np.ndarray:
    """Load a PPM (always) or PNG (requires Pillow) image."""
    p = Path(path)
    if not p.is_file():
        raise ImageFormatError(f"{path}: no such file")
    if p.suffix.lower() == ".png":
        return _load_png(p)
    return load_ppm(p)


def save_image(img: np.ndarray, path) -> None:
    p = Path(path)
    if p.suffix.lower() == ".png":
        _save_png(_check_image(img), p)
    else:
        save_ppm(img, p)


def _pillow():
    try:
        from PIL import Image
    except ImportError as exc:  # pragma: no cover - depends on install extras
        raise ImageFormatError("PNG support requires Pillow (pip install smokewatch[png])") from exc
    return Image


def _load_png(path: Path) -> np.ndarray:
    Image = _pillow()
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("RGB"), dtype=np.uint8).copy()
    except Exception as exc:
        raise ImageFormatError(f"{path}: cannot decode PNG: {exc}") from exc


def _save_png(img: np.ndarray, path: Path) -> None:
    Image = _pillow()
    Image.fromarray(img, mode="RGB").save(path)


# ---------------------------------------------------------------------------
# Geometry and photometry
# ---------------------------------------------------------------------------


def _bilinear(img: np.ndarray, xs: np.ndarray, ys: np.ndarray,
              fill: int | None) -> np.ndarray:
    """Sample img at float coordinates (xs, ys).

    With fill=None, coordinates are clamped to the border (used by resize);
    otherwise samples outside the source take the fill gray value.
    """
    h, w = img.shape[:2]
    if fill is not None:
        eps = 1e-6
        valid = (xs >= -eps) & (xs <= w - 1 + eps) & (ys >= -eps) & (ys <= h - 1 + eps)
    xs = np.clip(xs, 0.0, w - 1.0)
    ys = np.clip(ys, 0.0, h - 1.0)
    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (xs - x0)[..., None]
    fy = (ys - y0)[..., None]
    p = img.astype(np.float64)
    top = p[y0, x0] * (1.0 - fx) + p[y0, x1] * fx
    bot = p[y1, x0] * (1.0 - fx) + p[y1, x1] * fx
    out = top * (1.0 - fy) + bot * fy
    if fill is not None:
        out[~valid] = float(fill)
    return np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)


@dataclass
class LetterboxResult:
    """Resized-and-padded image plus the mapping back to source coordinates."""

    image: np.ndarray
    scale: float
    pad_x: int
    pad_y: int


def letterbox_resize(img: np.ndarray, target: int) -> LetterboxResult:
    """Aspect-preserving bilinear resize into a target x target gray canvas.

    The content is centered; leftover space is filled with gray 114. The
    returned scale and pad offsets map source boxes onto the output.
    """
    img = _check_image(img)
    if target < 1:
        raise ValueError(f"target must be >= 1, got {target}")
    h, w = img.shape[:2]
    scale = min(target / w, target / h)
    new_w = max(1, round(w * scale))
    new_h = max(1, round(h * scale))
    if (new_w, new_h) == (w, h):
        content = img
    else:
        xs = (np.arange(new_w, dtype=np.float64) + 0.5) * (w / new_w) - 0.5
        ys = (np.arange(new_h, dtype=np.float64) + 0.5) * (h / new_h) - 0.5
        content = _bilinear(img, *np.meshgrid(xs, ys), fill=None)
    pad_x = (target - new_w) // 2
    pad_y = (target - new_h) // 2
    canvas = np.full((target, target, 3), PAD_GRAY, dtype=np.uint8)
    canvas[pad_y:pad_y + new_h, pad_x:pad_x + new_w] = content
    return LetterboxResult(canvas, scale, pad_x, pad_y)


def rotate(img: np.ndarray, degrees: float, fill: int = PAD_GRAY) -> np.ndarray:
    """Rotate counter-clockwise about the image center with bilinear sampling.

    Output keeps the input dimensions; samples falling outside the source
    take the fill gray value.
    """
    img = _check_image(img)
    if not math.isfinite(degrees):
        raise ValueError(f"rotation angle must be finite, got {degrees}")
    h, w = img.shape[:2]
    theta = math.radians(degrees)
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    xs, ys = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    dx, dy = xs - cx, ys - cy
    src_x = cos_t * dx - sin_t * dy + cx
    src_y = sin_t * dx + cos_t * dy + cy
    return _bilinear(img, src_x, src_y, fill=fill)


def adjust_exposure(img: np.ndarray, gain: float) -> np.ndarray:
    """Scale every channel by gain, round half up, clamp to [0, 255]."""
    img = _check_image(img)
    if not gain > 0:
        raise ValueError(f"exposure gain must be > 0, got {gain}")
    scaled = np.floor(img.astype(np.float64) * gain + 0.5)
    return np.clip(scaled, 0, 255).astype(np.uint8)


def inject_noise(img: np.ndarray, rate: float, seed: int) -> np.ndarray:
    """Salt-and-pepper noise: each pixel is independently selected with
    probability rate and then set to pure white or pure black, equally likely.
    """
    img = _check_image(img)
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"noise rate must be in [0, 1], got {rate}")
    rng = np.random.Generator(np.random.PCG64(seed))
    h, w = img.shape[:2]
    selected = rng.random((h, w)) < rate
    salt = rng.random((h, w)) < 0.5
    out = img.copy()
    out[selected & salt] = 255
    out[selected & ~salt] = 0
    return out


def to_tensor(img: np.ndarray) -> Tensor:
    """HWC uint8 -> CHW float32 scaled to [0, 1]."""
    img = _check_image(img)
    return as_tensor(img.transpose(2, 0, 1).astype(np.float32) / np.float32(255.0))


def from_tensor(t: Tensor) -> np.ndarray:
    """Inverse of to_tensor: CHW [0, 1] floats back to HWC uint8."""
    t = as_tensor(t)
    if t.ndim != 3 or t.shape[0] != 3:
        raise ValueError(f"expected (3, H, W) tensor, got shape {t.shape}")
    return np.clip(np.floor(t * 255.0 + 0.5), 0, 255).astype(np.uint8).transpose(1, 2, 0)


# ---------------------------------------------------------------------------
# Manifests and annotations
# ---------------------------------------------------------------------------


@dataclass
class Annotation:
    class_id: int
    box: tuple[float, float, float, float] | None = None

    def __post_init__(self):
        if self.class_id < 0:
            raise ValueError(f"class_id must be >= 0, got {self.class_id}")
        if self.box is not None:
            cx, cy, bw, bh = self.box
            if not (0.0 <= cx <= 1.0 and 0.0 <= cy <= 1.0):
                raise ValueError(f"box center must lie in [0, 1], got {self.box}")
            if not (0.0 < bw <= 1.0 and 0.0 < bh <= 1.0):
                raise ValueError(f"box size must lie in (0, 1], got {self.box}")
            self.box = (float(cx), float(cy), float(bw), float(bh))


@dataclass
class ManifestEntry:
    path: str
    annotation: Annotation
    provenance: str = "raw"


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry] = field(default_factory=list)

    def __post_init__(self):
        seen = set()
        for e in self.entries:
            if e.path in seen:
                raise ManifestError(f"duplicate manifest path: {e.path}")
            seen.add(e.path)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)


def save_manifest(manifest: DatasetManifest, path) -> None:
    """Write one tab-separated record per entry: path, class, box ('-' when
    absent), provenance."""
    lines = []
    for e in manifest.entries:
        box = "-" if e.annotation.box is None else ",".join(repr(v) for v in e.annotation.box)
        lines.append(f"{e.path}\t{e.annotation.class_id}\t{box}\t{e.provenance}")
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def load_manifest(path) -> DatasetManifest:
    p = Path(path)
    if not p.is_file():
        raise ManifestError(f"{path}: no such file")
    entries = []
    for lineno, line in enumerate(p.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 4:
            raise ManifestError(f"{path}:{lineno}: expected 4 tab-separated fields, got {len(parts)}")
        entry_path, class_str, box_str, provenance = parts
        try:
            class_id = int(class_str)
        except ValueError:
            raise ManifestError(f"{path}:{lineno}: class_id {class_str!r} is not an integer")
        box = None
        if box_str != "-":
            try:
                vals = tuple(float(v) for v in box_str.split(","))
            except ValueError:
                vals = ()
            if len(vals) != 4:
                raise ManifestError(f"{path}:{lineno}: box must be 'cx,cy,w,h', got {box_str!r}")
            box = vals
        try:
            annotation = Annotation(class_id, box)
        except ValueError as exc:
            raise ManifestError(f"{path}:{lineno}: {exc}") from exc
        entries.append(ManifestEntry(entry_path, annotation, provenance))
    return DatasetManifest(entries)


def save_box_annotations(annotations: list[Annotation], path) -> None:
    """Write the per-image sidecar: one 'class_id cx cy w h' line per object."""
    lines = []
    for a in annotations:
        if a.box is None:
            raise ValueError("sidecar annotations must carry a box")
        lines.append(f"{a.class_id} " + " ".join(repr(v) for v in a.box))
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def load_box_annotations(path) -> list[Annotation]:
    p = Path(path)
    if not p.is_file():
        raise ManifestError(f"{path}: no such file")
    annotations = []
    for lineno, line in enumerate(p.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 5:
            raise ManifestError(f"{path}:{lineno}: expected 'class_id cx cy w h'")
        try:
            annotations.append(Annotation(int(parts[0]), tuple(float(v) for v in parts[1:])))
        except ValueError as exc:
            raise ManifestError(f"{path}:{lineno}: {exc}") from exc
    return annotations


# ---------------------------------------------------------------------------
# Augmentation and splitting
# ---------------------------------------------------------------------------


@dataclass
class AugmentSpec:
    rotation_degrees: tuple[float, float] = (-15.0, 15.0)
    exposure_gain: tuple[float, float] = (0.5, 1.5)
    noise_rate: float = 0.001
    variants_per_image: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.rotation_degrees[0] > self.rotation_degrees[1]:
            raise ValueError(f"empty rotation interval {self.rotation_degrees}")
        if self.exposure_gain[0] > self.exposure_gain[1]:
            raise ValueError(f"empty exposure interval {self.exposure_gain}")
        if self.exposure_gain[0] <= 0:
            raise ValueError(f"exposure gains must be > 0, got {self.exposure_gain}")
        if not 0.0 <= self.noise_rate <= 1.0:
            raise ValueError(f"noise rate must be in [0, 1], got {self.noise_rate}")
        if self.variants_per_image < 0:
            raise ValueError(f"variants_per_image must be >= 0, got {self.variants_per_image}")


@dataclass
class AugmentResult:
    manifest: DatasetManifest
    skipped: list[tuple[str, str]]  # (path, reason) for unreadable sources


def _variant_rng(seed: int, entry_index: int, variant: int) -> np.random.Generator:
    # independent per-(entry, variant) stream so entries can be processed in
    # any order without changing the output
    return np.random.Generator(np.random.PCG64(
        np.random.SeedSequence([seed, entry_index, variant])
    ))


def augment_variant(img: np.ndarray, spec: AugmentSpec, entry_index: int,
                    variant: int) -> tuple[np.ndarray, float, float]:
    """One seeded rotate -> exposure -> noise pass; returns (image, rot, gain)."""
    rng = _variant_rng(spec.seed, entry_index, variant)
    rot = float(rng.uniform(*spec.rotation_degrees))
    gain = float(rng.uniform(*spec.exposure_gain))
    noise_seed = int(rng.integers(0, 2 ** 63))
    out = rotate(img, rot)
    out = adjust_exposure(out, gain)
    out = inject_noise(out, spec.noise_rate, noise_seed)
    return out, rot, gain


def augment_dataset(manifest: DatasetManifest, spec: AugmentSpec,
                    images_root, out_subdir: str = "augmented") -> AugmentResult:
    """Expand the manifest with variants_per_image augmented copies per entry.

    Augmented images are written as PPM under images_root/out_subdir and
    recorded with paths relative to images_root. Unreadable sources are
    skipped and reported in the result, never silently dropped. Output size
    is (readable entries) * (1 + variants_per_image).
    """
    if len(manifest) == 0:
        raise ValueError("augment_dataset requires a non-empty manifest")
    root = Path(images_root)
    out_dir = root / out_subdir
    if spec.variants_per_image > 0:
        out_dir.mkdir(parents=True, exist_ok=True)

    entries: list[ManifestEntry] = []
    skipped: list[tuple[str, str]] = []
    for i, entry in enumerate(manifest):
        src = root / entry.path
        if spec.variants_per_image > 0:
            try:
                img = load_image(src)
            except ImageFormatError as exc:
                skipped.append((entry.path, str(exc)))
                continue
        entries.append(entry)
        for v in range(spec.variants_per_image):
            out, rot, gain = augment_variant(img, spec, i, v)
            stem = Path(entry.path).stem
            name = f"{stem}.aug{v}.ppm"
            save_ppm(out, out_dir / name)
            provenance = (
                f"augmented(kind=rot-exp-noise,rot={rot!r},gain={gain!r},"
                f"rate={spec.noise_rate!r},parent={entry.path})"
            )
            # augmented variants keep the class label; boxes are dropped
            # because rotation is not applied to coordinates
            entries.append(ManifestEntry(
                f"{out_subdir}/{name}", Annotation(entry.annotation.class_id), provenance
            ))
    return AugmentResult(DatasetManifest(entries), skipped)


def split(manifest: DatasetManifest, counts: tuple[int, int, int],
          seed: int) -> tuple[DatasetManifest, DatasetManifest, DatasetManifest]:
    """Seeded uniform shuffle, then contiguous train/val/test assignment."""
    n_train, n_val, n_test = counts
    if min(counts) < 0:
        raise ValueError(f"split counts must be >= 0, got {counts}")
    if n_train + n_val + n_test != len(manifest):
        raise ValueError(
            f"split counts {counts} sum to {n_train + n_val + n_test}, "
            f"but the manifest has {len(manifest)} entries"
        )
    rng = np.random.Generator(np.random.PCG64(seed))
    order = rng.permutation(len(manifest))
    shuffled = [manifest.entries[i] for i in order]
    train = DatasetManifest(shuffled[:n_train])
    val = DatasetManifest(shuffled[n_train:n_train + n_val])
    test = DatasetManifest(shuffled[n_train + n_val:])
    return train, val, test


def resolve_entry_path(manifest_path, entry: ManifestEntry) -> Path:
    """Entry paths are relative to the manifest file's directory."""
    p = Path(entry.path)
    return p if p.is_absolute() else Path(manifest_path).parent / p
