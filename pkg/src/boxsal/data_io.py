"""Image and annotation persistence plus a synthetic scene generator.

Images are 8-bit grayscale or RGB PNG; loaded values are divided by 255
and saving is the exact inverse for values on the 1/255 grid.
Annotations live in a JSON document (see docs/annotations.md) holding a
``schema_version`` and one record per image.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .core import (AnnotationError, BoundingBox, BoxAnnotation, DatasetRecord,
                   DecodeError, as_grid)

ANNOTATION_SCHEMA_VERSION = 1


def load_image(path) -> np.ndarray:
    """Load an 8-bit grayscale or RGB raster as a [0, 1] float grid."""
    try:
        with Image.open(path) as img:
            img.load()
            mode = img.mode
            if mode not in ("L", "RGB"):
                raise DecodeError(f"{path}: unsupported image mode {mode!r} "
                                  "(need 8-bit L or RGB)")
            arr = np.asarray(img, dtype=np.float64) / 255.0
    except (UnidentifiedImageError, OSError) as exc:
        raise DecodeError(f"{path}: cannot decode image: {exc}") from exc
    return arr


def save_image(grid, path) -> None:
    """Write a grid as 8-bit PNG (grayscale for 2-D, RGB for 3-D)."""
    grid = as_grid(grid, name="grid")
    data = np.round(grid * 255.0).astype(np.uint8)
    mode = "L" if data.ndim == 2 else "RGB"
    Image.fromarray(data, mode=mode).save(path, format="PNG")


def load_annotations(path) -> list[BoxAnnotation]:
    """Parse an annotation file into validated per-image annotations.

    Box quadruples are ``[x0, y0, x1, y1]`` half-open pixel coordinates;
    overlap within a record is rejected.  ``image_ref`` carries the
    record's image path verbatim (resolution against a directory is the
    caller's concern).
    """
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise AnnotationError(f"{path}: cannot parse annotation file: {exc}") from exc
    if not isinstance(data, dict) or "records" not in data:
        raise AnnotationError(f"{path}: missing top-level 'records' list")
    version = data.get("schema_version")
    if version != ANNOTATION_SCHEMA_VERSION:
        raise AnnotationError(f"{path}: unsupported schema_version {version!r}")
    annotations = []
    for i, rec in enumerate(data["records"]):
        try:
            image_path = rec["image_path"]
            boxes = tuple(BoundingBox(int(b[0]), int(b[1]), int(b[2]), int(b[3]))
                          for b in rec["boxes"])
            annotations.append(BoxAnnotation(boxes=boxes, image_ref=image_path))
        except (KeyError, TypeError, IndexError) as exc:
            raise AnnotationError(f"{path}: malformed record {i}: {exc}") from exc
        except AnnotationError as exc:
            raise AnnotationError(f"{path}: record {i}: {exc}") from exc
    return annotations


def save_annotations(annotations, path) -> None:
    records = [{"image_path": ann.image_ref,
                "boxes": [[b.x0, b.y0, b.x1, b.y1] for b in ann.boxes]}
               for ann in annotations]
    payload = {"schema_version": ANNOTATION_SCHEMA_VERSION, "records": records}
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


@dataclass(frozen=True)
class SyntheticSceneSpec:
    """Recipe for one rendered scene with exact ground truth.

    ``color_separation`` is the minimum Euclidean RGB distance enforced
    between sampled instance colors and the background color, recorded so
    tests can reason about contrast.
    """

    height: int = 32
    width: int = 32
    num_instances: int = 1
    shapes: tuple[str, ...] = ("blob",)  # cycled per instance
    # fg palette is bright, bg dark: instances differ from the background in
    # channel-mean intensity too, not only in hue, so intensity-gated losses
    # see the same object boundaries that the color models do
    bg_color: tuple[float, float, float] = (0.05, 0.10, 0.25)
    fg_colors: tuple[tuple[float, float, float], ...] = (
        (0.95, 0.85, 0.35), (0.90, 0.90, 0.40), (0.95, 0.55, 0.40))
    color_jitter: float = 0.05
    color_separation: float = 0.4
    noise_sigma: float = 0.02
    # salient-object sizing: instances cover a sizable fraction of the
    # canvas, keeping foreground/background pixel counts roughly balanced
    min_size: int = 14
    max_size: int = 20
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "shapes", tuple(self.shapes))
        object.__setattr__(self, "fg_colors", tuple(tuple(c) for c in self.fg_colors))
        for s in self.shapes:
            if s not in ("rectangle", "ellipse", "blob"):
                raise ValueError(f"unknown shape {s!r}")
        if self.num_instances < 0:
            raise ValueError("num_instances must be >= 0")
        if not (2 <= self.min_size <= self.max_size):
            raise ValueError("need 2 <= min_size <= max_size")
        if self.max_size > min(self.height, self.width):
            raise ValueError("instances must fit inside the canvas")


def _ellipse_mask(h: int, w: int, cy: float, cx: float, ry: float, rx: float) -> np.ndarray:
    yy, xx = np.mgrid[0:h, 0:w]
    return ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0


def _instance_mask(shape: str, h: int, w: int, rng: np.random.Generator,
                   size_lo: int, size_hi: int) -> np.ndarray:
    eh = int(rng.integers(size_lo, size_hi + 1))
    ew = int(rng.integers(size_lo, size_hi + 1))
    y0 = int(rng.integers(0, h - eh + 1))
    x0 = int(rng.integers(0, w - ew + 1))
    mask = np.zeros((h, w), dtype=bool)
    if shape == "rectangle":
        mask[y0:y0 + eh, x0:x0 + ew] = True
    elif shape == "ellipse":
        mask = _ellipse_mask(h, w, y0 + (eh - 1) / 2, x0 + (ew - 1) / 2,
                             max(eh / 2, 1.0), max(ew / 2, 1.0))
    else:  # blob: union of 3 overlapping ellipses -> non-convex masks
        cy, cx = y0 + (eh - 1) / 2, x0 + (ew - 1) / 2
        for _ in range(3):
            jy = cy + rng.uniform(-eh / 4, eh / 4)
            jx = cx + rng.uniform(-ew / 4, ew / 4)
            ry = max(eh / 2 * rng.uniform(0.5, 1.0), 1.0)
            rx = max(ew / 2 * rng.uniform(0.5, 1.0), 1.0)
            mask |= _ellipse_mask(h, w, jy, jx, ry, rx)
    return mask


def _sample_fg_color(spec: SyntheticSceneSpec, bg: np.ndarray,
                     rng: np.random.Generator) -> np.ndarray:
    for _ in range(64):
        base = np.asarray(spec.fg_colors[rng.integers(len(spec.fg_colors))])
        color = np.clip(base + rng.uniform(-spec.color_jitter, spec.color_jitter, 3), 0, 1)
        if np.linalg.norm(color - bg) >= spec.color_separation:
            return color
    raise ValueError("could not sample a foreground color separated from the background; "
                     "loosen color_separation or the palettes")


def connected_components(mask: np.ndarray) -> list[np.ndarray]:
    """4-connected components of a boolean mask, as boolean masks."""
    mask = np.asarray(mask, dtype=bool)
    seen = np.zeros_like(mask)
    comps = []
    h, w = mask.shape
    for sy in range(h):
        for sx in range(w):
            if not mask[sy, sx] or seen[sy, sx]:
                continue
            comp = np.zeros_like(mask)
            stack = [(sy, sx)]
            seen[sy, sx] = True
            while stack:
                y, x = stack.pop()
                comp[y, x] = True
                for ny, nx in ((y - 1, x), (y + 1, x), (y, x - 1), (y, x + 1)):
                    if 0 <= ny < h and 0 <= nx < w and mask[ny, nx] and not seen[ny, nx]:
                        seen[ny, nx] = True
                        stack.append((ny, nx))
            comps.append(comp)
    return comps


def _tight_box(comp: np.ndarray) -> BoundingBox:
    ys, xs = np.nonzero(comp)
    return BoundingBox(int(xs.min()), int(ys.min()), int(xs.max()) + 1, int(ys.max()) + 1)


def merge_overlapping_boxes(boxes: list[BoundingBox]) -> list[BoundingBox]:
    """Repeatedly union overlapping boxes until the set is pairwise disjoint."""
    boxes = list(boxes)
    changed = True
    while changed:
        changed = False
        for i in range(len(boxes)):
            for j in range(i + 1, len(boxes)):
                if boxes[i].overlaps(boxes[j]):
                    merged = boxes[i].union(boxes[j])
                    boxes = [b for k, b in enumerate(boxes) if k not in (i, j)]
                    boxes.append(merged)
                    changed = True
                    break
            if changed:
                break
    return sorted(boxes, key=lambda b: (b.y0, b.x0, b.y1, b.x1))


def derive_annotation(gt: np.ndarray, image_ref: str = "") -> BoxAnnotation:
    """Tight boxes of the ground truth's connected components, merged."""
    comps = connected_components(gt > 0.5)
    boxes = merge_overlapping_boxes([_tight_box(c) for c in comps])
    return BoxAnnotation(boxes=tuple(boxes), image_ref=image_ref)


def generate_synthetic(spec: SyntheticSceneSpec) -> DatasetRecord:
    """Render a scene, its exact mask, and the derived box annotation."""
    rng = np.random.default_rng(spec.seed)
    h, w = spec.height, spec.width
    bg = np.clip(np.asarray(spec.bg_color)
                 + rng.uniform(-spec.color_jitter, spec.color_jitter, 3), 0, 1)
    image = np.tile(bg, (h, w, 1))
    gt = np.zeros((h, w), dtype=bool)
    for i in range(spec.num_instances):
        shape = spec.shapes[i % len(spec.shapes)]
        mask = _instance_mask(shape, h, w, rng, spec.min_size, spec.max_size)
        color = _sample_fg_color(spec, bg, rng)
        image[mask] = color
        gt |= mask
    if spec.noise_sigma > 0:
        image = np.clip(image + rng.normal(0.0, spec.noise_sigma, image.shape), 0.0, 1.0)
    annotation = derive_annotation(gt.astype(np.float64), image_ref=f"synthetic-{spec.seed}")
    return DatasetRecord(image=image, annotation=annotation, gt=gt.astype(np.float64))
