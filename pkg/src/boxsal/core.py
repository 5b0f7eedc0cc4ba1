"""Shared raster and annotation types for box-supervised saliency.

Rasters are plain numpy float64 arrays with values in [0, 1]: ``(H, W)``
for masks and saliency maps, ``(H, W, 3)`` for RGB images.  Box
coordinates are half-open pixel ranges ``[x0, x1) x [y0, y1)``.

All types here are frozen dataclasses; instances are safe to share
between concurrent workers as long as callers treat the wrapped arrays
as read-only.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np


class BoxSalError(Exception):
    """Base class for errors raised by this package."""


class DimensionError(BoxSalError):
    """Shapes or coordinates are inconsistent with the carrying raster."""


class AnnotationError(BoxSalError):
    """An annotation violates the box-supervision protocol."""


class DecodeError(BoxSalError):
    """An image file could not be decoded into a raster."""


class ConfigurationError(BoxSalError):
    """A run was configured inconsistently (missing labels, bad counts)."""


def as_grid(arr, channels: int | None = None, name: str = "grid") -> np.ndarray:
    """Validate ``arr`` as a raster grid and return it as float64.

    ``channels=1`` accepts a 2-D array, ``channels=3`` a 3-D array with a
    trailing axis of length 3; ``channels=None`` accepts either.  Values
    must lie in [0, 1].
    """
    grid = np.asarray(arr, dtype=np.float64)
    if grid.ndim == 2:
        got = 1
    elif grid.ndim == 3 and grid.shape[2] == 3:
        got = 3
    else:
        raise DimensionError(f"{name}: expected (H, W) or (H, W, 3), got shape {grid.shape}")
    if channels is not None and got != channels:
        raise DimensionError(f"{name}: expected {channels} channel(s), got {got}")
    if grid.shape[0] < 1 or grid.shape[1] < 1:
        raise DimensionError(f"{name}: height and width must be >= 1, got {grid.shape[:2]}")
    if grid.size and (grid.min() < 0.0 or grid.max() > 1.0):
        raise DimensionError(f"{name}: values must lie in [0, 1], got range "
                             f"[{grid.min():.6g}, {grid.max():.6g}]")
    return grid


def _check_binary(grid: np.ndarray, name: str) -> None:
    if not np.isin(grid, (0.0, 1.0)).all():
        raise DimensionError(f"{name}: values must be exactly 0 or 1")


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box with half-open pixel coordinates.

    ``(x0, y0)`` is the inclusive top-left corner, ``(x1, y1)`` the
    exclusive bottom-right corner, so the covered area is
    ``(x1 - x0) * (y1 - y0)`` pixels.
    """

    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self) -> None:
        for n, v in (("x0", self.x0), ("y0", self.y0), ("x1", self.x1), ("y1", self.y1)):
            if not isinstance(v, (int, np.integer)):
                raise AnnotationError(f"box coordinate {n} must be an integer, got {v!r}")
        if not (0 <= self.x0 < self.x1):
            raise AnnotationError(f"box requires 0 <= x0 < x1, got x0={self.x0}, x1={self.x1}")
        if not (0 <= self.y0 < self.y1):
            raise AnnotationError(f"box requires 0 <= y0 < y1, got y0={self.y0}, y1={self.y1}")

    @property
    def area(self) -> int:
        return (self.x1 - self.x0) * (self.y1 - self.y0)

    def overlaps(self, other: "BoundingBox") -> bool:
        return (self.x0 < other.x1 and other.x0 < self.x1
                and self.y0 < other.y1 and other.y0 < self.y1)

    def fits_within(self, height: int, width: int) -> bool:
        return self.x1 <= width and self.y1 <= height

    def dilated(self, margin: int, height: int, width: int) -> "BoundingBox":
        """Grow the box by ``margin`` pixels on every side, clipped to the canvas."""
        return BoundingBox(max(0, self.x0 - margin), max(0, self.y0 - margin),
                           min(width, self.x1 + margin), min(height, self.y1 + margin))

    def union(self, other: "BoundingBox") -> "BoundingBox":
        return BoundingBox(min(self.x0, other.x0), min(self.y0, other.y0),
                           max(self.x1, other.x1), max(self.y1, other.y1))


@dataclass(frozen=True)
class BoxAnnotation:
    """Per-image set of pairwise non-overlapping foreground boxes.

    Overlapping salient instances are merged into one box at annotation
    time, so overlap between input boxes signals corrupt data and is
    rejected here.
    """

    boxes: tuple[BoundingBox, ...]
    image_ref: str = ""

    def __post_init__(self) -> None:
        boxes = tuple(self.boxes)
        object.__setattr__(self, "boxes", boxes)
        for i in range(len(boxes)):
            for j in range(i + 1, len(boxes)):
                if boxes[i].overlaps(boxes[j]):
                    raise AnnotationError(
                        f"annotation {self.image_ref!r}: boxes {i} and {j} overlap "
                        f"({boxes[i]} vs {boxes[j]})")


class LabelSource(Enum):
    RAW_BOX = "raw_box"
    GRABCUT = "grabcut"


@dataclass(frozen=True, eq=False)
class PseudoLabel:
    """Per-pixel binary foreground assignment standing in for ground truth."""

    mask: np.ndarray  # (H, W), values in {0, 1}
    source: LabelSource

    def __post_init__(self) -> None:
        mask = as_grid(self.mask, channels=1, name="pseudo-label mask")
        _check_binary(mask, "pseudo-label mask")
        object.__setattr__(self, "mask", mask)


@dataclass(frozen=True, eq=False)
class DatasetRecord:
    """One training/evaluation example: image, box supervision, optional labels."""

    image: np.ndarray  # (H, W, 3)
    annotation: BoxAnnotation
    pseudo_label: PseudoLabel | None = None
    gt: np.ndarray | None = None  # (H, W) binary, evaluation only

    def __post_init__(self) -> None:
        image = as_grid(self.image, channels=3, name="image")
        object.__setattr__(self, "image", image)
        h, w = image.shape[:2]
        for box in self.annotation.boxes:
            if not box.fits_within(h, w):
                raise DimensionError(f"box {box} does not fit a {h}x{w} image")
        if self.pseudo_label is not None and self.pseudo_label.mask.shape != (h, w):
            raise DimensionError(
                f"pseudo-label shape {self.pseudo_label.mask.shape} != image {h}x{w}")
        if self.gt is not None:
            gt = as_grid(self.gt, channels=1, name="gt")
            _check_binary(gt, "gt")
            if gt.shape != (h, w):
                raise DimensionError(f"gt shape {gt.shape} != image {h}x{w}")
            object.__setattr__(self, "gt", gt)

    @property
    def height(self) -> int:
        return self.image.shape[0]

    @property
    def width(self) -> int:
        return self.image.shape[1]


def rasterize_boxes(annotation: BoxAnnotation, height: int, width: int) -> np.ndarray:
    """Render the annotation as a binary (H, W) mask: 1 inside any box."""
    mask = np.zeros((height, width), dtype=np.float64)
    for box in annotation.boxes:
        if not box.fits_within(height, width):
            raise DimensionError(f"box {box} does not fit a {height}x{width} grid")
        mask[box.y0:box.y1, box.x0:box.x1] = 1.0
    return mask


def count_foreground(annotation: BoxAnnotation, height: int, width: int) -> int:
    """Number of pixels covered by the annotation's boxes.

    Boxes are pairwise non-overlapping, so this is the plain sum of box
    areas; equals ``rasterize_boxes(...).sum()``.
    """
    total = 0
    for box in annotation.boxes:
        if not box.fits_within(height, width):
            raise DimensionError(f"box {box} does not fit a {height}x{width} grid")
        total += box.area
    return total
