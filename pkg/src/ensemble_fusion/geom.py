"""Axis-aligned box geometry in continuous pixel coordinates."""

import math
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from .errors import InvalidRecordError
from .types import BoxArray, Coordinates


@dataclass(frozen=True)
class Box:
    """Rectangle given by its top-left (x1, y1) and bottom-right (x2, y2) corners."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self) -> None:
        if not all(math.isfinite(value) for value in self.coordinates):
            raise InvalidRecordError(f"Box coordinates must be finite, got {self.coordinates}")
        if self.x1 > self.x2 or self.y1 > self.y2:
            raise InvalidRecordError(f"Box corners are inverted: {self.coordinates}")

    @classmethod
    def from_xywh(cls, x: float, y: float, width: float, height: float) -> "Box":
        """Build a box from the COCO ``[x, y, width, height]`` form."""
        return cls(x, y, x + width, y + height)

    def to_xywh(self) -> Tuple[float, float, float, float]:
        return (self.x1, self.y1, self.x2 - self.x1, self.y2 - self.y1)

    @property
    def coordinates(self) -> Coordinates:
        return (self.x1, self.y1, self.x2, self.y2)

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1


def area(box: Box) -> float:
    return (box.x2 - box.x1) * (box.y2 - box.y1)


def intersection(a: Box, b: Box) -> float:
    width = max(0.0, min(a.x2, b.x2) - max(a.x1, b.x1))
    height = max(0.0, min(a.y2, b.y2) - max(a.y1, b.y1))
    return width * height


def iou(a: Box, b: Box) -> float:
    """Intersection over union; 0 when both boxes are degenerate."""
    inter = intersection(a, b)
    union = area(a) + area(b) - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def as_array(boxes: Sequence[Box]) -> BoxArray:
    """Stack boxes into an ``(n, 4)`` float64 array."""
    if not boxes:
        return np.zeros((0, 4), dtype=np.float64)
    return np.array([box.coordinates for box in boxes], dtype=np.float64)


def iou_matrix(a: BoxArray, b: BoxArray) -> BoxArray:
    """Pairwise IoU between the rows of two ``(n, 4)`` and ``(m, 4)`` corner arrays.

    The arithmetic mirrors `iou` step by step, so entries are bit-identical to the scalar version.
    """
    a = np.asarray(a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 4)
    width = np.maximum(0.0, np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0]))
    height = np.maximum(0.0, np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1]))
    inter = width * height
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    out = np.zeros_like(inter)
    np.divide(inter, union, out=out, where=union > 0.0)
    return out
