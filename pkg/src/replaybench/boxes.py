"""Box geometry primitives shared by every metric and selection kernel.

Coordinates are continuous pixel values (origin top-left, sub-pixel
allowed). Areas follow the plain (x_max - x_min) * (y_max - y_min)
convention with no +1 pixel term.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

Polygon = Tuple[Tuple[float, float], ...]


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box with strictly positive area."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self) -> None:
        coords = (self.x_min, self.y_min, self.x_max, self.y_max)
        if not all(math.isfinite(c) for c in coords):
            raise ValueError(f"non-finite box coordinates: {coords}")
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(f"degenerate box (zero or negative area): {coords}")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    def as_tuple(self) -> Tuple[float, float, float, float]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)


@dataclass(frozen=True)
class Detection:
    """A predicted box with class and confidence."""

    bbox: BBox
    class_id: int
    confidence: float

    def __post_init__(self) -> None:
        if self.class_id < 0:
            raise ValueError(f"negative class_id: {self.class_id}")
        if not (0.0 <= self.confidence <= 1.0):
            raise ValueError(f"confidence outside [0,1]: {self.confidence}")


@dataclass(frozen=True)
class GroundTruthInstance:
    """A labeled instance; the optional mask must agree with the box.

    When a mask is present its tight bounds must equal the bbox within
    1 pixel per coordinate (the boxes are derived from masks upstream).
    """

    bbox: BBox
    class_id: int
    mask: Optional[Polygon] = None

    def __post_init__(self) -> None:
        if self.class_id < 0:
            raise ValueError(f"negative class_id: {self.class_id}")
        if self.mask is not None:
            object.__setattr__(self, "mask", tuple(tuple(v) for v in self.mask))
            bounds = mask_bounds(self.mask)
            deltas = (
                abs(bounds.x_min - self.bbox.x_min),
                abs(bounds.y_min - self.bbox.y_min),
                abs(bounds.x_max - self.bbox.x_max),
                abs(bounds.y_max - self.bbox.y_max),
            )
            if max(deltas) > 1.0:
                raise ValueError(
                    f"mask bounds {bounds.as_tuple()} disagree with bbox "
                    f"{self.bbox.as_tuple()} by more than 1 pixel"
                )


def iou(a: BBox, b: BBox) -> float:
    """Intersection-over-union of two valid boxes; 0 when disjoint."""
    ix = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    iy = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if ix <= 0.0 or iy <= 0.0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


def mask_bounds(polygon: Sequence[Tuple[float, float]]) -> BBox:
    """Tight axis-aligned bounds of a polygon (min/max over vertices).

    Raises ValueError for polygons with fewer than 3 vertices or whose
    bounds have zero area (e.g. collinear points).
    """
    if len(polygon) < 3:
        raise ValueError(f"polygon needs at least 3 vertices, got {len(polygon)}")
    xs = [p[0] for p in polygon]
    ys = [p[1] for p in polygon]
    x_min, x_max = min(xs), max(xs)
    y_min, y_max = min(ys), max(ys)
    if x_min >= x_max or y_min >= y_max:
        raise ValueError(f"degenerate polygon: bounds ({x_min},{y_min},{x_max},{y_max}) have zero area")
    return BBox(x_min, y_min, x_max, y_max)
