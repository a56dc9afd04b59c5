"""Axis-aligned pixel boxes and overlap arithmetic.

Boxes are the currency every pipeline stage trades in.  Coordinates are
integer pixels with the origin at the top-left; ``x_max``/``y_max`` are
exclusive, so a 10x10 patch at the origin is ``(0, 0, 10, 10)`` and two
boxes that merely touch along an edge have zero intersection area.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

from .errors import InputError


@dataclass(frozen=True)
class BoundingBox:
    x_min: int
    y_min: int
    x_max: int
    y_max: int
    label: Optional[str] = None
    score: Optional[float] = None
    feature: Optional[tuple[float, ...]] = None

    @property
    def width(self) -> int:
        return self.x_max - self.x_min

    @property
    def height(self) -> int:
        return self.y_max - self.y_min

    @property
    def area(self) -> int:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return ((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)

    def shifted(self, dx: int, dy: int) -> "BoundingBox":
        return replace(
            self,
            x_min=self.x_min + dx,
            y_min=self.y_min + dy,
            x_max=self.x_max + dx,
            y_max=self.y_max + dy,
        )


def check_box(box: BoundingBox, context: str = "box") -> BoundingBox:
    """Validate ingestion invariants; interior stages (e.g. tracker
    predictions that run off-frame) construct boxes without this gate."""
    if not (box.x_min < box.x_max and box.y_min < box.y_max):
        raise InputError(f"{context}: degenerate extent {box.x_min, box.y_min, box.x_max, box.y_max}")
    if box.x_min < 0 or box.y_min < 0:
        raise InputError(f"{context}: negative coordinates {box.x_min, box.y_min}")
    if box.score is not None and not (0.0 <= box.score <= 1.0):
        raise InputError(f"{context}: score {box.score} outside [0, 1]")
    return box


def intersection_area(a: BoundingBox, b: BoundingBox) -> int:
    iw = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    ih = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if iw <= 0 or ih <= 0:
        return 0
    return iw * ih


def overlaps(a: BoundingBox, b: BoundingBox) -> bool:
    return intersection_area(a, b) > 0


def iou(a: BoundingBox, b: BoundingBox) -> float:
    inter = intersection_area(a, b)
    union = a.area + b.area - inter
    return inter / union if union > 0 else 0.0
