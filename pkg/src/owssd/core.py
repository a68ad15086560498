"""Geometric primitives and label-space types used across the package.

Boxes live in continuous corner coordinates (x1, y1, x2, y2) with the
origin at the top-left; a box is valid only if x2 > x1 and y2 > y1, so
areas are always positive and IoU is well defined.
"""

from __future__ import annotations

import math
import numbers
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from .errors import InputError, InvalidBoxError

UNKNOWN_LABEL = "unknown"


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box with strictly positive width and height."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self) -> None:
        vals = (self.x1, self.y1, self.x2, self.y2)
        # numbers.Real admits numpy scalars; bool sneaks in as an int otherwise
        if not all(isinstance(v, numbers.Real) and not isinstance(v, bool)
                   and math.isfinite(v) for v in vals):
            raise InvalidBoxError(f"box coordinates must be finite numbers, got {vals!r}")
        if min(vals) < 0:
            raise InvalidBoxError(f"box coordinates must be non-negative, got {vals!r}")
        if not (self.x2 > self.x1 and self.y2 > self.y1):
            raise InvalidBoxError(
                f"degenerate box: need x2 > x1 and y2 > y1, got {vals!r}"
            )
        for name, v in zip(("x1", "y1", "x2", "y2"), vals):
            object.__setattr__(self, name, float(v))

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)

    def as_list(self) -> list[float]:
        return [float(self.x1), float(self.y1), float(self.x2), float(self.y2)]


@dataclass(frozen=True)
class ScoredBox:
    """A box with a confidence score and an optional class label."""

    box: BoundingBox
    score: float
    class_label: Optional[str] = None

    def __post_init__(self) -> None:
        if not (isinstance(self.score, (int, float)) and math.isfinite(self.score)):
            raise InputError(f"score must be a finite number, got {self.score!r}")
        if not 0.0 <= self.score <= 1.0:
            raise InputError(f"score must lie in [0, 1], got {self.score!r}")
        if self.class_label is not None and not self.class_label:
            raise InputError("class_label must be None or a non-empty string")


@dataclass(frozen=True)
class Detection:
    """A scored box attached to an image."""

    image_id: str
    box: BoundingBox
    score: float
    class_label: Optional[str] = None

    def __post_init__(self) -> None:
        if not self.image_id:
            raise InputError("image_id must be a non-empty string")
        # Reuse ScoredBox validation for score/label.
        ScoredBox(self.box, self.score, self.class_label)

    @property
    def scored(self) -> ScoredBox:
        return ScoredBox(self.box, self.score, self.class_label)


@dataclass(frozen=True)
class ClassCatalog:
    """The fixed set of in-distribution class names plus the open-world label.

    Everything the system cannot attribute to one of ``id_classes`` is
    reported under ``ood_label``.
    """

    id_classes: tuple[str, ...]
    ood_label: str = UNKNOWN_LABEL

    def __post_init__(self) -> None:
        if not self.id_classes:
            raise InputError("catalog needs at least one in-distribution class")
        if any(not isinstance(c, str) or not c for c in self.id_classes):
            raise InputError("class names must be non-empty strings")
        if len(set(self.id_classes)) != len(self.id_classes):
            raise InputError(f"duplicate class names in catalog: {self.id_classes!r}")
        if self.ood_label in self.id_classes:
            raise InputError(
                f"the open-world label {self.ood_label!r} may not double as an ID class"
            )

    def is_id(self, name: str) -> bool:
        return name in self.id_classes

    @property
    def eval_classes(self) -> tuple[str, ...]:
        """All labels that may appear in evaluation: ID classes plus the OOD bucket."""
        return self.id_classes + (self.ood_label,)


@dataclass(frozen=True)
class GroundTruthScene:
    """All annotated boxes of one image, as (box, class name) pairs."""

    image_id: str
    boxes: tuple[tuple[BoundingBox, str], ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        if not self.image_id:
            raise InputError("image_id must be a non-empty string")
        for b, name in self.boxes:
            if not isinstance(b, BoundingBox):
                raise InputError(f"scene boxes must be BoundingBox, got {type(b).__name__}")
            if not name:
                raise InputError("ground-truth class names must be non-empty")

    def class_names(self) -> set[str]:
        return {name for _, name in self.boxes}


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection-over-union of two boxes in [0, 1].

    Uses continuous coordinates: a box's area is (x2-x1)*(y2-y1), so
    iou(a, a) == 1.0 exactly and disjoint boxes score 0.0.
    """
    if not isinstance(a, BoundingBox) or not isinstance(b, BoundingBox):
        raise InputError("iou expects BoundingBox arguments")
    ix1 = max(a.x1, b.x1)
    iy1 = max(a.y1, b.y1)
    ix2 = min(a.x2, b.x2)
    iy2 = min(a.y2, b.y2)
    iw = ix2 - ix1
    ih = iy2 - iy1
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    union = a.area + b.area - inter
    return inter / union


def nms(boxes: Sequence[ScoredBox], iou_threshold: float) -> list[ScoredBox]:
    """Greedy non-maximum suppression.

    Boxes are visited in descending score order, ties broken by input
    index (earlier wins). A box is kept iff its IoU with every
    previously kept box is <= iou_threshold. The result preserves the
    visiting order of the kept boxes.
    """
    if not (isinstance(iou_threshold, (int, float)) and 0.0 <= iou_threshold <= 1.0):
        raise InputError(f"iou_threshold must lie in [0, 1], got {iou_threshold!r}")
    order = sorted(range(len(boxes)), key=lambda i: (-boxes[i].score, i))
    kept: list[ScoredBox] = []
    for i in order:
        cand = boxes[i]
        if all(iou(cand.box, k.box) <= iou_threshold for k in kept):
            kept.append(cand)
    return kept


def group_by_image(detections: Iterable[Detection]) -> dict[str, list[Detection]]:
    """Bucket detections by image id, preserving input order within each image."""
    out: dict[str, list[Detection]] = {}
    for d in detections:
        out.setdefault(d.image_id, []).append(d)
    return out
