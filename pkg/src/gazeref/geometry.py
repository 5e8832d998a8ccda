"""Raster masks, axis-aligned boxes and the overlap predicates used by every stage.

Coordinates are integer pixels, origin top-left, boxes are inclusive-exclusive
(x0 <= x1, y0 <= y1).  Sub-pixel inputs are rounded half-to-even before they
reach this module.  Everything here is an immutable value and a pure function.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Iterable, Optional, Sequence

import numpy as np


class GeometryError(ValueError):
    """Raised when a geometric precondition is violated."""


class Side(Enum):
    LEFT = "left"
    RIGHT = "right"
    ABOVE = "above"
    BELOW = "below"


@dataclass(frozen=True, order=True)
class BBox:
    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self) -> None:
        if self.x0 > self.x1 or self.y0 > self.y1:
            raise GeometryError(f"inverted box {self!r}")

    @property
    def width(self) -> int:
        return self.x1 - self.x0

    @property
    def height(self) -> int:
        return self.y1 - self.y0

    def area(self) -> int:
        return self.width * self.height

    def center(self) -> tuple[float, float]:
        return ((self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0)

    def contains_point(self, x: float, y: float) -> bool:
        return self.x0 <= x < self.x1 and self.y0 <= y < self.y1

    def intersect(self, other: "BBox") -> Optional["BBox"]:
        x0 = max(self.x0, other.x0)
        y0 = max(self.y0, other.y0)
        x1 = min(self.x1, other.x1)
        y1 = min(self.y1, other.y1)
        if x1 <= x0 or y1 <= y0:
            return None
        return BBox(x0, y0, x1, y1)

    def expand(self, pad: int) -> "BBox":
        return BBox(self.x0 - pad, self.y0 - pad, self.x1 + pad, self.y1 + pad)

    def clamp(self, width: int, height: int) -> "BBox":
        return BBox(
            min(max(self.x0, 0), width),
            min(max(self.y0, 0), height),
            min(max(self.x1, 0), width),
            min(max(self.y1, 0), height),
        )

    def gap_to(self, other: "BBox") -> float:
        """Euclidean distance between box boundaries (0 when they touch or overlap)."""
        dx = max(self.x0 - other.x1, other.x0 - self.x1, 0)
        dy = max(self.y0 - other.y1, other.y0 - self.y1, 0)
        return float(np.hypot(dx, dy))

    def to_payload(self) -> list[int]:
        return [self.x0, self.y0, self.x1, self.y1]

    @classmethod
    def from_payload(cls, data: Sequence[int]) -> "BBox":
        x0, y0, x1, y1 = (int(v) for v in data)
        return cls(x0, y0, x1, y1)


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union; 0.0 by convention when either box is empty."""
    if a.area() == 0 or b.area() == 0:
        return 0.0
    inter = a.intersect(b)
    if inter is None:
        return 0.0
    ia = inter.area()
    return ia / float(a.area() + b.area() - ia)


@dataclass(frozen=True)
class Mask:
    """Binary raster mask, run-length encoded over row-major pixel indices.

    ``runs`` is a tuple of (start, length) pairs with starts sorted,
    non-overlapping and contained in ``width * height``.
    """

    width: int
    height: int
    runs: tuple[tuple[int, int], ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        total = self.width * self.height
        prev_end = 0
        for start, length in self.runs:
            if length <= 0:
                raise GeometryError("run with non-positive length")
            if start < prev_end:
                raise GeometryError("runs unsorted or overlapping")
            prev_end = start + length
        if self.runs and prev_end > total:
            raise GeometryError("run past end of canvas")

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "Mask":
        arr = np.asarray(arr, dtype=bool)
        if arr.ndim != 2:
            raise GeometryError("mask array must be 2-D")
        height, width = arr.shape
        flat = arr.reshape(-1)
        if not flat.any():
            return cls(width, height, ())
        # run boundaries from the padded diff of the flat bitmap
        padded = np.concatenate(([False], flat, [False]))
        edges = np.flatnonzero(padded[1:] != padded[:-1])
        starts = edges[0::2]
        ends = edges[1::2]
        runs = tuple((int(s), int(e - s)) for s, e in zip(starts, ends))
        mask = cls(width, height, runs)
        cached = arr.copy()
        cached.setflags(write=False)
        mask.__dict__["_array"] = cached
        return mask

    @cached_property
    def _array(self) -> np.ndarray:
        flat = np.zeros(self.width * self.height, dtype=bool)
        for start, length in self.runs:
            flat[start : start + length] = True
        arr = flat.reshape(self.height, self.width)
        arr.setflags(write=False)
        return arr

    def to_array(self) -> np.ndarray:
        return self._array

    def area(self) -> int:
        return sum(length for _, length in self.runs)

    def is_empty(self) -> bool:
        return not self.runs

    def same_canvas(self, other: "Mask") -> bool:
        return self.width == other.width and self.height == other.height

    def intersection_area(self, other: "Mask") -> int:
        if not self.same_canvas(other):
            raise GeometryError("mask canvas dimensions differ")
        if self.is_empty() or other.is_empty():
            return 0
        return int(np.count_nonzero(self.to_array() & other.to_array()))

    def union(self, other: "Mask") -> "Mask":
        if not self.same_canvas(other):
            raise GeometryError("mask canvas dimensions differ")
        return Mask.from_array(self.to_array() | other.to_array())

    def contains_point(self, x: int, y: int) -> bool:
        if not (0 <= x < self.width and 0 <= y < self.height):
            return False
        idx = y * self.width + x
        for start, length in self.runs:
            if start <= idx < start + length:
                return True
            if start > idx:
                return False
        return False

    def to_payload(self) -> dict:
        flat: list[int] = []
        for start, length in self.runs:
            flat.extend((start, length))
        return {"width": self.width, "height": self.height, "runs": flat}

    @classmethod
    def from_payload(cls, data: dict) -> "Mask":
        flat = list(data["runs"])
        if len(flat) % 2 != 0:
            raise GeometryError("run array must hold [start, length] pairs")
        runs = tuple(
            (int(flat[i]), int(flat[i + 1])) for i in range(0, len(flat), 2)
        )
        return cls(int(data["width"]), int(data["height"]), runs)


def mask_to_tight_box(mask: Mask) -> BBox:
    """Minimal box containing every set pixel; error on an empty mask."""
    if mask.is_empty():
        raise GeometryError("tight box of an empty mask")
    arr = mask.to_array()
    rows = np.flatnonzero(arr.any(axis=1))
    cols = np.flatnonzero(arr.any(axis=0))
    return BBox(int(cols[0]), int(rows[0]), int(cols[-1]) + 1, int(rows[-1]) + 1)


def coverage(selection: Mask, target: Mask) -> float:
    """|selection ∩ target| / |target|; 0.0 when the target is empty."""
    if not selection.same_canvas(target):
        raise GeometryError("mask canvas dimensions differ")
    target_area = target.area()
    if target_area == 0:
        return 0.0
    return selection.intersection_area(target) / float(target_area)


def precision(selection: Mask, target: Mask) -> float:
    """|selection ∩ target| / |selection|; 0.0 when the selection is empty."""
    if not selection.same_canvas(target):
        raise GeometryError("mask canvas dimensions differ")
    sel_area = selection.area()
    if sel_area == 0:
        return 0.0
    return selection.intersection_area(target) / float(sel_area)


class CandidateSource(Enum):
    GLOBAL_SEG = "global_seg"
    DETECTOR = "detector"


@dataclass(frozen=True)
class CandidateBox:
    box: BBox
    source: CandidateSource
    id: int
    mask: Optional[Mask] = None
    label: Optional[str] = None

    def __post_init__(self) -> None:
        if self.source is CandidateSource.GLOBAL_SEG and self.mask is None:
            raise GeometryError("global-segmentation candidate without a mask")
        if self.mask is not None and mask_to_tight_box(self.mask) != self.box:
            raise GeometryError("candidate mask tight box differs from box")

    def with_id(self, new_id: int) -> "CandidateBox":
        return CandidateBox(self.box, self.source, new_id, self.mask, self.label)

    def to_payload(self) -> dict:
        payload: dict = {
            "id": self.id,
            "box": self.box.to_payload(),
            "source": self.source.value,
        }
        if self.label is not None:
            payload["label"] = self.label
        if self.mask is not None:
            payload["mask"] = self.mask.to_payload()
        return payload


def _nms_priority(candidate: CandidateBox) -> tuple[int, int, int]:
    source_rank = 0 if candidate.source is CandidateSource.GLOBAL_SEG else 1
    return (source_rank, -candidate.box.area(), candidate.id)


def nms(candidates: Iterable[CandidateBox], iou_threshold: float) -> list[CandidateBox]:
    """Greedy duplicate suppression.

    Mask-bearing (global segmentation) candidates outrank detector boxes, ties
    broken by larger area then lower id; a candidate overlapping an already
    kept one with IoU strictly above the threshold is dropped.
    """
    if not 0.0 < iou_threshold <= 1.0:
        raise GeometryError(f"iou threshold {iou_threshold} outside (0, 1]")
    kept: list[CandidateBox] = []
    for candidate in sorted(candidates, key=_nms_priority):
        if all(iou(candidate.box, k.box) <= iou_threshold for k in kept):
            kept.append(candidate)
    return kept


def side_of(candidate: BBox, reference: BBox, side: Side, alpha: float) -> bool:
    """Whether ``candidate`` lies on ``side`` of ``reference``.

    True when the candidate is entirely past the reference's near edge, or when
    it overlaps the reference along the side's axis but the overlapping margin
    divided by the reference's extent on that axis stays below ``alpha``.
    """
    if not 0.0 <= alpha <= 1.0:
        raise GeometryError(f"alpha {alpha} outside [0, 1]")
    if side in (Side.LEFT, Side.RIGHT):
        ref_len = reference.x1 - reference.x0
        if ref_len == 0:
            raise GeometryError("reference box has zero width")
        if side is Side.LEFT:
            if candidate.x1 <= reference.x0:
                return True
            return (
                candidate.x0 < reference.x0
                and (candidate.x1 - reference.x0) / ref_len < alpha
            )
        if candidate.x0 >= reference.x1:
            return True
        return (
            candidate.x1 > reference.x1
            and (reference.x1 - candidate.x0) / ref_len < alpha
        )
    ref_len = reference.y1 - reference.y0
    if ref_len == 0:
        raise GeometryError("reference box has zero height")
    if side is Side.ABOVE:
        if candidate.y1 <= reference.y0:
            return True
        return (
            candidate.y0 < reference.y0
            and (candidate.y1 - reference.y0) / ref_len < alpha
        )
    if candidate.y0 >= reference.y1:
        return True
    return (
        candidate.y1 > reference.y1
        and (reference.y1 - candidate.y0) / ref_len < alpha
    )


def round_half_even(value: float) -> int:
    """Banker's rounding used wherever sub-pixel coordinates become pixels."""
    return int(np.rint(value))
