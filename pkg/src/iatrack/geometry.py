"""Boxes, detections and candidate locations shared by every stage."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box in continuous pixel coordinates (top-left + size)."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        vals = (self.x, self.y, self.w, self.h)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite box {vals}")
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"box must have positive size, got w={self.w} h={self.h}")

    @classmethod
    def from_center(cls, cx: float, cy: float, w: float, h: float) -> "BoundingBox":
        return cls(cx - w / 2.0, cy - h / 2.0, w, h)

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    @property
    def area(self) -> float:
        return self.w * self.h

    def center(self) -> tuple[float, float]:
        return center(self)

    def shifted(self, dx: float, dy: float) -> "BoundingBox":
        return BoundingBox(self.x + dx, self.y + dy, self.w, self.h)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x, self.y, self.w, self.h)


def center(b: BoundingBox) -> tuple[float, float]:
    return (b.x + b.w / 2.0, b.y + b.h / 2.0)


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union of two boxes."""
    iw = min(a.x2, b.x2) - max(a.x, b.x)
    ih = min(a.y2, b.y2) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    if a == b:
        return 1.0
    return inter / (a.area + b.area - inter)


def iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IoU between rows of two ``(n, 4)`` xywh arrays."""
    a = np.asarray(a, dtype=float).reshape(-1, 4)
    b = np.asarray(b, dtype=float).reshape(-1, 4)
    ax1, ay1 = a[:, 0:1], a[:, 1:2]
    ax2, ay2 = ax1 + a[:, 2:3], ay1 + a[:, 3:4]
    bx1, by1 = b[:, 0], b[:, 1]
    bx2, by2 = bx1 + b[:, 2], by1 + b[:, 3]
    iw = np.clip(np.minimum(ax2, bx2) - np.maximum(ax1, bx1), 0, None)
    ih = np.clip(np.minimum(ay2, by2) - np.maximum(ay1, by1), 0, None)
    inter = iw * ih
    union = a[:, 2:3] * a[:, 3:4] + b[:, 2] * b[:, 3] - inter
    return np.where(union > 0, inter / np.where(union > 0, union, 1.0), 0.0)


@dataclass(frozen=True)
class Detection:
    frame: int
    box: BoundingBox
    confidence: float = 1.0


class CandidateSource(str, Enum):
    DETECTION = "detection"
    PREDICTION = "prediction"


@dataclass(frozen=True)
class Candidate:
    """One element of the per-frame candidate pool (detections and predictions).

    ``index`` points into the frame's detection list for detection-sourced
    candidates; prediction-sourced ones name the target that produced them.
    """

    box: BoundingBox
    source: CandidateSource
    origin_target: Optional[int] = None
    index: Optional[int] = None

    def __post_init__(self):
        if self.source is CandidateSource.PREDICTION and self.origin_target is None:
            raise ValueError("prediction candidates must name their origin target")

    @property
    def is_detection(self) -> bool:
        return self.source is CandidateSource.DETECTION

    @property
    def location(self) -> tuple[float, float]:
        return center(self.box)
