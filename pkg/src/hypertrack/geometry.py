"""Axis-aligned box arithmetic.

Boxes are center based, ``(cx, cy, w, h)``. MOT files use top-left corners;
the conversion helpers here are only called at I/O boundaries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class BBox:
    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        vals = (self.cx, self.cy, self.w, self.h)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite box coordinates: {vals}")
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"box width and height must be positive, got w={self.w}, h={self.h}")

    @classmethod
    def from_array(cls, arr) -> "BBox":
        cx, cy, w, h = (float(v) for v in arr)
        return cls(cx, cy, w, h)

    @classmethod
    def from_tlwh(cls, left: float, top: float, w: float, h: float) -> "BBox":
        return cls(left + w / 2.0, top + h / 2.0, w, h)

    def to_tlwh(self) -> tuple[float, float, float, float]:
        return (self.cx - self.w / 2.0, self.cy - self.h / 2.0, self.w, self.h)

    def to_array(self) -> np.ndarray:
        return np.array([self.cx, self.cy, self.w, self.h], dtype=np.float64)

    @property
    def area(self) -> float:
        return self.w * self.h


def _corners(boxes: np.ndarray):
    half_w = boxes[..., 2] / 2.0
    half_h = boxes[..., 3] / 2.0
    return (boxes[..., 0] - half_w, boxes[..., 1] - half_h,
            boxes[..., 0] + half_w, boxes[..., 1] + half_h)


def iou_array(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Elementwise IoU of broadcastable ``(..., 4)`` cxcywh arrays."""
    ax1, ay1, ax2, ay2 = _corners(a)
    bx1, by1, bx2, by2 = _corners(b)
    iw = np.clip(np.minimum(ax2, bx2) - np.maximum(ax1, bx1), 0.0, None)
    ih = np.clip(np.minimum(ay2, by2) - np.maximum(ay1, by1), 0.0, None)
    inter = iw * ih
    union = a[..., 2] * a[..., 3] + b[..., 2] * b[..., 3] - inter
    # corner arithmetic can overshoot by an ulp for identical boxes
    return np.clip(inter / union, 0.0, 1.0)


def giou_array(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ax1, ay1, ax2, ay2 = _corners(a)
    bx1, by1, bx2, by2 = _corners(b)
    iw = np.clip(np.minimum(ax2, bx2) - np.maximum(ax1, bx1), 0.0, None)
    ih = np.clip(np.minimum(ay2, by2) - np.maximum(ay1, by1), 0.0, None)
    inter = iw * ih
    union = a[..., 2] * a[..., 3] + b[..., 2] * b[..., 3] - inter
    enclose = ((np.maximum(ax2, bx2) - np.minimum(ax1, bx1))
               * (np.maximum(ay2, by2) - np.minimum(ay1, by1)))
    ratio = np.clip(inter / union, 0.0, 1.0)
    return ratio - np.clip(enclose - union, 0.0, None) / enclose


def iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IoU between ``(n, 4)`` and ``(m, 4)`` arrays -> ``(n, m)``."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 4)
    return iou_array(a[:, None, :], b[None, :, :])


def iou(a: BBox, b: BBox) -> float:
    return float(iou_array(a.to_array(), b.to_array()))


def giou(a: BBox, b: BBox) -> float:
    return float(giou_array(a.to_array(), b.to_array()))


def smooth_l1(pred, target):
    """Huber-style loss with unit transition point; works on scalars and arrays."""
    d = np.abs(np.asarray(pred, dtype=np.float64) - target)
    out = np.where(d < 1.0, 0.5 * d * d, d - 0.5)
    return float(out) if out.ndim == 0 else out


def smooth_l1_grad(pred, target):
    d = np.asarray(pred, dtype=np.float64) - target
    return np.clip(d, -1.0, 1.0)


def nms(boxes: Sequence[BBox] | np.ndarray, scores: Sequence[float],
        iou_thresh: float) -> tuple[list[int], list[int]]:
    """Greedy non-maximum suppression.

    Candidates are visited by descending score, equal scores by ascending
    index. Returns ``(kept, suppressed)`` index lists, each sorted ascending.
    """
    arr = _as_box_array(boxes)
    scores = np.asarray(scores, dtype=np.float64)
    if len(arr) != len(scores):
        raise ValueError("boxes and scores differ in length")
    if len(arr) == 0:
        return [], []
    order = sorted(range(len(arr)), key=lambda i: (-scores[i], i))
    overlaps = iou_matrix(arr, arr)
    kept: list[int] = []
    suppressed: list[int] = []
    for i in order:
        if any(overlaps[i, k] >= iou_thresh for k in kept):
            suppressed.append(i)
        else:
            kept.append(i)
    return sorted(kept), sorted(suppressed)


def _as_box_array(boxes) -> np.ndarray:
    if isinstance(boxes, np.ndarray):
        return boxes.reshape(-1, 4).astype(np.float64)
    return np.array([b.to_array() if isinstance(b, BBox) else b for b in boxes],
                    dtype=np.float64).reshape(-1, 4)
