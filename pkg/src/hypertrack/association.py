"""Detection tiers and staged mutual-minimum-cost association."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .geometry import iou_matrix, nms


@dataclass(frozen=True)
class AssociationConfig:
    tau_high: float = 0.6
    tau_low: float = 0.1
    nms_thresh: float = 0.7
    stage_gates: tuple[float, float, float] = (0.7, 0.5, 0.7)
    spatial_weight: float = 0.2
    # reserved for an appearance term; no appearance model ships with the package
    appearance_weight: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.tau_low < self.tau_high <= 1.0):
            raise ValueError("need 0 <= tau_low < tau_high <= 1")
        if len(self.stage_gates) != 3:
            raise ValueError("stage_gates needs three values")
        if not (0.0 <= self.spatial_weight <= 1.0):
            raise ValueError("spatial_weight must lie in [0, 1]")


@dataclass
class DetectionTiers:
    high_kept: np.ndarray
    low: np.ndarray
    high_suppressed: np.ndarray

    def stages(self):
        return (self.high_kept, self.low, self.high_suppressed)


def partition_detections(boxes: np.ndarray, scores: np.ndarray, tau_high: float = 0.6,
                         tau_low: float = 0.1, nms_thresh: float = 0.7) -> DetectionTiers:
    """Split detection indices into NMS survivors, low-confidence and NMS-suppressed tiers."""
    if not (0.0 <= tau_low < tau_high <= 1.0):
        raise ValueError("need 0 <= tau_low < tau_high <= 1")
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    scores = np.asarray(scores, dtype=np.float64)
    high = np.flatnonzero(scores >= tau_high)
    low = np.flatnonzero((scores >= tau_low) & (scores < tau_high))
    kept, suppressed = nms(boxes[high], scores[high], nms_thresh)
    return DetectionTiers(high[kept], low, high[suppressed])


def center_distance(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise center distance over the diagonal of the enclosing box, in [0, 1)."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 4)[:, None, :]
    b = np.asarray(b, dtype=np.float64).reshape(-1, 4)[None, :, :]
    d2 = (a[..., 0] - b[..., 0]) ** 2 + (a[..., 1] - b[..., 1]) ** 2
    ex = np.maximum(a[..., 0] + a[..., 2] / 2, b[..., 0] + b[..., 2] / 2) - np.minimum(
        a[..., 0] - a[..., 2] / 2, b[..., 0] - b[..., 2] / 2)
    ey = np.maximum(a[..., 1] + a[..., 3] / 2, b[..., 1] + b[..., 3] / 2) - np.minimum(
        a[..., 1] - a[..., 3] / 2, b[..., 1] - b[..., 3] / 2)
    return np.sqrt(d2 / (ex ** 2 + ey ** 2))


def cost_matrix(track_boxes: np.ndarray, det_boxes: np.ndarray, spatial_weight: float = 0.2,
                appearance: np.ndarray | None = None, appearance_weight: float = 0.0) -> np.ndarray:
    """``(1 - w_s)(1 - IoU) + w_s * dist`` (plus an optional appearance term)."""
    t = np.asarray(track_boxes, dtype=np.float64).reshape(-1, 4)
    d = np.asarray(det_boxes, dtype=np.float64).reshape(-1, 4)
    if len(t) == 0 or len(d) == 0:
        return np.zeros((len(t), len(d)))
    cost = (1.0 - spatial_weight) * (1.0 - iou_matrix(t, d)) + spatial_weight * center_distance(t, d)
    if appearance_weight:
        if appearance is None:
            raise ValueError("appearance_weight set but no appearance costs supplied")
        cost = (1.0 - appearance_weight) * cost + appearance_weight * appearance
    return cost


def mutual_min_match(cost: np.ndarray, max_cost: float):
    """Iteratively commit the cheapest row/column mutual minimum under ``max_cost``.

    Returns ``(matches, unmatched_rows, unmatched_cols)`` with matches as
    ``(row, col)`` tuples in commit order.
    """
    c = np.array(cost, dtype=np.float64, copy=True).reshape(np.shape(cost))
    n_rows, n_cols = c.shape
    rows_left = np.ones(n_rows, dtype=bool)
    cols_left = np.ones(n_cols, dtype=bool)
    matches: list[tuple[int, int]] = []
    while rows_left.any() and cols_left.any():
        sub = np.where(rows_left[:, None] & cols_left[None, :], c, np.inf)
        gated = sub <= max_cost
        if not gated.any():
            break
        row_min = sub.min(axis=1, keepdims=True)
        col_min = sub.min(axis=0, keepdims=True)
        mutual = gated & (sub == row_min) & (sub == col_min)
        candidates = mutual if mutual.any() else gated
        ii, jj = np.nonzero(candidates)
        # lexsort: last key is primary
        k = np.lexsort((jj, ii, sub[ii, jj]))[0]
        i, j = int(ii[k]), int(jj[k])
        matches.append((i, j))
        rows_left[i] = False
        cols_left[j] = False
    return matches, np.flatnonzero(rows_left).tolist(), np.flatnonzero(cols_left).tolist()


def hungarian(cost: np.ndarray) -> list[tuple[int, int]]:
    """Minimum-total-cost assignment (rectangular allowed), as sorted ``(row, col)`` pairs."""
    c = np.asarray(cost, dtype=np.float64)
    if c.size == 0:
        return []
    rows, cols = linear_sum_assignment(c)
    return [(int(i), int(j)) for i, j in zip(rows, cols)]


@dataclass
class AssociationResult:
    stage_matches: list[list[tuple[int, int]]] = field(default_factory=list)
    unmatched_tracks: list[int] = field(default_factory=list)
    unmatched_dets: list[list[int]] = field(default_factory=list)

    @property
    def matches(self) -> list[tuple[int, int]]:
        return [m for stage in self.stage_matches for m in stage]


def associate(track_boxes: np.ndarray, det_boxes: np.ndarray, tiers: DetectionTiers,
              cfg: AssociationConfig = AssociationConfig()) -> AssociationResult:
    """Three matching stages: NMS survivors, then low-confidence, then NMS-suppressed.

    Indices in the result refer to rows of ``track_boxes`` and ``det_boxes``.
    """
    track_boxes = np.asarray(track_boxes, dtype=np.float64).reshape(-1, 4)
    det_boxes = np.asarray(det_boxes, dtype=np.float64).reshape(-1, 4)
    remaining = list(range(len(track_boxes)))
    result = AssociationResult()
    for tier, gate in zip(tiers.stages(), cfg.stage_gates):
        tier = [int(j) for j in tier]
        stage: list[tuple[int, int]] = []
        left_dets = tier
        if remaining and tier:
            c = cost_matrix(track_boxes[remaining], det_boxes[tier], cfg.spatial_weight)
            pairs, rows_left, cols_left = mutual_min_match(c, gate)
            stage = [(remaining[i], tier[j]) for i, j in pairs]
            remaining = [remaining[i] for i in rows_left]
            left_dets = [tier[j] for j in cols_left]
        result.stage_matches.append(stage)
        result.unmatched_dets.append(left_dets)
    result.unmatched_tracks = remaining
    return result
