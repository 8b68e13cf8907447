"""CLEAR-MOT and identity metrics plus displacement errors for motion models."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .association import hungarian
from .geometry import iou_matrix
from .training import build_windows

# frame -> {id -> (4,) cxcywh}
Frames = dict


@dataclass
class EvalReport:
    mota: float
    idf1: float
    id_switches: int
    fp: int
    fn: int
    num_gt: int
    num_pred: int
    idtp: int
    ade: float = math.nan
    fde: float = math.nan

    def as_dict(self) -> dict:
        return {"mota": self.mota, "idf1": self.idf1, "id_switches": self.id_switches, "fp": self.fp,
                "fn": self.fn, "num_gt": self.num_gt, "num_pred": self.num_pred, "idtp": self.idtp,
                "ade": self.ade, "fde": self.fde}

    def format(self) -> str:
        """Aligned table followed by a ``key=value`` block."""
        d = self.as_dict()
        header = "".join(f"{k:>12}" for k in d)
        values = "".join(f"{_fmt(v):>12}" for v in d.values())
        block = "\n".join(f"{k}={_fmt(v)}" for k, v in d.items())
        return f"{header}\n{values}\n\n{block}\n"


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{v:.6f}"


def _match_frame(gt_ids, gt_boxes, pr_ids, pr_boxes, prev, thresh):
    """CLEAR-MOT correspondences for one frame, preferring last frame's pairs."""
    if not gt_ids or not pr_ids:
        return []
    ious = iou_matrix(gt_boxes, pr_boxes)
    matches = []
    used_g, used_p = set(), set()
    pr_index = {p: j for j, p in enumerate(pr_ids)}
    for i, g in enumerate(gt_ids):
        p = prev.get(g)
        if p is not None and p in pr_index and p not in used_p:
            j = pr_index[p]
            if ious[i, j] >= thresh:
                matches.append((i, j))
                used_g.add(i)
                used_p.add(p)
    rows = [i for i in range(len(gt_ids)) if i not in used_g]
    cols = [j for j, p in enumerate(pr_ids) if p not in used_p]
    if rows and cols:
        sub = ious[np.ix_(rows, cols)]
        cost = np.where(sub >= thresh, 1.0 - sub, 1e6)
        for r, c in hungarian(cost):
            if sub[r, c] >= thresh:
                matches.append((rows[r], cols[c]))
    return matches


def evaluate(results: Frames, gt: Frames, iou_thresh: float = 0.5) -> EvalReport:
    """MOTA / IDF1 / IDSW of ``results`` against ``gt`` (both frame -> {id: box})."""
    frames = sorted(set(gt) | set(results))
    fp = fn = idsw = 0
    num_gt = num_pred = 0
    last_match: dict[int, int] = {}
    prev: dict[int, int] = {}
    overlap: dict[tuple[int, int], int] = {}
    for f in frames:
        g = gt.get(f, {})
        r = results.get(f, {})
        gt_ids = sorted(g)
        pr_ids = sorted(r)
        num_gt += len(gt_ids)
        num_pred += len(pr_ids)
        gt_boxes = np.array([g[k] for k in gt_ids]).reshape(-1, 4)
        pr_boxes = np.array([r[k] for k in pr_ids]).reshape(-1, 4)
        matches = _match_frame(gt_ids, gt_boxes, pr_ids, pr_boxes, prev, iou_thresh)
        prev = {}
        for i, j in matches:
            gid, pid = gt_ids[i], pr_ids[j]
            if gid in last_match and last_match[gid] != pid:
                idsw += 1
            last_match[gid] = pid
            prev[gid] = pid
        fn += len(gt_ids) - len(matches)
        fp += len(pr_ids) - len(matches)
        if gt_ids and pr_ids:
            ious = iou_matrix(gt_boxes, pr_boxes)
            for i, j in zip(*np.nonzero(ious >= iou_thresh)):
                key = (gt_ids[i], pr_ids[j])
                overlap[key] = overlap.get(key, 0) + 1

    idtp = _identity_tp(overlap)
    mota = 1.0 - (fn + fp + idsw) / num_gt if num_gt else math.nan
    denom = num_gt + num_pred
    idf1 = 2.0 * idtp / denom if denom else math.nan
    return EvalReport(mota, idf1, idsw, fp, fn, num_gt, num_pred, idtp)


def _identity_tp(overlap: dict[tuple[int, int], int]) -> int:
    if not overlap:
        return 0
    g_ids = sorted({k[0] for k in overlap})
    p_ids = sorted({k[1] for k in overlap})
    gi = {g: i for i, g in enumerate(g_ids)}
    pj = {p: j for j, p in enumerate(p_ids)}
    counts = np.zeros((len(g_ids), len(p_ids)))
    for (g, p), n in overlap.items():
        counts[gi[g], pj[p]] = n
    return int(sum(counts[i, j] for i, j in hungarian(-counts)))


def motion_eval(predictor, gt: Frames, history_len: int | None = None) -> tuple[float, float]:
    """ADE / FDE of one-step box-center predictions over ground-truth windows.

    ``predictor.predict_next`` maps ``(N, T, 4)`` histories to ``(N, 4)``
    boxes. Windows span ``history_len`` frames (default: the predictor's
    ``window_len``); predictors with a shorter ``window_len`` see only the
    trailing frames, so models are compared on identical targets.
    """
    own = getattr(predictor, "window_len", None)
    length = history_len or own
    if length is None:
        raise ValueError("history_len is required for predictors without a window_len")
    errors: list[float] = []
    final: dict[int, tuple[int, float]] = {}
    for s in build_windows(gt, length):
        hist = s.input if own is None or own >= length else s.input[:, -own:]
        pred = np.asarray(predictor.predict_next(hist)).reshape(-1, 4)
        d = np.hypot(pred[:, 0] - s.target[:, -1, 0], pred[:, 1] - s.target[:, -1, 1])
        errors.extend(d.tolist())
        for obj, err in zip(s.ids, d):
            if obj not in final or s.frame > final[obj][0]:
                final[int(obj)] = (s.frame, float(err))
    if not errors:
        return math.nan, math.nan
    return float(np.mean(errors)), float(np.mean([e for _, e in final.values()]))
