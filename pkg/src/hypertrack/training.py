"""Window datasets, the smooth-L1 + GIoU objective and the Adam training loop."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .geometry import giou_array, smooth_l1, smooth_l1_grad
from .numeric import Adam, make_rng

log = logging.getLogger(__name__)

# frame -> {object id -> (4,) cxcywh box}
Sequence_ = Mapping[int, Mapping[int, np.ndarray]]


@dataclass
class WindowSample:
    input: np.ndarray   # (N, L, 4), frames t-L+1 .. t
    target: np.ndarray  # (N, L, 4), frames t-L+2 .. t+1
    ids: np.ndarray
    frame: int          # t, the last observed frame


def build_windows(sequence: Sequence_, window_len: int) -> list[WindowSample]:
    """Slide an ``L+1`` frame span over consecutive frames; keep objects present throughout."""
    frames = sorted(sequence)
    span = window_len + 1
    samples = []
    for i in range(len(frames) - span + 1):
        chunk = frames[i:i + span]
        if chunk[-1] - chunk[0] != span - 1:
            continue
        common = set(sequence[chunk[0]])
        for f in chunk[1:]:
            common &= set(sequence[f])
        if not common:
            continue
        ids = np.array(sorted(common))
        boxes = np.array([[sequence[f][k] for f in chunk] for k in ids], dtype=np.float64)
        samples.append(WindowSample(boxes[:, :-1], boxes[:, 1:], ids, chunk[-2]))
    return samples


def _giou_loss_grad(pred: np.ndarray, target: np.ndarray):
    """``1 - GIoU`` per box and its gradient wrt ``pred`` (``(M, 4)`` cxcywh)."""
    cx, cy, w, h = pred.T
    tcx, tcy, tw, th = target.T
    x1, x2 = cx - w / 2, cx + w / 2
    y1, y2 = cy - h / 2, cy + h / 2
    tx1, tx2 = tcx - tw / 2, tcx + tw / 2
    ty1, ty2 = tcy - th / 2, tcy + th / 2

    iw_raw = np.minimum(x2, tx2) - np.maximum(x1, tx1)
    ih_raw = np.minimum(y2, ty2) - np.maximum(y1, ty1)
    iw, ih = np.clip(iw_raw, 0, None), np.clip(ih_raw, 0, None)
    inter = iw * ih
    area = w * h
    union = area + tw * th - inter
    ew = np.maximum(x2, tx2) - np.minimum(x1, tx1)
    eh = np.maximum(y2, ty2) - np.minimum(y1, ty1)
    enc = ew * eh
    g = inter / union - 1.0 + union / enc

    dg_dinter = (union + inter) / union ** 2 - 1.0 / enc
    dg_darea = -inter / union ** 2 + 1.0 / enc
    dg_denc = -union / enc ** 2

    pos_w, pos_h = iw_raw > 0, ih_raw > 0
    # intersection extents
    diw_dx2 = np.where(pos_w & (x2 < tx2), 1.0, 0.0)
    diw_dx1 = np.where(pos_w & (x1 > tx1), -1.0, 0.0)
    dih_dy2 = np.where(pos_h & (y2 < ty2), 1.0, 0.0)
    dih_dy1 = np.where(pos_h & (y1 > ty1), -1.0, 0.0)
    # enclosing extents
    dew_dx2 = np.where(x2 >= tx2, 1.0, 0.0)
    dew_dx1 = np.where(x1 <= tx1, -1.0, 0.0)
    deh_dy2 = np.where(y2 >= ty2, 1.0, 0.0)
    deh_dy1 = np.where(y1 <= ty1, -1.0, 0.0)

    g_x1 = dg_dinter * ih * diw_dx1 + dg_denc * eh * dew_dx1
    g_x2 = dg_dinter * ih * diw_dx2 + dg_denc * eh * dew_dx2
    g_y1 = dg_dinter * iw * dih_dy1 + dg_denc * ew * deh_dy1
    g_y2 = dg_dinter * iw * dih_dy2 + dg_denc * ew * deh_dy2

    grad = np.stack([
        g_x1 + g_x2,
        g_y1 + g_y2,
        0.5 * (g_x2 - g_x1) + dg_darea * h,
        0.5 * (g_y2 - g_y1) + dg_darea * w,
    ], axis=1)
    return 1.0 - g, -grad


def loss_and_grad(pred: np.ndarray, target: np.ndarray, lambda1: float = 1.0, lambda2: float = 0.0):
    """Averaged objective and its gradient wrt ``pred``.

    ``lambda1 * mean(smooth_l1)`` over every coordinate plus
    ``lambda2 * mean(1 - GIoU)`` over every box.
    """
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"prediction {pred.shape} and target {target.shape} differ")
    n_coords = pred.size
    value = lambda1 * float(np.sum(smooth_l1(pred, target))) / n_coords
    grad = lambda1 * smooth_l1_grad(pred, target) / n_coords
    if lambda2:
        flat_p, flat_t = pred.reshape(-1, 4), target.reshape(-1, 4)
        term, g = _giou_loss_grad(flat_p, flat_t)
        value += lambda2 * float(term.sum()) / len(flat_p)
        grad = grad + lambda2 * g.reshape(pred.shape) / len(flat_p)
    return value, grad


def loss(pred, target, lambda1: float = 1.0, lambda2: float = 0.0) -> float:
    return loss_and_grad(pred, target, lambda1, lambda2)[0]


def giou_loss_reference(pred, target) -> np.ndarray:
    return 1.0 - giou_array(np.asarray(pred, dtype=np.float64), np.asarray(target, dtype=np.float64))


def collate(samples: Sequence[WindowSample]):
    inputs = np.concatenate([s.input for s in samples])
    targets = np.concatenate([s.target for s in samples])
    segments = np.concatenate([np.full(len(s.ids), i) for i, s in enumerate(samples)])
    return inputs, targets, segments


def batch_loss(net, samples: Sequence[WindowSample], lambda1=1.0, lambda2=0.0, backward=True) -> float:
    inputs, targets, segments = collate(samples)
    out, cache = net.forward(inputs, segments)
    value, grad = loss_and_grad(out, targets, lambda1, lambda2)
    if backward:
        net.backward(grad, cache)
    return value


def train(samples: Sequence[WindowSample], net, epochs: int = 100, batch_size: int = 128,
          lr: float = 1e-4, lambda1: float = 1.0, lambda2: float = 0.0, seed: int = 0,
          max_seconds: float | None = None) -> list[float]:
    """Mini-batch Adam; returns the per-epoch mean loss curve."""
    samples = list(samples)
    if not samples:
        raise ValueError("no training windows")
    rng = make_rng(seed, "train-shuffle")
    opt = Adam(net.params(), lr=lr)
    net.zero_grad()
    curve: list[float] = []
    start = time.monotonic()
    for epoch in range(epochs):
        order = rng.permutation(len(samples))
        losses = []
        for i in range(0, len(order), batch_size):
            batch = [samples[j] for j in order[i:i + batch_size]]
            value = batch_loss(net, batch, lambda1, lambda2)
            if not np.isfinite(value):
                raise FloatingPointError(f"non-finite loss at epoch {epoch}, batch {i // batch_size}")
            opt.step()
            losses.append(value)
        curve.append(float(np.mean(losses)))
        log.debug("epoch %d loss %.6g", epoch, curve[-1])
        if max_seconds is not None and time.monotonic() - start > max_seconds:
            log.info("training stopped at epoch %d on time budget", epoch)
            break
    return curve


def write_loss_curve(curve: Sequence[float], path) -> None:
    with open(path, "w") as fh:
        for epoch, value in enumerate(curve, start=1):
            fh.write(f"{epoch} {value!r}\n")
