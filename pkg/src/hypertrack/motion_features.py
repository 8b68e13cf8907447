"""Per-object motion descriptors: velocities, EMA smoothing and the learned
trajectory embedding that feeds hypergraph construction and layer guidance."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry import BBox
from .numeric import Param, linear, linear_backward, silu, silu_grad

# Velocities are ~1e-2 in normalized image units; this lifts them to O(1)
# before they reach any learned layer.
VELOCITY_SCALE = 50.0
POSITION_OFFSET = np.array([0.5, 0.5, 0.0, 0.0])
POSITION_SCALE = 2.0


@dataclass(frozen=True)
class TrajectoryWindow:
    boxes: tuple[BBox, ...]
    frame_ids: tuple[int, ...]

    def __post_init__(self):
        boxes = tuple(b if isinstance(b, BBox) else BBox.from_array(b) for b in self.boxes)
        object.__setattr__(self, "boxes", boxes)
        object.__setattr__(self, "frame_ids", tuple(int(f) for f in self.frame_ids))
        if len(self.boxes) < 1:
            raise ValueError("a trajectory window needs at least one box")
        if len(self.boxes) != len(self.frame_ids):
            raise ValueError("boxes and frame_ids differ in length")
        if any(b <= a for a, b in zip(self.frame_ids, self.frame_ids[1:])):
            raise ValueError("frame ids must be strictly increasing")

    def to_array(self) -> np.ndarray:
        return np.stack([b.to_array() for b in self.boxes])

    def __len__(self):
        return len(self.boxes)


def velocity_sequence(window) -> np.ndarray:
    """Frame-to-frame displacements, shape ``(L-1, 4)``."""
    p = window.to_array() if isinstance(window, TrajectoryWindow) else np.asarray(window, dtype=np.float64)
    if p.shape[0] < 2:
        raise ValueError("velocity needs at least two frames")
    return p[1:] - p[:-1]


def ema_weights(n: int, alpha: float) -> np.ndarray:
    """Normalized weights ``alpha (1-alpha)^(n-1-i)`` for i = 0..n-1 (newest last)."""
    if not (0.0 < alpha <= 1.0):
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    if n < 1:
        raise ValueError("need at least one velocity")
    raw = alpha * (1.0 - alpha) ** np.arange(n - 1, -1, -1, dtype=np.float64)
    return raw / raw.sum()


def ema_velocity(velocities, alpha: float = 0.5) -> np.ndarray:
    v = np.asarray(velocities, dtype=np.float64)
    if v.ndim == 1:
        v = v[None, :]
    w = ema_weights(v.shape[0], alpha)
    return w @ v


def pad_history(boxes: np.ndarray, length: int) -> np.ndarray:
    """Left-pad a ``(n, 4)`` history to ``length`` frames by repeating the oldest box."""
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    if len(boxes) == 0:
        raise ValueError("cannot pad an empty history")
    if len(boxes) >= length:
        return boxes[-length:]
    pad = np.repeat(boxes[:1], length - len(boxes), axis=0)
    return np.concatenate([pad, boxes], axis=0)


def normalize_positions(p: np.ndarray) -> np.ndarray:
    return (p - POSITION_OFFSET) * POSITION_SCALE


def embedding_inputs(windows: np.ndarray, alpha: float) -> np.ndarray:
    """Stack ``[v_hat ; p_L ; v_2..v_L]`` for an ``(N, L, 4)`` batch -> ``(N, 8 + 4(L-1))``."""
    windows = np.asarray(windows, dtype=np.float64)
    n, length, _ = windows.shape
    if length < 2:
        vel = np.zeros((n, 1, 4))
    else:
        vel = windows[:, 1:] - windows[:, :-1]
    vhat = np.einsum("t,ntc->nc", ema_weights(vel.shape[1], alpha), vel)
    return np.concatenate([
        VELOCITY_SCALE * vhat,
        normalize_positions(windows[:, -1]),
        VELOCITY_SCALE * vel.reshape(n, -1),
    ], axis=1)


def embedding_input_dim(window_len: int) -> int:
    return 8 + 4 * max(window_len - 1, 1)


class TrajectoryEmbedder:
    """Two-layer SiLU perceptron mapping a window descriptor to ``x`` in R^d."""

    def __init__(self, window_len: int, dim: int, rng: np.random.Generator | None = None,
                 prefix: str = "embed"):
        d_in = embedding_input_dim(window_len)
        self.window_len = window_len
        self.dim = dim
        self.w1 = Param(f"{prefix}.w1", _uniform(rng, (d_in, dim)))
        self.b1 = Param(f"{prefix}.b1", np.zeros(dim))
        self.w2 = Param(f"{prefix}.w2", _uniform(rng, (dim, dim)))
        self.b2 = Param(f"{prefix}.b2", np.zeros(dim))

    def params(self) -> list[Param]:
        return [self.w1, self.b1, self.w2, self.b2]

    def forward(self, windows: np.ndarray, alpha: float):
        z = embedding_inputs(windows, alpha)
        if not np.all(np.isfinite(z)):
            raise ValueError("non-finite trajectory window")
        a1 = linear(z, self.w1.value, self.b1.value)
        h1 = silu(a1)
        x = linear(h1, self.w2.value, self.b2.value)
        return x, (z, a1, h1)

    def backward(self, grad_x: np.ndarray, cache) -> None:
        z, a1, h1 = cache
        gh1, gw2, gb2 = linear_backward(grad_x, h1, self.w2.value)
        self.w2.grad += gw2
        self.b2.grad += gb2
        ga1 = gh1 * silu_grad(a1)
        _, gw1, gb1 = linear_backward(ga1, z, self.w1.value)
        self.w1.grad += gw1
        self.b1.grad += gb1


def embed_trajectory(window, embedder: TrajectoryEmbedder, alpha: float = 0.5) -> np.ndarray:
    """Motion feature for one window (a :class:`TrajectoryWindow` or ``(L, 4)`` array)."""
    p = window.to_array() if isinstance(window, TrajectoryWindow) else np.asarray(window, dtype=np.float64)
    if p.shape[0] != embedder.window_len:
        raise ValueError(f"window must be padded to {embedder.window_len} frames, got {p.shape[0]}")
    x, _ = embedder.forward(p[None], alpha)
    return x[0]


def _uniform(rng: np.random.Generator | None, shape: Sequence[int]) -> np.ndarray:
    if rng is None:
        return np.zeros(shape)
    bound = 1.0 / np.sqrt(shape[0])
    return rng.uniform(-bound, bound, size=shape)
