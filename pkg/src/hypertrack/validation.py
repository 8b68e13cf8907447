"""Input checks shared by the estimators."""

from __future__ import annotations

import numpy as np


def check_windows(X, window_len: int | None = None, allow_empty: bool = True) -> np.ndarray:
    """Coerce to a finite float64 ``(N, T, 4)`` array of valid boxes."""
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim == 2 and arr.shape[-1] == 4:
        arr = arr[None]
    if arr.ndim != 3 or arr.shape[-1] != 4:
        raise ValueError(f"expected an (N, T, 4) array of boxes, got shape {arr.shape}")
    if arr.shape[0] == 0 and not allow_empty:
        raise ValueError("no objects given")
    if window_len is not None and arr.shape[1] != window_len:
        raise ValueError(f"expected windows of {window_len} frames, got {arr.shape[1]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("boxes contain NaN or infinity")
    if arr.size and np.any(arr[..., 2:] <= 0):
        raise ValueError("box width and height must be positive")
    return arr


def check_histories(histories) -> list[np.ndarray]:
    """Ragged list of ``(n_i, 4)`` histories, each non-empty."""
    if isinstance(histories, np.ndarray) and histories.ndim == 3:
        return [h for h in check_windows(histories)]
    out = []
    for h in histories:
        arr = check_windows(np.asarray(h, dtype=np.float64).reshape(-1, 4)[None])[0]
        if len(arr) == 0:
            raise ValueError("empty track history")
        out.append(arr)
    return out
