"""Constant-velocity Kalman filter over ``(cx, cy, w, h)`` boxes.

Noise standard deviations scale with the box height, as in the SORT family
of trackers. State layout: ``(cx, cy, w, h, vcx, vcy, vw, vh)``.

The velocity process noise default (h/20) is larger than the usual h/160 so
that a noise-free constant-velocity track is locked onto within ten updates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import BBox

_MIN_SIZE = 1e-6


@dataclass(frozen=True)
class KalmanConfig:
    std_position: float = 1.0 / 20
    std_velocity: float = 1.0 / 20
    std_measurement: float = 1.0 / 20
    init_position_factor: float = 2.0
    init_velocity_factor: float = 10.0


@dataclass
class KFState:
    mean: np.ndarray
    covariance: np.ndarray

    @property
    def box(self) -> np.ndarray:
        return self.mean[:4].copy()


_F = np.eye(8)
_F[:4, 4:] = np.eye(4)
_H = np.eye(4, 8)


def kf_init(box, cfg: KalmanConfig = KalmanConfig()) -> KFState:
    b = box.to_array() if isinstance(box, BBox) else np.asarray(box, dtype=np.float64)
    mean = np.concatenate([b, np.zeros(4)])
    h = b[3]
    std = np.concatenate([np.full(4, cfg.init_position_factor * cfg.std_position * h),
                          np.full(4, cfg.init_velocity_factor * cfg.std_velocity * h)])
    return KFState(mean, np.diag(std ** 2))


def process_noise(h: float, cfg: KalmanConfig) -> np.ndarray:
    std = np.concatenate([np.full(4, cfg.std_position * h), np.full(4, cfg.std_velocity * h)])
    return np.diag(std ** 2)


def measurement_noise(h: float, cfg: KalmanConfig) -> np.ndarray:
    return np.diag(np.full(4, (cfg.std_measurement * h) ** 2))


def _symmetrize(p: np.ndarray) -> np.ndarray:
    return 0.5 * (p + p.T)


def kf_predict(state: KFState, cfg: KalmanConfig = KalmanConfig()) -> KFState:
    mean = _F @ state.mean
    cov = _F @ state.covariance @ _F.T + process_noise(state.mean[3], cfg)
    return KFState(mean, _symmetrize(cov))


def kf_update(state: KFState, z, cfg: KalmanConfig = KalmanConfig(), R: np.ndarray | None = None) -> KFState:
    """Standard correction; ``R`` overrides the height-scaled measurement noise."""
    z = z.to_array() if isinstance(z, BBox) else np.asarray(z, dtype=np.float64)
    if R is None:
        R = measurement_noise(state.mean[3], cfg)
    P = state.covariance
    S = _H @ P @ _H.T + R
    try:
        gain = np.linalg.solve(S, _H @ P).T
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("singular innovation covariance") from exc
    mean = state.mean + gain @ (z - _H @ state.mean)
    mean[2:4] = np.maximum(mean[2:4], _MIN_SIZE)
    ikh = np.eye(8) - gain @ _H
    # Joseph form keeps the covariance PSD
    cov = ikh @ P @ ikh.T + gain @ R @ gain.T
    return KFState(mean, _symmetrize(cov))


def kalman_forecast(history: np.ndarray, cfg: KalmanConfig = KalmanConfig()) -> np.ndarray:
    """Filter a ``(T, 4)`` box history and return the one-step-ahead box."""
    history = np.asarray(history, dtype=np.float64).reshape(-1, 4)
    state = kf_init(history[0], cfg)
    for z in history[1:]:
        state = kf_update(kf_predict(state, cfg), z, cfg)
    return kf_predict(state, cfg).box
