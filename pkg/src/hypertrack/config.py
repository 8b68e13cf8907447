"""Run configuration: one flat namespace of tunables with validated ranges.

File format: one ``key = value`` per line, ``#`` starts a comment, values are
Python literals (``0.8``, ``[0.7, 0.5, 0.7]``, ``True``). Unknown keys and
out-of-range values are rejected.
"""

from __future__ import annotations

import ast
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from .association import AssociationConfig
from .estimator import EstimatorConfig
from .kalman import KalmanConfig
from .tracker import TrackerConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Config:
    # motion estimator
    window_len: int = 5
    layers: int = 8
    embed_dim: int = 32
    state_dim: int = 32
    theta: float = 0.8
    alpha: float = 0.5
    # training
    lr: float = 1e-4
    batch: int = 128
    epochs: int = 100
    lambda1: float = 1.0
    lambda2: float | None = None  # None: 0 for linear scenes, 1 otherwise
    # association
    tau_high: float = 0.6
    tau_low: float = 0.1
    nms_thresh: float = 0.7
    stage_gates: tuple = (0.7, 0.5, 0.7)
    spatial_weight: float = 0.2
    # tracker
    lost_after: int = 1
    remove_after: int = 30
    min_hits: int = 2
    # kalman baseline
    kf_std_position: float = 1.0 / 20
    kf_std_velocity: float = 1.0 / 20
    kf_std_measurement: float = 1.0 / 20
    # evaluation
    iou_match_thresh: float = 0.5
    eval_history: int = 11  # frames per ADE window; long enough for the Kalman filter to settle
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "stage_gates", tuple(float(g) for g in self.stage_gates))
        for name, ok in _RULES.items():
            value = getattr(self, name)
            if not ok(value):
                raise ConfigError(f"{name}={value!r} is out of range")

    def lambda2_for(self, kind: str) -> float:
        if self.lambda2 is not None:
            return self.lambda2
        return 0.0 if kind == "linear" else 1.0

    def estimator(self, use_hconv: bool = True) -> EstimatorConfig:
        return EstimatorConfig(self.window_len, self.layers, self.embed_dim, self.state_dim, self.theta,
                               self.alpha, use_hconv)

    def association(self) -> AssociationConfig:
        return AssociationConfig(self.tau_high, self.tau_low, self.nms_thresh, self.stage_gates,
                                 self.spatial_weight)

    def tracker(self) -> TrackerConfig:
        return TrackerConfig(self.window_len, self.lost_after, self.remove_after, self.min_hits,
                             self.association())

    def kalman(self) -> KalmanConfig:
        return KalmanConfig(self.kf_std_position, self.kf_std_velocity, self.kf_std_measurement)

    def replace(self, **changes) -> "Config":
        unknown = set(changes) - {f.name for f in fields(self)}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return replace(self, **changes)

    def to_text(self) -> str:
        return "".join(f"{k} = {v!r}\n" for k, v in asdict(self).items())


def _positive(v):
    return v > 0


def _unit(v):
    return 0.0 <= v <= 1.0


_RULES = {
    "window_len": lambda v: isinstance(v, int) and 2 <= v <= 64,
    "layers": lambda v: isinstance(v, int) and 1 <= v <= 64,
    "embed_dim": lambda v: isinstance(v, int) and v >= 1,
    "state_dim": lambda v: isinstance(v, int) and v >= 1,
    "theta": lambda v: -1.0 <= v <= 1.0,
    "alpha": lambda v: 0.0 < v <= 1.0,
    "lr": lambda v: 0.0 < v <= 0.1,
    "batch": lambda v: isinstance(v, int) and v >= 1,
    "epochs": lambda v: isinstance(v, int) and v >= 0,
    "lambda1": lambda v: v >= 0,
    "lambda2": lambda v: v is None or v >= 0,
    "tau_high": _unit,
    "tau_low": _unit,
    "nms_thresh": _unit,
    "stage_gates": lambda v: len(v) == 3 and all(g >= 0 for g in v),
    "spatial_weight": _unit,
    "lost_after": lambda v: isinstance(v, int) and v >= 1,
    "remove_after": lambda v: isinstance(v, int) and v >= 1,
    "min_hits": lambda v: isinstance(v, int) and v >= 1,
    "kf_std_position": _positive,
    "kf_std_velocity": _positive,
    "kf_std_measurement": _positive,
    "iou_match_thresh": lambda v: 0.0 < v <= 1.0,
    "eval_history": lambda v: isinstance(v, int) and v >= 2,
    "seed": lambda v: isinstance(v, int) and v >= 0,
}


def parse_config(text: str, source: str = "<config>") -> Config:
    known = {f.name for f in fields(Config)}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        try:
            values[key] = ast.literal_eval(value)
        except (ValueError, SyntaxError):
            raise ConfigError(f"{source}:{lineno}: cannot parse value {value!r}") from None
    try:
        cfg = Config(**values)
    except TypeError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    if cfg.tau_low >= cfg.tau_high:
        raise ConfigError(f"{source}: tau_low must be below tau_high")
    if cfg.lost_after > cfg.remove_after:
        raise ConfigError(f"{source}: lost_after must not exceed remove_after")
    return cfg


def load_config(path=None) -> Config:
    if path is None:
        return Config()
    return parse_config(Path(path).read_text(), str(path))
