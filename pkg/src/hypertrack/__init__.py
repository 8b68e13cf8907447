"""Collaborative motion estimation for multi-object tracking.

A hypergraph-convolution-embedded state space model (HyperSSM) predicts the
next box of every tracked object jointly, grouping objects whose recent
motion agrees. The package also carries the surrounding tracking toolkit:
a Kalman baseline, three-tier association, synthetic scenarios, MOT-format
I/O, CLEAR-MOT/IDF1 metrics and a small CLI.
"""

from .config import Config, ConfigError, load_config, parse_config
from .estimator import EstimatorConfig, HyperSSMNetwork
from .estimators import ConstantPositionPredictor, HyperSSMRegressor, KalmanPredictor
from .geometry import BBox, giou, iou, nms
from .metrics import EvalReport, evaluate, motion_eval
from .scenarios import Scenario, generate, load_scenario, write_scenario
from .tracker import Tracker, TrackerConfig, run_sequence

__version__ = "0.1.0"

__all__ = [
    "BBox", "Config", "ConfigError", "ConstantPositionPredictor", "EstimatorConfig", "EvalReport",
    "HyperSSMNetwork", "HyperSSMRegressor", "KalmanPredictor", "Scenario", "Tracker", "TrackerConfig",
    "evaluate", "generate", "giou", "iou", "load_config", "load_scenario", "motion_eval", "nms",
    "parse_config", "run_sequence", "write_scenario",
]
