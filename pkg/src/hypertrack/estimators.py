"""scikit-learn style wrappers around the motion models.

All predictors expose ``predict_next(histories) -> (N, 4)`` and a
``window_len`` attribute (``None`` meaning "uses the whole history"), which
is what :func:`hypertrack.metrics.motion_eval` and the tracker rely on.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .estimator import EstimatorConfig, HyperSSMNetwork
from .kalman import KalmanConfig, kalman_forecast
from .metrics import motion_eval
from .motion_features import pad_history
from .numeric import make_rng
from .scenarios import Scenario
from .tracker import ConstantPositionMotion, EstimatorMotion, KalmanMotion
from .training import WindowSample, build_windows, train
from .validation import check_histories, check_windows


def as_samples(X, window_len: int) -> list[WindowSample]:
    """Accepts window samples, scenarios or frame->{id: box} ground-truth dicts."""
    if isinstance(X, (Scenario, dict)):
        X = [X]
    samples: list[WindowSample] = []
    for item in X:
        if isinstance(item, WindowSample):
            if item.input.shape[1] != window_len:
                raise ValueError(f"window sample has {item.input.shape[1]} frames, expected {window_len}")
            samples.append(item)
        elif isinstance(item, Scenario):
            samples.extend(build_windows(item.gt, window_len))
        elif isinstance(item, dict):
            samples.extend(build_windows(item, window_len))
        else:
            raise TypeError(f"cannot build training windows from {type(item).__name__}")
    return samples


class HyperSSMRegressor(BaseEstimator):
    """Collaborative motion estimator trained on ground-truth trajectory windows.

    ``use_hconv=False`` gives the plain-SSM ablation with identical wiring.
    """

    def __init__(self, window_len=5, layers=8, embed_dim=32, state_dim=32, theta=0.8, alpha=0.5,
                 use_hconv=True, lr=1e-4, batch_size=128, epochs=100, lambda1=1.0, lambda2=0.0,
                 random_state=0):
        self.window_len = window_len
        self.layers = layers
        self.embed_dim = embed_dim
        self.state_dim = state_dim
        self.theta = theta
        self.alpha = alpha
        self.use_hconv = use_hconv
        self.lr = lr
        self.batch_size = batch_size
        self.epochs = epochs
        self.lambda1 = lambda1
        self.lambda2 = lambda2
        self.random_state = random_state

    def _config(self) -> EstimatorConfig:
        return EstimatorConfig(self.window_len, self.layers, self.embed_dim, self.state_dim, self.theta,
                               self.alpha, self.use_hconv)

    def init_network(self) -> HyperSSMNetwork:
        return HyperSSMNetwork(self._config(), make_rng(self.random_state, "init"))

    def fit(self, X, y=None):
        samples = as_samples(X, self.window_len)
        if not samples:
            raise ValueError("no training windows could be built from X")
        self.network_ = self.init_network()
        self.loss_curve_ = train(samples, self.network_, epochs=self.epochs, batch_size=self.batch_size,
                                 lr=self.lr, lambda1=self.lambda1, lambda2=self.lambda2,
                                 seed=self.random_state)
        return self

    @classmethod
    def from_network(cls, network: HyperSSMNetwork, **kwargs) -> "HyperSSMRegressor":
        c = network.config
        est = cls(window_len=c.window_len, layers=c.layers, embed_dim=c.embed_dim, state_dim=c.state_dim,
                  theta=c.theta, alpha=c.alpha, use_hconv=c.use_hconv, **kwargs)
        est.network_ = network
        est.loss_curve_ = []
        return est

    def predict(self, X) -> np.ndarray:
        """Windows shifted by one frame for an ``(N, L, 4)`` scene."""
        check_is_fitted(self, "network_")
        arr = check_windows(X, self.window_len)
        return self.network_.estimate(arr)

    def predict_next(self, X) -> np.ndarray:
        """Next boxes for ragged histories (padded or trimmed to ``window_len``), estimated jointly."""
        check_is_fitted(self, "network_")
        hist = check_histories(X)
        if not hist:
            return np.zeros((0, 4))
        windows = np.stack([pad_history(h, self.window_len) for h in hist])
        return self.network_.estimate(windows)[:, -1]

    def score(self, X, y=None) -> float:
        """Negative ADE over the ground-truth windows of ``X``."""
        gts = [X] if isinstance(X, (Scenario, dict)) else X
        errs = [motion_eval(self, g.gt if isinstance(g, Scenario) else g)[0] for g in gts]
        return -float(np.mean(errs))

    def motion_model(self):
        check_is_fitted(self, "network_")
        return EstimatorMotion(self.network_)

    def save(self, path):
        check_is_fitted(self, "network_")
        self.network_.save(path)

    @classmethod
    def load(cls, path) -> "HyperSSMRegressor":
        return cls.from_network(HyperSSMNetwork.load(path))


class KalmanPredictor(BaseEstimator):
    """Constant-velocity Kalman filter re-run over each history."""

    window_len = None

    def __init__(self, std_position=1.0 / 20, std_velocity=1.0 / 20, std_measurement=1.0 / 20):
        self.std_position = std_position
        self.std_velocity = std_velocity
        self.std_measurement = std_measurement

    def _kf_config(self) -> KalmanConfig:
        return KalmanConfig(self.std_position, self.std_velocity, self.std_measurement)

    def fit(self, X=None, y=None):
        return self

    def predict_next(self, X) -> np.ndarray:
        cfg = self._kf_config()
        return np.array([kalman_forecast(h, cfg) for h in check_histories(X)]).reshape(-1, 4)

    def motion_model(self):
        return KalmanMotion(self._kf_config())


class ConstantPositionPredictor(BaseEstimator):
    """Predicts that every object stays where it was last seen."""

    window_len = 1

    def fit(self, X=None, y=None):
        return self

    def predict_next(self, X) -> np.ndarray:
        return np.array([h[-1] for h in check_histories(X)]).reshape(-1, 4)

    def motion_model(self):
        return ConstantPositionMotion()
