"""Self-checks run by ``hypertrack verify``.

Each check returns a :class:`CheckResult`; none of them raise on a numeric
failure, so the caller can report every line before deciding the exit code.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .estimator import EstimatorConfig, HyperSSMNetwork
from .hypergraph import Hypergraph, construct, hconv
from .motion_features import ema_velocity
from .numeric import grad_check, make_rng
from .training import loss, loss_and_grad

GRAD_TOL = 1e-3
IDENTITY_TOL = 1e-10


@dataclass
class CheckResult:
    name: str
    ok: bool
    value: float
    tol: float

    def line(self) -> str:
        status = "PASS" if self.ok else "FAIL"
        return f"{status}  {self.name:<34} value={self.value:.3e} tol={self.tol:.0e}"


def random_windows(rng: np.random.Generator, n: int, window_len: int, groups: int = 2) -> np.ndarray:
    """Short trajectories in the unit frame; objects share one of ``groups`` base velocities."""
    base_v = rng.normal(0, 0.01, (groups, 4)) * np.array([1, 1, 0.1, 0.1])
    start = np.column_stack([rng.uniform(0.2, 0.8, (n, 2)), rng.uniform(0.03, 0.1, (n, 2))])
    v = base_v[rng.integers(0, groups, n)] + rng.normal(0, 0.001, (n, 4)) * np.array([1, 1, 0.1, 0.1])
    t = np.arange(window_len)[None, :, None]
    return start[:, None, :] + t * v[:, None, :]


def small_config(cfg: EstimatorConfig, use_hconv: bool = True) -> EstimatorConfig:
    return replace(cfg, layers=2, embed_dim=8, state_dim=8, use_hconv=use_hconv)


def check_gradients(cfg: EstimatorConfig, seed: int = 0, lambda2: float = 1.0) -> list[CheckResult]:
    out = []
    for use_hconv in (True, False):
        rng = make_rng(seed, "verify-grad")
        net = HyperSSMNetwork(small_config(cfg, use_hconv), rng)
        x = random_windows(rng, 3, cfg.window_len)
        target = np.concatenate([x[:, 1:], x[:, -1:] + (x[:, -1:] - x[:, -2:-1])], axis=1)

        def loss_fn():
            return loss(net.estimate(x), target, 1.0, lambda2)

        def analytic():
            net.zero_grad()
            pred, cache = net.forward(x)
            _, g = loss_and_grad(pred, target, 1.0, lambda2)
            net.backward(g, cache)

        err = grad_check(loss_fn, net.params(), h=1e-5, analytic=analytic)
        label = "hyperssm" if use_hconv else "ssm"
        out.append(CheckResult(f"gradient ({label})", err < GRAD_TOL, err, GRAD_TOL))
    return out


def check_reduction(cfg: EstimatorConfig, seed: int = 0, trials: int = 20) -> CheckResult:
    """Zero hypergraph weights on a singleton graph collapse to the plain SSM."""
    worst = 0.0
    rng = make_rng(seed, "verify-reduction")
    for _ in range(trials):
        hyper = HyperSSMNetwork(small_config(cfg, True), rng)
        for layer in hyper.layers:
            layer.hconv_in.value[...] = 0.0
            layer.hconv_out.value[...] = 0.0
        plain = HyperSSMNetwork(small_config(cfg, False))
        plain.load_state_dict(hyper.state_dict())
        x = random_windows(rng, int(rng.integers(1, 8)), cfg.window_len)
        a = hyper.forward(x, graph=Hypergraph.singleton(len(x)))[0]
        b = plain.forward(x)[0]
        worst = max(worst, float(np.abs(a - b).max()))
    return CheckResult("reduction to plain SSM", worst <= IDENTITY_TOL, worst, IDENTITY_TOL)


def check_equivariance(cfg: EstimatorConfig, seed: int = 0, trials: int = 20) -> list[CheckResult]:
    rng = make_rng(seed, "verify-perm")
    worst_conv = worst_net = 0.0
    for _ in range(trials):
        n = int(rng.integers(2, 11))
        feats = rng.normal(size=(n, 4))
        x = rng.normal(size=(n, 3, 5))
        theta_w = rng.normal(size=(5, 5))
        perm = rng.permutation(n)
        g = construct(feats, cfg.theta)
        gp = construct(feats[perm], cfg.theta)
        y = hconv(x, g, theta_w)[0]
        yp = hconv(x[perm], gp, theta_w)[0]
        worst_conv = max(worst_conv, float(np.abs(y[perm] - yp).max()))

        net = HyperSSMNetwork(small_config(cfg, True), rng)
        w = random_windows(rng, n, cfg.window_len)
        worst_net = max(worst_net, float(np.abs(net.estimate(w)[perm] - net.estimate(w[perm])).max()))
    return [
        CheckResult("permutation equivariance (hconv)", worst_conv <= IDENTITY_TOL, worst_conv, IDENTITY_TOL),
        CheckResult("permutation equivariance (model)", worst_net <= IDENTITY_TOL, worst_net, IDENTITY_TOL),
    ]


def check_ema(seed: int = 0) -> CheckResult:
    rng = make_rng(seed, "verify-ema")
    worst = 0.0
    for alpha in (0.1, 0.5, 0.9, 1.0):
        v = rng.normal(size=4)
        worst = max(worst, float(np.abs(ema_velocity(np.tile(v, (6, 1)), alpha) - v).max()))
    return CheckResult("EMA fixed point", worst <= 1e-12, worst, 1e-12)


def run_all(cfg: EstimatorConfig, seed: int = 0) -> list[CheckResult]:
    return [*check_gradients(cfg, seed), check_reduction(cfg, seed), *check_equivariance(cfg, seed),
            check_ema(seed)]
