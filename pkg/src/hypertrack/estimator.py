"""Cascaded HyperSSM motion estimator.

Each layer runs a diagonal state space recurrence whose input and output
paths are both routed through a hypergraph convolution over the objects of
one scene window::

    h_t = A_bar * h_{t-1} + B_bar @ hconv_in(X_t)
    Y_t = X_t + C @ h_t + hconv_out(X_t)

With the hypergraph path disabled (``use_hconv=False``) the same code
computes the plain SSM ablation ``Y_t = 2 X_t + C h_t``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .hypergraph import Hypergraph, _apply, segment_propagation
from .motion_features import (
    VELOCITY_SCALE,
    TrajectoryEmbedder,
    normalize_positions,
    pad_history,
)
from .numeric import Param, linear, linear_backward, load_params, save_params, sigmoid, silu, silu_grad, softplus

TOKEN_DIM = 8
# Y = 2X + ... per layer; halving between layers keeps a K-layer stack from
# growing as 2^K.
LAYER_SCALE = 0.5


@dataclass
class EstimatorConfig:
    window_len: int = 5
    layers: int = 8
    embed_dim: int = 32
    state_dim: int = 32
    theta: float = 0.8
    alpha: float = 0.5
    use_hconv: bool = True

    def __post_init__(self):
        if self.window_len < 2:
            raise ValueError("window_len must be >= 2")
        if self.layers < 1:
            raise ValueError("layers must be >= 1")
        if self.embed_dim < 1 or self.state_dim < 1:
            raise ValueError("embed_dim and state_dim must be positive")
        if not (0.0 < self.alpha <= 1.0):
            raise ValueError("alpha must lie in (0, 1]")


def _mm(a: np.ndarray, w: np.ndarray) -> np.ndarray:
    """``a @ w`` over the last axis as one 2-D BLAS call."""
    return (a.reshape(-1, a.shape[-1]) @ w).reshape(*a.shape[:-1], w.shape[-1])


def _inv_softplus(y: np.ndarray) -> np.ndarray:
    return np.log(np.expm1(y))


class SSMParams:
    """Diagonal continuous SSM; ``A = -softplus(a_raw) < 0`` and ``delta = softplus(delta_raw) > 0``."""

    def __init__(self, state_dim: int, dim: int, rng: np.random.Generator | None, prefix: str):
        if rng is None:
            a = np.ones(state_dim)
            b = np.zeros((state_dim, dim))
            c = np.zeros((dim, state_dim))
        else:
            a = np.exp(np.linspace(np.log(0.5), np.log(4.0), state_dim))
            b = rng.uniform(-1, 1, (state_dim, dim)) / np.sqrt(dim)
            c = rng.uniform(-1, 1, (dim, state_dim)) / np.sqrt(state_dim)
        self.a_raw = Param(f"{prefix}.a_raw", _inv_softplus(a))
        self.delta_raw = Param(f"{prefix}.delta_raw", np.full(state_dim, _inv_softplus(np.array(0.1))))
        self.B = Param(f"{prefix}.B", b)
        self.C = Param(f"{prefix}.C", c)

    @property
    def A(self) -> np.ndarray:
        return -softplus(self.a_raw.value)

    @property
    def delta(self) -> np.ndarray:
        return softplus(self.delta_raw.value)

    def params(self) -> list[Param]:
        return [self.a_raw, self.delta_raw, self.B, self.C]


def discretize(A: np.ndarray, delta: np.ndarray, B: np.ndarray):
    """``A_bar = exp(delta * A)``, ``B_bar = delta * B`` row-wise."""
    return np.exp(delta * A), delta[:, None] * B


class HyperSSMLayer:
    def __init__(self, dim: int, state_dim: int, rng: np.random.Generator | None, prefix: str):
        self.ssm = SSMParams(state_dim, dim, rng, f"{prefix}.ssm")
        # Theta starts at zero so training begins from the plain-SSM reduction.
        self.hconv_in = Param(f"{prefix}.hconv_in", np.zeros((dim, dim)))
        self.hconv_out = Param(f"{prefix}.hconv_out", np.zeros((dim, dim)))
        g = np.zeros((dim, dim)) if rng is None else rng.uniform(-1, 1, (dim, dim)) / np.sqrt(dim)
        self.guidance_proj = Param(f"{prefix}.guidance", g)

    def params(self, use_hconv: bool = True) -> list[Param]:
        ps = self.ssm.params() + [self.guidance_proj]
        if use_hconv:
            ps += [self.hconv_in, self.hconv_out]
        return ps


def hyperssm_block(X: np.ndarray, prop, layer: HyperSSMLayer, h0: np.ndarray, use_hconv: bool = True):
    """One HyperSSM layer over an ``(N, L, d)`` window.

    ``prop`` is a :class:`Hypergraph` or precomputed propagation matrix
    (ignored when ``use_hconv`` is false). Returns ``(Y, h_L, cache)``.
    """
    n, length, d = X.shape
    if h0.shape != (n, layer.ssm.B.shape[0]):
        raise ValueError(f"h0 shape {h0.shape} does not match ({n}, {layer.ssm.B.shape[0]})")
    if d != layer.ssm.B.shape[1]:
        raise ValueError(f"feature width {d} != model width {layer.ssm.B.shape[1]}")
    A, delta = layer.ssm.A, layer.ssm.delta
    a_bar, b_bar = discretize(A, delta, layer.ssm.B.value)
    if use_hconv:
        if isinstance(prop, Hypergraph):
            prop = prop.propagation()
        if prop.shape[0] != n:
            raise ValueError(f"hypergraph has {prop.shape[0]} vertices, window has {n} objects")
        px = _apply(prop, X)
        u = X + _mm(px, layer.hconv_in.value)
    else:
        px = None
        u = X
    bu = _mm(u, b_bar.T)
    hs = np.empty((length + 1, n, b_bar.shape[0]))
    hs[0] = h0
    for t in range(length):
        hs[t + 1] = a_bar * hs[t] + bu[:, t]
    hseq = hs[1:].transpose(1, 0, 2)
    y = 2.0 * X + _mm(hseq, layer.ssm.C.value.T)
    if use_hconv:
        y = y + _mm(px, layer.hconv_out.value)
    cache = (X, prop, px, u, hs, a_bar, b_bar, A, delta)
    return y, hs[length], cache


def hyperssm_block_backward(grad_y: np.ndarray, grad_hl: np.ndarray, layer: HyperSSMLayer, cache,
                            use_hconv: bool = True):
    """Accumulates parameter grads into ``layer``; returns ``(grad_X, grad_h0)``."""
    X, prop, px, u, hs, a_bar, b_bar, A, delta = cache
    length = X.shape[1]
    C = layer.ssm.C.value
    hseq = hs[1:].transpose(1, 0, 2)
    d = X.shape[-1]

    grad_x = 2.0 * grad_y
    layer.ssm.C.grad += grad_y.reshape(-1, d).T @ hseq.reshape(-1, hseq.shape[-1])
    grad_hseq = _mm(grad_y, C)
    grad_px = None
    if use_hconv:
        layer.hconv_out.grad += px.reshape(-1, d).T @ grad_y.reshape(-1, d)
        grad_px = _mm(grad_y, layer.hconv_out.value.T)

    grad_bu = np.empty_like(grad_hseq)
    grad_abar = np.zeros_like(a_bar)
    carry = grad_hl.copy()
    for t in range(length - 1, -1, -1):
        gh = grad_hseq[:, t] + carry
        grad_bu[:, t] = gh
        grad_abar += (gh * hs[t]).sum(axis=0)
        carry = gh * a_bar
    grad_h0 = carry

    grad_bbar = grad_bu.reshape(-1, grad_bu.shape[-1]).T @ u.reshape(-1, d)
    grad_u = _mm(grad_bu, b_bar)
    grad_x += grad_u
    if use_hconv:
        layer.hconv_in.grad += px.reshape(-1, d).T @ grad_u.reshape(-1, d)
        grad_px = grad_px + _mm(grad_u, layer.hconv_in.value.T)
        grad_x += _apply(prop.T, grad_px)

    grad_delta = grad_abar * a_bar * A + (grad_bbar * layer.ssm.B.value).sum(axis=1)
    grad_A = grad_abar * a_bar * delta
    layer.ssm.B.grad += grad_bbar * delta[:, None]
    layer.ssm.a_raw.grad += -grad_A * sigmoid(layer.ssm.a_raw.value)
    layer.ssm.delta_raw.grad += grad_delta * sigmoid(layer.ssm.delta_raw.value)
    return grad_x, grad_h0


class HyperSSMNetwork:
    """Embedder, input lift, K HyperSSM layers and an FFN head producing box deltas."""

    def __init__(self, config: EstimatorConfig | None = None, rng: np.random.Generator | None = None):
        self.config = config or EstimatorConfig()
        c = self.config
        d = c.embed_dim
        self.embedder = TrajectoryEmbedder(c.window_len, d, rng)
        self.lift_w = Param("lift.w", _uniform(rng, (TOKEN_DIM, d)))
        self.lift_b = Param("lift.b", np.zeros(d))
        # Per-frame offset: the recurrence is time-invariant, yet only the
        # last frame of the window is an extrapolation (the others are
        # already observed), so the layers need to know where they are.
        self.lift_pos = Param("lift.pos", _uniform(rng, (c.window_len, d)) * 0.1)
        self.layers = [HyperSSMLayer(d, c.state_dim, rng, f"layer{k}") for k in range(c.layers)]
        self.head_w1 = Param("head.w1", _uniform(rng, (d, d)))
        self.head_b1 = Param("head.b1", np.zeros(d))
        self.head_w2 = Param("head.w2", _uniform(rng, (d, 4)))
        self.head_b2 = Param("head.b2", np.zeros(4))

    # -- parameters -----------------------------------------------------

    def params(self) -> list[Param]:
        ps = self.embedder.params() + [self.lift_w, self.lift_b, self.lift_pos]
        for layer in self.layers:
            ps += layer.params(self.config.use_hconv)
        return ps + [self.head_w1, self.head_b1, self.head_w2, self.head_b2]

    def all_params(self) -> list[Param]:
        """Every parameter including the hypergraph weights of a plain-SSM model."""
        ps = self.embedder.params() + [self.lift_w, self.lift_b, self.lift_pos]
        for layer in self.layers:
            ps += layer.params(True)
        return ps + [self.head_w1, self.head_b1, self.head_w2, self.head_b2]

    def zero_grad(self):
        for p in self.all_params():
            p.zero_grad()

    def state_dict(self) -> dict[str, np.ndarray]:
        return {p.name: p.value.copy() for p in self.all_params()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = {p.name: p for p in self.all_params()}
        missing = set(params) - set(state)
        if missing:
            raise KeyError(f"missing parameters: {sorted(missing)}")
        for name, value in state.items():
            if name not in params:
                raise KeyError(f"unexpected parameter {name!r}")
            if params[name].value.shape != value.shape:
                raise ValueError(f"shape mismatch for {name}: {value.shape} vs {params[name].value.shape}")
            params[name].value[...] = value

    def save(self, path) -> None:
        save_params(path, self.all_params(), meta=json.dumps(asdict(self.config), sort_keys=True))

    @classmethod
    def load(cls, path) -> "HyperSSMNetwork":
        values, meta = load_params(path)
        net = cls(EstimatorConfig(**json.loads(meta)) if meta else EstimatorConfig())
        net.load_state_dict(values)
        return net

    # -- forward / backward ---------------------------------------------

    def tokens(self, windows: np.ndarray) -> np.ndarray:
        vel = np.zeros_like(windows)
        vel[:, 1:] = windows[:, 1:] - windows[:, :-1]
        return np.concatenate([VELOCITY_SCALE * vel, normalize_positions(windows)], axis=-1)

    def propagation(self, features: np.ndarray, segments: np.ndarray | None):
        if segments is None:
            segments = np.zeros(len(features), dtype=np.int64)
        return segment_propagation(features, segments, self.config.theta)

    def forward(self, windows: np.ndarray, segments: np.ndarray | None = None, graph=None):
        """Map ``(N, L, 4)`` windows to the windows shifted by one frame.

        ``segments`` tags rows with their scene window so a batch of scenes
        shares one call; ``graph`` overrides hypergraph construction.
        Returns ``(output, cache)``.
        """
        windows = np.asarray(windows, dtype=np.float64)
        c = self.config
        if windows.ndim != 3 or windows.shape[1:] != (c.window_len, 4):
            raise ValueError(f"expected (N, {c.window_len}, 4) windows, got {windows.shape}")
        n = windows.shape[0]
        if n == 0:
            return np.zeros_like(windows), None
        feats, embed_cache = self.embedder.forward(windows, c.alpha)
        prop = None
        if c.use_hconv:
            prop = graph if graph is not None else self.propagation(feats, segments)
            if isinstance(prop, Hypergraph):
                prop = prop.propagation()
        tok = self.tokens(windows)
        x = linear(tok, self.lift_w.value, self.lift_b.value) + self.lift_pos.value
        h = np.zeros((n, c.state_dim))
        layer_caches = []
        for layer in self.layers:
            x_in = x + (feats @ layer.guidance_proj.value)[:, None, :]
            y, h, cache = hyperssm_block(x_in, prop, layer, h, c.use_hconv)
            layer_caches.append(cache)
            x = LAYER_SCALE * y
        f1 = linear(x, self.head_w1.value, self.head_b1.value)
        q = silu(f1)
        delta = linear(q, self.head_w2.value, self.head_b2.value) / VELOCITY_SCALE
        shifted = np.concatenate([windows[:, 1:], windows[:, -1:]], axis=1)
        out = shifted + delta
        return out, (feats, embed_cache, tok, layer_caches, x, f1, q)

    def backward(self, grad_out: np.ndarray, cache) -> None:
        """Accumulate parameter gradients for ``d loss / d output``."""
        if cache is None:
            return
        feats, embed_cache, tok, layer_caches, z, f1, q = cache
        use_hconv = self.config.use_hconv
        g_raw = grad_out / VELOCITY_SCALE
        gq, gw2, gb2 = linear_backward(g_raw, q, self.head_w2.value)
        self.head_w2.grad += gw2
        self.head_b2.grad += gb2
        gf1 = gq * silu_grad(f1)
        gx, gw1, gb1 = linear_backward(gf1, z, self.head_w1.value)
        self.head_w1.grad += gw1
        self.head_b1.grad += gb1

        grad_feats = np.zeros_like(feats)
        grad_h = np.zeros((feats.shape[0], self.config.state_dim))
        for layer, cache_k in zip(reversed(self.layers), reversed(layer_caches)):
            grad_y = LAYER_SCALE * gx
            grad_xin, grad_h = hyperssm_block_backward(grad_y, grad_h, layer, cache_k, use_hconv)
            g_guid = grad_xin.sum(axis=1)
            layer.guidance_proj.grad += feats.T @ g_guid
            grad_feats += g_guid @ layer.guidance_proj.value.T
            gx = grad_xin
        _, glw, glb = linear_backward(gx, tok, self.lift_w.value)
        self.lift_w.grad += glw
        self.lift_b.grad += glb
        self.lift_pos.grad += gx.sum(axis=0)
        self.embedder.backward(grad_feats, embed_cache)

    # -- inference helpers ----------------------------------------------

    def estimate(self, windows: np.ndarray, segments=None) -> np.ndarray:
        out, _ = self.forward(windows, segments)
        return out

    def predict_next(self, histories) -> np.ndarray:
        """Next-frame boxes for a list of ``(n_i, 4)`` histories, estimated jointly."""
        if len(histories) == 0:
            return np.zeros((0, 4))
        windows = np.stack([pad_history(h, self.config.window_len) for h in histories])
        return self.estimate(windows)[:, -1]


def _uniform(rng, shape):
    if rng is None:
        return np.zeros(shape)
    return rng.uniform(-1, 1, shape) / np.sqrt(shape[0])
