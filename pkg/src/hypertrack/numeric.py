"""Dense double-precision arithmetic with hand-wired gradients.

numpy arrays serve as tensors. Each forward helper below has a matching
``*_backward`` that returns exact analytic gradients; composite models chain
them by hand and accumulate into :class:`Param` gradient buffers.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

import numpy as np
from scipy.special import expit

CHECKPOINT_HEADER = "HYPERTRACK-PARAMS v1"


def make_rng(seed: int, stream: str = "") -> np.random.Generator:
    """64-bit PCG generator for ``(seed, stream)``; named streams are independent."""
    key = zlib.crc32(stream.encode("utf-8"))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, key])))


@dataclass
class Param:
    name: str
    value: np.ndarray
    grad: np.ndarray = field(init=False)
    m: np.ndarray = field(init=False)
    v: np.ndarray = field(init=False)

    def __post_init__(self):
        self.value = np.array(self.value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)
        self.m = np.zeros_like(self.value)
        self.v = np.zeros_like(self.value)

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self):
        self.grad[...] = 0.0


# ---------------------------------------------------------------------------
# primitive ops


def _check_matmul(a: np.ndarray, b: np.ndarray):
    if a.shape[-1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``a @ b`` where ``b`` is 2-D and ``a`` may carry leading batch axes."""
    _check_matmul(a, b)
    return a @ b


def matmul_backward(grad_out: np.ndarray, a: np.ndarray, b: np.ndarray):
    """Gradients of ``a @ b`` wrt ``a`` and ``b`` (batch axes of ``a`` summed for ``b``)."""
    ga = grad_out @ b.T
    gb = a.reshape(-1, a.shape[-1]).T @ grad_out.reshape(-1, grad_out.shape[-1])
    return ga, gb


def add(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.shape != b.shape:
        raise ValueError(f"add shape mismatch: {a.shape} vs {b.shape}")
    return a + b


def add_backward(grad_out: np.ndarray):
    return grad_out, grad_out


def scale(a: np.ndarray, s: float) -> np.ndarray:
    return a * s


def scale_backward(grad_out: np.ndarray, s: float) -> np.ndarray:
    return grad_out * s


def linear(x: np.ndarray, w: np.ndarray, b: np.ndarray | None = None) -> np.ndarray:
    out = matmul(x, w)
    return out if b is None else out + b


def linear_backward(grad_out: np.ndarray, x: np.ndarray, w: np.ndarray):
    """Returns ``(grad_x, grad_w, grad_b)``."""
    gx, gw = matmul_backward(grad_out, x, w)
    gb = grad_out.reshape(-1, grad_out.shape[-1]).sum(axis=0)
    return gx, gw, gb


def sigmoid(x: np.ndarray) -> np.ndarray:
    return expit(np.asarray(x, dtype=np.float64))


def silu(x: np.ndarray) -> np.ndarray:
    return x * sigmoid(x)


def silu_grad(x: np.ndarray) -> np.ndarray:
    s = sigmoid(x)
    return s * (1.0 + x * (1.0 - s))


def softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def elementwise(x: np.ndarray, fn: str) -> np.ndarray:
    return _ELEMENTWISE[fn][0](x)


def elementwise_backward(grad_out: np.ndarray, x: np.ndarray, fn: str) -> np.ndarray:
    return grad_out * _ELEMENTWISE[fn][1](x)


_ELEMENTWISE: dict[str, tuple[Callable, Callable]] = {
    "silu": (silu, silu_grad),
    "softplus": (softplus, sigmoid),
    "sigmoid": (sigmoid, lambda x: sigmoid(x) * (1.0 - sigmoid(x))),
    "exp": (np.exp, np.exp),
    "identity": (lambda x: x, np.ones_like),
}


# ---------------------------------------------------------------------------
# optimisation


def adam_step(params: Iterable[Param], lr: float, betas=(0.9, 0.999), eps: float = 1e-8,
              step: int = 1) -> None:
    """One bias-corrected Adam update at 1-based ``step``; zeroes gradients."""
    params = list(params)
    b1, b2 = betas
    for p in params:
        if not np.all(np.isfinite(p.grad)):
            raise FloatingPointError(f"non-finite gradient in parameter {p.name!r}")
    for p in params:
        p.m *= b1
        p.m += (1.0 - b1) * p.grad
        p.v *= b2
        p.v += (1.0 - b2) * p.grad * p.grad
        m_hat = p.m / (1.0 - b1 ** step)
        v_hat = p.v / (1.0 - b2 ** step)
        p.value -= lr * m_hat / (np.sqrt(v_hat) + eps)
        p.zero_grad()


class Adam:
    """Stateful wrapper keeping the step counter."""

    def __init__(self, params: Iterable[Param], lr: float = 1e-4, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.t = 0

    def step(self):
        self.t += 1
        adam_step(self.params, self.lr, self.betas, self.eps, step=self.t)

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()


def grad_check(loss_fn: Callable[[], float], params: Iterable[Param], h: float = 1e-5,
               analytic: Callable[[], None] | None = None, max_coords: int | None = None,
               rng: np.random.Generator | None = None) -> float:
    """Worst relative error between analytic and central-difference gradients.

    ``loss_fn`` evaluates the scalar loss from the current parameter values.
    ``analytic`` (if given) must populate ``Param.grad``; otherwise the grads
    already stored are used. ``max_coords`` subsamples coordinates per param.
    """
    params = list(params)
    if analytic is not None:
        for p in params:
            p.zero_grad()
        analytic()
    worst = 0.0
    for p in params:
        flat = p.value.reshape(-1)
        g = p.grad.reshape(-1).copy()
        idx = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            rng = rng or make_rng(0, "grad_check")
            idx = np.sort(rng.choice(flat.size, size=max_coords, replace=False))
        for i in idx:
            orig = flat[i]
            flat[i] = orig + h
            fp = loss_fn()
            flat[i] = orig - h
            fm = loss_fn()
            flat[i] = orig
            num = (fp - fm) / (2.0 * h)
            denom = max(abs(g[i]), abs(num), 1e-8)
            worst = max(worst, abs(g[i] - num) / denom)
    return worst


# ---------------------------------------------------------------------------
# checkpoint archive
#
# Text format, one header line followed by one record per parameter:
#   HYPERTRACK-PARAMS v1
#   meta <json>                      (optional, single line)
#   param <name> <ndim> <dim0> ... <dimk>
#   <space separated float.hex values, row-major>


def save_params(path, params: Iterable[Param], meta: str | None = None) -> None:
    lines = [CHECKPOINT_HEADER]
    if meta is not None:
        if "\n" in meta:
            raise ValueError("checkpoint meta must be a single line")
        lines.append(f"meta {meta}")
    for p in params:
        shape = " ".join(str(s) for s in p.value.shape)
        lines.append(f"param {p.name} {p.value.ndim} {shape}".rstrip())
        lines.append(" ".join(float(v).hex() for v in p.value.reshape(-1)))
    Path(path).write_text("\n".join(lines) + "\n")


def load_params(path) -> tuple[dict[str, np.ndarray], str | None]:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != CHECKPOINT_HEADER:
        raise ValueError(f"{path}: not a parameter archive (bad header)")
    meta = None
    values: dict[str, np.ndarray] = {}
    i = 1
    if i < len(lines) and lines[i].startswith("meta "):
        meta = lines[i][5:]
        i += 1
    while i < len(lines):
        head = lines[i].split()
        if not head:
            i += 1
            continue
        if head[0] != "param" or i + 1 >= len(lines):
            raise ValueError(f"{path}:{i + 1}: malformed parameter record")
        name, ndim = head[1], int(head[2])
        shape = tuple(int(s) for s in head[3:3 + ndim])
        data = [float.fromhex(tok) for tok in lines[i + 1].split()]
        if len(data) != int(np.prod(shape, dtype=np.int64)):
            raise ValueError(f"{path}:{i + 2}: expected {np.prod(shape)} values for {name}")
        values[name] = np.array(data, dtype=np.float64).reshape(shape)
        i += 2
    return values, meta
