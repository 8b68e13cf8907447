"""Motion-aware hypergraph construction and hypergraph convolution."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

_ZERO_NORM = 1e-12


@dataclass(frozen=True)
class Hypergraph:
    """One hyperedge per vertex; column ``e`` of ``incidence`` is the ball around vertex ``e``."""

    incidence: np.ndarray
    edge_weights: np.ndarray
    vertex_degrees: np.ndarray
    edge_degrees: np.ndarray

    @property
    def num_vertices(self) -> int:
        return self.incidence.shape[0]

    def propagation(self) -> np.ndarray:
        """Dense ``D_v^-1 H W D_e^-1 H^T``."""
        h = self.incidence
        return (h * (self.edge_weights / self.edge_degrees)[None, :]) @ h.T / self.vertex_degrees[:, None]

    def propagation_sparse(self) -> sp.csr_matrix:
        return sp.csr_matrix(self.propagation())

    @classmethod
    def singleton(cls, n: int) -> "Hypergraph":
        return cls.from_incidence(np.eye(n))

    @classmethod
    def from_incidence(cls, incidence: np.ndarray, edge_weights=None) -> "Hypergraph":
        h = np.asarray(incidence, dtype=np.float64)
        w = np.ones(h.shape[1]) if edge_weights is None else np.asarray(edge_weights, dtype=np.float64)
        dv = h.sum(axis=1)
        de = h.sum(axis=0)
        if h.size and (dv.min() < 1 or de.min() < 1):
            raise ValueError("every vertex and hyperedge needs degree >= 1")
        return cls(h, w, dv, de)


def cosine_similarity(features: np.ndarray) -> np.ndarray:
    """Pairwise cosine; rows with zero norm get similarity 1 only with themselves."""
    x = np.asarray(features, dtype=np.float64)
    norms = np.linalg.norm(x, axis=1)
    zero = norms < _ZERO_NORM
    unit = x / np.where(zero, 1.0, norms)[:, None]
    sim = unit @ unit.T
    sim[zero, :] = -np.inf
    sim[:, zero] = -np.inf
    np.fill_diagonal(sim, 1.0)
    return sim


def construct(features: np.ndarray, theta: float) -> Hypergraph:
    """Ball hyperedges: ``u`` joins the edge centred on ``v`` iff cos(x_u, x_v) >= theta."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ValueError("features must be a non-empty (N, d) array")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite motion features")
    incidence = (cosine_similarity(x) >= theta).astype(np.float64)
    np.fill_diagonal(incidence, 1.0)
    return Hypergraph.from_incidence(incidence)


def segment_propagation(features: np.ndarray, segments: np.ndarray, theta: float) -> sp.csr_matrix:
    """Block-diagonal propagation matrix with one independent hypergraph per segment id.

    Rows sharing a segment id belong to the same scene window; no hyperedge
    crosses segments. Segment ids must be contiguous runs.
    """
    segments = np.asarray(segments)
    bounds = np.flatnonzero(np.diff(segments)) + 1
    starts = np.concatenate([[0], bounds])
    stops = np.concatenate([bounds, [len(segments)]])
    blocks = [construct(features[a:b], theta).propagation() for a, b in zip(starts, stops)]
    return sp.block_diag(blocks, format="csr")


def _apply(prop, x: np.ndarray) -> np.ndarray:
    """Propagate along the object axis of ``(N, ...)`` features."""
    n = x.shape[0]
    flat = x.reshape(n, -1)
    out = prop @ flat
    return np.asarray(out).reshape(x.shape)


def hconv(x: np.ndarray, graph, theta_weights: np.ndarray):
    """Gather/scatter hypergraph convolution with residual: ``X + P X Theta``.

    ``graph`` is a :class:`Hypergraph` or a precomputed propagation matrix.
    Returns ``(output, cache)``; the cache feeds :func:`hconv_backward`.
    """
    prop = graph.propagation() if isinstance(graph, Hypergraph) else graph
    if x.shape[0] != prop.shape[0]:
        raise ValueError(f"feature rows {x.shape[0]} != vertex count {prop.shape[0]}")
    if x.shape[-1] != theta_weights.shape[0]:
        raise ValueError(f"feature width {x.shape[-1]} != Theta rows {theta_weights.shape[0]}")
    px = _apply(prop, x)
    return x + px @ theta_weights, (prop, px)


def hconv_elementwise(x: np.ndarray, graph: Hypergraph, theta_weights: np.ndarray) -> np.ndarray:
    """Loop form of :func:`hconv` (edge means of ``x_v Theta``, then vertex means), for checking."""
    h = graph.incidence
    xt = x @ theta_weights
    n_v, n_e = h.shape
    edge_feats = np.zeros((n_e, x.shape[1]))
    for e in range(n_e):
        members = np.flatnonzero(h[:, e])
        edge_feats[e] = xt[members].mean(axis=0)
    out = np.array(x, dtype=np.float64, copy=True)
    for v in range(n_v):
        edges = np.flatnonzero(h[v])
        out[v] += edge_feats[edges].mean(axis=0)
    return out


def hconv_backward(grad_out: np.ndarray, x: np.ndarray, theta_weights: np.ndarray, cache):
    """Returns ``(grad_x, grad_theta)`` for :func:`hconv`."""
    prop, px = cache
    d = theta_weights.shape[0]
    grad_theta = px.reshape(-1, d).T @ grad_out.reshape(-1, d)
    grad_x = grad_out + _apply(prop.T, grad_out @ theta_weights.T)
    return grad_x, grad_theta
