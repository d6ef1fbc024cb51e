"""Physics-informed loss for inferring model parameters from a steady pattern.

The loss has three mean-squared parts::

    total = mse_h + w_f * mse_f + mse_bc

``mse_h`` compares network output with the pattern at data points (u and v
errors pooled over ``2*N_h`` scalars), ``mse_f`` averages ``f_u**2 + f_v**2``
over collocation points and ``mse_bc`` does the same over boundary points.  The
residual Laplacian is a five-point stencil of network evaluations at spacing
``h``, so the residual of a perfect fit equals the solver's discrete residual.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import GridSpec, ParameterError, Pattern, RDParams
from .nn import Mlp, TrainableSet

N_F = 2500
N_BC = 200
W_F = 10.0


class NonFiniteLossError(FloatingPointError):
    def __init__(self, component: str, value: float):
        self.component = component
        super().__init__(f"non-finite {component}: {value!r}")


@dataclass(frozen=True)
class LossBreakdown:
    mse_h: float
    mse_f: float
    mse_bc: float
    w_f: float

    @property
    def total(self) -> float:
        return self.mse_h + self.w_f * self.mse_f + self.mse_bc

    def as_dict(self) -> dict[str, float]:
        return {"mse_h": self.mse_h, "mse_f": self.mse_f, "mse_bc": self.mse_bc,
                "w_f": self.w_f, "total": self.total}


@dataclass(frozen=True)
class PointSets:
    """Training points.  Coordinates are ``(n, 2)`` arrays; targets are ``(n, 2)`` (u, v)."""

    data_points: np.ndarray
    data_targets: np.ndarray
    collocation_points: np.ndarray
    boundary_points: np.ndarray
    stencil_h: tuple[float, float]

    @property
    def n_h(self) -> int:
        return len(self.data_points)

    @property
    def n_f(self) -> int:
        return len(self.collocation_points)

    @property
    def n_bc(self) -> int:
        return len(self.boundary_points)


def build_point_sets(pattern: Pattern, n_bc: int = N_BC, seed: int = 0,
                     n_h: int | None = None, n_f: int | None = None) -> PointSets:
    """Data and collocation points are grid nodes; boundary points are drawn from edge nodes.

    With the defaults every node is both a data and a collocation point.  ``n_h``/``n_f``
    subsample nodes without replacement.  Boundary points are sampled with replacement
    so any ``n_bc`` is reachable.
    """
    grid = pattern.grid
    pts = grid.points()
    targets = np.column_stack([pattern.u.ravel(), pattern.v.ravel()])
    if targets.shape[0] != pts.shape[0]:
        raise ValueError("pattern does not match its grid")
    rng = np.random.default_rng(seed)
    data_idx = _subsample(rng, grid.size, n_h)
    colloc_idx = _subsample(rng, grid.size, n_f)
    bc_idx = rng.choice(grid.edge_indices(), size=n_bc, replace=True)
    return PointSets(pts[data_idx], targets[data_idx], pts[colloc_idx], pts[bc_idx],
                     (grid.dx, grid.dy))


def _subsample(rng, n, k):
    if k is None or k >= n:
        return np.arange(n)
    return np.sort(rng.choice(n, size=k, replace=False))


_OFFSETS = np.array([[0, 0], [1, 0], [-1, 0], [0, 1], [0, -1]], dtype=np.float64)


def stencil_points(xy: np.ndarray, h) -> np.ndarray:
    """Stack ``xy`` and its four neighbours: ``[centre; +x; -x; +y; -y]``, shape ``(5n, 2)``."""
    hx, hy = _pair(h)
    offs = _OFFSETS * np.array([hx, hy])
    return (offs[:, None, :] + xy[None, :, :]).reshape(-1, 2)


def _pair(h):
    if np.ndim(h) == 0:
        return float(h), float(h)
    hx, hy = h
    return float(hx), float(hy)


def _laplacian5(out5: np.ndarray, h) -> np.ndarray:
    """``out5`` has shape ``(5, n, 2)`` in stencil order; returns ``(n, 2)`` Laplacians."""
    hx, hy = _pair(h)
    c = out5[0]
    return (out5[1] + out5[2] - 2.0 * c) / hx ** 2 + (out5[3] + out5[4] - 2.0 * c) / hy ** 2


def residual_terms(u, v, lap_u, lap_v, p: RDParams):
    """Steady-state residual with the coupling written as ``alpha*r1/beta`` times ``beta``."""
    if p.beta == 0.0:
        raise ParameterError("beta = 0 leaves alpha*r1/beta undefined")
    f_u = p.d1 * p.d2 * lap_u + p.alpha * u * (1.0 - p.r1 * v * v) + v * (1.0 - p.r2 * u)
    f_v = p.d2 * lap_v + p.beta * v * (1.0 + (p.alpha * p.r1 / p.beta) * u * v) + u * (p.gamma + p.r2 * v)
    return f_u, f_v


def residual(net: Mlp, p: RDParams, x, y, h):
    """``(f_u, f_v)`` at physical point(s) using five network evaluations per point."""
    xy = np.column_stack([np.ravel(x), np.ravel(y)]).astype(np.float64)
    out = net.forward_points(stencil_points(xy, h)).reshape(5, -1, 2)
    lap = _laplacian5(out, h)
    f_u, f_v = residual_terms(out[0, :, 0], out[0, :, 1], lap[:, 0], lap[:, 1], p)
    if np.ndim(x) == 0 and np.ndim(y) == 0:
        return float(f_u[0]), float(f_v[0])
    return f_u, f_v


def field_residual(pattern: Pattern, p: RDParams, boundary: str = "zero-flux"):
    """Residual of the stored fields using the solver's discrete Laplacian."""
    from .solver import laplacian

    lu = laplacian(pattern.u, pattern.grid, boundary)
    lv = laplacian(pattern.v, pattern.grid, boundary)
    return residual_terms(pattern.u, pattern.v, lu, lv, p)


@dataclass
class _ResidualBlock:
    start: int
    n: int
    weight: float
    u: np.ndarray
    v: np.ndarray
    lap_u: np.ndarray
    lap_v: np.ndarray
    f_u: np.ndarray
    f_v: np.ndarray


@dataclass
class LossGraph:
    """What one call to :func:`loss` recorded for :func:`backprop`."""

    acts: list[np.ndarray]
    outputs: np.ndarray
    params: RDParams
    h: tuple[float, float]
    data_rows: slice | np.ndarray | None
    data_residual: np.ndarray | None
    data_weight: float
    blocks: list[_ResidualBlock]


def loss(ts: TrainableSet, sets: PointSets, w_f: float = W_F, *, include_bc: bool = True,
         data_idx: np.ndarray | None = None, colloc_idx: np.ndarray | None = None,
         shared: bool = False) -> tuple[LossBreakdown, LossGraph]:
    """Evaluate the loss on ``sets`` (or on the given index subsets of it) and record the graph.

    ``shared=True`` means the data and collocation subsets are the same points, in which
    case data predictions reuse the stencil centre evaluations.
    """
    if w_f < 0:
        raise ValueError("w_f must be non-negative")
    p = ts.params
    h = _pair(sets.stencil_h)
    data_pts = sets.data_points if data_idx is None else sets.data_points[data_idx]
    data_tgt = sets.data_targets if data_idx is None else sets.data_targets[data_idx]
    col_pts = sets.collocation_points if colloc_idx is None else sets.collocation_points[colloc_idx]
    if shared and len(data_pts) != len(col_pts):
        raise ValueError("shared data/collocation subsets must have equal length")

    chunks = []
    offset = 0
    regions = []
    if not shared and len(data_pts):
        chunks.append(data_pts)
        regions.append(("data", offset, len(data_pts)))
        offset += len(data_pts)
    for name, pts in (("f", col_pts), ("bc", sets.boundary_points if include_bc else None)):
        if pts is None or not len(pts):
            continue
        chunks.append(stencil_points(pts, h))
        regions.append((name, offset, len(pts)))
        offset += 5 * len(pts)
    if not chunks:
        raise ValueError("no points to evaluate")
    stacked = np.concatenate(chunks) if len(chunks) > 1 else chunks[0]
    outputs, acts = ts.net.forward_points(stacked, record=True)

    blocks = []
    sums = {"f": 0.0, "bc": 0.0}
    counts = {"f": len(col_pts), "bc": len(sets.boundary_points) if include_bc else 0}
    weights = {"f": w_f, "bc": 1.0}
    data_rows = None
    for name, start, n in regions:
        if name == "data":
            data_rows = slice(start, start + n)
            continue
        out5 = outputs[start:start + 5 * n].reshape(5, n, 2)
        lap = _laplacian5(out5, h)
        u, v = out5[0, :, 0], out5[0, :, 1]
        f_u, f_v = residual_terms(u, v, lap[:, 0], lap[:, 1], p)
        sums[name] = float(np.dot(f_u, f_u) + np.dot(f_v, f_v))
        blocks.append(_ResidualBlock(start, n, weights[name] / n, u, v, lap[:, 0], lap[:, 1], f_u, f_v))
        if name == "f" and shared:
            data_rows = slice(start, start + n)

    mse_h = 0.0
    data_residual = None
    if len(data_pts):
        data_residual = outputs[data_rows] - data_tgt
        mse_h = float(np.sum(data_residual * data_residual)) / (2 * len(data_pts))
    mse_f = sums["f"] / counts["f"] if counts["f"] else 0.0
    mse_bc = sums["bc"] / counts["bc"] if counts["bc"] else 0.0
    for name, value in (("mse_h", mse_h), ("mse_f", mse_f), ("mse_bc", mse_bc)):
        if not math.isfinite(value):
            raise NonFiniteLossError(name, value)
    graph = LossGraph(acts, outputs, p, h, data_rows, data_residual,
                      1.0 / len(data_pts) if len(data_pts) else 0.0, blocks)
    return LossBreakdown(mse_h, mse_f, mse_bc, w_f), graph


def backprop(ts: TrainableSet, graph: LossGraph) -> np.ndarray:
    """Exact gradient of the recorded total loss with respect to ``ts.theta``.

    Entries for masked model parameters are zero.
    """
    p = graph.params
    hx, hy = graph.h
    d_out = np.zeros_like(graph.outputs)
    if graph.data_residual is not None:
        d_out[graph.data_rows] += graph.data_residual * graph.data_weight

    g_pde = np.zeros(5)
    centre = -2.0 / hx ** 2 - 2.0 / hy ** 2
    for blk in graph.blocks:
        u, v = blk.u, blk.v
        g_fu = 2.0 * blk.weight * blk.f_u
        g_fv = 2.0 * blk.weight * blk.f_v
        g_lu = g_fu * (p.d1 * p.d2)
        g_lv = g_fv * p.d2
        uv = u * v
        v2 = v * v
        d5 = d_out[blk.start:blk.start + 5 * blk.n].reshape(5, blk.n, 2)
        # pointwise partials of f_u, f_v with respect to the centre values
        dfu_du = p.alpha * (1.0 - p.r1 * v2) - p.r2 * v
        dfu_dv = -2.0 * p.alpha * p.r1 * uv + 1.0 - p.r2 * u
        dfv_du = p.alpha * p.r1 * v2 + p.gamma + p.r2 * v
        dfv_dv = p.beta + 2.0 * p.alpha * p.r1 * uv + p.r2 * u
        d5[0, :, 0] += g_fu * dfu_du + g_fv * dfv_du + centre * g_lu
        d5[0, :, 1] += g_fu * dfu_dv + g_fv * dfv_dv + centre * g_lv
        for k, inv in ((1, hx ** -2), (2, hx ** -2), (3, hy ** -2), (4, hy ** -2)):
            d5[k, :, 0] += inv * g_lu
            d5[k, :, 1] += inv * g_lv
        uv2 = u * v2
        g_pde[0] += p.d2 * np.dot(g_fu, blk.lap_u)
        g_pde[1] += p.d1 * np.dot(g_fu, blk.lap_u) + np.dot(g_fv, blk.lap_v)
        # alpha enters directly, through alpha*r1/beta, and through gamma = -alpha
        g_pde[2] += np.dot(g_fu, u * (1.0 - p.r1 * v2)) + np.dot(g_fv, p.r1 * uv2 - u)
        g_pde[3] += np.dot(g_fv, v)
        g_pde[4] += -p.alpha * np.dot(g_fu, uv2) + p.alpha * np.dot(g_fv, uv2)

    grad = np.empty_like(ts.theta)
    ts.net.backward(graph.acts, d_out, out=grad[:ts.n_net])
    grad[ts.n_net:] = np.where(ts.mask, g_pde, 0.0)
    bad = ~np.isfinite(grad)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        name = f"network[{i}]" if i < ts.n_net else f"pde[{i - ts.n_net}]"
        raise NonFiniteLossError(f"gradient component {name}", float(grad[i]))
    return grad
