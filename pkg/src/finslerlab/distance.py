"""Forward/backward distance fields on the sampled chart.

Distances are shortest paths on a directed graph joining each cell to its
neighbors within a configurable stencil radius (coprime offsets only);
the edge weight from cell a to cell b is F(midpoint, x_b - x_a), so
non-reversible metrics produce asymmetric distances. Periodic axes wrap.

The default stencil radius is 3 (32 directions in 2D): the worst-case
direction-snapping error of the radius-2 stencil (2.8% Euclidean, 5%+ for
strongly asymmetric norms) exceeds the accuracy the ball-mass and content
estimates need, while radius 3 stays near 1.3% at unchanged asymptotic
cost.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import gcd

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import dijkstra

from .errors import EmptyInput, SourceOutsideDomain
from .grid import BorelMask, GridDomain
from .metrics import MetricField

DEFAULT_STENCIL_RADIUS = 3


def stencil_offsets(n: int, radius: int) -> list:
    """Coprime integer offsets within Chebyshev radius."""
    ranges = [range(-radius, radius + 1)] * n
    out = []
    grids = np.meshgrid(*ranges, indexing="ij")
    offsets = np.stack([g.ravel() for g in grids], axis=-1)
    for off in offsets:
        if not off.any():
            continue
        g = 0
        for v in off:
            g = gcd(g, abs(int(v)))
        if g == 1:
            out.append(tuple(int(v) for v in off))
    return out


class GridGraph:
    """Directed weighted graph over the cells of a domain for one metric."""

    def __init__(self, metric: MetricField, domain: GridDomain, radius: int = DEFAULT_STENCIL_RADIUS):
        self.metric = metric
        self.domain = domain
        self.radius = int(radius)
        self.forward, self.step_width = self._build()
        self._backward = None

    @property
    def backward(self):
        if self._backward is None:
            self._backward = self.forward.T.tocsr()
        return self._backward

    def _build(self):
        dom = self.domain
        n = dom.n
        shape = dom.shape
        total = dom.cell_count
        idx = np.arange(total).reshape(shape)
        centers = dom.centers
        h = dom.spacing
        rows, cols, data, width = [], [], [], []
        for off in stencil_offsets(n, self.radius):
            src_slices, ok = [], True
            # build source/target index arrays; periodic axes wrap with roll
            src_index = idx
            tgt_index = idx
            sel = [slice(None)] * n
            for ax, o in enumerate(off):
                if o == 0 or dom.periodic[ax]:
                    continue
                sel[ax] = slice(max(0, -o), shape[ax] - max(0, o))
                if shape[ax] - abs(o) <= 0:
                    ok = False
            if not ok:
                continue
            sel = tuple(sel)
            tgt_index = idx
            for ax, o in enumerate(off):
                if o != 0:
                    tgt_index = np.roll(tgt_index, -o, axis=ax)
            src = src_index[sel]
            tgt = tgt_index[sel]
            disp = np.array([o * h[ax] for ax, o in enumerate(off)])
            mid = centers[sel] + 0.5 * disp
            # wrap periodic midpoint coordinates back into the chart range
            for ax in range(n):
                if dom.periodic[ax]:
                    a, b = dom.bounds[ax]
                    mid[..., ax] = (mid[..., ax] - a) % (b - a) + a
            w = np.broadcast_to(
                np.asarray(self.metric.value(mid, disp), dtype=float), src.shape
            )
            rows.append(src.ravel())
            cols.append(tgt.ravel())
            data.append(w.ravel())
            width.append(np.full(src.size, float(max(abs(o) for o in off))))
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        data = np.concatenate(data)
        width = np.concatenate(width)
        forward = sparse.csr_matrix((data, (rows, cols)), shape=(total, total))
        # metric width of the arrival step per edge: weight / chebyshev(offset)
        step_width = sparse.csr_matrix((data / width, (rows, cols)), shape=(total, total))
        return forward, step_width


_GRAPH_CACHE: dict = {}
_GRAPH_CACHE_LIMIT = 8


def grid_graph(metric: MetricField, domain: GridDomain, radius: int = DEFAULT_STENCIL_RADIUS) -> GridGraph:
    key = (id(metric), id(domain), radius)
    hit = _GRAPH_CACHE.get(key)
    # identity keys can collide after garbage collection; keep strong refs
    if hit is not None and hit.metric is metric and hit.domain is domain:
        return hit
    graph = GridGraph(metric, domain, radius)
    if len(_GRAPH_CACHE) >= _GRAPH_CACHE_LIMIT:
        _GRAPH_CACHE.pop(next(iter(_GRAPH_CACHE)))
    _GRAPH_CACHE[key] = graph
    return graph


@dataclass
class DistanceField:
    """Per-cell distances from (forward) or to (backward) a source."""

    domain: GridDomain
    source: object  # point array or BorelMask description
    direction: str  # "forward" | "backward"
    values: np.ndarray  # flat, np.inf where unreachable
    predecessors: np.ndarray = None
    source_indices: np.ndarray = None
    step_width: np.ndarray = None  # metric width of the arriving step, per cell

    def grid(self) -> np.ndarray:
        return self.values.reshape(self.domain.shape)

    def ball(self, R: float) -> BorelMask:
        if R <= 0:
            raise EmptyInput("ball radius must be positive")
        return BorelMask(self.domain, (self.grid() < R))


def _source_indices(domain: GridDomain, source) -> np.ndarray:
    if isinstance(source, BorelMask):
        if source.is_empty:
            raise EmptyInput("empty source mask")
        return source.flat_indices()
    x = np.asarray(source, dtype=float)
    if x.ndim == 1:
        if not domain.contains(x):
            raise SourceOutsideDomain(f"source point {x} outside domain")
        return np.array([domain.point_index(x)])
    return np.array([domain.point_index(p) for p in x])


def _run_dijkstra(matrix, indices, limit, want_predecessors):
    kwargs = dict(directed=True, indices=indices, min_only=len(indices) > 1)
    if limit is not None:
        kwargs["limit"] = float(limit)
    if want_predecessors:
        kwargs["return_predecessors"] = True
    out = dijkstra(matrix, **kwargs)
    if want_predecessors:
        if len(indices) > 1:
            d, pred, _ = out
        else:
            d, pred = out
            d, pred = d[0], pred[0]
        return d, pred
    return (out if len(indices) > 1 else out[0]), None


def forward_distance_field(
    metric: MetricField,
    domain: GridDomain,
    source,
    radius: int = DEFAULT_STENCIL_RADIUS,
    limit=None,
    predecessors: bool = False,
    graph: GridGraph = None,
) -> DistanceField:
    """d(source, x) for every cell x (multi-source minimum for masks)."""
    g = graph or grid_graph(metric, domain, radius)
    idxs = _source_indices(domain, source)
    d, pred = _run_dijkstra(g.forward, idxs, limit, predecessors)
    widths = _arrival_widths(g, pred, forward=True) if predecessors else None
    return DistanceField(
        domain=domain,
        source=source,
        direction="forward",
        values=d,
        predecessors=pred,
        source_indices=idxs,
        step_width=widths,
    )


def backward_distance_field(
    metric: MetricField,
    domain: GridDomain,
    source,
    radius: int = DEFAULT_STENCIL_RADIUS,
    limit=None,
    predecessors: bool = False,
    graph: GridGraph = None,
) -> DistanceField:
    """d(x, source) for every cell x: shortest paths over reversed edges."""
    g = graph or grid_graph(metric, domain, radius)
    idxs = _source_indices(domain, source)
    d, pred = _run_dijkstra(g.backward, idxs, limit, predecessors)
    widths = _arrival_widths(g, pred, forward=False) if predecessors else None
    return DistanceField(
        domain=domain,
        source=source,
        direction="backward",
        values=d,
        predecessors=pred,
        source_indices=idxs,
        step_width=widths,
    )


def _arrival_widths(g: GridGraph, pred, forward: bool):
    if pred is None:
        return None
    n_all = pred.shape[-1]
    width = np.full(n_all, np.nan)
    has = pred >= 0
    cells = np.arange(n_all)[has]
    parents = pred[has]
    W = g.step_width
    if forward:
        vals = np.asarray(W[parents, cells]).ravel()
    else:
        vals = np.asarray(W[cells, parents]).ravel()
    width[has] = vals
    return width


def forward_ball(field: DistanceField, R: float) -> BorelMask:
    return field.ball(R)


def backward_ball(field: DistanceField, R: float) -> BorelMask:
    if field.direction != "backward":
        raise ValueError("backward_ball expects a backward distance field")
    return field.ball(R)


def forward_neighborhood(
    metric: MetricField,
    domain: GridDomain,
    E: BorelMask,
    eps: float,
    radius: int = DEFAULT_STENCIL_RADIUS,
    graph: GridGraph = None,
) -> BorelMask:
    """Forward eps-neighborhood: cells at multi-source distance < eps, plus E."""
    if eps <= 0:
        raise EmptyInput("eps must be positive")
    field = forward_distance_field(metric, domain, E, radius=radius, limit=eps * 1.001, graph=graph)
    mask = field.grid() < eps
    return BorelMask(domain, mask | E.cells)


def triangle_inequality_violation(field_pairs) -> float:
    """Max of d(x,z) - d(x,w) - d(w,z) over supplied (d_xw, d_wz, d_xz) triples."""
    worst = -np.inf
    for d_xw, d_wz, d_xz in field_pairs:
        worst = max(worst, float(d_xz - d_xw - d_wz))
    return worst
