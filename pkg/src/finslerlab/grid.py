"""Chart discretization: rectangular grids, measures, masks, scalar fields.

A GridDomain is a uniform rectangular sampling of a chart. Axes may be
marked periodic (the coordinate wraps, e.g. an angle) and individual
non-periodic faces may be declared "open": an artificial chart cutoff
adjoining a region of negligible measure, treated as a natural boundary
rather than a Dirichlet wall.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import ConfigInvalid, EmptyInput, NonPositiveDensity, ZeroDirection
from .expr import compile_expression, point_variables
from .metrics import ZERO_DIRECTION_TOL, MetricField

MIN_RESOLUTION = 8


def _face_name(axis: int, side: int) -> str:
    return f"x{axis+1}{'-' if side < 0 else '+'}"


@dataclass(frozen=True)
class GridDomain:
    """Uniformly sampled box [a_1, b_1] x ... x [a_n, b_n]."""

    bounds: tuple
    resolution: tuple
    periodic: tuple = None
    open_faces: frozenset = frozenset()

    def __post_init__(self):
        bounds = tuple((float(a), float(b)) for a, b in self.bounds)
        object.__setattr__(self, "bounds", bounds)
        object.__setattr__(self, "resolution", tuple(int(r) for r in self.resolution))
        per = self.periodic if self.periodic is not None else (False,) * len(bounds)
        object.__setattr__(self, "periodic", tuple(bool(p) for p in per))
        object.__setattr__(self, "open_faces", frozenset(self.open_faces))
        if len(self.resolution) != len(bounds) or len(self.periodic) != len(bounds):
            raise ConfigInvalid("bounds, resolution and periodic must have equal length")
        for (a, b), r in zip(bounds, self.resolution):
            if b <= a:
                raise ConfigInvalid(f"degenerate axis bounds ({a}, {b})")
            if r < MIN_RESOLUTION:
                raise ConfigInvalid(f"resolution {r} below minimum {MIN_RESOLUTION}")
        known = {_face_name(ax, s) for ax in range(len(bounds)) for s in (-1, 1)}
        if not self.open_faces <= known:
            raise ConfigInvalid(f"unknown open faces {sorted(self.open_faces - known)}")

    @property
    def n(self) -> int:
        return len(self.bounds)

    @property
    def shape(self) -> tuple:
        return self.resolution

    @cached_property
    def spacing(self) -> np.ndarray:
        return np.array([(b - a) / r for (a, b), r in zip(self.bounds, self.resolution)])

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def cell_count(self) -> int:
        return int(np.prod(self.resolution))

    def axis_centers(self, axis: int) -> np.ndarray:
        a, _ = self.bounds[axis]
        return a + (np.arange(self.resolution[axis]) + 0.5) * self.spacing[axis]

    @cached_property
    def centers(self) -> np.ndarray:
        """Cell centers, shape ``resolution + (n,)``."""
        axes = [self.axis_centers(i) for i in range(self.n)]
        grids = np.meshgrid(*axes, indexing="ij")
        return np.stack(grids, axis=-1)

    @cached_property
    def flat_centers(self) -> np.ndarray:
        return self.centers.reshape(-1, self.n)

    def point_index(self, x) -> int:
        """Flat index of the cell containing x."""
        x = np.asarray(x, dtype=float)
        idx = []
        for ax in range(self.n):
            a, b = self.bounds[ax]
            if self.periodic[ax]:
                xi = (x[ax] - a) % (b - a) + a
            else:
                xi = x[ax]
                if not (a <= xi <= b):
                    raise EmptyInput(f"point {x} outside domain axis {ax+1}")
            k = int(np.clip((xi - a) / self.spacing[ax], 0, self.resolution[ax] - 1))
            idx.append(k)
        return int(np.ravel_multi_index(tuple(idx), self.resolution))

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        for ax in range(self.n):
            if self.periodic[ax]:
                continue
            a, b = self.bounds[ax]
            if not (a <= x[ax] <= b):
                return False
        return True

    def is_open_face(self, axis: int, side: int) -> bool:
        return _face_name(axis, side) in self.open_faces

    def boundary_mask(self, include_open=False, include_periodic=False) -> np.ndarray:
        """Cells on the outermost layer of (by default) hard chart faces."""
        out = np.zeros(self.shape, dtype=bool)
        for ax in range(self.n):
            if self.periodic[ax] and not include_periodic:
                continue
            for side, sl in ((-1, 0), (1, -1)):
                if not include_open and self.is_open_face(ax, side):
                    continue
                index = [slice(None)] * self.n
                index[ax] = sl
                out[tuple(index)] = True
        return out


class MeasureDensity:
    """Smooth positive density sigma defining dm = sigma dx on the chart."""

    def __init__(self, fn, description="callable"):
        self._fn = fn
        self.description = description

    @classmethod
    def from_expression(cls, expression: str, dim: int) -> "MeasureDensity":
        fn = compile_expression(expression, point_variables(dim))

        def density(x):
            x = np.asarray(x, dtype=float)
            return fn(*[x[..., k] for k in range(dim)])

        return cls(density, description=expression)

    @classmethod
    def lebesgue(cls) -> "MeasureDensity":
        return cls(lambda x: np.ones(np.asarray(x).shape[:-1]), description="1")

    def density(self, x) -> np.ndarray:
        out = np.asarray(self._fn(np.asarray(x, dtype=float)), dtype=float)
        if np.any(out <= 0) or not np.all(np.isfinite(out)):
            raise NonPositiveDensity(f"density {self.description!r} not strictly positive")
        return out

    def cell_masses(self, domain: GridDomain) -> np.ndarray:
        """Per-cell mass sigma(center) * cell volume, shape = domain.shape."""
        cache = getattr(self, "_mass_cache", None)
        # identity check on a held reference: id() alone could be recycled
        if cache is None or cache[0] is not domain:
            masses = self.density(domain.centers) * domain.cell_volume
            self._mass_cache = (domain, masses)
        return self._mass_cache[1]


@dataclass
class BorelMask:
    """A measurable set realized as a union of grid cells."""

    domain: GridDomain
    cells: np.ndarray  # boolean, domain.shape

    def __post_init__(self):
        cells = np.asarray(self.cells, dtype=bool)
        if cells.shape != self.domain.shape:
            raise ConfigInvalid(f"mask shape {cells.shape} != domain shape {self.domain.shape}")
        self.cells = cells

    @classmethod
    def from_predicate(cls, domain: GridDomain, predicate) -> "BorelMask":
        return cls(domain, np.asarray(predicate(domain.centers), dtype=bool))

    @classmethod
    def from_indices(cls, domain: GridDomain, flat_indices) -> "BorelMask":
        cells = np.zeros(domain.cell_count, dtype=bool)
        cells[np.asarray(flat_indices, dtype=int)] = True
        return cls(domain, cells.reshape(domain.shape))

    @property
    def count(self) -> int:
        return int(self.cells.sum())

    @property
    def is_empty(self) -> bool:
        return not self.cells.any()

    def flat_indices(self) -> np.ndarray:
        return np.flatnonzero(self.cells.ravel())

    def mass(self, measure: MeasureDensity) -> float:
        return float(measure.cell_masses(self.domain)[self.cells].sum())

    def union(self, other: "BorelMask") -> "BorelMask":
        return BorelMask(self.domain, self.cells | other.cells)

    def intersect(self, other: "BorelMask") -> "BorelMask":
        return BorelMask(self.domain, self.cells & other.cells)

    def difference(self, other: "BorelMask") -> "BorelMask":
        return BorelMask(self.domain, self.cells & ~other.cells)

    def is_subset(self, other: "BorelMask") -> bool:
        return bool(np.all(~self.cells | other.cells))

    def touches_boundary(self, include_open=False) -> bool:
        return bool((self.cells & self.domain.boundary_mask(include_open=include_open)).any())

    def to_rle(self) -> str:
        """Run-length encoding over the C-order flattened mask."""
        flat = self.cells.ravel()
        if flat.size == 0:
            runs = []
        else:
            change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
            starts = np.concatenate([[0], change])
            ends = np.concatenate([change, [flat.size]])
            runs = [f"{int(flat[s])}:{e - s}" for s, e in zip(starts, ends)]
        shape = " ".join(str(s) for s in self.domain.shape)
        return f"finsler-lab-mask v1\nshape: {shape}\nruns: {' '.join(runs)}\n"

    @classmethod
    def from_rle(cls, domain: GridDomain, text: str) -> "BorelMask":
        lines = [ln.strip() for ln in text.strip().splitlines()]
        if not lines or lines[0] != "finsler-lab-mask v1":
            raise ConfigInvalid("not a finsler-lab mask (bad header)")
        shape = tuple(int(v) for v in lines[1].split(":", 1)[1].split())
        if shape != domain.shape:
            raise ConfigInvalid(f"mask shape {shape} does not match domain {domain.shape}")
        payload = lines[2].split(":", 1)[1].split()
        flat = np.zeros(domain.cell_count, dtype=bool)
        pos = 0
        for token in payload:
            val, length = token.split(":")
            length = int(length)
            if val == "1":
                flat[pos : pos + length] = True
            pos += length
        if pos != domain.cell_count:
            raise ConfigInvalid("run lengths do not cover the grid")
        return cls(domain, flat.reshape(domain.shape))


class ScalarField:
    """Grid-sampled real function with finite-difference differential.

    Values are stored on the full grid and are zero outside the support
    mask; the differential uses central differences with zero extension,
    wrapping on periodic axes and one-sided differences at open faces.
    """

    def __init__(self, domain: GridDomain, values, support: BorelMask = None):
        self.domain = domain
        values = np.asarray(values, dtype=float)
        if values.shape != domain.shape:
            raise ConfigInvalid(f"field shape {values.shape} != domain shape {domain.shape}")
        if support is not None:
            values = np.where(support.cells, values, 0.0)
        self.values = values
        self.support = support
        self._du = None

    @classmethod
    def from_function(cls, domain: GridDomain, fn, support: BorelMask = None) -> "ScalarField":
        return cls(domain, np.asarray(fn(domain.centers), dtype=float), support)

    def differential(self) -> np.ndarray:
        """du per cell, shape = domain.shape + (n,)."""
        if self._du is None:
            self._du = self._central_differences(self.values)
        return self._du

    def _central_differences(self, v):
        dom = self.domain
        out = np.empty(dom.shape + (dom.n,))
        for ax in range(dom.n):
            h = dom.spacing[ax]
            if dom.periodic[ax]:
                plus = np.roll(v, -1, axis=ax)
                minus = np.roll(v, 1, axis=ax)
                out[..., ax] = (plus - minus) / (2 * h)
                continue
            plus = np.concatenate([np.take(v, range(1, dom.shape[ax]), axis=ax), _zeros_slice(v, ax)], axis=ax)
            minus = np.concatenate([_zeros_slice(v, ax), np.take(v, range(0, dom.shape[ax] - 1), axis=ax)], axis=ax)
            d = (plus - minus) / (2 * h)
            # one-sided at open faces: the chart cutoff is not a wall
            if dom.is_open_face(ax, -1):
                first = [slice(None)] * dom.n
                first[ax] = 0
                second = [slice(None)] * dom.n
                second[ax] = 1
                d[tuple(first)] = (v[tuple(second)] - v[tuple(first)]) / h
            if dom.is_open_face(ax, 1):
                last = [slice(None)] * dom.n
                last[ax] = dom.shape[ax] - 1
                prev = [slice(None)] * dom.n
                prev[ax] = dom.shape[ax] - 2
                d[tuple(last)] = (v[tuple(last)] - v[tuple(prev)]) / h
            out[..., ax] = d
        return out

    def squared_norm(self, measure: MeasureDensity) -> float:
        return float((measure.cell_masses(self.domain) * self.values**2).sum())


def _zeros_slice(v, axis):
    shape = list(v.shape)
    shape[axis] = 1
    return np.zeros(shape)


def gradient_field(metric: MetricField, u: ScalarField) -> np.ndarray:
    """Gradient vector field: inverse Legendre of du, zero where du vanishes."""
    du = u.differential()
    flat = du.reshape(-1, metric.n)
    norms = np.linalg.norm(flat, axis=-1)
    live = norms > ZERO_DIRECTION_TOL
    out = np.zeros_like(flat)
    if live.any():
        xs = u.domain.flat_centers[live]
        out[live] = metric.legendre_inverse(xs, flat[live])
    return out.reshape(du.shape)


def weighted_gradient(metric: MetricField, u: ScalarField, V) -> np.ndarray:
    """Gradient w.r.t. the fixed quadratic form g(x, V): solves g(x,V) w = du."""
    du = u.differential()
    flat_du = du.reshape(-1, metric.n)
    V = np.asarray(V, dtype=float)
    if V.shape == du.shape:
        Vflat = V.reshape(-1, metric.n)
    else:
        Vflat = np.broadcast_to(V, flat_du.shape).reshape(-1, metric.n)
    norms = np.linalg.norm(flat_du, axis=-1)
    live = norms > ZERO_DIRECTION_TOL
    vnorms = np.linalg.norm(Vflat, axis=-1)
    if np.any(live & (vnorms < ZERO_DIRECTION_TOL)):
        raise ZeroDirection("weight field V vanishes where du != 0")
    out = np.zeros_like(flat_du)
    if live.any():
        xs = u.domain.flat_centers[live]
        g = metric.fundamental(xs, Vflat[live])
        out[live] = np.linalg.solve(g, flat_du[live][..., None])[..., 0]
    return out.reshape(du.shape)
