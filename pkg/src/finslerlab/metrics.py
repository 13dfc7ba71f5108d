"""Finsler metric families and fiberwise operations.

A metric is a positively 1-homogeneous, strongly convex norm field
F(x, y) on a chart. Implementations provide batched evaluators for F,
the fiber derivatives of F^2, the dual norm on covectors, and the
Legendre transform in both directions. Analytic families (Euclidean,
Randers, weighted-Riemannian) use closed forms; generic expression
metrics fall back to relative-step finite differences, which positive
homogeneity makes scale-free.

Conventions: points ``x`` and fiber vectors ``y`` are arrays whose last
axis has length n; all operations broadcast over leading axes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateSample,
    NewtonDivergence,
    NonConvergence,
    NotPositiveDefinite,
    ZeroDirection,
)
from .expr import compile_expression, fiber_variables, point_variables

ZERO_DIRECTION_TOL = 1e-12
_FIBER_GRAD_STEP = 1e-4
_FIBER_HESS_STEP = 1e-4
_BASE_STEP = 1e-5


def _as_batch(x, n):
    arr = np.asarray(x, dtype=float)
    if arr.shape == (n,):
        return arr[None, :], True
    if arr.ndim >= 2 and arr.shape[-1] == n:
        return arr, False
    raise ValueError(f"expected points with last axis {n}, got shape {arr.shape}")


def _norms(y):
    return np.sqrt(np.sum(np.asarray(y, float) ** 2, axis=-1))


class MetricField:
    """Base class; subclasses implement ``value`` and may override the rest."""

    family = "generic"
    #: True when F(x, y) does not depend on x (flat spray, zero base gradient).
    x_independent = False

    def __init__(self, n: int):
        self.n = int(n)
        if self.n < 1:
            raise ValueError("chart dimension must be >= 1")

    # -- primary evaluators -------------------------------------------------

    def value(self, x, y):
        raise NotImplementedError

    def squared(self, x, y):
        return self.value(x, y) ** 2

    def fiber_gradient(self, x, y):
        """d(F^2)/dy, by fourth-order central differences with a relative step."""
        xb, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        h = _FIBER_GRAD_STEP * np.maximum(_norms(y), 1e-30)[..., None]
        out = np.empty(y.shape)
        for i in range(self.n):
            e = np.zeros(self.n)
            e[i] = 1.0
            d1 = self.squared(xb, y + h * e) - self.squared(xb, y - h * e)
            d2 = self.squared(xb, y + 2 * h * e) - self.squared(xb, y - 2 * h * e)
            out[..., i] = (8 * d1 - d2) / (12 * h[..., 0])
        return out

    def fundamental(self, x, y):
        """Fundamental tensor g_ij = half the fiber Hessian of F^2."""
        xb, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        h = _FIBER_HESS_STEP * np.maximum(_norms(y), 1e-30)
        n = self.n
        g = np.empty(y.shape[:-1] + (n, n))
        f0 = self.squared(xb, y)
        for i in range(n):
            ei = np.zeros(n)
            ei[i] = 1.0
            step_i = h[..., None] * ei
            g[..., i, i] = (
                self.squared(xb, y + step_i) - 2 * f0 + self.squared(xb, y - step_i)
            ) / (2 * h**2)
            for j in range(i + 1, n):
                ej = np.zeros(n)
                ej[j] = 1.0
                step_j = h[..., None] * ej
                gij = (
                    self.squared(xb, y + step_i + step_j)
                    - self.squared(xb, y + step_i - step_j)
                    - self.squared(xb, y - step_i + step_j)
                    + self.squared(xb, y - step_i - step_j)
                ) / (8 * h**2)
                g[..., i, j] = gij
                g[..., j, i] = gij
        return g

    def base_gradient(self, x, y):
        """d(F^2)/dx by central differences (exact zero for x-independent families)."""
        if self.x_independent:
            xb, yb = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
            return np.zeros(yb.shape)
        xb, yb = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        h = _BASE_STEP * (1.0 + np.abs(xb).max(axis=-1))
        out = np.empty(yb.shape)
        for i in range(self.n):
            e = np.zeros(self.n)
            e[i] = 1.0
            out[..., i] = (
                self.squared(xb + h[..., None] * e, yb) - self.squared(xb - h[..., None] * e, yb)
            ) / (2 * h)
        return out

    # -- duality ------------------------------------------------------------

    def dual_value(self, x, xi):
        """Dual norm F*(x, xi) = sup_{y != 0} xi(y) / F(x, y).

        Generic fallback: maximize over a direction grid, then refine the
        best bracket by golden section (2D) or local ascent (n >= 3).
        """
        xb, xib = np.broadcast_arrays(np.asarray(x, float), np.asarray(xi, float))
        scalar = xib.ndim == 1
        if scalar:
            xib = xib[None, :]
            xb = xb[None, :]
        flat_xi = xib.reshape(-1, self.n)
        flat_x = xb.reshape(-1, self.n)
        out = np.array([self._dual_single(px, pxi) for px, pxi in zip(flat_x, flat_xi)])
        out = out.reshape(xib.shape[:-1])
        return float(out[0]) if scalar else out

    def _dual_single(self, x, xi, iterations=60):
        if _norms(xi) < ZERO_DIRECTION_TOL:
            return 0.0
        if self.n == 1:
            return max(xi[0] / self.value(x, np.array([1.0])), -xi[0] / self.value(x, np.array([-1.0])))
        if self.n == 2:
            grid = np.linspace(0.0, 2 * np.pi, 720, endpoint=False)
            dirs = np.stack([np.cos(grid), np.sin(grid)], axis=-1)
            vals = dirs @ xi / self.value(np.broadcast_to(x, dirs.shape), dirs)
            k = int(np.argmax(vals))
            lo, hi = grid[k] - 2 * np.pi / 720, grid[k] + 2 * np.pi / 720

            def ratio(theta):
                d = np.array([np.cos(theta), np.sin(theta)])
                return (d @ xi) / self.value(x, d)

            phi = (np.sqrt(5.0) - 1) / 2
            a, b = lo, hi
            t1, t2 = b - phi * (b - a), a + phi * (b - a)
            f1, f2 = ratio(t1), ratio(t2)
            for _ in range(iterations):
                if f1 < f2:
                    a, t1, f1 = t1, t2, f2
                    t2 = a + phi * (b - a)
                    f2 = ratio(t2)
                else:
                    b, t2, f2 = t2, t1, f1
                    t1 = b - phi * (b - a)
                    f1 = ratio(t1)
            return max(vals[k], f1, f2)
        # n >= 3: coarse random directions plus normalized gradient ascent
        rng = np.random.default_rng(0)
        dirs = rng.standard_normal((2048, self.n))
        dirs /= _norms(dirs)[..., None]
        vals = dirs @ xi / self.value(np.broadcast_to(x, dirs.shape), dirs)
        best = dirs[int(np.argmax(vals))]
        val = float(np.max(vals))
        step = 0.2
        for _ in range(200):
            grad = xi * self.value(x, best) - (best @ xi) * 0.5 * self.fiber_gradient(x, best) / self.value(x, best)
            cand = best + step * grad / (np.linalg.norm(grad) + 1e-300)
            cand /= np.linalg.norm(cand)
            cval = cand @ xi / self.value(x, cand)
            if cval > val + 1e-15:
                best, val = cand, cval
                step *= 1.3
            else:
                step *= 0.5
                if step < 1e-12:
                    return val
        raise NonConvergence("dual norm refinement exceeded its iteration cap")

    def legendre(self, x, y):
        """Legendre transform y -> g_y(y, .) = half the fiber gradient of F^2."""
        y = np.asarray(y, float)
        out = 0.5 * self.fiber_gradient(x, y)
        small = _norms(y) < ZERO_DIRECTION_TOL
        if np.any(small):
            out = np.where(small[..., None], 0.0, out)
        return out

    def legendre_inverse(self, x, xi, tol=1e-12, max_iter=60):
        """Solve g_y(y, .) = xi by damped Newton from the dual maximizer."""
        xb, xib = np.broadcast_arrays(np.asarray(x, float), np.asarray(xi, float))
        scalar = xib.ndim == 1
        if scalar:
            xib = xib[None, :]
            xb = xb[None, :]
        flat_xi = xib.reshape(-1, self.n)
        flat_x = xb.reshape(-1, self.n)
        out = np.empty_like(flat_xi)
        for k, (px, pxi) in enumerate(zip(flat_x, flat_xi)):
            out[k] = self._legendre_inverse_single(px, pxi, tol, max_iter)
        out = out.reshape(xib.shape)
        return out[0] if scalar else out

    def _legendre_inverse_single(self, x, xi, tol, max_iter):
        nrm = _norms(xi)
        if nrm < ZERO_DIRECTION_TOL:
            return np.zeros(self.n)
        fstar = self._dual_single(x, xi)
        # initial guess: the direction attaining the dual sup, scaled to F = F*(xi)
        if self.n == 1:
            y = np.array([fstar if xi[0] > 0 else -fstar]) / self.value(x, np.array([1.0 if xi[0] > 0 else -1.0]))
        else:
            grid = 720 if self.n == 2 else 2048
            if self.n == 2:
                thetas = np.linspace(0.0, 2 * np.pi, grid, endpoint=False)
                dirs = np.stack([np.cos(thetas), np.sin(thetas)], axis=-1)
            else:
                rng = np.random.default_rng(1)
                dirs = rng.standard_normal((grid, self.n))
                dirs /= _norms(dirs)[..., None]
            vals = dirs @ xi / self.value(np.broadcast_to(x, dirs.shape), dirs)
            d = dirs[int(np.argmax(vals))]
            y = d * fstar / self.value(x, d)
        scale = nrm
        for _ in range(max_iter):
            res = self.legendre(x, y) - xi
            rn = np.linalg.norm(res)
            if rn < tol * scale:
                return y
            g = self.fundamental(x, y)
            try:
                step = np.linalg.solve(g, res)
            except np.linalg.LinAlgError as exc:
                raise NewtonDivergence("singular fundamental tensor in Newton step", witness=(x, xi, y)) from exc
            t = 1.0
            for _ in range(40):
                cand = y - t * step
                if _norms(cand) > ZERO_DIRECTION_TOL:
                    cres = np.linalg.norm(self.legendre(x, cand) - xi)
                    if cres < rn:
                        y = cand
                        break
                t *= 0.5
            else:
                if rn < 1e-7 * scale:
                    return y  # stalled at the evaluator noise floor
                raise NewtonDivergence("inverse Legendre line search stalled", witness=(x, xi, y))
        raise NewtonDivergence("inverse Legendre exceeded iteration cap", witness=(x, xi, y))

    # -- structure ----------------------------------------------------------

    def quadratic_form(self, x):
        """Matrix G(x) with F^2 = y.G(x).y when the metric is Riemannian, else None."""
        return None

    @property
    def is_quadratic(self):
        return False

    def reverse(self):
        """The reverse metric (x, y) -> F(x, -y)."""
        return ReversedMetric(self)


class EuclideanMetric(MetricField):
    family = "euclidean"
    x_independent = True

    def value(self, x, y):
        return _norms(y)

    def fiber_gradient(self, x, y):
        return 2.0 * np.asarray(y, float)

    def fundamental(self, x, y):
        xb, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        eye = np.eye(self.n)
        return np.broadcast_to(eye, y.shape[:-1] + (self.n, self.n)).copy()

    def dual_value(self, x, xi):
        return _norms(xi)

    def legendre(self, x, y):
        return np.asarray(y, float).copy()

    def legendre_inverse(self, x, xi, **kwargs):
        return np.asarray(xi, float).copy()

    def quadratic_form(self, x):
        x = np.asarray(x, float)
        return np.broadcast_to(np.eye(self.n), x.shape[:-1] + (self.n, self.n)).copy()

    @property
    def is_quadratic(self):
        return True

    def reverse(self):
        return self


class RandersMetric(MetricField):
    """F = sqrt(y.A.y) + b.y with constant SPD base A and drift covector b."""

    family = "randers"
    x_independent = True

    def __init__(self, b, base=None):
        b = np.asarray(b, dtype=float)
        super().__init__(b.shape[0])
        self.b = b
        self.base = np.eye(self.n) if base is None else np.asarray(base, dtype=float)
        try:
            np.linalg.cholesky(self.base)
        except np.linalg.LinAlgError as exc:
            raise NotPositiveDefinite("Randers base matrix must be SPD") from exc
        self.base_inv = np.linalg.inv(self.base)
        self._b2 = float(self.b @ self.base_inv @ self.b)
        if self._b2 >= 1.0:
            raise NotPositiveDefinite("Randers drift must satisfy |b|_A < 1")

    def _alpha(self, y):
        return np.sqrt(np.einsum("...i,ij,...j->...", y, self.base, y))

    def value(self, x, y):
        y = np.asarray(y, float)
        return self._alpha(y) + y @ self.b

    def fiber_gradient(self, x, y):
        y = np.asarray(y, float)
        alpha = self._alpha(y)[..., None]
        F = alpha + (y @ self.b)[..., None]
        return 2.0 * F * ((y @ self.base) / alpha + self.b)

    def fundamental(self, x, y):
        y = np.asarray(y, float)
        alpha = self._alpha(y)
        ay = y @ self.base
        alpha_y = ay / alpha[..., None]
        F = alpha + y @ self.b
        Fy = alpha_y + self.b
        g = Fy[..., :, None] * Fy[..., None, :]
        g += (F / alpha)[..., None, None] * (self.base - alpha_y[..., :, None] * alpha_y[..., None, :])
        return g

    def dual_value(self, x, xi):
        xi = np.asarray(xi, float)
        lam = 1.0 - self._b2
        xs = np.einsum("...i,ij,...j->...", xi, self.base_inv, xi)
        xb = xi @ self.base_inv @ self.b
        return (np.sqrt(lam * xs + xb**2) - xb) / lam

    def legendre_inverse(self, x, xi, **kwargs):
        xi = np.asarray(xi, float)
        lam = 1.0 - self._b2
        s_xi = xi @ self.base_inv
        s_b = self.base_inv @ self.b
        xs = np.einsum("...i,...i->...", s_xi, xi)
        xb = s_xi @ self.b
        root = np.sqrt(lam * xs + xb**2)
        fstar = (root - xb) / lam
        with np.errstate(invalid="ignore", divide="ignore"):
            grad = (lam * s_xi + xb[..., None] * s_b) / (lam * root[..., None]) - s_b / lam
        y = fstar[..., None] * grad
        small = _norms(xi) < ZERO_DIRECTION_TOL
        return np.where(small[..., None], 0.0, y)

    def reverse(self):
        return RandersMetric(-self.b, self.base)


class WeightedRiemannianMetric(MetricField):
    """F = sqrt(y.G(x).y) for a smooth SPD matrix field G."""

    family = "weighted-riemannian"

    def __init__(self, n, matrix_fn, x_independent=False):
        super().__init__(n)
        self._matrix_fn = matrix_fn
        self.x_independent = bool(x_independent)

    @classmethod
    def from_expressions(cls, entries):
        """Build from an n x n nested list of expression strings in x1..xn."""
        entries = [list(row) for row in entries]
        n = len(entries)
        fns = [[compile_expression(entries[i][j], point_variables(n)) for j in range(n)] for i in range(n)]
        x_indep = all("x" not in "".join(entries[i][j] for j in range(n)) for i in range(n))

        def matrix_fn(x):
            x = np.asarray(x, float)
            coords = [x[..., k] for k in range(n)]
            out = np.empty(x.shape[:-1] + (n, n))
            for i in range(n):
                for j in range(n):
                    out[..., i, j] = fns[i][j](*coords)
            return 0.5 * (out + np.swapaxes(out, -1, -2))

        return cls(n, matrix_fn, x_independent=x_indep)

    def matrix(self, x):
        return self._matrix_fn(np.asarray(x, float))

    def value(self, x, y):
        xb, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        G = self.matrix(xb)
        return np.sqrt(np.einsum("...i,...ij,...j->...", y, G, y))

    def fiber_gradient(self, x, y):
        xb, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        G = self.matrix(xb)
        return 2.0 * np.einsum("...ij,...j->...i", G, y)

    def fundamental(self, x, y):
        xb, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        return self.matrix(xb)

    def dual_value(self, x, xi):
        xb, xi = np.broadcast_arrays(np.asarray(x, float), np.asarray(xi, float))
        G = self.matrix(xb)
        Ginv = np.linalg.inv(G)
        return np.sqrt(np.einsum("...i,...ij,...j->...", xi, Ginv, xi))

    def legendre_inverse(self, x, xi, **kwargs):
        xb, xi = np.broadcast_arrays(np.asarray(x, float), np.asarray(xi, float))
        G = self.matrix(xb)
        return np.linalg.solve(G, xi[..., None])[..., 0]

    def quadratic_form(self, x):
        return self.matrix(x)

    @property
    def is_quadratic(self):
        return True

    def reverse(self):
        return self


class GenericMetric(MetricField):
    """Metric given by an expression F(x1.., y1..); derivatives by differences."""

    def __init__(self, n, expression: str):
        super().__init__(n)
        self._fn = compile_expression(expression, fiber_variables(n))
        self.expression = expression
        self.x_independent = not any(f"x{i+1}" in expression for i in range(n))
        self.family = "minkowski-norm" if self.x_independent else "generic"

    def value(self, x, y):
        xb, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        args = [xb[..., k] for k in range(self.n)] + [y[..., k] for k in range(self.n)]
        return self._fn(*args)

    def reverse(self):
        return ReversedMetric(self)


class ReversedMetric(MetricField):
    """Wrapper realizing (x, y) -> F(x, -y); involution returns the original."""

    def __init__(self, base: MetricField):
        super().__init__(base.n)
        self.base = base
        self.family = base.family
        self.x_independent = base.x_independent

    def value(self, x, y):
        return self.base.value(x, -np.asarray(y, float))

    def fiber_gradient(self, x, y):
        return -self.base.fiber_gradient(x, -np.asarray(y, float))

    def fundamental(self, x, y):
        return self.base.fundamental(x, -np.asarray(y, float))

    def base_gradient(self, x, y):
        return self.base.base_gradient(x, -np.asarray(y, float))

    def dual_value(self, x, xi):
        return self.base.dual_value(x, -np.asarray(xi, float))

    def legendre(self, x, y):
        return -self.base.legendre(x, -np.asarray(y, float))

    def legendre_inverse(self, x, xi, **kwargs):
        return -self.base.legendre_inverse(x, -np.asarray(xi, float), **kwargs)

    def quadratic_form(self, x):
        return self.base.quadratic_form(x)

    @property
    def is_quadratic(self):
        return self.base.is_quadratic

    def reverse(self):
        return self.base


# -- structured results ------------------------------------------------------


@dataclass
class FundamentalTensorValue:
    x: np.ndarray
    y: np.ndarray
    g: np.ndarray
    g_inv: np.ndarray


@dataclass
class UniformityConstants:
    kappa: float
    kappa_star: float
    lambda_F: float
    samples: int
    witnesses: dict = field(default_factory=dict)


def fundamental_tensor(metric: MetricField, x, y) -> FundamentalTensorValue:
    """Fundamental tensor at a single (x, y) with its inverse, PD-checked."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if _norms(y) < ZERO_DIRECTION_TOL:
        raise ZeroDirection("fundamental tensor needs a nonzero direction")
    g = metric.fundamental(x, y)
    g = 0.5 * (g + g.T)
    try:
        np.linalg.cholesky(g)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(
            f"fundamental tensor not positive definite at x={x}, y={y}"
        ) from exc
    return FundamentalTensorValue(x=x, y=y, g=g, g_inv=np.linalg.inv(g))


def dual_fundamental(metric: MetricField, x, xi):
    """Dual tensor g*^{ij}(x, xi): the inverse of g at y = L^{-1}(xi)."""
    y = metric.legendre_inverse(x, xi)
    return fundamental_tensor(metric, x, y).g_inv


def _direction_set(n, count, rng=None):
    if n == 1:
        return np.array([[1.0], [-1.0]])
    if n == 2:
        thetas = np.linspace(0.0, 2 * np.pi, count, endpoint=False)
        return np.stack([np.cos(thetas), np.sin(thetas)], axis=-1)
    rng = np.random.default_rng(0) if rng is None else rng
    dirs = rng.standard_normal((count, n))
    dirs /= _norms(dirs)[..., None]
    axes = np.concatenate([np.eye(n), -np.eye(n)])
    return np.concatenate([axes, dirs])


def reversibility_constant(metric: MetricField, points, directions=720, refine=True):
    """Worst-case ratio F(x, y)/F(x, -y) over sampled points and directions.

    Returns ``inf`` when the ratio exceeds the overflow guard 1e12.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.size == 0:
        raise DegenerateSample("reversibility needs a non-empty sample set")
    dirs = _direction_set(metric.n, directions)
    fwd = metric.value(points[:, None, :], dirs[None, :, :])
    bwd = metric.value(points[:, None, :], -dirs[None, :, :])
    with np.errstate(divide="ignore", over="ignore"):
        ratios = fwd / bwd
    best = float(np.max(ratios))
    if not np.isfinite(best) or best > 1e12:
        return np.inf
    if refine and metric.n == 2:
        pi_idx, di = np.unravel_index(int(np.argmax(ratios)), ratios.shape)
        x = points[pi_idx]
        theta0 = np.arctan2(dirs[di, 1], dirs[di, 0])
        span = 2 * np.pi / len(dirs)

        def ratio(theta):
            d = np.array([np.cos(theta), np.sin(theta)])
            return metric.value(x, d) / metric.value(x, -d)

        best = max(best, _golden_max(ratio, theta0 - span, theta0 + span))
    return max(best, 1.0)


def _golden_max(fn, a, b, iters=80):
    phi = (np.sqrt(5.0) - 1) / 2
    t1, t2 = b - phi * (b - a), a + phi * (b - a)
    f1, f2 = fn(t1), fn(t2)
    for _ in range(iters):
        if f1 < f2:
            a, t1, f1 = t1, t2, f2
            t2 = a + phi * (b - a)
            f2 = fn(t2)
        else:
            b, t2, f2 = t2, t1, f1
            t1 = b - phi * (b - a)
            f1 = fn(t1)
    return max(f1, f2)


def uniformity_constants(metric: MetricField, points, directions=64, refine=True):
    """Sampled uniform smoothness/convexity constants.

    kappa is the max, kappa_star the min, of g_V(W, W) / F^2(x, W) over the
    sampled bundle; a local golden refinement sharpens both in 2D. The
    report carries the worst-case witnesses so failures are reproducible.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.size == 0:
        raise DegenerateSample("uniformity constants need a non-empty sample set")
    dirs = _direction_set(metric.n, directions)
    if np.all(_norms(dirs) < ZERO_DIRECTION_TOL):
        raise DegenerateSample("all test directions collapsed")
    n_pts, n_dirs = len(points), len(dirs)
    kappa, kappa_star = -np.inf, np.inf
    wit_max = wit_min = None
    for pi in range(n_pts):
        x = points[pi]
        g = metric.fundamental(np.broadcast_to(x, (n_dirs, metric.n)), dirs)
        f2 = metric.value(np.broadcast_to(x, (n_dirs, metric.n)), dirs) ** 2
        quad = np.einsum("...i,vij,...j->v...", dirs, g, dirs)  # (V, W)
        ratios = quad / f2[None, :]
        vmax = np.unravel_index(int(np.argmax(ratios)), ratios.shape)
        vmin = np.unravel_index(int(np.argmin(ratios)), ratios.shape)
        if ratios[vmax] > kappa:
            kappa = float(ratios[vmax])
            wit_max = (x.copy(), dirs[vmax[0]].copy(), dirs[vmax[1]].copy())
        if ratios[vmin] < kappa_star:
            kappa_star = float(ratios[vmin])
            wit_min = (x.copy(), dirs[vmin[0]].copy(), dirs[vmin[1]].copy())
    if refine and metric.n == 2:
        kappa = max(kappa, _refine_ratio_2d(metric, wit_max, maximize=True))
        kappa_star = min(kappa_star, _refine_ratio_2d(metric, wit_min, maximize=False))
    lam = reversibility_constant(metric, points, directions=max(directions, 360))
    return UniformityConstants(
        kappa=kappa,
        kappa_star=kappa_star,
        lambda_F=lam,
        samples=n_pts * n_dirs * n_dirs,
        witnesses={"kappa": wit_max, "kappa_star": wit_min},
    )


def _refine_ratio_2d(metric, witness, maximize, iters=60):
    x, V, W = witness
    tv0 = np.arctan2(V[1], V[0])
    tw0 = np.arctan2(W[1], W[0])
    sign = 1.0 if maximize else -1.0

    def ratio(tv, tw):
        v = np.array([np.cos(tv), np.sin(tv)])
        w = np.array([np.cos(tw), np.sin(tw)])
        g = metric.fundamental(x, v)
        return sign * (w @ g @ w) / metric.value(x, w) ** 2

    # coordinate-wise golden search around the witness
    span = 0.2
    best = ratio(tv0, tw0)
    for _ in range(6):
        tv0 = _golden_argmax(lambda t: ratio(t, tw0), tv0 - span, tv0 + span, iters)
        tw0 = _golden_argmax(lambda t: ratio(tv0, t), tw0 - span, tw0 + span, iters)
        best = max(best, ratio(tv0, tw0))
        span *= 0.4
    return sign * best


def _golden_argmax(fn, a, b, iters=60):
    phi = (np.sqrt(5.0) - 1) / 2
    t1, t2 = b - phi * (b - a), a + phi * (b - a)
    f1, f2 = fn(t1), fn(t2)
    for _ in range(iters):
        if f1 < f2:
            a, t1, f1 = t1, t2, f2
            t2 = a + phi * (b - a)
            f2 = fn(t2)
        else:
            b, t2, f2 = t2, t1, f1
            t1 = b - phi * (b - a)
            f1 = fn(t1)
    return (a + b) / 2


def make_metric(n, family, **params):
    """Factory used by scenario configs."""
    family = family.replace("_", "-")
    if family == "euclidean":
        return EuclideanMetric(n)
    if family == "randers":
        return RandersMetric(np.asarray(params["b"], float), params.get("base"))
    if family == "weighted-riemannian":
        return WeightedRiemannianMetric.from_expressions(params["matrix"])
    if family in ("minkowski-norm", "generic"):
        return GenericMetric(n, params["expression"])
    raise ValueError(f"unknown metric family {family!r}")
