"""Geodesics, distortion, S-curvature and weighted Ricci curvature.

The geodesic spray is computed from the metric's fiber data; distortion
compares the metric volume to the chosen measure; the S-curvature and its
derivative are obtained by five-point differencing of the distortion
along short integrated geodesics (chart-line differencing would be wrong
for curved families). Directional Ricci uses the Riemannian curvature
formula for quadratic families and the spray-curvature trace otherwise,
both guarded by two-step Richardson agreement.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidN, LeftDomain, NonPositiveDensity, StencilUnstable, ZeroDirection
from .grid import GridDomain, MeasureDensity
from .metrics import ZERO_DIRECTION_TOL, MetricField, WeightedRiemannianMetric

_SPRAY_X_STEP = 1e-5


@dataclass
class SprayValue:
    x: np.ndarray
    y: np.ndarray
    coefficients: np.ndarray


@dataclass
class GeodesicPath:
    times: np.ndarray
    points: np.ndarray
    velocities: np.ndarray
    speeds: np.ndarray

    @property
    def speed_drift(self) -> float:
        s0 = self.speeds[0]
        return float(np.max(np.abs(self.speeds - s0)) / abs(s0))


@dataclass
class CurvatureSample:
    x: np.ndarray
    y: np.ndarray
    tau: float
    s: float
    s_dot: float
    ric: float
    ric_inf: float
    ric_n: dict = field(default_factory=dict)


@dataclass
class CurvatureReport:
    samples: list
    min_ric_inf: float
    witness: CurvatureSample = None

    @property
    def length(self):
        return len(self.samples)


@dataclass
class CertificationRecord:
    passed: bool
    min_value: float
    witness: tuple
    samples: int
    tolerance: float


def spray_coefficients(metric: MetricField, x, y) -> SprayValue:
    """Geodesic spray G^i = (1/4) g^{il} ( y^k d2F2/dx^k dy^l - dF2/dx^l )."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.linalg.norm(y) < ZERO_DIRECTION_TOL:
        raise ZeroDirection("spray needs a nonzero direction")
    if metric.x_independent:
        return SprayValue(x=x, y=y, coefficients=np.zeros(metric.n))
    g = metric.fundamental(x, y)
    mixed = _directional_x_derivative_of_fiber_gradient(metric, x, y)
    base = metric.base_gradient(x, y)
    coeff = 0.25 * np.linalg.solve(g, mixed - base)
    return SprayValue(x=x, y=y, coefficients=coeff)


def _directional_x_derivative_of_fiber_gradient(metric, x, y):
    # y^k d(dF2/dy^l)/dx^k as a single directional difference along y
    scale = np.linalg.norm(y)
    t = _SPRAY_X_STEP * (1.0 + np.abs(x).max()) / scale
    return (metric.fiber_gradient(x + t * y, y) - metric.fiber_gradient(x - t * y, y)) / (2 * t)


def _spray_vector(metric, x, y):
    return spray_coefficients(metric, x, y).coefficients


def integrate_geodesic(
    metric: MetricField,
    x0,
    y0,
    T: float,
    steps: int,
    bounds=None,
) -> GeodesicPath:
    """Integrate the geodesic flow with classical RK4 at fixed step.

    ``bounds`` (optional list of per-axis (lo, hi)) triggers LeftDomain with
    the exit time when the path leaves the chart.
    """
    x0 = np.asarray(x0, dtype=float)
    y0 = np.asarray(y0, dtype=float)
    if np.linalg.norm(y0) < ZERO_DIRECTION_TOL:
        raise ZeroDirection("geodesic needs a nonzero initial velocity")
    steps = int(steps)
    dt = T / steps

    def rhs(state):
        p, v = state[: metric.n], state[metric.n :]
        return np.concatenate([v, -2.0 * _spray_vector(metric, p, v)])

    state = np.concatenate([x0, y0])
    times = np.empty(steps + 1)
    points = np.empty((steps + 1, metric.n))
    velocities = np.empty((steps + 1, metric.n))
    times[0], points[0], velocities[0] = 0.0, x0, y0
    for k in range(steps):
        k1 = rhs(state)
        k2 = rhs(state + 0.5 * dt * k1)
        k3 = rhs(state + 0.5 * dt * k2)
        k4 = rhs(state + dt * k3)
        state = state + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        times[k + 1] = (k + 1) * dt
        points[k + 1] = state[: metric.n]
        velocities[k + 1] = state[metric.n :]
        if bounds is not None:
            for ax, (lo, hi) in enumerate(bounds):
                if not (lo <= state[ax] <= hi):
                    raise LeftDomain(
                        f"geodesic left the chart on axis {ax+1}", exit_time=times[k + 1]
                    )
    speeds = metric.value(points, velocities)
    return GeodesicPath(times=times, points=points, velocities=velocities, speeds=speeds)


def distortion(metric: MetricField, measure: MeasureDensity, x, y) -> float:
    """tau(x, y) = log( sqrt(det g(x,y)) / sigma(x) )."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.linalg.norm(y) < ZERO_DIRECTION_TOL:
        raise ZeroDirection("distortion needs a nonzero direction")
    sigma = float(measure.density(x[None, :])[0])
    if sigma <= 0:
        raise NonPositiveDensity("distortion needs sigma > 0")
    sign, logdet = np.linalg.slogdet(metric.fundamental(x, y))
    if sign <= 0:
        raise NonPositiveDensity("fundamental tensor determinant not positive")
    return float(0.5 * logdet - np.log(sigma))


def _distortion_stencil(metric, measure, x, y, rel_step=1e-3, bounds=None):
    """tau at five points along the geodesic through (x, y)."""
    speed = float(metric.value(x, y))
    dt = rel_step / speed
    taus = np.empty(5)
    taus[2] = distortion(metric, measure, x, y)
    substeps = 8
    for idx, target in ((0, -2 * dt), (1, -dt), (3, dt), (4, 2 * dt)):
        path = integrate_geodesic(metric, x, y, target, substeps, bounds=bounds)
        taus[idx] = distortion(metric, measure, path.points[-1], path.velocities[-1])
    return taus, dt


def s_curvature(metric, measure, x, y, rel_step=1e-3, bounds=None) -> float:
    """First t-derivative of distortion along the geodesic flow at t = 0."""
    taus, dt = _distortion_stencil(metric, measure, np.asarray(x, float), np.asarray(y, float), rel_step, bounds)
    return float((-taus[4] + 8 * taus[3] - 8 * taus[1] + taus[0]) / (12 * dt))


def s_curvature_dot(metric, measure, x, y, rel_step=1e-3, bounds=None) -> float:
    """Second t-derivative of distortion along the geodesic flow at t = 0."""
    taus, dt = _distortion_stencil(metric, measure, np.asarray(x, float), np.asarray(y, float), rel_step, bounds)
    return float((-taus[4] + 16 * taus[3] - 30 * taus[2] + 16 * taus[1] - taus[0]) / (12 * dt**2))


# -- directional Ricci --------------------------------------------------------


def ricci_scalar(metric: MetricField, x, y, guard_tol=1e-3) -> float:
    """Directional Ricci curvature Ric(y), reported for the given y.

    Internally evaluated at the F-unit rescaling of y and scaled back by
    F^2 (positive 2-homogeneity). Quadratic families use the Riemannian
    curvature formula on the metric matrix; other families use the spray
    curvature trace (restricted to n <= 3). Both paths difference twice
    and raise StencilUnstable when two step sizes disagree.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.linalg.norm(y) < ZERO_DIRECTION_TOL:
        raise ZeroDirection("Ricci needs a nonzero direction")
    if metric.x_independent:
        return 0.0
    f = float(metric.value(x, y))
    yhat = y / f
    if metric.is_quadratic:
        val = _riemannian_ricci_guarded(metric, x, yhat, guard_tol)
    else:
        if metric.n > 3:
            raise StencilUnstable("spray-curvature Ricci restricted to n <= 3")
        val = _spray_ricci_guarded(metric, x, yhat, guard_tol)
    return float(val * f * f)


def _riemannian_ricci_guarded(metric, x, yhat, guard_tol):
    est = [_riemannian_ricci(metric, x, yhat, h) for h in (3e-4, 6e-4)]
    if abs(est[0] - est[1]) > guard_tol * max(1.0, abs(est[0])):
        raise StencilUnstable("Ricci estimates disagree across step sizes", estimates=est)
    return est[0]


def _riemannian_ricci(metric, x, yhat, h):
    n = metric.n
    scale = h * (1.0 + np.abs(x).max())

    def christoffel(p):
        G = metric.quadratic_form(p[None, :])[0]
        dG = np.empty((n, n, n))  # dG[k] = dG/dx^k
        for k in range(n):
            e = np.zeros(n)
            e[k] = scale
            dG[k] = (metric.quadratic_form((p + e)[None, :])[0] - metric.quadratic_form((p - e)[None, :])[0]) / (2 * scale)
        Ginv = np.linalg.inv(G)
        Gamma = np.empty((n, n, n))
        for i in range(n):
            for j in range(n):
                for k in range(n):
                    Gamma[i, j, k] = 0.5 * sum(
                        Ginv[i, l] * (dG[j][l, k] + dG[k][j, l] - dG[l][j, k]) for l in range(n)
                    )
        return Gamma

    Gamma0 = christoffel(x)
    dGamma = np.empty((n, n, n, n))  # dGamma[m] = dGamma/dx^m
    for m in range(n):
        e = np.zeros(n)
        e[m] = scale
        dGamma[m] = (christoffel(x + e) - christoffel(x - e)) / (2 * scale)
    ric = np.zeros((n, n))
    for j in range(n):
        for k in range(n):
            acc = 0.0
            for i in range(n):
                acc += dGamma[i][i, j, k] - dGamma[k][i, j, i]
                for p in range(n):
                    acc += Gamma0[i, i, p] * Gamma0[p, j, k] - Gamma0[i, k, p] * Gamma0[p, j, i]
            ric[j, k] = acc
    return float(yhat @ ric @ yhat)


def _spray_ricci_guarded(metric, x, yhat, guard_tol):
    # outer steps sit above the inner difference noise of generic metrics
    est = [_spray_ricci(metric, x, yhat, h) for h in (3e-3, 6e-3)]
    if abs(est[0] - est[1]) > guard_tol * max(1.0, abs(est[0])):
        raise StencilUnstable("Ricci estimates disagree across step sizes", estimates=est)
    return est[0]


def _spray_ricci(metric, x, yhat, h):
    """Trace of the spray curvature R^i_k at an F-unit direction."""
    n = metric.n
    hx = h * (1.0 + np.abs(x).max())
    hy = h

    def G(p, v):
        return _spray_vector(metric, p, v)

    def DxG(p, v):
        # v^j dG/dx^j as a directional difference along the vector v
        t = hx / max(np.linalg.norm(v), 1e-12)
        return (G(p + t * v, v) - G(p - t * v, v)) / (2 * t)

    G0 = G(x, yhat)
    # dG/dx^k
    Gx = np.empty((n, n))
    for k in range(n):
        e = np.zeros(n)
        e[k] = hx
        Gx[k] = (G(x + e, yhat) - G(x - e, yhat)) / (2 * hx)
    # dG/dy^j and d(DxG)/dy^k
    Gy = np.empty((n, n))
    DxGy = np.empty((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = hy
        Gy[j] = (G(x, yhat + e) - G(x, yhat - e)) / (2 * hy)
        DxGy[j] = (DxG(x, yhat + e) - DxG(x, yhat - e)) / (2 * hy)
    # d2G/dy^j dy^k
    Gyy = np.empty((n, n, n))
    for j in range(n):
        ej = np.zeros(n)
        ej[j] = hy
        for k in range(j, n):
            ek = np.zeros(n)
            ek[k] = hy
            val = (G(x, yhat + ej + ek) - G(x, yhat + ej - ek) - G(x, yhat - ej + ek) + G(x, yhat - ej - ek)) / (4 * hy * hy)
            Gyy[j, k] = val
            Gyy[k, j] = val
    ric = 0.0
    for k in range(n):
        term = 3.0 * Gx[k][k] - DxGy[k][k]
        term += 2.0 * sum(G0[j] * Gyy[j, k][k] for j in range(n))
        term -= sum(Gy[j][k] * Gy[k][j] for j in range(n))
        ric += term
    return float(ric)


def weighted_ricci(metric, measure, x, y, N, rel_step=1e-3, bounds=None) -> float:
    """Ric_N(y) = Ric + Sdot - S^2/(N - n); Ric_inf for N = inf."""
    if N != np.inf and abs(float(N) - metric.n) < 1e-12:
        raise InvalidN("weighted Ricci undefined at N = chart dimension")
    ric = ricci_scalar(metric, x, y)
    sdot = s_curvature_dot(metric, measure, x, y, rel_step=rel_step, bounds=bounds)
    if N == np.inf:
        return ric + sdot
    s = s_curvature(metric, measure, x, y, rel_step=rel_step, bounds=bounds)
    return ric + sdot - s * s / (float(N) - metric.n)


def curvature_report(
    metric,
    measure,
    points,
    directions,
    N_values=(),
    rel_step=1e-3,
    bounds=None,
) -> CurvatureReport:
    """Tabulate tau, S, Sdot, Ric and weighted Ricci over a sample bundle."""
    samples = []
    min_ric_inf, witness = np.inf, None
    for x in np.atleast_2d(np.asarray(points, float)):
        for y in np.atleast_2d(np.asarray(directions, float)):
            f = float(metric.value(x, y))
            yunit = y / f
            tau = distortion(metric, measure, x, yunit)
            s = s_curvature(metric, measure, x, yunit, rel_step=rel_step, bounds=bounds)
            sdot = s_curvature_dot(metric, measure, x, yunit, rel_step=rel_step, bounds=bounds)
            ric = ricci_scalar(metric, x, yunit)
            ric_inf = ric + sdot
            ric_n = {}
            for N in N_values:
                ric_n[N] = ric + sdot - (0.0 if N == np.inf else s * s / (float(N) - metric.n))
            sample = CurvatureSample(x=x.copy(), y=yunit, tau=tau, s=s, s_dot=sdot, ric=ric, ric_inf=ric_inf, ric_n=ric_n)
            samples.append(sample)
            if ric_inf < min_ric_inf:
                min_ric_inf, witness = ric_inf, sample
    return CurvatureReport(samples=samples, min_ric_inf=float(min_ric_inf), witness=witness)


def check_nonnegative_ricci_infinity(
    metric,
    measure,
    domain: GridDomain,
    tolerance: float = 1e-6,
    base_points: int = 16,
    directions: int = 8,
    margin: float = 0.15,
    rel_step=1e-3,
) -> CertificationRecord:
    """Sampled certification of Ric_inf >= 0 on F-unit vectors.

    Base points form a coarse product grid shrunk away from the chart faces
    by ``margin`` so the distortion stencils stay inside; failures are data,
    not errors.
    """
    axes = []
    per_axis = max(2, int(round(base_points ** (1.0 / domain.n))))
    for ax in range(domain.n):
        a, b = domain.bounds[ax]
        pad = margin * (b - a)
        axes.append(np.linspace(a + pad, b - pad, per_axis))
    mesh = np.meshgrid(*axes, indexing="ij")
    points = np.stack([m.ravel() for m in mesh], axis=-1)
    if domain.n == 1:
        dirs = np.array([[1.0], [-1.0]])
    elif domain.n == 2:
        thetas = np.linspace(0, 2 * np.pi, directions, endpoint=False)
        dirs = np.stack([np.cos(thetas), np.sin(thetas)], axis=-1)
    else:
        rng = np.random.default_rng(0)
        dirs = rng.standard_normal((directions, domain.n))
        dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
    bounds = list(domain.bounds)
    min_val, wit = np.inf, None
    count = 0
    for x in points:
        for y in dirs:
            f = float(metric.value(x, y))
            yunit = y / f
            ric = ricci_scalar(metric, x, yunit)
            sdot = s_curvature_dot(metric, measure, x, yunit, rel_step=rel_step, bounds=bounds)
            val = ric + sdot
            count += 1
            if val < min_val:
                min_val, wit = val, (x.copy(), yunit.copy())
    return CertificationRecord(
        passed=bool(min_val >= -tolerance),
        min_value=float(min_val),
        witness=wit,
        samples=count,
        tolerance=float(tolerance),
    )
