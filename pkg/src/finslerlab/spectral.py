"""First eigenvalue of the nonlinear Laplacian by Rayleigh minimization.

The discrete energy is the forward/backward averaged dual-norm form

    E(u) = 1/2 sum_c m_c [ F*(x_c, D+u)^2 + F*(x_c, D-u)^2 ]

over zero-extended grid fields (differences across open chart faces are
omitted; periodic axes wrap). Averaging the one-sided stencils keeps the
form second-order accurate without the checkerboard null modes of central
differences, and for quadratic metrics it coincides with the assembled
sparse form, so the linear and nonlinear solver paths minimize the same
functional.

Quadratic (Riemannian-type) metrics solve one generalized sparse
eigenproblem. Other metrics run dual-reweighted linear solves (the
fundamental tensor of the current differential gives the local quadratic
model) with a projected-descent polish whose direction comes from the
derivative of the squared dual norm through the inverse Legendre map.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import eigsh

from .errors import EmptyInterior, MonotonicityViolation, WindowOutsideDomain
from .geometry import InequalityRecord, ball_mass_profile, minkowski_content
from .grid import BorelMask, GridDomain, MeasureDensity, ScalarField
from .metrics import ZERO_DIRECTION_TOL, MetricField


@dataclass
class RayleighReport:
    lam: float
    field: ScalarField
    energy: float
    mass: float
    trace: list
    converged: bool
    method: str


@dataclass
class ExhaustionResult:
    radii: np.ndarray
    lambdas: np.ndarray
    lam_limit: float
    fit_coefficient: float
    lam_error: float
    reports: list = field(default_factory=list)


# -- energy ------------------------------------------------------------------


def _one_sided_differences(domain: GridDomain, values, axis, sign):
    """One-sided difference approximating +du: (u_{c+s e} - u_c)/(s h).

    Zero extension outside the grid; the difference across an open face is
    omitted (natural boundary).
    """
    h = sign * domain.spacing[axis]
    if domain.periodic[axis]:
        return (np.roll(values, -sign, axis=axis) - values) / h, None
    shifted = np.zeros_like(values)
    if sign > 0:
        sl_to = [slice(None)] * domain.n
        sl_to[axis] = slice(0, domain.shape[axis] - 1)
        sl_from = [slice(None)] * domain.n
        sl_from[axis] = slice(1, domain.shape[axis])
    else:
        sl_to = [slice(None)] * domain.n
        sl_to[axis] = slice(1, domain.shape[axis])
        sl_from = [slice(None)] * domain.n
        sl_from[axis] = slice(0, domain.shape[axis] - 1)
    shifted[tuple(sl_to)] = values[tuple(sl_from)]
    d = (shifted - values) / h  # h carries the sign
    # difference across an open face is omitted (natural boundary there)
    edge = None
    if domain.is_open_face(axis, sign):
        edge = [slice(None)] * domain.n
        edge[axis] = domain.shape[axis] - 1 if sign > 0 else 0
        d[tuple(edge)] = 0.0
    return d, edge


def _stacked_differences(domain, values, sign):
    out = np.empty(domain.shape + (domain.n,))
    for ax in range(domain.n):
        out[..., ax], _ = _one_sided_differences(domain, values, ax, sign)
    return out


def dirichlet_energy(metric: MetricField, measure: MeasureDensity, u: ScalarField) -> float:
    """Integral of the squared dual norm of du (f/b-averaged quadrature)."""
    dom = u.domain
    masses = measure.cell_masses(dom)
    dplus = _stacked_differences(dom, u.values, +1)
    dminus = _stacked_differences(dom, u.values, -1)
    xs = dom.centers
    e_plus = metric.dual_value(xs, dplus) ** 2
    e_minus = metric.dual_value(xs, dminus) ** 2
    return float(0.5 * (masses * (e_plus + e_minus)).sum())


# -- quadratic assembly --------------------------------------------------------


def _interior_mask(domain, cells):
    interior = cells.copy()
    for ax in range(domain.n):
        plus = np.roll(cells, -1, axis=ax)
        minus = np.roll(cells, 1, axis=ax)
        if not domain.periodic[ax]:
            sl = [slice(None)] * domain.n
            sl[ax] = -1
            plus[tuple(sl)] = domain.is_open_face(ax, 1)
            sl[ax] = 0
            minus[tuple(sl)] = domain.is_open_face(ax, -1)
        interior &= plus & minus
    return interior


def assemble_quadratic_form(domain: GridDomain, masses, W, mask):
    """Sparse SPD matrix of the f/b-averaged energy with cellwise matrix W.

    W has shape ``domain.shape + (n, n)`` (the dual quadratic form at each
    cell); ``mask`` selects the active cells, everything else is a Dirichlet
    zero except across open faces.
    """
    n = domain.n
    shape = domain.shape
    total = domain.cell_count
    active = np.flatnonzero(mask.ravel())
    iid = -np.ones(total, dtype=np.int64)
    iid[active] = np.arange(len(active))
    rows, cols, data = [], [], []
    flat_idx = np.arange(total).reshape(shape)
    half_m = 0.5 * masses
    for sign in (+1, -1):
        neighbor = []
        valid = []
        for ax in range(n):
            nb = np.roll(flat_idx, -sign, axis=ax)
            ok = np.ones(shape, dtype=bool)
            if not domain.periodic[ax]:
                sl = [slice(None)] * n
                sl[ax] = -1 if sign > 0 else 0
                if domain.is_open_face(ax, sign):
                    ok[tuple(sl)] = False  # omit the face term entirely
                    nb[tuple(sl)] = -1
                else:
                    nb[tuple(sl)] = -1  # Dirichlet zero beyond the wall
            neighbor.append(nb.ravel())
            valid.append(ok.ravel())
        # every grid cell contributes its difference terms; inactive cells
        # have u = 0 but their stencils may touch active neighbors, which is
        # what gives Dirichlet walls their full face weight
        for i in range(n):
            for j in range(n):
                wij = (half_m * W[..., i, j]).ravel() / (domain.spacing[i] * domain.spacing[j])
                live = valid[i] & valid[j]
                c = iid.copy()
                c[~live] = -1  # keep alignment; terms filtered per slot below
                wi = wij
                ai = np.where(live & (neighbor[i] >= 0), iid[np.clip(neighbor[i], 0, None)], -1)
                aj = np.where(live & (neighbor[j] >= 0), iid[np.clip(neighbor[j], 0, None)], -1)
                cc = np.where(live, iid, -1)
                # (u_ai - u_c)(u_aj - u_c) expanded with u = 0 at inactive slots
                on = live & (cc >= 0)
                rows.append(cc[on]); cols.append(cc[on]); data.append(wi[on])
                on = (ai >= 0) & (cc >= 0)
                rows.append(ai[on]); cols.append(cc[on]); data.append(-wi[on])
                on = (cc >= 0) & (aj >= 0)
                rows.append(cc[on]); cols.append(aj[on]); data.append(-wi[on])
                on = (ai >= 0) & (aj >= 0)
                rows.append(ai[on]); cols.append(aj[on]); data.append(wi[on])
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    data = np.concatenate(data)
    A = sparse.csr_matrix((data, (rows, cols)), shape=(len(active), len(active)))
    A = 0.5 * (A + A.T)
    return A, active


def _dual_quadratic_cellwise(metric, domain, du=None):
    """Dual quadratic form g*(x, du) per cell (axis-averaged fallback at du=0)."""
    n = metric.n
    xs = domain.flat_centers
    G = metric.quadratic_form(xs)
    if G is not None:
        W = np.linalg.inv(G)
        return W.reshape(domain.shape + (n, n))
    # fallback/average dual tensor from axis covectors
    base = np.zeros((len(xs), n, n))
    count = 0
    for k in range(n):
        for s in (1.0, -1.0):
            xi = np.zeros(n)
            xi[k] = s
            ys = metric.legendre_inverse(xs, np.broadcast_to(xi, xs.shape))
            g = metric.fundamental(xs, ys)
            base += np.linalg.inv(g)
            count += 1
    base /= count
    if du is None:
        return base.reshape(domain.shape + (n, n))
    flat_du = du.reshape(-1, n)
    live = np.linalg.norm(flat_du, axis=-1) > ZERO_DIRECTION_TOL
    W = base.copy()
    if live.any():
        ys = metric.legendre_inverse(xs[live], flat_du[live])
        W[live] = np.linalg.inv(metric.fundamental(xs[live], ys))
    return W.reshape(domain.shape + (n, n))


def _smallest_eigenpair(A, masses_active, v0=None):
    M = sparse.diags(masses_active)
    if v0 is None:
        v0 = np.ones(A.shape[0])
    vals, vecs = eigsh(A, k=1, M=M, sigma=0, which="LM", v0=v0)
    u = vecs[:, 0]
    if u[np.argmax(np.abs(u))] < 0:
        u = -u
    return float(vals[0]), u


# -- solver --------------------------------------------------------------------


def _energy_and_gradient(metric, domain, masses, values):
    """Energy and its gradient on the full grid (zero-extended field)."""
    n = domain.n
    xs = domain.centers
    E = 0.0
    grad = np.zeros(domain.shape)
    for sign in (+1, -1):
        d = _stacked_differences(domain, values, sign)
        E += 0.5 * float((masses * metric.dual_value(xs, d) ** 2).sum())
        # dE/du via the inverse Legendre map: d(F*^2)/dxi = 2 L^{-1}(xi)
        flat = d.reshape(-1, n)
        live = np.linalg.norm(flat, axis=-1) > ZERO_DIRECTION_TOL
        linv = np.zeros_like(flat)
        if live.any():
            linv[live] = metric.legendre_inverse(domain.flat_centers[live], flat[live])
        linv = linv.reshape(domain.shape + (n,))
        for ax in range(n):
            h = sign * domain.spacing[ax]
            coef = masses * linv[..., ax] / h
            if domain.periodic[ax]:
                grad -= coef
                grad += np.roll(coef, sign, axis=ax)
                continue
            if domain.is_open_face(ax, sign):
                edge = [slice(None)] * n
                edge[ax] = domain.shape[ax] - 1 if sign > 0 else 0
                coef = coef.copy()
                coef[tuple(edge)] = 0.0
            grad -= coef
            rolled = np.roll(coef, sign, axis=ax)
            sl = [slice(None)] * n
            sl[ax] = 0 if sign > 0 else -1
            rolled[tuple(sl)] = 0.0
            grad += rolled
    return E, grad


def first_eigenvalue_domain(
    metric: MetricField,
    measure: MeasureDensity,
    omega: BorelMask,
    tol_lambda: float = 1e-8,
    patience: int = 10,
    max_iter: int = 1500,
    restarts: int = 5,
    reweight_iters: int = 6,
    seed: int = 0,
    method: str = "auto",
) -> RayleighReport:
    """Minimize the Rayleigh quotient over grid fields vanishing outside omega.

    ``method`` forces the solver path: "linear" (quadratic metrics only),
    "descent", or "auto" (linear when the metric is quadratic).
    """
    domain = omega.domain
    if omega.is_empty or not _interior_mask(domain, omega.cells).any():
        raise EmptyInterior("eigenvalue needs a mask with interior cells")
    masses = measure.cell_masses(domain)
    active = omega.flat_indices()
    m_active = masses.ravel()[active]

    if metric.is_quadratic and method in ("auto", "linear"):
        W = _dual_quadratic_cellwise(metric, domain)
        A, act = assemble_quadratic_form(domain, masses, W, omega.cells)
        lam, u = _smallest_eigenpair(A, masses.ravel()[act])
        values = np.zeros(domain.cell_count)
        values[act] = u
        field_ = ScalarField(domain, values.reshape(domain.shape), support=omega)
        energy = dirichlet_energy(metric, measure, field_)
        mass = field_.squared_norm(measure)
        return RayleighReport(
            lam=lam, field=field_, energy=energy, mass=mass, trace=[lam], converged=True, method="linear"
        )

    rng = np.random.default_rng(seed)

    def expand(u):
        values = np.zeros(domain.cell_count)
        values[active] = u
        return values.reshape(domain.shape)

    def normalize(u):
        return u / np.sqrt(np.sum(m_active * u * u))

    def quotient(u):
        vals = expand(u)
        E, grad = _energy_and_gradient(metric, domain, masses, vals)
        M = float(np.sum(m_active * u * u))
        return E / M, E, M, grad.ravel()[active]

    # initializer 1: axis-averaged quadratic model
    W0 = _dual_quadratic_cellwise(metric, domain)
    A0, act0 = assemble_quadratic_form(domain, masses, W0, omega.cells)
    lam_lin, u_lin = _smallest_eigenpair(A0, masses.ravel()[act0])

    # initializer 2: dual-reweighted fixed point from the linear solution
    u_rw = u_lin.copy()
    lam_rw = lam_lin
    for _ in range(reweight_iters):
        du = ScalarField(domain, expand(u_rw)).differential()
        W = _dual_quadratic_cellwise(metric, domain, du=du)
        A, act = assemble_quadratic_form(domain, masses, W, omega.cells)
        lam_new, u_new = _smallest_eigenpair(A, masses.ravel()[act], v0=u_rw)
        if abs(lam_new - lam_rw) < 1e-10 * max(abs(lam_rw), 1e-30):
            lam_rw, u_rw = lam_new, u_new
            break
        lam_rw, u_rw = lam_new, u_new

    starts = [normalize(u_rw), normalize(u_lin)]
    while len(starts) < restarts:
        bump = 1.0 + 0.3 * rng.standard_normal(len(active))
        starts.append(normalize(np.abs(u_rw) * bump))

    best = None
    for u0 in starts:
        u = u0.copy()
        step = 1.0
        trace = []
        converged = False
        for _ in range(max_iter):
            lam, E, M, gE = quotient(u)
            trace.append(lam)
            if len(trace) > patience and abs(trace[-patience - 1] - lam) < tol_lambda * abs(lam):
                converged = True
                break
            resid = (gE - 2 * lam * m_active * u) / M
            rn = np.linalg.norm(resid)
            if rn < 1e-14:
                converged = True
                break
            improved = False
            for _ in range(40):
                cand = u - step * resid
                lam_c, *_ = quotient(cand)
                if lam_c < lam - 1e-15:
                    u = normalize(cand)
                    step *= 1.5
                    improved = True
                    break
                step *= 0.5
            if not improved:
                converged = True  # stationary to line-search resolution
                break
        lam, E, M, _ = quotient(u)
        if best is None or lam < best[0]:
            best = (lam, u, E, M, trace, converged)
    lam, u, E, M, trace, converged = best
    field_ = ScalarField(domain, expand(normalize(u)), support=omega)
    energy = dirichlet_energy(metric, measure, field_)
    mass = field_.squared_norm(measure)
    return RayleighReport(
        lam=float(energy / mass),
        field=field_,
        energy=float(energy),
        mass=float(mass),
        trace=trace,
        converged=converged,
        method="descent",
    )


def first_eigenvalue_exhaustion(
    metric,
    measure,
    domain,
    x0,
    radii,
    monotonicity_slack: float = 2e-3,
    graph=None,
    **solver_kwargs,
) -> ExhaustionResult:
    """lambda_1 on nested forward balls with a lam + a/R^2 extrapolation."""
    radii = np.asarray(sorted(float(r) for r in radii))
    if len(radii) < 2:
        raise WindowOutsideDomain("exhaustion needs at least two radii")
    prof_field, _, _ = ball_mass_profile(metric, measure, domain, x0, graph=graph)
    ball_big = prof_field.ball(radii[-1])
    if bool((ball_big.cells & domain.boundary_mask()).any()):
        raise WindowOutsideDomain(f"ball of radius {radii[-1]} touches the chart boundary")
    lams, reports = [], []
    for R in radii:
        rep = first_eigenvalue_domain(metric, measure, prof_field.ball(R), **solver_kwargs)
        lams.append(rep.lam)
        reports.append(rep)
    lams = np.asarray(lams)
    for k in range(len(lams) - 1):
        if lams[k + 1] > lams[k] * (1 + monotonicity_slack):
            raise MonotonicityViolation(
                f"lambda increased from R={radii[k]} to R={radii[k+1]}: {lams[k]:.6g} -> {lams[k+1]:.6g}"
            )
    A2 = np.vstack([np.ones_like(radii), 1.0 / radii**2]).T
    coef2, *_ = np.linalg.lstsq(A2, lams, rcond=None)
    lam2 = float(coef2[0])
    if len(radii) >= 4:
        # a cubic correction absorbs the next-order decay, which the pure
        # 1/R^2 model turns into a biased limit on curved geometries
        A3 = np.vstack([np.ones_like(radii), 1.0 / radii**2, 1.0 / radii**3]).T
        coef3, *_ = np.linalg.lstsq(A3, lams, rcond=None)
        lam_limit = float(coef3[0])
    else:
        lam_limit = lam2
    half = len(radii) // 2
    coef_tail, *_ = np.linalg.lstsq(A2[half:], lams[half:], rcond=None)
    lam_err = max(abs(lam2 - lam_limit), abs(float(coef_tail[0]) - lam_limit)) + 1e-12
    return ExhaustionResult(
        radii=radii,
        lambdas=lams,
        lam_limit=lam_limit,
        fit_coefficient=float(coef2[1]),
        lam_error=float(lam_err),
        reports=reports,
    )


def superlevel_masks(field_: ScalarField, levels, fractions=(0.2, 0.5, 0.8)) -> list:
    """Superlevel sets of a field at the given fractions of its maximum."""
    vmax = float(np.max(np.abs(field_.values)))
    out = []
    for frac in fractions:
        cells = np.abs(field_.values) >= frac * vmax
        if cells.any():
            out.append(BorelMask(field_.domain, cells))
    return out


def coarea_check(
    metric,
    measure,
    domain,
    f: ScalarField,
    levels: int = 24,
    slack_rel: float = 0.05,
    radius=None,
    graph=None,
) -> InequalityRecord:
    """Level-sum of contents against the dual-norm total variation.

    Checks integral_0^inf content({f >= t}) dt <= integral F*(-df) dm with
    the quadrature/extrapolation error credited as declared slack.
    """
    from .distance import DEFAULT_STENCIL_RADIUS

    radius = DEFAULT_STENCIL_RADIUS if radius is None else radius
    vmax = float(f.values.max())
    if vmax <= 0:
        raise EmptyInterior("coarea needs a nonnegative field with positive maximum")
    dt = vmax / levels
    ts = (np.arange(levels) + 0.5) * dt
    lhs = 0.0
    content_err = 0.0
    for t in ts:
        mask = BorelMask(domain, f.values >= t)
        if mask.is_empty:
            continue
        c = minkowski_content(metric, measure, domain, mask, radius=radius, graph=graph)
        lhs += c.value * dt
        content_err += c.error * dt
    df = f.differential()
    rhs = float((measure.cell_masses(domain) * metric.dual_value(domain.centers, -df)).sum())
    slack = content_err + slack_rel * rhs
    return InequalityRecord(
        label="coarea level-sum bound",
        lhs=float(lhs),
        rhs=float(rhs),
        slack=float(slack),
        passed=bool(lhs <= rhs + slack),
        payload={"levels": levels, "content_error": float(content_err), "max_level": vmax},
    )


def cheeger_buser_rows(
    *,
    lam_limit: float,
    lam_error: float,
    lam_by_radius: dict,
    kappa: float,
    kappa_star: float,
    lambda_F: float,
    entropy_value: float,
    entropy_error: float,
    sch_lower: float,
    certified: bool,
    ball_mass: callable,
    deltas=(0.5, 0.9),
    slack_rel: float = 0.02,
) -> list:
    """Two-sided eigenvalue bounds from the growth rate and the Cheeger bracket.

    Lower bounds use the certified lower end of the Cheeger bracket in both
    the reversibility form (strong) and the smoothness-constant form (weak);
    the upper bound uses the growth rate. The finite-radius upper bound is
    evaluated at each delta and available radius pair (R, 2R).
    """
    rows = []
    # (a) strong lower bound via the reversibility constant; the growth-rate
    # uncertainty enters the squared bound at both first and second order
    bound_a = sch_lower**2 / (4 * lambda_F**2)
    err_a = (2 * sch_lower * entropy_error + entropy_error**2) / (4 * lambda_F**2)
    rows.append(
        InequalityRecord(
            label="eigenvalue lower bound (reversibility form)",
            lhs=float(lam_limit),
            rhs=float(bound_a),
            slack=float(lam_error + err_a + slack_rel * max(bound_a, 1e-12)),
            passed=bool(lam_limit >= bound_a - (lam_error + err_a + slack_rel * max(bound_a, 1e-12))),
            informational=not certified,
            payload={"lambda_F": lambda_F, "sch_lower": sch_lower},
        )
    )
    # (b) weaker lower bound via the smoothness constant
    bound_b = sch_lower**2 / (4 * kappa**2)
    err_b = (2 * sch_lower * entropy_error + entropy_error**2) / (4 * kappa**2)
    rows.append(
        InequalityRecord(
            label="eigenvalue lower bound (smoothness form)",
            lhs=float(lam_limit),
            rhs=float(bound_b),
            slack=float(lam_error + err_b + slack_rel * max(bound_b, 1e-12)),
            passed=bool(lam_limit >= bound_b - (lam_error + err_b + slack_rel * max(bound_b, 1e-12))),
            informational=not certified,
            payload={"kappa": kappa, "sch_lower": sch_lower},
        )
    )
    # (c) upper bound from the volume growth rate
    bound_c = (kappa**2 / 4) * entropy_value**2
    err_c = (kappa**2 / 4) * (2 * abs(entropy_value) * entropy_error + entropy_error**2)
    rows.append(
        InequalityRecord(
            label="eigenvalue upper bound (growth form)",
            lhs=float(lam_limit),
            rhs=float(bound_c),
            slack=float(lam_error + err_c + slack_rel * max(bound_c, 1e-12)),
            passed=bool(lam_limit <= bound_c + lam_error + err_c + slack_rel * max(bound_c, 1e-12)),
            payload={"kappa": kappa, "entropy": entropy_value},
        )
    )
    # (d) finite-radius upper bound at each delta, for radius pairs (R, 2R)
    kappa_tilde = 1.0 / kappa_star
    for R2, lam_R2 in sorted(lam_by_radius.items()):
        R = R2 / 2.0
        if R <= 2.0:
            continue
        m_R = ball_mass(R)
        m_1 = ball_mass(1.0)
        if not (np.isfinite(m_R) and np.isfinite(m_1) and m_1 > 0):
            continue
        for delta in deltas:
            if kappa - delta**2 <= 0:
                continue
            log_term = (
                np.log(m_R / m_1)
                + delta / (2 * kappa)
                + np.log(8 * kappa * (2 * kappa * kappa_tilde + delta) / (kappa - delta**2))
            )
            bound = kappa**2 / (4 * delta**2 * (R - 1) ** 2) * log_term**2
            rows.append(
                InequalityRecord(
                    label=f"finite-radius upper bound R={R:g} delta={delta:g}",
                    lhs=float(lam_R2),
                    rhs=float(bound),
                    slack=float(slack_rel * bound),
                    passed=bool(lam_R2 <= bound * (1 + slack_rel)),
                    payload={"R": R, "delta": delta, "ball_mass_R": float(m_R), "ball_mass_1": float(m_1)},
                )
            )
    return rows
