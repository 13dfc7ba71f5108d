import numpy as np
import pytest
from numpy.testing import assert_allclose

from finslerlab.errors import EmptyInterior, WindowOutsideDomain
from finslerlab.geometry import ball_mass_profile, volume_entropy
from finslerlab.grid import BorelMask, GridDomain, MeasureDensity, ScalarField
from finslerlab.metrics import EuclideanMetric, RandersMetric
from finslerlab.spectral import (
    cheeger_buser_rows,
    coarea_check,
    dirichlet_energy,
    first_eigenvalue_domain,
    first_eigenvalue_exhaustion,
    superlevel_masks,
)

LEB = MeasureDensity.lebesgue()


def box(bounds, res, **kw):
    return GridDomain(bounds=tuple(bounds), resolution=tuple(res), **kw)


def interval_mask(domain, a, b):
    return BorelMask.from_predicate(domain, lambda c: (c[..., 0] >= a) & (c[..., 0] <= b))


class TestDirichletEnergy:
    def test_sine_energy_value(self):
        d = box([(-0.5, np.pi + 0.5)], [800])
        omega = interval_mask(d, 0.0, np.pi)
        u = ScalarField.from_function(d, lambda c: np.sin(np.clip(c[..., 0], 0, np.pi)), support=omega)
        assert_allclose(dirichlet_energy(EuclideanMetric(1), LEB, u), np.pi / 2, rtol=0.02)

    def test_two_homogeneous_scaling(self):
        d = box([(0.0, 1.0), (0.0, 1.0)], [40, 40])
        u = ScalarField.from_function(d, lambda c: np.sin(3 * c[..., 0]) * c[..., 1])
        metric = RandersMetric([0.4, 0.1])
        e1 = dirichlet_energy(metric, LEB, u)
        u3 = ScalarField(d, 3.0 * u.values)
        assert_allclose(dirichlet_energy(metric, LEB, u3), 9.0 * e1, rtol=1e-12)

    def test_randers_energy_against_quadrature(self):
        # oracle: midpoint quadrature of F*(du)^2 with the closed-form dual norm
        d = box([(0.0, 2.0)], [1600])
        metric = RandersMetric(np.array([0.5]))
        u = ScalarField.from_function(d, lambda c: np.sin(np.pi * c[..., 0]))
        xs = d.flat_centers[:, 0]
        dux = np.pi * np.cos(np.pi * xs)
        fstar = np.where(dux > 0, dux / 1.5, -dux / 0.5)
        oracle = float(np.sum(fstar**2) * d.cell_volume)
        assert_allclose(dirichlet_energy(metric, LEB, u), oracle, rtol=0.02)


class TestFirstEigenvalue:
    def test_interval_unit_eigenvalue(self):
        d = box([(-0.3, np.pi + 0.3)], [500])
        omega = interval_mask(d, 0.0, np.pi)
        rep = first_eigenvalue_domain(EuclideanMetric(1), LEB, omega)
        assert_allclose(rep.lam, 1.0, rtol=0.01)
        assert rep.method == "linear"
        assert_allclose(rep.lam, rep.energy / rep.mass, rtol=1e-12)

    def test_unit_disk_eigenvalue(self):
        d = box([(-1.1, 1.1), (-1.1, 1.1)], [280, 280])
        omega = BorelMask.from_predicate(d, lambda c: np.linalg.norm(c, axis=-1) < 1.0)
        rep = first_eigenvalue_domain(EuclideanMetric(2), LEB, omega)
        assert_allclose(rep.lam, 5.783185963, rtol=0.02)

    def test_exponential_drift_spectrum(self):
        L = 40.0
        d = box([(-1.0, L + 1.0)], [2100])
        omega = interval_mask(d, 0.0, L)
        meas = MeasureDensity.from_expression("exp(x1)", 1)
        rep = first_eigenvalue_domain(EuclideanMetric(1), meas, omega)
        assert_allclose(rep.lam, 0.25 + np.pi**2 / L**2, rtol=0.05)

    def test_randers_line_piecewise_sine_value(self):
        # rising quarter-wave at rate sqrt(lam)(1+b), falling at sqrt(lam)(1-b):
        # total pi  =>  lam = (1 - b^2)^{-2} = 16/9 at b = 1/2
        d = box([(-0.3, np.pi + 0.3)], [700])
        omega = interval_mask(d, 0.0, np.pi)
        metric = RandersMetric(np.array([0.5]))
        rep = first_eigenvalue_domain(metric, LEB, omega, restarts=3, max_iter=800)
        assert rep.method == "descent"
        assert_allclose(rep.lam, 16.0 / 9.0, rtol=0.01)

    def test_descent_agrees_with_linear_on_riemannian(self):
        d = box([(-0.3, np.pi + 0.3)], [300])
        omega = interval_mask(d, 0.0, np.pi)
        lin = first_eigenvalue_domain(EuclideanMetric(1), LEB, omega, method="linear")
        dec = first_eigenvalue_domain(EuclideanMetric(1), LEB, omega, method="descent", restarts=2, max_iter=2000)
        assert abs(dec.lam - lin.lam) / lin.lam < 1e-3

    def test_quotient_scale_invariance(self):
        d = box([(-0.3, np.pi + 0.3)], [300])
        omega = interval_mask(d, 0.0, np.pi)
        metric = RandersMetric(np.array([0.5]))
        u = ScalarField.from_function(d, lambda c: np.sin(np.clip(c[..., 0], 0, np.pi)), support=omega)
        q1 = dirichlet_energy(metric, LEB, u) / u.squared_norm(LEB)
        u5 = ScalarField(d, 5.0 * u.values, support=omega)
        q5 = dirichlet_energy(metric, LEB, u5) / u5.squared_norm(LEB)
        assert_allclose(q5, q1, rtol=1e-12)

    def test_empty_interior_rejected(self):
        d = box([(0.0, 1.0)], [64])
        with pytest.raises(EmptyInterior):
            first_eigenvalue_domain(EuclideanMetric(1), LEB, BorelMask(d, np.zeros(64, bool)))


class TestExhaustion:
    def test_flat_disks_limit_zero(self):
        d = box([(-13.0, 13.0), (-13.0, 13.0)], [260, 260])
        res = first_eigenvalue_exhaustion(EuclideanMetric(2), LEB, d, np.zeros(2), radii=[4.0, 6.0, 8.0, 12.0])
        # lambda(R) = j01^2 / R^2: the 1/R^2 fit recovers a tiny limit
        assert np.all(np.diff(res.lambdas) < 0)
        assert abs(res.lam_limit) < 0.02
        assert_allclose(res.fit_coefficient, 5.783, rtol=0.05)

    def test_exponential_line_limit(self):
        d = box([(-32.0, 32.0)], [2100])
        meas = MeasureDensity.from_expression("exp(x1)", 1)
        res = first_eigenvalue_exhaustion(EuclideanMetric(1), meas, d, np.zeros(1), radii=[10.0, 15.0, 20.0, 25.0])
        assert_allclose(res.lam_limit, 0.25, rtol=0.05)
        # interval (-R, R): lambda = 1/4 + pi^2/(2R)^2, so the 1/R^2 coefficient is pi^2/4
        assert_allclose(res.fit_coefficient, np.pi**2 / 4, rtol=0.1)

    def test_domain_monotonicity_of_reported_sequence(self):
        d = box([(-32.0, 32.0)], [1500])
        meas = MeasureDensity.from_expression("exp(x1)", 1)
        res = first_eigenvalue_exhaustion(EuclideanMetric(1), meas, d, np.zeros(1), radii=[8.0, 12.0, 18.0, 24.0])
        assert np.all(np.diff(res.lambdas) <= 0)

    def test_window_checked(self):
        d = box([(-5.0, 5.0)], [200])
        with pytest.raises(WindowOutsideDomain):
            first_eigenvalue_exhaustion(EuclideanMetric(1), LEB, d, np.zeros(1), radii=[2.0, 8.0])


class TestCoarea:
    def test_tent_equality_case(self):
        d = box([(-0.6, 1.6)], [1100])
        tent = lambda c: np.clip(np.minimum(c[..., 0], 1 - c[..., 0]), 0.0, None)
        f = ScalarField.from_function(d, tent)
        rec = coarea_check(EuclideanMetric(1), LEB, d, f, levels=30)
        assert rec.passed
        assert_allclose(rec.lhs, 1.0, rtol=0.05)
        assert_allclose(rec.rhs, 1.0, rtol=0.05)

    def test_mollified_disk_strict_inequality(self):
        d = box([(-2.0, 2.0), (-2.0, 2.0)], [160, 160])
        bump = lambda c: np.clip(1.0 - np.linalg.norm(c, axis=-1), 0.0, None) ** 2
        f = ScalarField.from_function(d, bump)
        rec = coarea_check(EuclideanMetric(2), LEB, d, f, levels=18)
        assert rec.passed
        assert rec.lhs < rec.rhs  # strictly inside for the smooth bump

    def test_level_sum_scales_linearly(self):
        d = box([(-0.6, 1.6)], [900])
        tent = lambda c: np.clip(np.minimum(c[..., 0], 1 - c[..., 0]), 0.0, None)
        f1 = ScalarField.from_function(d, tent)
        f3 = ScalarField(d, 3.0 * f1.values)
        r1 = coarea_check(EuclideanMetric(1), LEB, d, f1, levels=24)
        r3 = coarea_check(EuclideanMetric(1), LEB, d, f3, levels=24)
        assert_allclose(r3.lhs, 3 * r1.lhs, rtol=0.02)
        assert_allclose(r3.rhs, 3 * r1.rhs, rtol=1e-9)


class TestSuperlevels:
    def test_masks_nested(self):
        d = box([(-0.3, np.pi + 0.3)], [300])
        omega = interval_mask(d, 0.0, np.pi)
        rep = first_eigenvalue_domain(EuclideanMetric(1), LEB, omega)
        masks = superlevel_masks(rep.field, levels=None, fractions=(0.2, 0.5, 0.8))
        assert len(masks) == 3
        assert masks[2].is_subset(masks[1]) and masks[1].is_subset(masks[0])


class TestCheegerBuserRows:
    def test_exponential_line_closed_forms(self):
        # growth rate 1, all constants 1, eigenvalue limit 1/4: both bounds tie
        ball_mass = lambda r: np.exp(r) - np.exp(-r)
        rows = cheeger_buser_rows(
            lam_limit=0.2501,
            lam_error=0.002,
            lam_by_radius={10.0: 0.2747, 20.0: 0.2562},
            kappa=1.0,
            kappa_star=1.0,
            lambda_F=1.0,
            entropy_value=1.0,
            entropy_error=0.005,
            sch_lower=1.0,
            certified=True,
            ball_mass=ball_mass,
        )
        by_label = {r.label: r for r in rows}
        assert by_label["eigenvalue lower bound (reversibility form)"].passed
        assert by_label["eigenvalue lower bound (smoothness form)"].passed
        assert by_label["eigenvalue upper bound (growth form)"].passed
        finite = [r for r in rows if r.label.startswith("finite-radius")]
        assert len(finite) == 4  # radii {10, 20} give R in {5, 10}, two deltas each
        assert all(r.passed for r in finite)

    def test_uncertified_lower_bounds_informational(self):
        rows = cheeger_buser_rows(
            lam_limit=0.28,
            lam_error=0.01,
            lam_by_radius={},
            kappa=1.0,
            kappa_star=1.0,
            lambda_F=1.0,
            entropy_value=1.0,
            entropy_error=0.01,
            sch_lower=0.0,
            certified=False,
            ball_mass=lambda r: np.nan,
        )
        lower = [r for r in rows if "lower" in r.label]
        assert all(r.informational for r in lower)
        upper = [r for r in rows if r.label.startswith("eigenvalue upper")]
        assert not upper[0].informational
