import itertools

import numpy as np
import pytest
from numpy.testing import assert_allclose

from finslerlab.errors import InfeasibleMarginals, SingularPart, SupportTooLarge
from finslerlab.grid import BorelMask, GridDomain, MeasureDensity
from finslerlab.metrics import EuclideanMetric, RandersMetric
from finslerlab.transport import (
    DiscreteMeasure,
    cd_convexity_check,
    displacement_interpolation,
    relative_entropy,
    wasserstein_p,
)

LEB = MeasureDensity.lebesgue()


def box(bounds, res, **kw):
    return GridDomain(bounds=tuple(bounds), resolution=tuple(res), **kw)


def interval_mask(domain, a, b):
    return BorelMask.from_predicate(domain, lambda c: (c[..., 0] >= a) & (c[..., 0] <= b))


def brute_force_two_point(cost, a, b):
    """Exact optimum over couplings of two two-point measures (1 dof)."""
    lo = max(0.0, a[0] - b[1])
    hi = min(a[0], b[0])
    best = np.inf
    for x in np.linspace(lo, hi, 20001):
        plan = np.array([[x, a[0] - x], [b[0] - x, a[1] - (a[0] - x)]])
        best = min(best, float(np.sum(plan * cost)))
    return best


class TestWasserstein:
    def test_point_masses_give_distance(self):
        d = box([(-2.0, 2.0), (-2.0, 2.0)], [80, 80])
        metric = EuclideanMetric(2)
        mu0 = DiscreteMeasure.from_atoms(d, [[-1.0, 0.0]], [1.0])
        mu1 = DiscreteMeasure.from_atoms(d, [[1.0, 0.5]], [1.0])
        for p in (1, 2):
            w, plan = wasserstein_p(metric, d, mu0, mu1, p)
            assert_allclose(w, np.hypot(2.0, 0.5), rtol=0.02)
            assert_allclose(plan.matrix, [[1.0]])

    def test_randers_line_asymmetric(self):
        d = box([(-2.0, 2.0)], [400])
        metric = RandersMetric(np.array([0.5]))
        d0 = DiscreteMeasure.from_atoms(d, [[0.0]], [1.0])
        d1 = DiscreteMeasure.from_atoms(d, [[1.0]], [1.0])
        w01, _ = wasserstein_p(metric, d, d0, d1, 1)
        w10, _ = wasserstein_p(metric, d, d1, d0, 1)
        assert_allclose(w01, 1.5, rtol=0.02)
        assert_allclose(w10, 0.5, rtol=0.02)

    def test_two_point_brute_force_oracle(self):
        d = box([(-2.0, 2.0), (-2.0, 2.0)], [60, 60])
        metric = EuclideanMetric(2)
        pts0 = [[-1.0, -1.0], [-1.0, 1.0]]
        pts1 = [[1.0, 0.0], [1.5, -0.5]]
        mu0 = DiscreteMeasure.from_atoms(d, pts0, [0.5, 0.5])
        mu1 = DiscreteMeasure.from_atoms(d, pts1, [0.5, 0.5])
        w, plan = wasserstein_p(metric, d, mu0, mu1, 2)
        cents = d.flat_centers
        cost = np.array(
            [[np.linalg.norm(cents[mu0.cells[i]] - cents[mu1.cells[j]]) ** 2 for j in range(2)] for i in range(2)]
        )
        oracle = brute_force_two_point(cost, mu0.weights, mu1.weights)
        assert_allclose(w**2, oracle, rtol=0.05)

    def test_monotone_in_p(self, rng):
        d = box([(-4.0, 4.0)], [500])
        metric = EuclideanMetric(1)
        for _ in range(5):
            a = interval_mask(d, *sorted(rng.uniform(-3, 3, 2)))
            b = interval_mask(d, *sorted(rng.uniform(-3, 3, 2)))
            if a.is_empty or b.is_empty:
                continue
            mu0 = DiscreteMeasure.uniform_on_mask(a, LEB)
            mu1 = DiscreteMeasure.uniform_on_mask(b, LEB)
            if len(mu0.cells) > 400 or len(mu1.cells) > 400:
                continue
            w1, _ = wasserstein_p(metric, d, mu0, mu1, 1)
            w2, _ = wasserstein_p(metric, d, mu0, mu1, 2)
            assert w1 <= w2 + 1e-9

    def test_directed_triangle_inequality(self):
        d = box([(-2.0, 2.0)], [300])
        metric = RandersMetric(np.array([0.4]))
        mus = [
            DiscreteMeasure.uniform_on_mask(interval_mask(d, a, b), LEB)
            for a, b in [(-1.5, -0.8), (-0.3, 0.4), (0.9, 1.5)]
        ]
        w = {}
        for i, j in itertools.permutations(range(3), 2):
            w[i, j], _ = wasserstein_p(metric, d, mus[i], mus[j], 1)
        for i, j, k in itertools.permutations(range(3), 3):
            assert w[i, k] <= w[i, j] + w[j, k] + 1e-8

    def test_marginals_exact(self, rng):
        d = box([(-2.0, 2.0), (-2.0, 2.0)], [40, 40])
        metric = EuclideanMetric(2)
        pts0 = rng.uniform(-1.5, 1.5, (8, 2))
        pts1 = rng.uniform(-1.5, 1.5, (11, 2))
        w0 = rng.random(8)
        w1 = rng.random(11)
        mu0 = DiscreteMeasure.from_atoms(d, pts0, w0 / w0.sum())
        mu1 = DiscreteMeasure.from_atoms(d, pts1, w1 / w1.sum())
        _, plan = wasserstein_p(metric, d, mu0, mu1, 2)
        row, col = plan.marginal_errors()
        assert max(row, col) < 1e-10

    def test_support_cap(self):
        d = box([(-2.0, 2.0)], [900])
        mask = interval_mask(d, -1.9, 1.9)
        mu = DiscreteMeasure.uniform_on_mask(mask, LEB)
        with pytest.raises(SupportTooLarge):
            wasserstein_p(EuclideanMetric(1), d, mu, mu, 1)

    def test_unnormalized_rejected(self):
        d = box([(-2.0, 2.0)], [100])
        mu = DiscreteMeasure.from_atoms(d, [[0.0], [1.0]], [0.7, 0.7])
        with pytest.raises(InfeasibleMarginals):
            wasserstein_p(EuclideanMetric(1), d, mu, mu, 1)


class TestRelativeEntropy:
    def test_uniform_on_mask_value(self):
        d = box([(-4.0, 4.0)], [800])
        mask = interval_mask(d, -1.0, 2.0)
        mu = DiscreteMeasure.uniform_on_mask(mask, LEB)
        # rho = 1/V: entropy = -log V
        assert_allclose(relative_entropy(mu, LEB), -np.log(mask.mass(LEB)), rtol=1e-9)

    def test_exponential_reference_consistency_across_resolutions(self):
        meas = MeasureDensity.from_expression("exp(x1)", 1)
        values = []
        for res in (400, 1200):
            d = box([(-4.0, 4.0)], [res])
            mask = interval_mask(d, -0.5, 1.5)
            mu = DiscreteMeasure.uniform_on_mask(mask, meas)
            values.append(relative_entropy(mu, meas) + np.log(mask.mass(meas)))
        assert abs(values[0]) < 1e-9 and abs(values[1]) < 1e-9

    def test_product_additivity(self):
        d2 = box([(0.0, 1.0), (0.0, 1.0)], [50, 50])
        d1 = box([(0.0, 1.0)], [50])
        m2 = BorelMask.from_predicate(d2, lambda c: (c[..., 0] <= 0.5) & (c[..., 1] <= 0.25))
        m1a = BorelMask.from_predicate(d1, lambda c: c[..., 0] <= 0.5)
        m1b = BorelMask.from_predicate(d1, lambda c: c[..., 0] <= 0.25)
        mu2 = DiscreteMeasure.uniform_on_mask(m2, LEB)
        mua = DiscreteMeasure.uniform_on_mask(m1a, LEB)
        mub = DiscreteMeasure.uniform_on_mask(m1b, LEB)
        assert_allclose(
            relative_entropy(mu2, LEB),
            relative_entropy(mua, LEB) + relative_entropy(mub, LEB),
            rtol=1e-9,
        )

    def test_zero_reference_rejected(self):
        d = box([(-1.0, 1.0)], [100])
        mu = DiscreteMeasure.from_atoms(d, [[0.0]], [1.0])

        class Broken(MeasureDensity):
            def cell_masses(self, domain):
                out = np.full(domain.shape, 1.0) * domain.cell_volume
                out[50] = 0.0
                return out

        with pytest.raises(SingularPart):
            relative_entropy(mu, Broken(lambda x: np.ones(x.shape[:-1])))


class TestDisplacement:
    def test_endpoints_reproduced(self):
        d = box([(-3.0, 3.0)], [600])
        metric = EuclideanMetric(1)
        mu0 = DiscreteMeasure.uniform_on_mask(interval_mask(d, -2.0, -1.0), LEB)
        mu1 = DiscreteMeasure.uniform_on_mask(interval_mask(d, 0.5, 2.0), LEB)
        _, plan = wasserstein_p(metric, d, mu0, mu1, 2)
        ends = displacement_interpolation(metric, d, plan, [0.0, 1.0])
        h = d.spacing[0]
        w0, _ = wasserstein_p(metric, d, ends[0], mu0, 1)
        w1, _ = wasserstein_p(metric, d, ends[1], mu1, 1)
        assert w0 <= h + 1e-12
        assert w1 <= h + 1e-12

    def test_mean_position_interpolates_linearly(self):
        d = box([(-3.0, 3.0), (-3.0, 3.0)], [90, 90])
        metric = EuclideanMetric(2)
        mu0 = DiscreteMeasure.from_atoms(d, [[-2.0, -1.0], [-2.0, 1.0]], [0.5, 0.5])
        mu1 = DiscreteMeasure.from_atoms(d, [[2.0, 0.0], [1.0, 2.0]], [0.5, 0.5])
        _, plan = wasserstein_p(metric, d, mu0, mu1, 2)
        ts = [0.25, 0.5, 0.75]
        mus = displacement_interpolation(metric, d, plan, ts)
        mean0 = (mu0.positions() * mu0.weights[:, None]).sum(axis=0)
        mean1 = (mu1.positions() * mu1.weights[:, None]).sum(axis=0)
        for t, mu in zip(ts, mus):
            mean_t = (mu.positions() * mu.weights[:, None]).sum(axis=0)
            assert np.linalg.norm(mean_t - ((1 - t) * mean0 + t * mean1)) < 0.12

    def test_wasserstein_geodesic_property(self):
        d = box([(-3.0, 3.0)], [600])
        metric = EuclideanMetric(1)
        mu0 = DiscreteMeasure.uniform_on_mask(interval_mask(d, -2.0, -1.2), LEB)
        mu1 = DiscreteMeasure.uniform_on_mask(interval_mask(d, 1.0, 2.2), LEB)
        w, plan = wasserstein_p(metric, d, mu0, mu1, 2)
        ts = [0.25, 0.75]
        mu_t = displacement_interpolation(metric, d, plan, ts)
        w_ts, _ = wasserstein_p(metric, d, mu_t[0], mu_t[1], 2)
        assert_allclose(w_ts, (ts[1] - ts[0]) * w, rtol=0.05)


class TestConvexity:
    def test_flat_disjoint_intervals(self):
        d = box([(-4.0, 4.0)], [800])
        metric = EuclideanMetric(1)
        mu0 = DiscreteMeasure.uniform_on_mask(interval_mask(d, -3.0, -1.0), LEB)
        mu1 = DiscreteMeasure.uniform_on_mask(interval_mask(d, 1.0, 2.0), LEB)
        rows = cd_convexity_check(metric, LEB, d, mu0, mu1, certified=True)
        assert all(r.passed for r in rows)

    def test_identical_measures_equality(self):
        d = box([(-4.0, 4.0)], [500])
        metric = EuclideanMetric(1)
        mu = DiscreteMeasure.uniform_on_mask(interval_mask(d, -1.0, 1.0), LEB)
        rows = cd_convexity_check(metric, LEB, d, mu, mu, certified=True)
        for r in rows:
            assert r.passed
            assert abs(r.lhs - r.rhs) < 1e-9

    def test_exponential_weight_random_pairs(self, rng):
        meas = MeasureDensity.from_expression("exp(x1)", 1)
        d = box([(-5.0, 5.0)], [700])
        metric = EuclideanMetric(1)
        for _ in range(6):
            a = rng.uniform(-4, 1.5)
            b = a + rng.uniform(0.4, 2.0)
            c = rng.uniform(-1.5, 2.5)
            e = c + rng.uniform(0.4, 2.0)
            mu0 = DiscreteMeasure.uniform_on_mask(interval_mask(d, a, b), meas)
            mu1 = DiscreteMeasure.uniform_on_mask(interval_mask(d, c, e), meas)
            rows = cd_convexity_check(metric, meas, d, mu0, mu1, certified=True)
            assert all(r.passed for r in rows)
