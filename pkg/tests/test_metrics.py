import numpy as np
import pytest
from numpy.testing import assert_allclose

from finslerlab.errors import NotPositiveDefinite, ZeroDirection
from finslerlab.metrics import (
    EuclideanMetric,
    GenericMetric,
    RandersMetric,
    WeightedRiemannianMetric,
    dual_fundamental,
    fundamental_tensor,
    make_metric,
    reversibility_constant,
    uniformity_constants,
)

from conftest import random_directions, random_points


def fd_fundamental(metric, x, y, h=3e-4):
    """Independent half-Hessian of F^2 by plain central differences."""
    n = metric.n
    g = np.empty((n, n))
    f2 = lambda v: metric.value(x, v) ** 2
    hh = h * np.linalg.norm(y)
    for i in range(n):
        ei = np.zeros(n); ei[i] = hh
        for j in range(n):
            ej = np.zeros(n); ej[j] = hh
            g[i, j] = (f2(y + ei + ej) - f2(y + ei - ej) - f2(y - ei + ej) + f2(y - ei - ej)) / (8 * hh * hh)
    return g


def dual_by_angle_scan(metric, x, xi, n_grid=20000):
    thetas = np.linspace(0, 2 * np.pi, n_grid, endpoint=False)
    dirs = np.stack([np.cos(thetas), np.sin(thetas)], axis=-1)
    return float(np.max(dirs @ xi / metric.value(np.broadcast_to(x, dirs.shape), dirs)))


class TestFundamentalTensor:
    def test_euclidean_identity(self, euclid2, rng):
        for y in random_directions(rng, 5, 2):
            ft = fundamental_tensor(euclid2, np.zeros(2), y)
            assert_allclose(ft.g, np.eye(2), atol=1e-12)

    def test_randers_closed_form_values(self, randers05):
        ft = fundamental_tensor(randers05, np.zeros(2), np.array([1.0, 0.0]))
        assert_allclose(ft.g[0, 0], 2.25, rtol=1e-10)
        assert_allclose(ft.g[1, 1], 1.5, rtol=1e-10)
        assert_allclose(ft.g[0, 1], 0.0, atol=1e-12)

    def test_randers_matches_difference_oracle(self, randers05, rng):
        for y in random_directions(rng, 20, 2):
            g = fundamental_tensor(randers05, np.zeros(2), y).g
            assert_allclose(g, fd_fundamental(randers05, np.zeros(2), y), rtol=1e-5, atol=1e-7)

    def test_quartic_norm_positive_definite_bulk(self, quartic_norm, rng):
        dirs = random_directions(rng, 1000, 2) * rng.uniform(0.5, 3.0, (1000, 1))
        g = quartic_norm.fundamental(np.zeros((1000, 2)), dirs)
        eig = np.linalg.eigvalsh(g)
        assert np.all(eig > 1e-8)

    def test_unit_vector_norm_identity(self, randers05, quartic_norm, rng):
        # g_y(y, y) = F(x, y)^2
        for metric in (randers05, quartic_norm):
            ys = random_directions(rng, 200, 2) * rng.uniform(0.2, 5.0, (200, 1))
            xs = np.zeros((200, 2))
            g = metric.fundamental(xs, ys)
            quad = np.einsum("ki,kij,kj->k", ys, g, ys)
            assert_allclose(quad, metric.value(xs, ys) ** 2, rtol=1e-7)

    def test_inverse_consistency(self, randers05):
        ft = fundamental_tensor(randers05, np.zeros(2), np.array([0.3, -1.2]))
        assert_allclose(ft.g @ ft.g_inv, np.eye(2), atol=1e-10)

    def test_zero_direction_rejected(self, euclid2):
        with pytest.raises(ZeroDirection):
            fundamental_tensor(euclid2, np.zeros(2), np.zeros(2))

    def test_invalid_randers_drift_rejected(self):
        with pytest.raises(NotPositiveDefinite):
            RandersMetric([1.1, 0.0])


class TestHomogeneity:
    @pytest.mark.parametrize("lam", [0.5, 2.0, 10.0])
    def test_positive_one_homogeneity(self, randers05, quartic_norm, half_plane, rng, lam):
        for metric in (randers05, quartic_norm, half_plane):
            xs = random_points(rng, 200, 2, 0.5, 2.0)
            ys = random_directions(rng, 200, 2)
            f1 = metric.value(xs, lam * ys)
            f2 = lam * metric.value(xs, ys)
            assert np.all(np.abs(f1 - f2) < 1e-10 * np.abs(f2))

    def test_euler_two_homogeneity(self, randers05, quartic_norm, rng):
        # y . d(F^2)/dy = 2 F^2
        for metric in (randers05, quartic_norm):
            ys = random_directions(rng, 300, 2) * rng.uniform(0.3, 4.0, (300, 1))
            xs = np.zeros((300, 2))
            lhs = np.einsum("ki,ki->k", ys, metric.fiber_gradient(xs, ys))
            assert_allclose(lhs, 2 * metric.value(xs, ys) ** 2, rtol=1e-7)


class TestDualNorm:
    def test_euclidean_self_dual(self, euclid2):
        assert_allclose(euclid2.dual_value(np.zeros(2), np.array([3.0, 4.0])), 5.0)

    def test_randers_closed_form_against_scan(self, randers05):
        x = np.zeros(2)
        assert_allclose(randers05.dual_value(x, np.array([1.0, 0.0])), 2.0 / 3.0, rtol=1e-9)
        assert_allclose(randers05.dual_value(x, np.array([-1.0, 0.0])), 2.0, rtol=1e-9)
        for xi in ([0.4, -1.0], [0.0, 2.0], [-3.0, 0.7]):
            xi = np.array(xi)
            assert_allclose(randers05.dual_value(x, xi), dual_by_angle_scan(randers05, x, xi), rtol=1e-6)

    def test_generic_maximization_against_scan(self, quartic_norm, rng):
        x = np.zeros(2)
        for xi in random_directions(rng, 10, 2) * 2.0:
            assert_allclose(quartic_norm.dual_value(x, xi), dual_by_angle_scan(quartic_norm, x, xi), rtol=1e-6)

    def test_zero_covector(self, randers05, quartic_norm):
        assert randers05.dual_value(np.zeros(2), np.zeros(2)) == 0.0
        assert quartic_norm.dual_value(np.zeros(2), np.zeros(2)) == 0.0

    def test_norm_preserved_through_legendre(self, randers05, quartic_norm, half_plane, rng):
        # F(x, y) = F*(x, L(y)) on random samples
        for metric, n_samples, tol in ((randers05, 1000, 1e-6), (quartic_norm, 200, 1e-6), (half_plane, 200, 1e-6)):
            xs = random_points(rng, n_samples, 2, 0.5, 2.0)
            ys = random_directions(rng, n_samples, 2) * rng.uniform(0.3, 3.0, (n_samples, 1))
            xi = metric.legendre(xs, ys)
            fstar = np.array([metric.dual_value(x, c) for x, c in zip(xs, xi)])
            assert_allclose(fstar, metric.value(xs, ys), rtol=tol)


class TestLegendre:
    def test_euclidean_identity(self, euclid2, rng):
        y = rng.standard_normal(2)
        assert_allclose(euclid2.legendre(np.zeros(2), y), y)
        assert_allclose(euclid2.legendre_inverse(np.zeros(2), y), y)

    def test_zero_maps_to_zero(self, randers05):
        assert_allclose(randers05.legendre(np.zeros(2), np.zeros(2)), np.zeros(2))
        assert_allclose(randers05.legendre_inverse(np.zeros(2), np.zeros(2)), np.zeros(2))

    def test_roundtrip_both_ways(self, randers05, quartic_norm, half_plane, rng):
        for metric, count in ((randers05, 1000), (quartic_norm, 150), (half_plane, 150)):
            xs = random_points(rng, count, 2, 0.5, 2.0)
            ys = random_directions(rng, count, 2) * rng.uniform(0.2, 4.0, (count, 1))
            back = metric.legendre_inverse(xs, metric.legendre(xs, ys))
            assert_allclose(back, ys, rtol=1e-8, atol=1e-10)
            xi = metric.legendre(xs, ys)  # covectors in the Legendre image
            fwd = metric.legendre(xs, metric.legendre_inverse(xs, xi))
            assert_allclose(fwd, xi, rtol=1e-8, atol=1e-10)

    def test_riemannian_inverse_is_linear_solve(self, half_plane, rng):
        xs = random_points(rng, 50, 2, 0.5, 2.0)
        xis = rng.standard_normal((50, 2))
        G = half_plane.matrix(xs)
        expected = np.linalg.solve(G, xis[..., None])[..., 0]
        assert_allclose(half_plane.legendre_inverse(xs, xis), expected, rtol=1e-12)


class TestReversibility:
    def test_reversible_families_give_one(self, euclid2, half_plane, quartic_norm, rng):
        pts = random_points(rng, 10, 2, 0.5, 2.0)
        for metric in (euclid2, half_plane, quartic_norm):
            assert_allclose(reversibility_constant(metric, pts), 1.0, rtol=1e-9)

    def test_randers_closed_form(self, randers05):
        # (1 + |b|) / (1 - |b|) at b = 0.5
        lam = reversibility_constant(randers05, np.zeros((1, 2)))
        assert_allclose(lam, 3.0, rtol=1e-6)

    def test_reverse_metric_preserves_constant(self, randers05):
        pts = np.zeros((1, 2))
        assert_allclose(
            reversibility_constant(randers05.reverse(), pts),
            reversibility_constant(randers05, pts),
            rtol=1e-9,
        )


class TestUniformity:
    def test_euclidean_trivial(self, euclid2):
        uc = uniformity_constants(euclid2, np.zeros((1, 2)))
        assert_allclose(uc.kappa, 1.0, rtol=1e-12)
        assert_allclose(uc.kappa_star, 1.0, rtol=1e-12)
        assert_allclose(uc.lambda_F, 1.0, rtol=1e-12)

    def test_randers_bounds_chain(self, randers05):
        uc = uniformity_constants(randers05, np.zeros((1, 2)))
        assert uc.kappa_star <= 1.0 + 1e-12 <= uc.kappa + 1e-12
        assert 1.0 <= uc.lambda_F <= min(np.sqrt(uc.kappa), np.sqrt(1 / uc.kappa_star)) + 1e-9
        # extremal axis pairs are sampled exactly: kappa = 9, kappa* = 1/9
        assert_allclose(uc.kappa, 9.0, rtol=1e-6)
        assert_allclose(uc.kappa_star, 1.0 / 9.0, rtol=1e-6)

    def test_quartic_chain(self, quartic_norm):
        uc = uniformity_constants(quartic_norm, np.zeros((1, 2)))
        assert uc.lambda_F <= min(np.sqrt(uc.kappa), np.sqrt(1 / uc.kappa_star)) + 1e-9
        assert uc.witnesses["kappa"] is not None

    def test_dual_ellipticity_bounds(self, randers05, rng):
        # with dual constants 1/kappa* and 1/kappa:
        #   F*^2(eta)/kappa <= g*(xi) eta.eta <= F*^2(eta)/kappa*
        uc = uniformity_constants(randers05, np.zeros((1, 2)))
        x = np.zeros(2)
        for _ in range(200):
            xi = rng.standard_normal(2)
            eta = rng.standard_normal(2)
            gstar = dual_fundamental(randers05, x, xi)
            quad = eta @ gstar @ eta
            fstar2 = randers05.dual_value(x, eta) ** 2
            assert quad <= fstar2 / uc.kappa_star * (1 + 1e-7)
            assert quad >= fstar2 / uc.kappa * (1 - 1e-7)


class TestReverseMetric:
    def test_euclidean_fixed(self, euclid2):
        assert euclid2.reverse() is euclid2

    def test_randers_negates_drift(self, randers05, rng):
        rev = randers05.reverse()
        explicit = RandersMetric([-0.5, 0.0])
        ys = random_directions(rng, 100, 2) * rng.uniform(0.2, 3.0, (100, 1))
        assert_allclose(rev.value(np.zeros((100, 2)), ys), explicit.value(np.zeros((100, 2)), ys), rtol=1e-12)

    def test_involution(self, quartic_norm, rng):
        rev2 = quartic_norm.reverse().reverse()
        ys = random_directions(rng, 50, 2)
        assert_allclose(rev2.value(np.zeros((50, 2)), ys), quartic_norm.value(np.zeros((50, 2)), ys), rtol=1e-12)

    def test_reversed_value_matches_negated_argument(self, quartic_norm, rng):
        rev = quartic_norm.reverse()
        ys = random_directions(rng, 50, 2)
        assert_allclose(rev.value(np.zeros((50, 2)), ys), quartic_norm.value(np.zeros((50, 2)), -ys), rtol=1e-12)


class TestFactory:
    def test_families(self):
        assert make_metric(2, "euclidean").family == "euclidean"
        assert make_metric(2, "randers", b=[0.3, 0.0]).family == "randers"
        m = make_metric(2, "weighted-riemannian", matrix=[["1", "0"], ["0", "x1^2 + 1"]])
        assert m.family == "weighted-riemannian"
        g = make_metric(2, "generic", expression="sqrt(y1^2 + 2*y2^2)")
        assert g.family == "minkowski-norm"  # x-independent expression

    def test_unknown_family(self):
        with pytest.raises(ValueError):
            make_metric(2, "funky")
