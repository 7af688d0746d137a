"""Heat-kernel expansion pieces against closed forms and exact kernels."""

import math

import numpy as np
import pytest

from sabrgeo.geometry_core import DriftField, MetricField, euclidean_metric, metric_matrix
from sabrgeo.heat_kernel import (
    a1_coeff,
    connection_A,
    density,
    h2_density_grid,
    h2_distance_grid,
    par_factor,
    q_potential,
    synge,
    van_vleck_closed,
    van_vleck_numeric,
    _synge_fn,
    _van_vleck_of_dist,
)
from sabrgeo.poincare import (
    HPoint,
    distance,
    geodesic_between,
    geodesic_from_initial,
    hn_metric,
)

RNG = np.random.default_rng(77)


def random_hpoint():
    return HPoint(RNG.uniform(-3, 3), RNG.uniform(0.3, 4))


def constant_metric(g):
    g = np.asarray(g, dtype=float)
    return MetricField(
        dim=g.shape[0],
        eval=lambda x: g.copy(),
        deriv=None,
        domain=lambda x: True,
    )


class TestSyngeAndVanVleck:
    def test_synge_is_half_squared_distance(self):
        for _ in range(20):
            z1, z2 = random_hpoint(), random_hpoint()
            assert synge(z1, z2) == pytest.approx(
                0.5 * distance(z1, z2) ** 2, rel=1e-12
            )

    def test_van_vleck_closed_values(self):
        z1 = HPoint(0.0, 1.0)
        z2 = HPoint(0.0, math.e)  # distance exactly 1
        assert van_vleck_closed(z1, z2) == pytest.approx(
            1.0 / math.sinh(1.0), rel=1e-12
        )

    def test_van_vleck_series_branch_continuity(self):
        d = np.array([9.0e-7, 1.1e-6])  # straddles the series switch
        v = _van_vleck_of_dist(d)
        assert abs(v[0] - v[1]) < 1e-12
        assert np.all(v <= 1.0)

    def test_van_vleck_limits(self):
        assert _van_vleck_of_dist(np.array([0.0]))[0] == 1.0
        assert _van_vleck_of_dist(np.array([1e-12]))[0] == pytest.approx(
            1.0, abs=1e-15
        )
        v = _van_vleck_of_dist(np.array([0.1, 0.5, 1.5, 3.0]))
        assert np.all(np.diff(v) < 0.0)  # decreasing in distance

    def test_numeric_van_vleck_matches_closed(self):
        z1, z2 = HPoint(0.0, 1.0), HPoint(1.5, 2.0)
        got = van_vleck_numeric(hn_metric(2), z1.as_array(), z2.as_array())
        assert got == pytest.approx(van_vleck_closed(z1, z2), rel=1e-4)

    def test_numeric_van_vleck_euclidean_is_one(self):
        got = van_vleck_numeric(
            euclidean_metric(2), np.array([0.0, 0.0]), np.array([1.0, 2.0])
        )
        assert got == pytest.approx(1.0, rel=1e-6)

    def test_generic_synge_route_matches_closed(self):
        # same half-plane matrix, but stripped of its closed-form tags
        bare = MetricField(
            dim=2,
            eval=hn_metric(2).eval,
            deriv=hn_metric(2).deriv,
            domain=hn_metric(2).domain,
        )
        fn = _synge_fn(bare)
        z1, z2 = HPoint(0.0, 1.0), HPoint(1.0, 1.5)
        assert fn(z1.as_array(), z2.as_array()) == pytest.approx(
            synge(z1, z2), rel=1e-6
        )


class TestConnection:
    def test_euclidean_zero(self):
        a = connection_A(euclidean_metric(2), None)
        np.testing.assert_allclose(a.eval([0.3, 0.7]), 0.0, atol=1e-12)

    def test_half_plane_closed_form(self):
        a = connection_A(hn_metric(2), None)
        for _ in range(10):
            x = np.array([RNG.uniform(-3, 3), RNG.uniform(0.3, 4)])
            np.testing.assert_allclose(
                a.eval(x), [0.0, -0.5 / x[1]], atol=1e-9
            )

    def test_drift_enters_linearly(self):
        metric = hn_metric(2)
        b = DriftField(dim=2, eval=lambda x: np.array([x[1], -0.3]))
        a0 = connection_A(metric, None)
        ab = connection_A(metric, b)
        x = np.array([0.5, 1.7])
        extra = 0.5 * metric_matrix(metric, x) @ b.eval(x)
        np.testing.assert_allclose(ab.eval(x), a0.eval(x) + extra, atol=1e-9)


class TestParFactor:
    def test_vertical_closed_form(self):
        a = connection_A(hn_metric(2), None)
        for _ in range(5):
            p = random_hpoint()
            alpha = RNG.uniform(-1.5, 1.5)
            geo = geodesic_from_initial(p, [0.0, alpha * p.y])
            t = RNG.uniform(0.2, 1.5)
            assert par_factor(a, geo, t) == pytest.approx(
                math.exp(alpha * t / 2.0), rel=1e-10
            )

    def test_semicircle_closed_form(self):
        a = connection_A(hn_metric(2), None)
        for _ in range(5):
            z1, z2 = random_hpoint(), random_hpoint()
            if abs(z1.x - z2.x) < 1e-6:
                continue
            geo = geodesic_between(z1, z2, 1.0)
            t = RNG.uniform(0.2, 1.0)
            expect = math.sqrt(
                math.cosh(geo.t0) / math.cosh(geo.alpha * t + geo.t0)
            )
            assert par_factor(a, geo, t) == pytest.approx(expect, rel=1e-9)

    def test_endpoint_dependence_only(self):
        # the integrand is a gradient field: the factor is sqrt(y2/y1)
        a = connection_A(hn_metric(2), None)
        z1, z2 = HPoint(-1.0, 0.7), HPoint(2.0, 2.4)
        geo = geodesic_between(z1, z2, 1.3)
        assert par_factor(a, geo, 1.3) == pytest.approx(
            math.sqrt(z2.y / z1.y), rel=1e-9
        )


class TestQAndA1:
    def test_half_plane_q_constant(self):
        metric = hn_metric(2)
        q = q_potential(metric, connection_A(metric, None))
        for _ in range(8):
            x = np.array([RNG.uniform(-3, 3), RNG.uniform(0.3, 4)])
            assert q(x) == pytest.approx(0.25, abs=1e-8)

    def test_euclidean_q_zero(self):
        metric = euclidean_metric(2)
        q = q_potential(metric, connection_A(metric, None))
        assert q(np.array([0.4, -1.0])) == pytest.approx(0.0, abs=1e-12)

    def test_half_plane_a1_constant(self):
        metric = hn_metric(2)
        a = connection_A(metric, None)
        vals = [
            a1_coeff(metric, a, np.array([RNG.uniform(-2, 2), RNG.uniform(0.5, 3)]))
            for _ in range(6)
        ]
        np.testing.assert_allclose(vals, -1.0 / 12.0, atol=1e-8)

    def test_euclidean_a1_zero(self):
        metric = euclidean_metric(2)
        assert a1_coeff(
            metric, connection_A(metric, None), np.array([1.0, 2.0])
        ) == pytest.approx(0.0, abs=1e-12)


class TestDensity:
    def test_euclidean_exact_gaussian(self):
        for n in (1, 2, 3):
            metric = euclidean_metric(n)
            for t in (0.01, 0.1, 1.0):
                z1 = RNG.uniform(-1, 1, size=n)
                z2 = RNG.uniform(-1, 1, size=n)
                got = density(metric, None, t, z1, z2, order=1)
                exact = math.exp(
                    -float(np.sum((z1 - z2) ** 2)) / (4.0 * t)
                ) / (4.0 * math.pi * t) ** (n / 2.0)
                assert got.density == pytest.approx(exact, rel=1e-12)
                assert got.par == pytest.approx(1.0, abs=1e-12)
                assert got.van_vleck == 1.0
                assert got.a1 == pytest.approx(0.0, abs=1e-12)

    def test_euclidean_solves_heat_equation(self):
        metric = euclidean_metric(2)
        z1 = np.array([0.0, 0.0])
        z2 = np.array([0.4, -0.3])
        t, h = 0.3, 1e-4

        def p(tt, x, y):
            return density(metric, None, tt, z1, [x, y], order=0).density

        dt = (p(t + h, *z2) - p(t - h, *z2)) / (2 * h)
        lap = (
            p(t, z2[0] + h, z2[1])
            + p(t, z2[0] - h, z2[1])
            + p(t, z2[0], z2[1] + h)
            + p(t, z2[0], z2[1] - h)
            - 4 * p(t, *z2)
        ) / h**2
        assert dt == pytest.approx(lap, rel=1e-4)

    def test_order_identity(self):
        metric = hn_metric(2)
        z1, z2 = HPoint(0.0, 1.0), HPoint(0.7, 1.6)
        t = 0.05
        d0 = density(metric, None, t, z1.as_array(), z2.as_array(), order=0)
        d1 = density(metric, None, t, z1.as_array(), z2.as_array(), order=1)
        assert d1.density == pytest.approx(
            d0.density * (1.0 + d1.a1 * t), rel=1e-12
        )
        assert d0.a1 == 0.0

    def test_grid_route_matches_pointwise_route(self):
        # the vectorized closed form and the assembled operation are
        # two implementations of the same function
        z1 = HPoint(0.2, 0.9)
        t = 0.03
        xs = np.array([-0.5, 0.2, 1.0])
        ys = np.array([0.6, 1.1, 2.2])
        grid = h2_density_grid(t, z1, xs[:, None], ys[None, :], order=1)
        metric = hn_metric(2)
        for i, x2 in enumerate(xs):
            for j, y2 in enumerate(ys):
                ref = density(
                    metric, None, t, z1.as_array(), np.array([x2, y2]), order=1
                )
                assert grid[i, j] == pytest.approx(ref.density, rel=1e-7)

    def test_distance_grid_matches_scalar(self):
        z1 = HPoint(-0.3, 1.4)
        xs = np.linspace(-2, 2, 7)
        ys = np.linspace(0.4, 3.0, 5)
        d = h2_distance_grid(z1, xs[:, None], ys[None, :])
        for i, x2 in enumerate(xs):
            for j, y2 in enumerate(ys):
                assert d[i, j] == pytest.approx(
                    distance(z1, HPoint(x2, y2)), abs=1e-12
                )

    def test_half_plane_normalization(self):
        tau = 0.01
        z1 = HPoint(0.0, 1.0)
        xs = np.linspace(-0.9, 0.9, 241)
        ys = np.linspace(0.35, 2.9, 241)
        for order, tol in ((0, 2e-2), (1, 1e-2)):
            dens = h2_density_grid(tau, z1, xs[:, None], ys[None, :], order=order)
            mass = np.trapezoid(np.trapezoid(dens, ys, axis=1), xs)
            assert mass == pytest.approx(1.0, abs=tol)

    def test_constant_metric_generic_route(self):
        # no closed-form tags: exercises the BVP/finite-difference path;
        # the exact kernel is the anisotropic Gaussian with det weight
        g = np.array([[2.0, 0.5], [0.5, 1.0]])
        metric = constant_metric(g)
        t = 0.07
        z1 = np.array([0.1, -0.2])
        z2 = np.array([0.6, 0.3])
        got = density(metric, None, t, z1, z2, order=1)
        delta = z2 - z1
        exact = (
            math.sqrt(np.linalg.det(g))
            / (4.0 * math.pi * t)
            * math.exp(-float(delta @ g @ delta) / (4.0 * t))
        )
        assert got.density == pytest.approx(exact, rel=1e-4)

    def test_zero_drift_field_equals_none(self):
        metric = hn_metric(2)
        zero = DriftField(dim=2, eval=lambda x: np.zeros(2))
        z1, z2 = np.array([0.0, 1.0]), np.array([0.5, 1.5])
        a = density(metric, None, 0.02, z1, z2, order=1)
        b = density(metric, zero, 0.02, z1, z2, order=1)
        assert b.density == pytest.approx(a.density, rel=1e-9)

    def test_invalid_inputs(self):
        metric = hn_metric(2)
        with pytest.raises(ValueError):
            density(metric, None, 0.0, [0, 1], [1, 1])
        with pytest.raises(ValueError):
            density(metric, None, 0.1, [0, 1], [1, 1], order=2)
        with pytest.raises(ValueError):
            h2_density_grid(-0.1, HPoint(0, 1), [0.0], [1.0])
