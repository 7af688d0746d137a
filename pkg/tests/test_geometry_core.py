"""Core differential-geometry operations against closed-form oracles."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sabrgeo.errors import ConvergenceError, DegenerateMetricError, DomainError
from sabrgeo.geometry_core import (
    CurvePath,
    MetricField,
    christoffel_at,
    curvature_at,
    curve_length,
    euclidean_metric,
    geodesic_bvp,
    geodesic_ivp,
    metric_deriv,
    metric_matrix,
    parallel_transport,
    pullback_metric,
    serialize_path,
)
from sabrgeo.poincare import hn_metric

RNG = np.random.default_rng(20240811)


def polar_metric() -> MetricField:
    """Flat plane in polar coordinates (r, theta): g = diag(1, r^2).

    Closed-form Christoffel oracle: Gamma^r_tt = -r,
    Gamma^t_rt = Gamma^t_tr = 1/r, everything else zero.
    """
    return MetricField(
        dim=2,
        eval=lambda x: np.diag([1.0, x[0] ** 2]),
        deriv=None,
        domain=lambda x: x[0] > 0.0,
    )


def polar_gamma(x) -> np.ndarray:
    r = x[0]
    g = np.zeros((2, 2, 2))
    g[0, 1, 1] = -r
    g[1, 0, 1] = 1.0 / r
    g[1, 1, 0] = 1.0 / r
    return g


class TestChristoffel:
    def test_euclidean_all_zero(self):
        metric = euclidean_metric(3)
        for _ in range(5):
            x = RNG.uniform(-2, 2, size=3)
            np.testing.assert_allclose(
                christoffel_at(metric, x).gamma, 0.0, atol=1e-12
            )

    def test_polar_closed_form(self):
        metric = polar_metric()
        for _ in range(10):
            x = np.array([RNG.uniform(0.5, 3.0), RNG.uniform(-3.0, 3.0)])
            got = christoffel_at(metric, x).gamma
            np.testing.assert_allclose(got, polar_gamma(x), atol=1e-8)

    def test_half_plane_closed_form_vs_fd(self):
        metric = hn_metric(2)
        for _ in range(10):
            x = np.array([RNG.uniform(-3, 3), RNG.uniform(0.3, 4.0)])
            fd = christoffel_at(metric, x, use_analytic=False).gamma
            closed = metric.christoffel(x)
            np.testing.assert_allclose(fd, closed, atol=1e-8)

    def test_higher_dimensional_half_space(self):
        metric = hn_metric(4)
        x = np.array([0.3, -1.2, 0.7, 2.0])
        gamma = christoffel_at(metric, x).gamma
        y = x[-1]
        # spot-check the three defining patterns
        assert gamma[3, 3, 3] == pytest.approx(-1.0 / y, rel=1e-12)
        assert gamma[3, 0, 0] == pytest.approx(1.0 / y, rel=1e-12)
        assert gamma[0, 0, 3] == pytest.approx(-1.0 / y, rel=1e-12)
        assert gamma[0, 1, 3] == 0.0

    def test_fd_deriv_matches_analytic(self):
        metric = hn_metric(3)
        x = np.array([0.5, -0.2, 1.7])
        analytic = metric.deriv(x)
        fd_metric = MetricField(
            dim=3, eval=metric.eval, deriv=None, domain=metric.domain
        )
        np.testing.assert_allclose(
            metric_deriv(fd_metric, x), analytic, atol=1e-9
        )


class TestCurvature:
    def test_euclidean_flat(self):
        b = curvature_at(euclidean_metric(2), [0.3, -1.0])
        np.testing.assert_allclose(b.riemann, 0.0, atol=1e-10)
        np.testing.assert_allclose(b.ricci, 0.0, atol=1e-10)
        assert b.scalar == pytest.approx(0.0, abs=1e-10)

    def test_polar_plane_flat(self):
        # flat metric in curvilinear coordinates still has zero curvature
        b = curvature_at(polar_metric(), [1.3, 0.4])
        np.testing.assert_allclose(b.riemann, 0.0, atol=1e-6)
        assert b.scalar == pytest.approx(0.0, abs=1e-6)

    def test_half_plane_scalar_and_ricci(self):
        metric = hn_metric(2)
        for _ in range(5):
            x = np.array([RNG.uniform(-3, 3), RNG.uniform(0.4, 4.0)])
            b = curvature_at(metric, x)
            assert b.scalar == pytest.approx(-2.0, abs=1e-6)
            # Einstein metric in 2d: Ric = (scalar/2) g = -g
            np.testing.assert_allclose(
                b.ricci, -metric_matrix(metric, x), rtol=1e-6, atol=1e-8
            )

    def test_riemann_antisymmetry_last_pair(self):
        b = curvature_at(hn_metric(2), [0.7, 1.3])
        np.testing.assert_allclose(
            b.riemann, -np.swapaxes(b.riemann, 2, 3), atol=1e-8
        )


class TestGeodesics:
    def test_euclidean_straight_line(self):
        metric = euclidean_metric(2)
        p, v = np.array([1.0, -2.0]), np.array([0.5, 2.0])
        path = geodesic_ivp(metric, p, v, 2.0, step=1e-2)
        expect = p[None, :] + path.t[:, None] * v[None, :]
        np.testing.assert_allclose(path.points, expect, atol=1e-12)
        np.testing.assert_allclose(
            path.velocities, np.tile(v, (len(path), 1)), atol=1e-12
        )

    def test_speed_is_conserved(self):
        metric = hn_metric(2)
        p, v = np.array([0.0, 1.0]), np.array([1.0, 0.5])
        path = geodesic_ivp(metric, p, v, 1.5, step=1e-3)
        speeds = [
            math.sqrt(
                float(u @ metric_matrix(metric, x) @ u)
            )
            for x, u in zip(path.points[::100], path.velocities[::100])
        ]
        np.testing.assert_allclose(speeds, speeds[0], rtol=1e-9)

    def test_domain_exit_raises(self):
        metric = hn_metric(2)
        # shoot straight down: y(t) = e^{-t} never exits, so instead use
        # a metric with a hard wall
        wall = MetricField(
            dim=2,
            eval=lambda x: np.eye(2),
            deriv=lambda x: np.zeros((2, 2, 2)),
            domain=lambda x: x[1] > 0.0,
            christoffel=lambda x: np.zeros((2, 2, 2)),
        )
        with pytest.raises(DomainError):
            geodesic_ivp(wall, [0.0, 0.5], [0.0, -1.0], 1.0, step=1e-2)
        # half-plane flow stays interior for this data
        path = geodesic_ivp(metric, [0.0, 1.0], [0.0, -1.0], 1.0, step=1e-3)
        assert np.all(path.points[:, 1] > 0.0)

    def test_bvp_euclidean_recovers_segment(self):
        metric = euclidean_metric(2)
        path = geodesic_bvp(metric, [0.0, 0.0], [1.0, 1.0], t_end=1.0)
        np.testing.assert_allclose(path.velocities[0], [1.0, 1.0], atol=1e-8)
        np.testing.assert_allclose(path.points[-1], [1.0, 1.0], atol=1e-8)

    def test_bvp_coincident_endpoints_constant(self):
        path = geodesic_bvp(hn_metric(2), [0.5, 1.0], [0.5, 1.0])
        np.testing.assert_allclose(
            path.points, np.tile([0.5, 1.0], (len(path), 1)), atol=0.0
        )
        np.testing.assert_allclose(path.velocities, np.zeros_like(path.velocities), atol=0.0)

    def test_bvp_convergence_error_carries_residual(self):
        with pytest.raises(ConvergenceError) as err:
            geodesic_bvp(
                hn_metric(2), [0.0, 1.0], [3.0, 0.3], max_iter=1, n_steps=50
            )
        assert err.value.best_residual is not None
        assert err.value.best_residual > 0.0

    @settings(max_examples=25, deadline=None)
    @given(
        x2=st.floats(-3, 3),
        y2=st.floats(0.3, 4.0),
    )
    def test_bvp_hits_half_plane_targets(self, x2, y2):
        path = geodesic_bvp(hn_metric(2), [0.0, 1.0], [x2, y2])
        np.testing.assert_allclose(path.points[-1], [x2, y2], atol=1e-7)


class TestParallelTransport:
    def test_euclidean_transport_is_identity(self):
        metric = euclidean_metric(2)
        path = geodesic_ivp(metric, [0.0, 0.0], [1.0, 2.0], 1.0, step=1e-2)
        out = parallel_transport(metric, path, [3.0, -1.0])
        np.testing.assert_allclose(
            out, np.tile([3.0, -1.0], (len(path), 1)), atol=1e-12
        )

    def test_norm_preservation_half_plane(self):
        metric = hn_metric(2)
        path = geodesic_ivp(metric, [0.0, 1.0], [0.8, -0.3], 1.2, step=1e-3)
        v0 = np.array([0.4, 1.1])
        out = parallel_transport(metric, path, v0)
        norms = [
            float(v @ metric_matrix(metric, x) @ v)
            for x, v in zip(path.points[::200], out[::200])
        ]
        np.testing.assert_allclose(norms, norms[0], rtol=1e-8)

    def test_geodesic_transports_its_own_velocity(self):
        metric = hn_metric(2)
        path = geodesic_ivp(metric, [0.5, 2.0], [1.0, 0.2], 1.0, step=1e-3)
        out = parallel_transport(metric, path, path.velocities[0])
        np.testing.assert_allclose(out, path.velocities, atol=1e-7)


class TestCurveLength:
    def test_euclidean_segment(self):
        metric = euclidean_metric(2)
        ts = np.linspace(0.0, 1.0, 101)
        pts = np.outer(ts, [3.0, 4.0])
        vels = np.tile([3.0, 4.0], (101, 1))
        path = CurvePath(ts, pts, vels, 2)
        assert curve_length(metric, path) == pytest.approx(5.0, abs=1e-12)

    def test_vertical_half_plane_log_ratio(self):
        metric = hn_metric(2)
        ts = np.linspace(0.0, 1.0, 201)
        y = np.exp(ts * math.log(3.0))
        pts = np.column_stack([np.zeros_like(ts), y])
        vels = np.column_stack([np.zeros_like(ts), math.log(3.0) * y])
        path = CurvePath(ts, pts, vels, 2)
        assert curve_length(metric, path) == pytest.approx(
            math.log(3.0), abs=1e-10
        )

    def test_reparametrization_invariance(self):
        # same trace sampled uniformly and quadratically in parameter
        metric = euclidean_metric(2)

        def make(ts):
            s = ts**2
            pts = np.column_stack([s, s])
            vels = np.column_stack([2 * ts, 2 * ts])
            return CurvePath(ts, pts, vels, 2)

        fine = make(np.linspace(0.0, 1.0, 401))
        coarse = make(np.sqrt(np.linspace(0.0, 1.0, 401)))
        assert curve_length(metric, fine) == pytest.approx(
            math.sqrt(2.0), abs=1e-6
        )
        assert curve_length(metric, coarse) == pytest.approx(
            math.sqrt(2.0), abs=1e-6
        )

    def test_odd_sample_count(self):
        metric = euclidean_metric(1)
        ts = np.linspace(0.0, 1.0, 4)  # three intervals: Simpson + tail
        path = CurvePath(ts, ts[:, None], np.ones((4, 1)), 1)
        assert curve_length(metric, path) == pytest.approx(1.0, abs=1e-12)


class TestPullback:
    def test_linear_map_of_euclidean(self):
        a = np.array([[2.0, 1.0], [0.0, 1.0]])
        pulled = pullback_metric(
            euclidean_metric(2), lambda x: a @ x, lambda x: a
        )
        np.testing.assert_allclose(
            metric_matrix(pulled, [0.3, 0.7]), a.T @ a, atol=1e-14
        )

    def test_half_plane_horizontal_translation_isometry(self):
        metric = hn_metric(2)
        shift = np.array([5.0, 0.0])
        pulled = pullback_metric(
            metric, lambda x: x + shift, lambda x: np.eye(2)
        )
        x = np.array([-1.0, 0.8])
        np.testing.assert_allclose(
            metric_matrix(pulled, x), metric_matrix(metric, x), atol=1e-14
        )

    def test_singular_jacobian_raises(self):
        pulled = pullback_metric(
            euclidean_metric(2),
            lambda x: np.array([x[0], x[0]]),
            lambda x: np.array([[1.0, 0.0], [1.0, 0.0]]),
        )
        with pytest.raises(DegenerateMetricError):
            metric_matrix(pulled, [1.0, 2.0])


class TestSerialization:
    def test_round_trip_precision(self):
        metric = euclidean_metric(2)
        path = geodesic_ivp(metric, [0.1, 0.2], [1.0 / 3.0, 0.7], 1.0, step=0.25)
        lines = serialize_path(path)
        assert lines[0] == "t,x_1,x_2,v_1,v_2"
        parsed = np.array(
            [[float(v) for v in line.split(",")] for line in lines[1:]]
        )
        np.testing.assert_array_equal(parsed[:, 0], path.t)
        np.testing.assert_array_equal(parsed[:, 1:3], path.points)
        np.testing.assert_array_equal(parsed[:, 3:5], path.velocities)


class TestMetricChecks:
    def test_non_spd_metric_rejected(self):
        bad = MetricField(
            dim=2,
            eval=lambda x: np.array([[1.0, 2.0], [2.0, 1.0]]),
            deriv=None,
            domain=lambda x: True,
        )
        with pytest.raises(DegenerateMetricError):
            christoffel_at(bad, [0.0, 0.0])

    def test_domain_violation_rejected(self):
        with pytest.raises(DomainError):
            metric_matrix(hn_metric(2), [0.0, -1.0])
