"""First-order short-time heat-kernel expansion on a Riemannian structure.

For the operator ½Δ_g + drift the transition density has the small-time
form

    p(t, z1, z2) = sqrt(det g(z2) * Van / (4 pi t)^n)
                   * Par * exp(-Syn / (2 t)) * (a0 + a1 t + ...)

with Syn the squared-distance function, Van the Van Vleck determinant,
Par a line-integral factor of the first-order connection A, a0 = 1 and
a1 = R/6 + Q.  This module computes every ingredient, with half-plane
closed forms where they exist and generic finite-difference and
boundary-value routes everywhere else; the two families of routes
cross-validate each other in the test suite.

Convention used throughout for the density weight in A and Q: the
weight is the per-coordinate geometric mean s(x) = det(g(x))^(1/(2n)).
With this choice a constant metric yields A = 0 and Q = 0, and the
half-plane with zero drift yields A = (0, -1/(2y)), Q = 1/4 and the
parallel factors exp(alpha t / 2) (vertical) and
sqrt(cosh u0 / cosh(alpha t + u0)) (semicircle), which is the set of
values the expansion is pinned to.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from . import poincare
from .geometry_core import (
    CurvePath,
    DriftField,
    MetricField,
    _FD_SCALE,
    _hermite_eval,
    _spd_inverse,
    curvature_at,
    geodesic_bvp,
    metric_deriv,
    metric_matrix,
)
from .poincare import HPoint

# Curvature/potential combination entering the first-order term on the
# half-plane: scalar curvature -2 gives R/6 + Q = -1/3 + 1/4.
_H2_A1 = -1.0 / 12.0


@dataclass(frozen=True)
class ConnectionA:
    """First-order connection coefficients A_1..A_n as a point field."""

    dim: int
    eval: Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class HeatKernelTerms:
    """All ingredients of one density evaluation.

    a1 is populated only for order-1 queries; order-0 results carry 0.
    """

    t: float
    z1: np.ndarray
    z2: np.ndarray
    dist: float
    synge: float
    van_vleck: float
    par: float
    a0: float
    a1: float
    density: float


def synge(z1: HPoint, z2: HPoint) -> float:
    """Half squared hyperbolic distance on the half-plane."""
    d = poincare.distance(z1, z2)
    return 0.5 * d * d


def _van_vleck_of_dist(d):
    """d / sinh d, evaluated stably for both tiny and large d."""
    d = np.asarray(d, dtype=float)
    small = d < 1e-6
    # capping keeps d = inf out of an inf * 0 product; the capped value
    # already underflows to 0
    ds = np.where(small, 1.0, np.minimum(d, 1e6))
    # 2 d e^{-d} / (1 - e^{-2d}) never overflows.
    big = 2.0 * ds * np.exp(-ds) / (-np.expm1(-2.0 * ds))
    d2 = np.where(small, d * d, 0.0)
    series = 1.0 - d2 / 6.0 + 7.0 * d2 * d2 / 360.0
    out = np.where(small, series, big)
    if out.ndim == 0:
        return float(out)
    return out


def van_vleck_closed(z1: HPoint, z2: HPoint) -> float:
    """Van Vleck determinant on the half-plane: d / sinh d."""
    return float(_van_vleck_of_dist(poincare.distance(z1, z2)))


def _as_hpoint(z) -> HPoint:
    if isinstance(z, HPoint):
        return z
    z = np.asarray(z, dtype=float).reshape(-1)
    return HPoint(x=float(z[0]), y=float(z[1]))


def _synge_fn(metric: MetricField) -> Callable[[np.ndarray, np.ndarray], float]:
    """Squared-distance function matched to the metric's structure.

    Half-plane (n = 2): closed form.  Constant-coefficient metrics:
    quadratic form of the difference vector.  Anything else: shooting
    boundary-value solve, distance = constant speed times unit time.
    """
    if metric.kind == "half_plane" and metric.dim == 2:

        def syn(a, b):
            return synge(_as_hpoint(a), _as_hpoint(b))

        return syn

    if metric.kind == "euclidean":

        def syn(a, b):
            d = np.asarray(b, dtype=float) - np.asarray(a, dtype=float)
            g = metric_matrix(metric, np.asarray(a, dtype=float))
            return 0.5 * float(d @ g @ d)

        return syn

    def syn(a, b):
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        if np.array_equal(a, b):
            return 0.0
        path = geodesic_bvp(metric, a, b, t_end=1.0, tol=1e-11, n_steps=800)
        v0 = path.velocities[0]
        g = metric_matrix(metric, a)
        d = math.sqrt(max(float(v0 @ g @ v0), 0.0))
        return 0.5 * d * d

    return syn


def van_vleck_numeric(metric: MetricField, z1, z2, h_scale: float = 1e-3) -> float:
    """Van Vleck determinant by mixed differencing of the Synge function.

    Van = det(-d^2 Syn / dz1_i dz2_j) / sqrt(det g(z1) det g(z2)),
    each mixed derivative from the four-point central stencil with
    steps h_scale * (1 + |coordinate|).  The points must be separated
    enough (distance above ~1e-3) that the stencil does not straddle
    the diagonal.
    """
    a = np.asarray(z1, dtype=float).reshape(-1)
    b = np.asarray(z2, dtype=float).reshape(-1)
    n = metric.dim
    syn = _synge_fn(metric)
    m = np.empty((n, n))
    for i in range(n):
        hi = h_scale * (1.0 + abs(a[i]))
        for j in range(n):
            hj = h_scale * (1.0 + abs(b[j]))
            ap, am = a.copy(), a.copy()
            ap[i] += hi
            am[i] -= hi
            bp, bm = b.copy(), b.copy()
            bp[j] += hj
            bm[j] -= hj
            m[i, j] = -(
                syn(ap, bp) - syn(ap, bm) - syn(am, bp) + syn(am, bm)
            ) / ((ap[i] - am[i]) * (bp[j] - bm[j]))
    det_m = float(np.linalg.det(m))
    g1 = float(np.linalg.det(metric_matrix(metric, a)))
    g2 = float(np.linalg.det(metric_matrix(metric, b)))
    return det_m / math.sqrt(g1 * g2)


def _scale(metric: MetricField, x: np.ndarray) -> float:
    """Density weight s(x) = det(g(x))^(1/(2n))."""
    g = metric_matrix(metric, x)
    det = float(np.linalg.det(g))
    return det ** (1.0 / (2.0 * metric.dim))


def connection_A(metric: MetricField, drift: Optional[DriftField]) -> ConnectionA:
    """The first-order connection of ½Δ_g + drift.

    A_i(x) = ½ sum_h g_ih(x) [ b_h(x) - (sum_k d_k G_hk(x)) / s(x) ]
    with G = s g^{-1} and the weight s as in the module convention.
    Derivatives of G come from the metric's analytic derivative when
    one is attached (d_k G = s [tr(g^{-1} D_k)/(2n) g^{-1}
    - g^{-1} D_k g^{-1}]); without one they fall back to central
    finite differences of G with the standard step rule.  The analytic
    route keeps A accurate to rounding, which downstream divergence
    differences (q_potential) rely on.
    """
    n = metric.dim

    def big_g(x):
        g = metric_matrix(metric, x)
        return _scale(metric, x) * _spd_inverse(g, x)

    def div_g_fd(x):
        div = np.zeros(n)
        for k in range(n):
            h = _FD_SCALE * max(1.0, abs(x[k]))
            xp, xm = x.copy(), x.copy()
            xp[k] += h
            xm[k] -= h
            div += (big_g(xp)[:, k] - big_g(xm)[:, k]) / (xp[k] - xm[k])
        return div

    def div_g_analytic(x):
        g = metric_matrix(metric, x)
        inv = _spd_inverse(g, x)
        d = metric_deriv(metric, x)
        div = np.zeros(n)
        for k in range(n):
            dk_inv = -inv @ d[k] @ inv
            tr = float(np.trace(inv @ d[k]))
            div += (0.5 / n) * tr * inv[:, k] + dk_inv[:, k]
        return _scale(metric, x) * div

    div_fn = div_g_fd if metric.deriv is None else div_g_analytic

    def ev(x):
        x = np.asarray(x, dtype=float).reshape(-1)
        div = div_fn(x)
        b = np.zeros(n) if drift is None else np.asarray(drift.eval(x), dtype=float)
        g = metric_matrix(metric, x)
        return 0.5 * (g @ (b - div / _scale(metric, x)))

    return ConnectionA(dim=n, eval=ev)


def _path_sampler(geo) -> Callable[[float], tuple]:
    """Uniform (position, velocity) access for closed-form geodesics
    and sampled CurvePath objects (cubic Hermite between samples)."""
    if isinstance(geo, CurvePath):
        t_grid = geo.t
        pts = geo.points
        vels = geo.velocities

        def at(u):
            if u <= t_grid[0]:
                return pts[0], vels[0]
            if u >= t_grid[-1]:
                return pts[-1], vels[-1]
            k = int(np.searchsorted(t_grid, u, side="right")) - 1
            return _hermite_eval(
                t_grid[k], t_grid[k + 1], pts[k], pts[k + 1],
                vels[k], vels[k + 1], u,
            )

        return at

    def at(u):
        return geo.point(u), geo.velocity(u)

    return at


def par_factor(
    a_field: ConnectionA,
    geo,
    t: float,
    n_nodes: int = 201,
    tol: float = 1e-10,
) -> float:
    """Parallel factor exp(- integral_0^t phi'(u) . A(phi(u)) du).

    Composite Simpson on [0, t] starting from n_nodes points, doubling
    the resolution (up to two times) until successive values agree to
    tol.  geo may be a closed-form half-plane geodesic or a CurvePath.
    """
    if t <= 0.0:
        raise ValueError("t must be positive")
    if n_nodes < 3:
        raise ValueError("need at least 3 quadrature nodes")
    at = _path_sampler(geo)

    def integrand(u):
        pos, vel = at(u)
        return float(np.dot(vel, a_field.eval(pos)))

    def simpson(n):
        if n % 2 == 0:
            n += 1
        us = np.linspace(0.0, t, n)
        vals = np.array([integrand(u) for u in us])
        h = us[1] - us[0]
        return h / 3.0 * (
            vals[0] + vals[-1] + 4.0 * vals[1:-1:2].sum() + 2.0 * vals[2:-2:2].sum()
        )

    n = n_nodes
    prev = simpson(n)
    for _ in range(2):
        n = 2 * n - 1
        cur = simpson(n)
        if abs(cur - prev) < tol:
            prev = cur
            break
        prev = cur
    return float(np.exp(-prev))


def q_potential(metric: MetricField, a_field: ConnectionA) -> Callable[[np.ndarray], float]:
    """Pointwise potential Q = g^{ij} A_i A_j + (1/s) d_i (s g^{ij} A_j).

    The divergence term uses central finite differences of the vector
    field W = s g^{-1} A with the standard step rule.
    """
    n = metric.dim

    def w_field(x):
        g = metric_matrix(metric, x)
        return _scale(metric, x) * (_spd_inverse(g, x) @ a_field.eval(x))

    def q_at(x):
        x = np.asarray(x, dtype=float).reshape(-1)
        g = metric_matrix(metric, x)
        a = a_field.eval(x)
        quad = float(a @ _spd_inverse(g, x) @ a)
        div = 0.0
        for i in range(n):
            h = _FD_SCALE * max(1.0, abs(x[i]))
            xp, xm = x.copy(), x.copy()
            xp[i] += h
            xm[i] -= h
            div += (w_field(xp)[i] - w_field(xm)[i]) / (xp[i] - xm[i])
        return quad + div / _scale(metric, x)

    return q_at


def a1_coeff(metric: MetricField, a_field: ConnectionA, z) -> float:
    """First expansion coefficient on the diagonal: R(z)/6 + Q(z)."""
    z = np.asarray(z, dtype=float).reshape(-1)
    r = curvature_at(metric, z).scalar
    return r / 6.0 + q_potential(metric, a_field)(z)


def _connecting_geodesic(metric: MetricField, z1, z2, t: float):
    """Geodesic from z1 to z2 in time t, matched to the metric family."""
    if metric.kind == "half_plane" and metric.dim == 2:
        p1, p2 = _as_hpoint(z1), _as_hpoint(z2)
        if p1.x == p2.x and p1.y == p2.y:
            return poincare.ConstantGeodesic(p=p1)
        return poincare.geodesic_between(p1, p2, t)
    if metric.kind == "euclidean":
        a = np.asarray(z1, dtype=float)
        b = np.asarray(z2, dtype=float)
        ts = np.linspace(0.0, t, 5)
        v = (b - a) / t
        pts = a[None, :] + np.outer(ts, v)
        vels = np.tile(v, (5, 1))
        return CurvePath(ts, pts, vels, metric.dim)
    return geodesic_bvp(metric, z1, z2, t_end=t, tol=1e-10, n_steps=800)


def density(
    metric: MetricField,
    drift: Optional[DriftField],
    t: float,
    z1,
    z2,
    order: int = 1,
) -> HeatKernelTerms:
    """First-order expansion of the heat kernel of d/dt = Delta_g + drift.

    Assembles sqrt(det g(z2) Van / (4 pi t)^n) * Par * exp(-Syn/(2t))
    * (1 + a1 t [order 1 only]), with a1 evaluated at z2.  Distances,
    Van and the connecting geodesic use closed forms on the half-plane
    and for constant metrics, and numeric routes otherwise.
    """
    if t <= 0.0:
        raise ValueError("t must be positive")
    if order not in (0, 1):
        raise ValueError("order must be 0 or 1")
    a = np.asarray(z1, dtype=float).reshape(-1)
    b = np.asarray(z2, dtype=float).reshape(-1)
    n = metric.dim
    coincident = bool(np.array_equal(a, b))

    syn_fn = _synge_fn(metric)
    syn = 0.0 if coincident else float(syn_fn(a, b))
    dist = math.sqrt(2.0 * syn)

    a_field = connection_A(metric, drift)
    if coincident:
        van = 1.0
        par = 1.0
    else:
        if metric.kind == "half_plane" and metric.dim == 2:
            van = van_vleck_closed(_as_hpoint(a), _as_hpoint(b))
        elif metric.kind == "euclidean":
            van = 1.0
        else:
            van = van_vleck_numeric(metric, a, b)
        geo = _connecting_geodesic(metric, a, b, t)
        par = par_factor(a_field, geo, t)

    g2 = metric_matrix(metric, b)
    det_g2 = float(np.linalg.det(g2))
    prefactor = math.sqrt(det_g2 * van / (4.0 * math.pi * t) ** n)
    a1 = a1_coeff(metric, a_field, b) if order == 1 else 0.0
    series = 1.0 + a1 * t
    dens = prefactor * par * math.exp(-syn / (2.0 * t)) * series
    return HeatKernelTerms(
        t=t, z1=a, z2=b, dist=dist, synge=syn, van_vleck=van,
        par=par, a0=1.0, a1=a1, density=dens,
    )


def h2_distance_grid(z1: HPoint, x2, y2) -> np.ndarray:
    """Vectorized stable hyperbolic distance from z1 to grids (x2, y2)."""
    x2 = np.asarray(x2, dtype=float)
    y2 = np.asarray(y2, dtype=float)
    if np.any(y2 <= 0.0):
        raise ValueError("target y grid must stay in the half-plane")
    dx = x2 - z1.x
    dy = y2 - z1.y
    s = (dx * dx + dy * dy) / (2.0 * z1.y * y2)
    big = s > 1e-8
    sb = np.where(big, s, 1.0)
    d_big = np.log1p(sb + np.sqrt(sb * (sb + 2.0)))
    d_small = np.sqrt(2.0 * s) * (1.0 - s / 12.0 + 3.0 * s * s / 160.0)
    return np.where(big, d_big, d_small)


def h2_density_grid(t: float, z1: HPoint, x2, y2, order: int = 1) -> np.ndarray:
    """Vectorized half-plane density (zero drift) over target grids.

    Closed-form route equivalent to density(hn_metric(2), None, ...)
    elementwise: stable arccosh distance, Van = d/sinh d, parallel
    factor sqrt(y2/y1) (the connection is a gradient field, so the
    line integral depends only on the endpoints), constant first-order
    coefficient.  x2 and y2 broadcast together.
    """
    if t <= 0.0:
        raise ValueError("t must be positive")
    if order not in (0, 1):
        raise ValueError("order must be 0 or 1")
    x2 = np.asarray(x2, dtype=float)
    y2 = np.asarray(y2, dtype=float)
    d = h2_distance_grid(z1, x2, y2)
    van = _van_vleck_of_dist(d)
    par = np.sqrt(y2 / z1.y)
    prefactor = np.sqrt(van) / (4.0 * math.pi * t * y2 * y2)
    series = 1.0 + (_H2_A1 * t if order == 1 else 0.0)
    return prefactor * par * np.exp(-d * d / (4.0 * t)) * series
