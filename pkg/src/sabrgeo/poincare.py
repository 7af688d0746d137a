"""Closed-form geometry of the Poincare half-plane.

The upper half-plane carries the metric g = I/y^2.  Its geodesics are
vertical lines and semicircles centered on the boundary y = 0, both
available here in explicit unit-speed-up-to-scale parametrizations:

    vertical line   phi(t) = (a, b * exp(alpha t))
    semicircle      phi(t) = (c + r * tanh(alpha t + t0),
                              r / cosh(alpha t + t0))

Both families have constant speed |alpha| in the metric.  The module
also provides the n-dimensional half-space metric with analytic
derivatives and Christoffel symbols for the numeric machinery in
geometry_core.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import DegenerateEndpointsError, DomainError
from .geometry_core import CurvePath, MetricField

# The two-point construction divides by x2 - x1; below this threshold
# the chord is treated as vertical.
_VERT_ATOL = 1e-12


@dataclass(frozen=True)
class HPoint:
    """A point of the half-plane; y must be strictly positive."""

    x: float
    y: float

    def __post_init__(self):
        if not (self.y > 0.0):
            raise DomainError(f"half-plane point needs y > 0, got y = {self.y}")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=float)


@dataclass(frozen=True)
class VerticalLine:
    """Geodesic phi(t) = (a, b e^{alpha t})."""

    a: float
    b: float
    alpha: float

    def __post_init__(self):
        if not (self.b > 0.0):
            raise DomainError("vertical line needs b > 0")

    @property
    def speed(self) -> float:
        return abs(self.alpha)

    def point(self, t: float) -> np.ndarray:
        return np.array([self.a, self.b * np.exp(self.alpha * t)])

    def velocity(self, t: float) -> np.ndarray:
        return np.array([0.0, self.alpha * self.b * np.exp(self.alpha * t)])


@dataclass(frozen=True)
class Semicircle:
    """Geodesic phi(t) = (c + r tanh(theta), r / cosh(theta)),
    theta = alpha t + t0.

    The trace is the upper half of the circle of radius r centered at
    (c, 0); alpha > 0 runs it left to right.
    """

    c: float
    r: float
    alpha: float
    t0: float

    def __post_init__(self):
        if not (self.r > 0.0):
            raise DomainError("semicircle needs r > 0")

    @property
    def speed(self) -> float:
        return abs(self.alpha)

    def point(self, t: float) -> np.ndarray:
        theta = self.alpha * t + self.t0
        return np.array(
            [self.c + self.r * np.tanh(theta), self.r / np.cosh(theta)]
        )

    def velocity(self, t: float) -> np.ndarray:
        theta = self.alpha * t + self.t0
        sech = 1.0 / np.cosh(theta)
        ra = self.r * self.alpha
        return np.array([ra * sech * sech, -ra * np.tanh(theta) * sech])


PoincareGeodesic = Union[VerticalLine, Semicircle]


@dataclass(frozen=True)
class ConstantGeodesic:
    """Degenerate marker for a zero initial velocity: phi(t) = p."""

    p: HPoint

    @property
    def speed(self) -> float:
        return 0.0

    def point(self, t: float) -> np.ndarray:
        return self.p.as_array()

    def velocity(self, t: float) -> np.ndarray:
        return np.zeros(2)


def hn_metric(n: int = 2) -> MetricField:
    """The half-space metric g_ij = delta_ij / x_n^2 on {x_n > 0}.

    Carries analytic derivatives and Christoffel symbols:
    the only nonzero symbols are
        Gamma^n_nn = -1/x_n,   Gamma^n_ii = 1/x_n   (i < n),
        Gamma^i_in = Gamma^i_ni = -1/x_n            (i < n).
    """
    if n < 2:
        raise ValueError("the half-space metric needs n >= 2")
    m = n - 1
    eye = np.eye(n)

    def ev(x):
        y = x[m]
        if not (y > 0.0):
            raise DomainError(f"half-space metric needs x_{n} > 0, got {y}")
        return eye / (y * y)

    def dv(x):
        y = x[m]
        d = np.zeros((n, n, n))
        d[m] = eye * (-2.0 / y**3)
        return d

    def gamma(x):
        y = x[m]
        g = np.zeros((n, n, n))
        inv = 1.0 / y
        for i in range(m):
            g[m, i, i] = inv
            g[i, i, m] = -inv
            g[i, m, i] = -inv
        g[m, m, m] = -inv
        return g

    return MetricField(
        dim=n,
        eval=ev,
        deriv=dv,
        domain=lambda x: bool(x[m] > 0.0),
        christoffel=gamma,
        kind="half_plane",
    )


def distance(z1: HPoint, z2: HPoint) -> float:
    """Hyperbolic distance arccosh(1 + ((dx)^2 + (dy)^2) / (2 y1 y2)).

    Evaluated through s = (F - 1): for s above 1e-8 the identity
    arccosh(1 + s) = log1p(s + sqrt(s (s + 2))) avoids forming F - 1
    by subtraction; below that a truncated series in sqrt(2 s) removes
    the remaining cancellation.
    """
    dx = z2.x - z1.x
    dy = z2.y - z1.y
    s = (dx * dx + dy * dy) / (2.0 * z1.y * z2.y)
    if s > 1e-8:
        return float(np.log1p(s + np.sqrt(s * (s + 2.0))))
    return float(np.sqrt(2.0 * s) * (1.0 - s / 12.0 + 3.0 * s * s / 160.0))


def geodesic_between(z1: HPoint, z2: HPoint, tau: float) -> PoincareGeodesic:
    """The geodesic with phi(0) = z1 and phi(tau) = z2.

    A vertical chord gives a VerticalLine with alpha = log(y2/y1)/tau.
    Otherwise the semicircle through the points has
        c = (x2^2 - x1^2 + y2^2 - y1^2) / (2 (x2 - x1)),
        r = sqrt((x1 - c)^2 + y1^2),
    and the time parametrization is fixed by t0 = arcsinh((x1 - c)/y1)
    together with the rate alpha that lands phi(tau) on z2.  The rate
    candidates (the exact phase difference and both signs of the
    log-ratio form) are ranked by endpoint residual and the best one
    is returned.
    """
    if tau <= 0.0:
        raise ValueError("tau must be positive")
    if z1.x == z2.x and z1.y == z2.y:
        raise DegenerateEndpointsError("geodesic endpoints coincide")
    x1, y1 = z1.x, z1.y
    x2, y2 = z2.x, z2.y
    if abs(x2 - x1) <= _VERT_ATOL * (1.0 + abs(x1) + abs(x2)):
        return VerticalLine(a=x1, b=y1, alpha=np.log(y2 / y1) / tau)
    c = (x2 * x2 - x1 * x1 + y2 * y2 - y1 * y1) / (2.0 * (x2 - x1))
    r = float(np.hypot(x1 - c, y1))
    theta1 = float(np.arcsinh((x1 - c) / y1))
    theta2 = float(np.arcsinh((x2 - c) / y2))
    root1 = np.sqrt(max(r * r - y1 * y1, 0.0))
    root2 = np.sqrt(max(r * r - y2 * y2, 0.0))
    log_rate = np.log((y1 / y2) * (r + root2) / (r + root1)) / tau
    candidates = [(theta2 - theta1) / tau, log_rate, -log_rate]
    target = z2.as_array()
    best = None
    best_res = np.inf
    for alpha in candidates:
        if alpha == 0.0:
            continue
        geo = Semicircle(c=c, r=r, alpha=float(alpha), t0=theta1)
        res = float(np.linalg.norm(geo.point(tau) - target))
        if res < best_res:
            best, best_res = geo, res
    return best


def geodesic_from_initial(p: HPoint, v) -> Union[PoincareGeodesic, ConstantGeodesic]:
    """The geodesic with phi(0) = p and phi'(0) = v.

    A vanishing velocity returns the ConstantGeodesic marker.  A
    vertical velocity gives the vertical line through p with rate
    v2/u2.  Otherwise the semicircle parameters follow from matching
    position and velocity at t = 0:
        r = u2 |v| / |v1|,      alpha = sign(v1) |v| / u2,
        c = (u1 v1 + u2 v2) / v1,   t0 = arcsinh(-v2 / v1).
    """
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.size != 2:
        raise ValueError("initial velocity must be a 2-vector")
    u1, u2 = p.x, p.y
    v1, v2 = float(v[0]), float(v[1])
    if v1 == 0.0 and v2 == 0.0:
        return ConstantGeodesic(p=p)
    if v1 == 0.0:
        return VerticalLine(a=u1, b=u2, alpha=v2 / u2)
    norm = float(np.hypot(v1, v2))
    r = u2 * norm / abs(v1)
    alpha = np.copysign(norm / u2, v1)
    c = (u1 * v1 + u2 * v2) / v1
    t0 = float(np.arcsinh(-v2 / v1))
    return Semicircle(c=c, r=r, alpha=float(alpha), t0=t0)


def geodesic_eval(geo, t: float):
    """Position and velocity of a geodesic at time t.

    Returns (HPoint, velocity 2-vector).
    """
    pos = geo.point(t)
    vel = geo.velocity(t)
    return HPoint(x=float(pos[0]), y=float(pos[1])), vel


def geodesic_path(geo, t_grid) -> CurvePath:
    """Sample a closed-form geodesic onto a CurvePath."""
    ts = np.asarray(t_grid, dtype=float)
    pts = np.stack([geo.point(t) for t in ts])
    vels = np.stack([geo.velocity(t) for t in ts])
    return CurvePath(ts, pts, vels, 2)
