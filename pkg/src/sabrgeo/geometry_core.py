"""Numerical Riemannian geometry on subsets of R^n.

Metric fields, Christoffel symbols, curvature tensors, geodesic
initial- and boundary-value solving, parallel transport, curve length
and metric pullback.  Everything works for a generic point-dependent
symmetric positive-definite matrix; metrics that carry analytic
derivatives or analytic Christoffel symbols get faster and more
accurate code paths, cross-checked against the generic formulas by the
test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import (
    ConvergenceError,
    DegenerateMetricError,
    DomainError,
)

# Central-difference step for first derivatives of smooth functions:
# h = eps^(1/3) * max(1, |x_i|) balances truncation against rounding.
_FD_SCALE = float(np.finfo(float).eps) ** (1.0 / 3.0)


@dataclass(frozen=True)
class MetricField:
    """A Riemannian metric g on a subset of R^n.

    Parameters
    ----------
    dim : int
        Dimension n of the ambient space.
    eval : callable
        Maps an n-point to the n x n matrix g(x), symmetric positive
        definite on the domain.
    deriv : callable, optional
        Maps an n-point to the (n, n, n) array D with D[l, i, j] equal
        to the partial derivative of g_ij along coordinate l.  When
        absent, derivatives fall back to central finite differences.
    domain : callable
        Predicate selecting the valid region (for the half-plane
        metric, x_n > 0).
    christoffel : callable, optional
        Analytic Christoffel symbols, point -> (n, n, n) array with
        entry [k, i, j] equal to Gamma^k_ij.  Used as a fast path by
        the integrators; must agree with the generic formula.
    kind : str, optional
        Structural tag ("euclidean", "half_plane") that unlocks closed
        forms downstream.  Purely an optimization hint.
    """

    dim: int
    eval: Callable[[np.ndarray], np.ndarray]
    deriv: Optional[Callable[[np.ndarray], np.ndarray]] = None
    domain: Callable[[np.ndarray], bool] = field(default=lambda x: True)
    christoffel: Optional[Callable[[np.ndarray], np.ndarray]] = None
    kind: Optional[str] = None


@dataclass(frozen=True)
class ChristoffelTensor:
    """Christoffel symbols Gamma^k_ij at one point; gamma[k, i, j]."""

    gamma: np.ndarray
    point: np.ndarray


@dataclass(frozen=True)
class CurvatureBundle:
    """Riemann tensor R^i_jkl, Ricci tensor R_jl and scalar R at a point."""

    riemann: np.ndarray
    ricci: np.ndarray
    scalar: float
    point: np.ndarray


@dataclass(frozen=True)
class DriftField:
    """First-order coefficient field b(x) of a second-order operator."""

    dim: int
    eval: Callable[[np.ndarray], np.ndarray]


class CurvePath:
    """A sampled curve with velocities.

    Samples are (t_k, point_k, velocity_k) with t strictly increasing.
    """

    __slots__ = ("t", "points", "velocities", "metric_dim")

    def __init__(
        self,
        t: np.ndarray,
        points: np.ndarray,
        velocities: np.ndarray,
        metric_dim: int,
    ):
        t = np.asarray(t, dtype=float)
        points = np.asarray(points, dtype=float)
        velocities = np.asarray(velocities, dtype=float)
        if t.ndim != 1 or points.shape != (t.size, metric_dim):
            raise ValueError("inconsistent path sample shapes")
        if velocities.shape != points.shape:
            raise ValueError("velocity samples must match point samples")
        if t.size >= 2 and not np.all(np.diff(t) > 0.0):
            raise ValueError("sample times must be strictly increasing")
        self.t = t
        self.points = points
        self.velocities = velocities
        self.metric_dim = metric_dim

    def __len__(self) -> int:
        return self.t.size


def _point(x, dim: int) -> np.ndarray:
    p = np.asarray(x, dtype=float).reshape(-1)
    if p.size != dim:
        raise ValueError(f"expected a point of dimension {dim}, got {p.size}")
    return p


def _check_domain(metric: MetricField, x: np.ndarray) -> None:
    if not metric.domain(x):
        raise DomainError(f"point {x.tolist()} is outside the metric domain")


def metric_matrix(metric: MetricField, x) -> np.ndarray:
    """Evaluate g(x) with a domain check."""
    p = _point(x, metric.dim)
    _check_domain(metric, p)
    g = np.asarray(metric.eval(p), dtype=float)
    if g.shape != (metric.dim, metric.dim):
        raise ValueError("metric eval returned a matrix of the wrong shape")
    return g


def _spd_inverse(g: np.ndarray, x: np.ndarray) -> np.ndarray:
    # Cholesky doubles as the positive-definiteness check.
    try:
        c = np.linalg.cholesky(g)
    except np.linalg.LinAlgError as exc:
        raise DegenerateMetricError(
            f"metric is not positive definite at {x.tolist()}"
        ) from exc
    inv_c = np.linalg.inv(c)
    return inv_c.T @ inv_c


def metric_deriv(metric: MetricField, x) -> np.ndarray:
    """Partial derivatives D[l, i, j] = d g_ij / d x_l at x.

    Uses the analytic field when supplied, otherwise central finite
    differences with step eps^(1/3) * max(1, |x_l|) per coordinate.
    """
    p = _point(x, metric.dim)
    if metric.deriv is not None:
        d = np.asarray(metric.deriv(p), dtype=float)
        if d.shape != (metric.dim,) * 3:
            raise ValueError("metric deriv returned an array of the wrong shape")
        return d
    return _metric_deriv_fd(metric, p)


def _metric_deriv_fd(metric: MetricField, p: np.ndarray) -> np.ndarray:
    n = metric.dim
    out = np.empty((n, n, n))
    for l in range(n):
        h = _FD_SCALE * max(1.0, abs(p[l]))
        xp = p.copy()
        xm = p.copy()
        xp[l] += h
        xm[l] -= h
        # Recompute the realized step; the rounded step kills one source
        # of finite-difference error.
        h2 = xp[l] - xm[l]
        out[l] = (metric_matrix(metric, xp) - metric_matrix(metric, xm)) / h2
    return out


def christoffel_at(metric: MetricField, x, use_analytic: bool = True) -> ChristoffelTensor:
    """Christoffel symbols of the Levi-Civita connection at x.

    Gamma^k_ij = 1/2 sum_l g^{kl} (d_i g_jl + d_j g_li - d_l g_ij),
    with metric derivatives taken analytically when the field carries
    them, else by central finite differences.

    Parameters
    ----------
    use_analytic : bool
        When False, ignore any analytic christoffel/deriv attached to
        the metric and force the finite-difference route (used by
        cross-validation tests).
    """
    p = _point(x, metric.dim)
    _check_domain(metric, p)
    if use_analytic and metric.christoffel is not None:
        gamma = np.asarray(metric.christoffel(p), dtype=float)
        return ChristoffelTensor(gamma=gamma, point=p)
    g = metric_matrix(metric, p)
    ginv = _spd_inverse(g, p)
    if use_analytic and metric.deriv is not None:
        d = np.asarray(metric.deriv(p), dtype=float)
    else:
        d = _metric_deriv_fd(metric, p)
    # T[l, i, j] = d_i g_jl + d_j g_il - d_l g_ij
    t = np.transpose(d, (2, 0, 1)) + np.transpose(d, (2, 1, 0)) - d
    gamma = 0.5 * np.einsum("kl,lij->kij", ginv, t)
    return ChristoffelTensor(gamma=gamma, point=p)


def curvature_at(metric: MetricField, x, use_analytic: bool = True) -> CurvatureBundle:
    """Riemann, Ricci and scalar curvature at x.

    R^i_jkl = d_k Gamma^i_lj - d_l Gamma^i_kj
              + sum_r (Gamma^i_kr Gamma^r_lj - Gamma^i_lr Gamma^r_kj),
    R_jl = sum_i R^i_jil,  R = sum_jl g^{jl} R_jl.

    Christoffel derivatives are central finite differences of
    christoffel_at with the standard step rule.
    """
    p = _point(x, metric.dim)
    n = metric.dim
    gamma = christoffel_at(metric, p, use_analytic).gamma
    dgamma = np.empty((n, n, n, n))
    for l in range(n):
        h = _FD_SCALE * max(1.0, abs(p[l]))
        xp = p.copy()
        xm = p.copy()
        xp[l] += h
        xm[l] -= h
        h2 = xp[l] - xm[l]
        gp = christoffel_at(metric, xp, use_analytic).gamma
        gm = christoffel_at(metric, xm, use_analytic).gamma
        dgamma[l] = (gp - gm) / h2
    term1 = np.einsum("kilj->ijkl", dgamma)
    term2 = np.einsum("likj->ijkl", dgamma)
    term3 = np.einsum("ikr,rlj->ijkl", gamma, gamma)
    term4 = np.einsum("ilr,rkj->ijkl", gamma, gamma)
    riemann = term1 - term2 + term3 - term4
    ricci = np.einsum("ijil->jl", riemann)
    g = metric_matrix(metric, p)
    ginv = _spd_inverse(g, p)
    scalar = float(np.einsum("jl,jl->", ginv, ricci))
    return CurvatureBundle(riemann=riemann, ricci=ricci, scalar=scalar, point=p)


# ---------------------------------------------------------------------------
# Geodesic integration
# ---------------------------------------------------------------------------


def _geodesic_rhs(metric: MetricField):
    """Right-hand side of the first-order geodesic system.

    State is (pos, vel) stacked; returns (vel, acc) with
    acc_k = - sum_ij Gamma^k_ij v_i v_j.

    The half-plane family admits a hand-inlined acceleration; the tag
    check keeps long shooting runs out of the generic tensor path.
    """
    n = metric.dim
    if metric.kind == "half_plane":
        m = n - 1

        def rhs(pos, vel):
            y = pos[m]
            if not (y > 0.0):
                return None
            vy = vel[m]
            acc = np.empty(n)
            s = 0.0
            for i in range(m):
                vi = vel[i]
                acc[i] = 2.0 * vi * vy / y
                s += vi * vi
            acc[m] = (vy * vy - s) / y
            return vel, acc

        return rhs

    if metric.christoffel is not None:
        gamma_fn = metric.christoffel

        def rhs(pos, vel):
            if not metric.domain(pos):
                return None
            gamma = gamma_fn(pos)
            acc = -np.einsum("kij,i,j->k", gamma, vel, vel)
            return vel, acc

        return rhs

    def rhs(pos, vel):
        if not metric.domain(pos):
            return None
        gamma = christoffel_at(metric, pos).gamma
        acc = -np.einsum("kij,i,j->k", gamma, vel, vel)
        return vel, acc

    return rhs


def _flow_half_plane_2d(p, v, t_end, n_steps, store):
    """RK4 for the 2-D half-plane geodesic system in scalar arithmetic.

    Same contract as _integrate_geodesic; plain floats cut the
    per-step cost enough that shooting loops stop dominating BVP
    solves.  Stage positions with y <= 0 abort exactly like a domain
    check in the generic path.
    """
    x, y = float(p[0]), float(p[1])
    vx, vy = float(v[0]), float(v[1])
    h = t_end / n_steps
    if store:
        ts = np.linspace(0.0, t_end, n_steps + 1)
        pts = np.empty((n_steps + 1, 2))
        vels = np.empty((n_steps + 1, 2))
        pts[0, 0], pts[0, 1] = x, y
        vels[0, 0], vels[0, 1] = vx, vy
    h2 = 0.5 * h
    h6 = h / 6.0
    for k in range(n_steps):
        if y <= 0.0:
            return None, k
        ax1 = 2.0 * vx * vy / y
        ay1 = (vy * vy - vx * vx) / y
        y2 = y + h2 * vy
        if y2 <= 0.0:
            return None, k
        vx2 = vx + h2 * ax1
        vy2 = vy + h2 * ay1
        ax2 = 2.0 * vx2 * vy2 / y2
        ay2 = (vy2 * vy2 - vx2 * vx2) / y2
        y3 = y + h2 * vy2
        if y3 <= 0.0:
            return None, k
        vx3 = vx + h2 * ax2
        vy3 = vy + h2 * ay2
        ax3 = 2.0 * vx3 * vy3 / y3
        ay3 = (vy3 * vy3 - vx3 * vx3) / y3
        y4 = y + h * vy3
        if y4 <= 0.0:
            return None, k
        vx4 = vx + h * ax3
        vy4 = vy + h * ay3
        ax4 = 2.0 * vx4 * vy4 / y4
        ay4 = (vy4 * vy4 - vx4 * vx4) / y4
        x += h6 * (vx + 2.0 * vx2 + 2.0 * vx3 + vx4)
        y += h6 * (vy + 2.0 * vy2 + 2.0 * vy3 + vy4)
        vx += h6 * (ax1 + 2.0 * ax2 + 2.0 * ax3 + ax4)
        vy += h6 * (ay1 + 2.0 * ay2 + 2.0 * ay3 + ay4)
        if not (
            math.isfinite(x)
            and math.isfinite(y)
            and math.isfinite(vx)
            and math.isfinite(vy)
        ):
            return None, k
        if store:
            pts[k + 1, 0], pts[k + 1, 1] = x, y
            vels[k + 1, 0], vels[k + 1, 1] = vx, vy
    if y <= 0.0:
        return None, n_steps
    if store:
        return (ts, pts, vels), n_steps
    return (np.array([x, y]), np.array([vx, vy])), n_steps


def _integrate_geodesic(metric, p, v, t_end, n_steps, store=True):
    """Fixed-step RK4 on the geodesic system.

    Returns (t, points, velocities) when store is True, else the final
    (pos, vel).  Returns None in place of the result if the trajectory
    leaves the domain or turns non-finite; the caller decides whether
    that is an error or a rejected shooting trial.
    """
    if metric.kind == "half_plane" and metric.dim == 2:
        return _flow_half_plane_2d(p, v, t_end, n_steps, store)
    rhs = _geodesic_rhs(metric)
    h = t_end / n_steps
    pos = p.astype(float).copy()
    vel = v.astype(float).copy()
    if store:
        ts = np.linspace(0.0, t_end, n_steps + 1)
        pts = np.empty((n_steps + 1, metric.dim))
        vels = np.empty((n_steps + 1, metric.dim))
        pts[0] = pos
        vels[0] = vel
    for k in range(n_steps):
        r1 = rhs(pos, vel)
        if r1 is None:
            return None, k
        k1p, k1v = r1
        r2 = rhs(pos + 0.5 * h * k1p, vel + 0.5 * h * k1v)
        if r2 is None:
            return None, k
        k2p, k2v = r2
        r3 = rhs(pos + 0.5 * h * k2p, vel + 0.5 * h * k2v)
        if r3 is None:
            return None, k
        k3p, k3v = r3
        r4 = rhs(pos + h * k3p, vel + h * k3v)
        if r4 is None:
            return None, k
        k4p, k4v = r4
        pos = pos + (h / 6.0) * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)
        vel = vel + (h / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
        if not (np.all(np.isfinite(pos)) and np.all(np.isfinite(vel))):
            return None, k
        if store:
            pts[k + 1] = pos
            vels[k + 1] = vel
    if not metric.domain(pos):
        return None, n_steps
    if store:
        return (ts, pts, vels), n_steps
    return (pos, vel), n_steps


def geodesic_ivp(metric: MetricField, p, v, t_end: float, step: float = 1e-3) -> CurvePath:
    """Integrate the geodesic equation from (p, v) over [0, t_end].

    Classical fixed-step RK4 on
        phi''_k + sum_ij phi'_i phi'_j Gamma^k_ij(phi) = 0,
    sampled at every step.  Integration raises DomainError if the path
    leaves the metric domain or the state turns non-finite.
    """
    p = _point(p, metric.dim)
    v = _point(v, metric.dim)
    _check_domain(metric, p)
    if step <= 0.0:
        raise ValueError("step must be positive")
    if t_end <= 0.0:
        raise ValueError("t_end must be positive")
    n_steps = max(1, int(np.ceil(t_end / step - 1e-12)))
    result, k = _integrate_geodesic(metric, p, v, t_end, n_steps, store=True)
    if result is None:
        t_exit = k * (t_end / n_steps)
        raise DomainError(
            f"geodesic left the metric domain near t = {t_exit:.6g}"
        )
    ts, pts, vels = result
    return CurvePath(ts, pts, vels, metric.dim)


def _chord_guess(metric, z1, chord, t_end):
    """Chord velocity rescaled to the chord's Riemannian length.

    The geodesic reaching z2 at t_end has constant speed d(z1, z2) /
    t_end, and the Riemannian length of the straight segment bounds
    that distance from above, usually tightly.  Falls back to the
    plain Euclidean chord if the segment leaves the domain or the
    quadrature degenerates.
    """
    try:
        ts = np.linspace(0.0, 1.0, 33)
        speeds = np.array(
            [
                np.sqrt(chord @ metric_matrix(metric, z1 + t * chord) @ chord)
                for t in ts
            ]
        )
        length = float(np.trapezoid(speeds, ts))
        norm1 = float(speeds[0])
    except (DomainError, np.linalg.LinAlgError):
        return chord / t_end
    if not np.isfinite(length) or not 0.0 < norm1 < np.inf:
        return chord / t_end
    return chord * (length / (norm1 * t_end))


def geodesic_bvp(
    metric: MetricField,
    z1,
    z2,
    t_end: float = 1.0,
    tol: float = 1e-8,
    max_iter: int = 100,
    n_steps: int = 400,
) -> CurvePath:
    """Geodesic with phi(0) = z1 and phi(t_end) = z2 by shooting.

    Damped Newton iteration on the initial velocity with a forward
    finite-difference sensitivity.  The initial guess follows the
    straight chord but is rescaled so its Riemannian speed matches the
    chord's Riemannian length; the raw Euclidean chord can overshoot
    by orders of magnitude where the metric is large, landing the flow
    in regions where the endpoint map is too flat for Newton.  The
    endpoint residual |phi(t_end) - z2| is driven below tol.  When the
    direct solve still stalls, a continuation pass walks the target
    out along the chord, reusing each converged velocity as the next
    starting guess.

    Raises ConvergenceError (carrying the best residual) when no phase
    converges within its max_iter iterations.
    """
    z1 = _point(z1, metric.dim)
    z2 = _point(z2, metric.dim)
    _check_domain(metric, z1)
    _check_domain(metric, z2)
    if t_end <= 0.0:
        raise ValueError("t_end must be positive")

    if np.array_equal(z1, z2):
        ts = np.linspace(0.0, t_end, 3)
        pts = np.tile(z1, (3, 1))
        vels = np.zeros((3, metric.dim))
        return CurvePath(ts, pts, vels, metric.dim)

    n = metric.dim

    def endpoint(v):
        res, _ = _integrate_geodesic(metric, z1, v, t_end, n_steps, store=False)
        if res is None:
            return None
        return res[0]

    def newton(target, v_start):
        v = v_start.copy()
        # If the starting guess immediately blows out of the domain,
        # shrink it until the flow survives; the Newton loop needs a
        # finite starting residual.
        e = endpoint(v)
        shrink = 0
        while e is None and shrink < 60:
            v = 0.5 * v
            e = endpoint(v)
            shrink += 1
        if e is None:
            raise ConvergenceError(
                "shooting could not find a feasible initial velocity"
            )
        r = e - target
        rnorm = float(np.linalg.norm(r))
        best = rnorm
        for _ in range(max_iter):
            if rnorm <= tol:
                return v, rnorm
            jac = np.empty((n, n))
            for i in range(n):
                d = 1e-6 * (1.0 + abs(v[i]))
                vp = v.copy()
                vp[i] += d
                ep = endpoint(vp)
                if ep is None:
                    # One-sided the other way if the perturbed flow exits.
                    vp[i] = v[i] - d
                    ep = endpoint(vp)
                    if ep is None:
                        raise ConvergenceError(
                            "shooting sensitivity left the metric domain",
                            best_residual=best,
                        )
                    jac[:, i] = (e - ep) / d
                else:
                    jac[:, i] = (ep - e) / d
            try:
                dv = np.linalg.solve(jac, -r)
            except np.linalg.LinAlgError:
                dv, *_ = np.linalg.lstsq(jac, -r, rcond=None)
            lam = 1.0
            improved = False
            while lam > 1e-8:
                vtrial = v + lam * dv
                etrial = endpoint(vtrial)
                if etrial is not None:
                    rtrial = etrial - target
                    rtnorm = float(np.linalg.norm(rtrial))
                    if rtnorm < rnorm:
                        v, e, r, rnorm = vtrial, etrial, rtrial, rtnorm
                        improved = True
                        break
                lam *= 0.5
            if not improved:
                raise ConvergenceError(
                    "shooting stalled before reaching tolerance",
                    best_residual=rnorm,
                )
            best = min(best, rnorm)
        if rnorm > tol:
            raise ConvergenceError(
                f"shooting did not converge in {max_iter} iterations",
                best_residual=rnorm,
            )
        return v, rnorm

    chord = z2 - z1
    v0 = _chord_guess(metric, z1, chord, t_end)
    try:
        v, _ = newton(z2, v0)
    except ConvergenceError as direct_err:
        v = v0
        s_done, s_step = 0.0, 0.5
        for _ in range(64):
            if s_done >= 1.0:
                break
            s_next = min(1.0, s_done + s_step)
            try:
                v, _ = newton(z1 + s_next * chord, v)
            except ConvergenceError:
                s_step *= 0.5
                if s_step < 1.0 / 64.0:
                    raise ConvergenceError(
                        "shooting continuation stalled",
                        best_residual=direct_err.best_residual,
                    ) from direct_err
                continue
            s_done = s_next
            s_step = min(0.5, 2.0 * s_step)
        else:
            raise ConvergenceError(
                "shooting continuation ran out of steps",
                best_residual=direct_err.best_residual,
            ) from direct_err

    result, _ = _integrate_geodesic(metric, z1, v, t_end, n_steps, store=True)
    if result is None:
        raise DomainError("converged trajectory unexpectedly left the domain")
    ts, pts, vels = result
    return CurvePath(ts, pts, vels, metric.dim)


# ---------------------------------------------------------------------------
# Parallel transport and length
# ---------------------------------------------------------------------------


def _hermite_eval(t0, t1, p0, p1, v0, v1, t):
    """Cubic Hermite interpolation of a curve segment and its velocity."""
    h = t1 - t0
    s = (t - t0) / h
    s2 = s * s
    s3 = s2 * s
    h00 = 2.0 * s3 - 3.0 * s2 + 1.0
    h10 = s3 - 2.0 * s2 + s
    h01 = -2.0 * s3 + 3.0 * s2
    h11 = s3 - s2
    pos = h00 * p0 + h10 * h * v0 + h01 * p1 + h11 * h * v1
    d00 = (6.0 * s2 - 6.0 * s) / h
    d10 = 3.0 * s2 - 4.0 * s + 1.0
    d01 = (-6.0 * s2 + 6.0 * s) / h
    d11 = 3.0 * s2 - 2.0 * s
    vel = d00 * p0 + d10 * v0 + d01 * p1 + d11 * v1
    return pos, vel


def parallel_transport(metric: MetricField, path: CurvePath, v0) -> np.ndarray:
    """Transport v0 along the path with zero covariant derivative.

    Integrates V'_k + sum_ij phi'_i Gamma^k_ij(phi) V_j = 0 with RK4 on
    the stored grid, evaluating phi and phi' at half steps through
    cubic Hermite interpolation of the samples.  Returns the (m, n)
    array of transported vectors at the sample times.
    """
    v = _point(v0, metric.dim)
    m = len(path)
    out = np.empty((m, metric.dim))
    out[0] = v

    def coeff(pos, vel):
        gamma = christoffel_at(metric, pos).gamma
        # M[k, j] = sum_i vel_i Gamma^k_ij
        return np.einsum("kij,i->kj", gamma, vel)

    for k in range(m - 1):
        t0, t1 = path.t[k], path.t[k + 1]
        h = t1 - t0
        p0, p1 = path.points[k], path.points[k + 1]
        u0, u1 = path.velocities[k], path.velocities[k + 1]
        pm, um = _hermite_eval(t0, t1, p0, p1, u0, u1, 0.5 * (t0 + t1))
        a0 = coeff(p0, u0)
        am = coeff(pm, um)
        a1 = coeff(p1, u1)
        k1 = -a0 @ v
        k2 = -am @ (v + 0.5 * h * k1)
        k3 = -am @ (v + 0.5 * h * k2)
        k4 = -a1 @ (v + h * k3)
        v = v + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[k + 1] = v
    return out


def curve_length(metric: MetricField, path: CurvePath) -> float:
    """Length of the sampled curve: integral of sqrt(v^T g(x) v).

    Composite Simpson quadrature on the stored grid (generalized to
    non-uniform spacing; a trailing odd interval is handled with the
    three-point rule on the last triple).
    """
    m = len(path)
    speeds = np.empty(m)
    for k in range(m):
        g = metric_matrix(metric, path.points[k])
        v = path.velocities[k]
        speeds[k] = np.sqrt(max(float(v @ g @ v), 0.0))
    if m == 1:
        return 0.0
    if m == 2:
        return 0.5 * (speeds[0] + speeds[1]) * (path.t[1] - path.t[0])

    def simpson_pair(t0, t1, t2, f0, f1, f2):
        # Integral over [t0, t2] of the quadratic through the three samples.
        h0 = t1 - t0
        h1 = t2 - t1
        total = h0 + h1
        return (total / 6.0) * (
            f0 * (2.0 - h1 / h0)
            + f1 * total * total / (h0 * h1)
            + f2 * (2.0 - h0 / h1)
        )

    total = 0.0
    k = 0
    while k + 2 < m:
        total += simpson_pair(
            path.t[k], path.t[k + 1], path.t[k + 2],
            speeds[k], speeds[k + 1], speeds[k + 2],
        )
        k += 2
    if k + 2 == m:
        # One interval left: integrate the quadratic through the last
        # three samples over the final interval only.
        t0, t1, t2 = path.t[m - 3], path.t[m - 2], path.t[m - 1]
        f0, f1, f2 = speeds[m - 3], speeds[m - 2], speeds[m - 1]
        # Integrate the Lagrange quadratic through the three samples over
        # [t1, t2]; the 5-point Newton-Cotes rule is exact for quadratics.
        def basis(x):
            l0 = ((x - t1) * (x - t2)) / ((t0 - t1) * (t0 - t2))
            l1 = ((x - t0) * (x - t2)) / ((t1 - t0) * (t1 - t2))
            l2 = ((x - t0) * (x - t1)) / ((t2 - t0) * (t2 - t1))
            return l0, l1, l2

        xs = np.linspace(t1, t2, 5)
        w = np.array([7.0, 32.0, 12.0, 32.0, 7.0]) * (t2 - t1) / 90.0
        c = w @ np.array([basis(x) for x in xs])
        total += c[0] * f0 + c[1] * f1 + c[2] * f2
    return float(total)


def pullback_metric(
    metric: MetricField,
    map: Callable[[np.ndarray], np.ndarray],
    jac: Callable[[np.ndarray], np.ndarray],
) -> MetricField:
    """Pull the metric back through a coordinate map.

    The new field evaluates J(x)^T g(map(x)) J(x); a singular Jacobian
    raises DegenerateMetricError at evaluation time.
    """
    n = metric.dim

    def ev(x):
        j = np.asarray(jac(x), dtype=float)
        if j.shape != (n, n):
            raise ValueError("jacobian has the wrong shape")
        det = np.linalg.det(j)
        if not np.isfinite(det) or det == 0.0:
            raise DegenerateMetricError(
                f"pullback jacobian is singular at {np.asarray(x).tolist()}"
            )
        g = metric_matrix(metric, np.asarray(map(x), dtype=float))
        return j.T @ g @ j

    def dom(x):
        try:
            y = np.asarray(map(x), dtype=float)
        except Exception:
            return False
        return bool(np.all(np.isfinite(y))) and metric.domain(y)

    return MetricField(dim=n, eval=ev, deriv=None, domain=dom)


def euclidean_metric(n: int) -> MetricField:
    """The identity metric on R^n."""
    eye = np.eye(n)
    zeros3 = np.zeros((n, n, n))

    return MetricField(
        dim=n,
        eval=lambda x: eye.copy(),
        deriv=lambda x: zeros3.copy(),
        domain=lambda x: True,
        christoffel=lambda x: zeros3.copy(),
        kind="euclidean",
    )


def serialize_path(path: CurvePath) -> list[str]:
    """CSV lines for a path: header and one row per sample.

    Columns are t, x_1..x_n, v_1..v_n with 17 significant digits.
    """
    n = path.metric_dim
    header = "t," + ",".join(f"x_{i+1}" for i in range(n)) + "," + ",".join(
        f"v_{i+1}" for i in range(n)
    )
    lines = [header]
    for k in range(len(path)):
        vals = [path.t[k], *path.points[k], *path.velocities[k]]
        lines.append(",".join(f"{v:.17g}" for v in vals))
    return lines
