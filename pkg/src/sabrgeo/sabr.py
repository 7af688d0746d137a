"""SABR model layer on top of the half-plane heat kernel.

The SABR system dF = A F^beta dW, dA = nu A dZ, corr(W, Z) = rho maps
to the Poincare half-plane: with q the C(f) = f^beta antiderivative
coordinate and xi = a / nu, the coordinates

    x = q - rho * xi,        y = sqrt(1 - rho^2) * xi

turn the generator (after the time rescale tau = nu^2 t / 2) into the
half-plane Laplacian plus a first-order drift term from the Ito
correction of the q(f) change of variables.  The transition density
in (f, a) is the half-plane heat-kernel expansion for that drifted
generator between the mapped points, times the Jacobian of the map.
Call prices follow by quadrature of the payoff against the density,
implied vols by inverting the Black formula, and the standard Hagan
lognormal approximation is included as an independent baseline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import ndtr

from .errors import NoSolutionError, QuadratureError
from .heat_kernel import _van_vleck_of_dist, h2_distance_grid
from .poincare import HPoint

_SQRT_2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class SabrParams:
    """Model constants: f0, alpha > 0, beta in [0, 1], nu > 0, |rho| < 1."""

    f0: float
    alpha: float
    beta: float
    nu: float
    rho: float

    def __post_init__(self):
        if not (self.f0 > 0.0):
            raise ValueError(f"f0 must be positive, got {self.f0}")
        if not (self.alpha > 0.0):
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not (0.0 <= self.beta <= 1.0):
            raise ValueError(f"beta must lie in [0, 1], got {self.beta}")
        if not (self.nu > 0.0):
            raise ValueError(f"nu must be positive, got {self.nu}")
        if not (-1.0 < self.rho < 1.0):
            raise ValueError(f"rho must lie in (-1, 1), got {self.rho}")


@dataclass(frozen=True)
class PoincareCoords:
    """Transformed coordinates: x = q - rho xi, y = sqrt(1-rho^2) xi."""

    q: float
    xi: float
    x: float
    y: float


@dataclass(frozen=True)
class SmileRequest:
    """A strike ladder (ascending), maturity and expansion order."""

    strikes: tuple
    maturity: float
    order: int = 1

    def __post_init__(self):
        ks = tuple(float(k) for k in self.strikes)
        if len(ks) == 0:
            raise ValueError("at least one strike is required")
        if any(k <= 0.0 for k in ks):
            raise ValueError("strikes must be positive")
        if any(b <= a for a, b in zip(ks, ks[1:])):
            raise ValueError("strikes must be strictly ascending")
        object.__setattr__(self, "strikes", ks)
        if not (self.maturity > 0.0):
            raise ValueError("maturity must be positive")
        if self.order not in (0, 1):
            raise ValueError("order must be 0 or 1")


# ---------------------------------------------------------------------------
# Coordinate transforms
# ---------------------------------------------------------------------------


def q_of_f(p: SabrParams, f: float) -> float:
    """Antiderivative coordinate q(f) = integral_{f0}^{f} du / u^beta."""
    if np.any(np.asarray(f) <= 0.0):
        raise ValueError("f must be positive")
    if p.beta == 1.0:
        return np.log(f / p.f0)
    # expm1 form of (f^omb - f0^omb)/omb: stays accurate (and continuous
    # with the log branch) as beta -> 1
    omb = 1.0 - p.beta
    return p.f0**omb * np.expm1(omb * np.log(np.asarray(f) / p.f0)) / omb


def f_of_q(p: SabrParams, q: float) -> float:
    """Inverse of q_of_f; raises for q beyond the f > 0 branch."""
    if p.beta == 1.0:
        return p.f0 * np.exp(q)
    omb = 1.0 - p.beta
    arg = omb * np.asarray(q) / p.f0**omb
    if np.any(arg <= -1.0):
        raise ValueError("q lies outside the range of the transform")
    out = p.f0 * np.exp(np.log1p(arg) / omb)
    return float(out) if np.ndim(q) == 0 else out


def xi_of_a(p: SabrParams, a: float) -> float:
    """Rescaled volatility xi = a / nu."""
    if np.any(np.asarray(a) <= 0.0):
        raise ValueError("a must be positive")
    return a / p.nu


def tau_of_t(p: SabrParams, t: float) -> float:
    """Intrinsic heat time tau = nu^2 t / 2."""
    if t < 0.0:
        raise ValueError("t must be nonnegative")
    return 0.5 * p.nu * p.nu * t


def to_poincare(p: SabrParams, f: float, a: float) -> PoincareCoords:
    """Map a model state (f, a) to half-plane coordinates."""
    q = float(q_of_f(p, f))
    xi = float(xi_of_a(p, a))
    return PoincareCoords(
        q=q,
        xi=xi,
        x=q - p.rho * xi,
        y=math.sqrt(1.0 - p.rho * p.rho) * xi,
    )


def from_poincare(p: SabrParams, x: float, y: float) -> tuple:
    """Inverse map; returns (f, a) for half-plane coordinates (x, y)."""
    if not (y > 0.0):
        raise ValueError("y must be positive")
    xi = y / math.sqrt(1.0 - p.rho * p.rho)
    q = x + p.rho * xi
    return float(f_of_q(p, q)), xi * p.nu


# ---------------------------------------------------------------------------
# Transition density in model coordinates
# ---------------------------------------------------------------------------


def _jacobian_factor(p: SabrParams, f) -> np.ndarray:
    """|det d(x,y)/d(f,a)| = f^{-beta} sqrt(1 - rho^2) / nu."""
    return np.asarray(f, dtype=float) ** (-p.beta) * (
        math.sqrt(1.0 - p.rho * p.rho) / p.nu
    )


def _density_parts(p: SabrParams, t: float, f, a, order: int):
    """Shared kernel pieces for the (f, a) density; f and a broadcast.

    The q(f) coordinate change is not drift free: by Ito, dq picks up
    -a^2 C'(f)/2 dt with C(f) = f^beta, so in intrinsic time the
    half-plane process carries the x-drift -y^2 C'(f) / (1 - rho^2).
    That drift is kept here; dropping it shifts the forward by
    O(alpha^2 T), far outside Monte Carlo error bars.  The drift
    one-form is exact for beta = 1, so the endpoint factor
    exp(-dx / (2 (1 - rho^2))) and the potential shift in the
    first-order coefficient are then exact; for beta < 1 the line
    integral uses the midpoint value of C'.

    Returns (x2, y2, dist, van, drift factor, density in (f, a)).
    """
    tau = tau_of_t(p, t)
    if tau <= 0.0:
        raise ValueError("t must be positive")
    start = to_poincare(p, p.f0, p.alpha)
    z1 = HPoint(x=start.x, y=start.y)
    f = np.asarray(f, dtype=float)
    a = np.asarray(a, dtype=float)
    q = q_of_f(p, f)
    xi = a / p.nu
    x2 = q - p.rho * xi
    y2 = math.sqrt(1.0 - p.rho * p.rho) * xi
    omr2 = 1.0 - p.rho * p.rho

    d = h2_distance_grid(z1, x2, y2)
    van = _van_vleck_of_dist(d)
    if p.beta == 1.0:
        c_mid = 1.0
    else:
        # q(f0) = 0, so the endpoint-midpoint in q is q/2.
        f_mid = f_of_q(p, 0.5 * q)
        c_mid = p.beta * f_mid ** (p.beta - 1.0)
    log_w = -0.5 * c_mid * (x2 - z1.x) / omr2

    if order == 1:
        cp2 = p.beta * f ** (p.beta - 1.0)
        # curvature/6 - |drift|^2/4 - div(drift)/2, evaluated at the target
        a1 = -1.0 / 3.0 - 0.25 * (y2 * cp2 / omr2) ** 2
        if p.beta < 1.0:
            cpp_c = p.beta * (p.beta - 1.0) * f ** (2.0 * p.beta - 2.0)
            a1 = a1 + 0.5 * y2 * y2 * cpp_c / omr2
        series = 1.0 + a1 * tau
    else:
        series = 1.0
    p_xy = (
        np.sqrt(van)
        / (4.0 * math.pi * tau * y2 * y2)
        * np.exp(log_w - d * d / (4.0 * tau))
        * series
    )
    return x2, y2, d, van, np.exp(log_w), p_xy * _jacobian_factor(p, f)


def _density_fa(p: SabrParams, t: float, f, a, order: int) -> np.ndarray:
    """Vectorized transition density in (f, a); f and a broadcast."""
    return _density_parts(p, t, f, a, order)[-1]


@dataclass(frozen=True)
class TransitionTerms:
    """Intermediates of one density evaluation in model coordinates.

    par is the endpoint drift factor (the role the parallel factor
    plays in the drift-free expansion); density is per df da.
    """

    x: float
    y: float
    dist: float
    van_vleck: float
    par: float
    density: float


def transition_terms(p: SabrParams, t: float, f: float, a: float, order: int = 1) -> TransitionTerms:
    """Density at one (f, a) point together with its intermediates."""
    if not (f > 0.0 and a > 0.0):
        raise ValueError("f and a must be positive")
    if order not in (0, 1):
        raise ValueError("order must be 0 or 1")
    x2, y2, d, van, w, dens = _density_parts(p, t, f, a, order)
    return TransitionTerms(
        x=float(x2), y=float(y2), dist=float(d), van_vleck=float(van),
        par=float(w), density=float(dens),
    )


def bin_masses(p: SabrParams, t: float, f_edges, a_edges, order: int = 1, nodes: int = 8) -> np.ndarray:
    """Predicted probability mass per histogram cell.

    Integrates the transition density over each [f_i, f_i+1] x
    [a_j, a_j+1] cell with a per-cell Gauss-Legendre rule; shape
    (len(f_edges) - 1, len(a_edges) - 1).  Comparable bin by bin with
    mc_oracle.density_histogram masses.
    """
    f_edges = np.asarray(f_edges, dtype=float)
    a_edges = np.asarray(a_edges, dtype=float)
    if f_edges.ndim != 1 or f_edges.size < 2 or np.any(np.diff(f_edges) <= 0):
        raise ValueError("f_edges must be increasing with at least two entries")
    if a_edges.ndim != 1 or a_edges.size < 2 or np.any(np.diff(a_edges) <= 0):
        raise ValueError("a_edges must be increasing with at least two entries")
    if np.any(f_edges <= 0.0) or np.any(a_edges <= 0.0):
        raise ValueError("bin edges must be positive")
    xg, wg = np.polynomial.legendre.leggauss(nodes)
    half_f = 0.5 * np.diff(f_edges)
    half_a = 0.5 * np.diff(a_edges)
    mid_f = 0.5 * (f_edges[:-1] + f_edges[1:])
    mid_a = 0.5 * (a_edges[:-1] + a_edges[1:])
    fn = (mid_f[:, None] + half_f[:, None] * xg).ravel()
    an = (mid_a[:, None] + half_a[:, None] * xg).ravel()
    wf = (half_f[:, None] * wg).ravel()
    wa = (half_a[:, None] * wg).ravel()
    dens = _density_fa(p, t, fn[:, None], an[None, :], order)
    dens = dens.reshape(mid_f.size, nodes, mid_a.size, nodes)
    return np.einsum(
        "iu,iujv,jv->ij",
        wf.reshape(mid_f.size, nodes),
        dens,
        wa.reshape(mid_a.size, nodes),
    )


def transition_density(p: SabrParams, t: float, f: float, a: float, order: int = 1) -> float:
    """Density of (F_t, A_t) at (f, a), started from (f0, alpha).

    Half-plane heat-kernel expansion at tau = nu^2 t / 2 between the
    mapped points, with the coordinate-change drift carried in closed
    form, multiplied by the (f, a) -> (x, y) Jacobian so the result
    integrates to one against df da (up to the expansion order).
    """
    if not (f > 0.0 and a > 0.0):
        raise ValueError("f and a must be positive")
    if order not in (0, 1):
        raise ValueError("order must be 0 or 1")
    return float(_density_fa(p, t, f, a, order))


# ---------------------------------------------------------------------------
# Pricing by quadrature
# ---------------------------------------------------------------------------

# Truncation: k standard deviations in each log coordinate, grown until
# the outermost node ring carries under _TAIL_TOL of the forward mass.
_DOMAIN_K = 8.0
_TAIL_TOL = 1e-6
_F_FLOOR = 1e-6  # times f0; keeps f^(beta-1) bounded for beta < 1


def _log_vol_rule(p: SabrParams, k: float, T: float, n_a: int):
    """Gauss-Legendre nodes/weights in w = log(a / alpha) on [-k s, k s]."""
    sig_a = p.nu * math.sqrt(T)
    xw, ww = np.polynomial.legendre.leggauss(n_a)
    w = k * sig_a * xw
    a = p.alpha * np.exp(w)
    # da = a dw, folded into the weights once and for all.
    return a, ww * k * sig_a * a


def _grid_mass(p: SabrParams, T: float, order: int, k: float, n_f: int, n_a: int):
    """Total density mass on the truncated box plus an outer-ring bound."""
    sig_f = p.alpha * p.f0 ** (p.beta - 1.0) * math.sqrt(T) * math.exp(
        2.0 * p.nu * math.sqrt(T)
    )
    u_lo = max(-k * sig_f, math.log(_F_FLOOR))
    u_hi = k * sig_f
    xu, wu = np.polynomial.legendre.leggauss(n_f)
    u = 0.5 * (u_hi - u_lo) * xu + 0.5 * (u_hi + u_lo)
    wu = wu * 0.5 * (u_hi - u_lo)
    # Extreme parameters can overflow here; the caller rejects any
    # nonfinite mass, so let inf/nan flow through quietly.
    with np.errstate(over="ignore", invalid="ignore"):
        f = p.f0 * np.exp(u)
        a, wa = _log_vol_rule(p, k, T, n_a)
        dens = _density_fa(p, T, f[:, None], a[None, :], order)
        wmat = (wu * f)[:, None] * wa[None, :] * dens
        mass = float(wmat.sum())
    # Forward-weighted outermost ring bounds the payoff mass beyond the box.
    ring_f = float(
        (wmat[0, :] * f[0]).sum()
        + (wmat[-1, :] * f[-1]).sum()
        + (wmat[:, 0] * f).sum()
        + (wmat[:, -1] * f).sum()
    )
    return u_lo, u_hi, mass, ring_f


class _PriceBasis:
    """Cached domain and normalization for one (params, T, order)."""

    __slots__ = ("u_lo", "u_hi", "k", "mass")

    def __init__(self, u_lo, u_hi, k, mass):
        self.u_lo = u_lo
        self.u_hi = u_hi
        self.k = k
        self.mass = mass


@lru_cache(maxsize=16)
def _price_basis(p: SabrParams, T: float, order: int) -> _PriceBasis:
    k = _DOMAIN_K
    for _ in range(4):
        u_lo, u_hi, mass, ring_f = _grid_mass(p, T, order, k, 256, 128)
        if mass > 0.0 and abs(ring_f) <= _TAIL_TOL * p.f0 * mass:
            break
        k *= 1.4
    else:
        raise QuadratureError(
            "pricing domain did not capture the density tails",
            achieved=abs(ring_f) / max(abs(mass), 1e-300),
        )
    if not (math.isfinite(mass) and mass > 0.5):
        raise QuadratureError(
            "density mass degenerated on the pricing domain; the "
            "expansion is outside its validity range",
            achieved=mass,
        )
    return _PriceBasis(u_lo, u_hi, k, mass)


def _payoff_integral(
    p: SabrParams, T: float, order: int, basis: _PriceBasis,
    strike: float, n_f: int, n_a: int,
) -> float:
    """integral of (f - K) * density over [max(K, floor), f_max] x a-box.

    The kink of (f - K)+ sits at the lower endpoint, so the integrand
    is smooth on the panel and Gauss-Legendre converges at spectral
    rate; no node ever straddles the kink.
    """
    u1 = max(math.log(strike / p.f0), basis.u_lo)
    if u1 >= basis.u_hi:
        return 0.0
    xu, wu = np.polynomial.legendre.leggauss(n_f)
    u = 0.5 * (basis.u_hi - u1) * xu + 0.5 * (basis.u_hi + u1)
    wu = wu * 0.5 * (basis.u_hi - u1)
    f = p.f0 * np.exp(u)
    a, wa = _log_vol_rule(p, basis.k, T, n_a)
    dens = _density_fa(p, T, f[:, None], a[None, :], order)
    return float((wu * f * (f - strike)) @ dens @ wa)


def call_price_hk(p: SabrParams, strike: float, T: float, order: int = 1) -> float:
    """Undiscounted call price E[(F_T - K)+] by density quadrature.

    Gauss-Legendre in log f and log a over a truncated box around
    (f0, alpha); the payoff integral runs from the strike upward so
    the kink never sits inside a panel, and the total quadrature mass
    is divided out (the truncated expansion integrates to 1 + O(tau^2);
    renormalizing restores the exact unit mass the payoff integral
    assumes).  A half-resolution rerun guards the result.
    """
    if not (strike > 0.0):
        raise ValueError("strike must be positive")
    if not (T > 0.0):
        raise ValueError("maturity must be positive")
    basis = _price_basis(p, float(T), int(order))
    hi = _payoff_integral(p, T, order, basis, strike, 256, 128)
    lo = _payoff_integral(p, T, order, basis, strike, 128, 64)
    if not math.isfinite(hi) or abs(hi - lo) > 1e-7 * p.f0 * basis.mass + 1e-9 * abs(hi):
        raise QuadratureError(
            "payoff quadrature did not converge in resolution",
            achieved=abs(hi - lo) / p.f0,
        )
    return hi / basis.mass


# ---------------------------------------------------------------------------
# Black formula and implied volatility
# ---------------------------------------------------------------------------


def black_price(f0: float, strike: float, T: float, sigma: float) -> float:
    """Undiscounted Black call price with forward f0 and vol sigma."""
    if sigma <= 0.0:
        return max(f0 - strike, 0.0)
    s = sigma * math.sqrt(T)
    d1 = (math.log(f0 / strike) + 0.5 * s * s) / s
    return f0 * ndtr(d1) - strike * ndtr(d1 - s)


def black_vega(f0: float, strike: float, T: float, sigma: float) -> float:
    s = sigma * math.sqrt(T)
    d1 = (math.log(f0 / strike) + 0.5 * s * s) / s
    return f0 * math.sqrt(T) * math.exp(-0.5 * d1 * d1) / _SQRT_2PI


def implied_vol_from_price(f0: float, strike: float, T: float, price: float) -> float:
    """Black implied volatility by bracketed bisection plus Newton.

    The price must satisfy (f0 - K)+ <= price < f0; the lower boundary
    returns exactly 0.  The bracket starts at [1e-8, 10] and expands
    upward if the price exceeds the Black value at the top.
    """
    if not (f0 > 0.0 and strike > 0.0 and T > 0.0):
        raise ValueError("f0, strike and T must be positive")
    intrinsic = max(f0 - strike, 0.0)
    if price < intrinsic or price >= f0:
        raise NoSolutionError(
            f"price {price} violates the no-arbitrage band "
            f"[{intrinsic}, {f0})"
        )
    if price == intrinsic:
        return 0.0

    lo, hi = 1e-8, 10.0
    while black_price(f0, strike, T, hi) < price:
        hi *= 2.0
        if hi > 1e6:
            raise NoSolutionError("implied volatility bracket blew up")
    if black_price(f0, strike, T, lo) > price:
        lo = 0.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if black_price(f0, strike, T, mid) < price:
            lo = mid
        else:
            hi = mid
    sigma = 0.5 * (lo + hi)
    # Newton polish; the bisection estimate is already inside the basin.
    for _ in range(8):
        resid = black_price(f0, strike, T, sigma) - price
        vega = black_vega(f0, strike, T, sigma)
        if vega <= 0.0:
            break
        step = resid / vega
        sigma -= step
        if not (lo * 0.5 <= sigma <= hi * 2.0):
            sigma = 0.5 * (lo + hi)
            break
        if abs(step) < 1e-12 * max(sigma, 1e-8):
            break
    return float(sigma)


# ---------------------------------------------------------------------------
# Hagan lognormal baseline
# ---------------------------------------------------------------------------


def hagan_vol(p: SabrParams, strike: float, T: float) -> float:
    """The standard lognormal SABR implied-vol approximation.

    Used as an independent cross-check of the heat-kernel pricing
    route; the two agree in the small-maturity and small-nu limits.
    """
    if not (strike > 0.0 and T > 0.0):
        raise ValueError("strike and T must be positive")
    f, k = p.f0, strike
    omb = 1.0 - p.beta
    lfk = math.log(f / k)
    fkb = (f * k) ** (0.5 * omb)
    z = (p.nu / p.alpha) * fkb * lfk
    if abs(z) < 1e-6:
        # z / x(z) = 1 - rho z / 2 + (2 - 3 rho^2) z^2 / 12 + O(z^3)
        zx = 1.0 - 0.5 * p.rho * z + (2.0 - 3.0 * p.rho**2) * z * z / 12.0
    else:
        xz = math.log(
            (math.sqrt(1.0 - 2.0 * p.rho * z + z * z) + z - p.rho) / (1.0 - p.rho)
        )
        zx = z / xz
    denom = fkb * (
        1.0 + omb**2 * lfk**2 / 24.0 + omb**4 * lfk**4 / 1920.0
    )
    drift = (
        omb**2 * p.alpha**2 / (24.0 * fkb * fkb)
        + 0.25 * p.rho * p.beta * p.nu * p.alpha / fkb
        + (2.0 - 3.0 * p.rho**2) * p.nu**2 / 24.0
    )
    return (p.alpha / denom) * zx * (1.0 + drift * T)


def smile_rows(p: SabrParams, request: SmileRequest):
    """Per-strike (strike, hk_price, hk_vol or None, hagan_vol) rows.

    A failed Black inversion yields None in the hk_vol slot; callers
    decide how to flag it.
    """
    rule_price = lambda k: call_price_hk(p, k, request.maturity, request.order)
    rows = []
    for k in request.strikes:
        price = rule_price(k)
        try:
            vol = implied_vol_from_price(p.f0, k, request.maturity, price)
        except NoSolutionError:
            vol = None
        rows.append((k, price, vol, hagan_vol(p, k, request.maturity)))
    return rows
