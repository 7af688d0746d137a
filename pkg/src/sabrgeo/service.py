"""Shared execution layer behind the CLI and the HTTP API.

Each run_* function takes a validated config model and returns a
response model; formatting (CSV, JSON, exit codes, HTTP statuses) is
left to the callers.  Grid jobs use the vectorized closed forms where
one exists; the test suite asserts those agree elementwise with the
reference single-point operations.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import math

import numpy as np

from . import __version__
from .geometry_core import curvature_at, euclidean_metric, geodesic_ivp
from .heat_kernel import _van_vleck_of_dist, h2_density_grid, h2_distance_grid
from .mc_oracle import McConfig, simulate_terminal
from .poincare import (
    ConstantGeodesic,
    HPoint,
    Semicircle,
    VerticalLine,
    geodesic_between,
    geodesic_eval,
    geodesic_from_initial,
    hn_metric,
)
from .sabr import (
    SabrParams,
    SmileRequest,
    _density_parts,
    bin_masses,
    call_price_hk,
    smile_rows,
)
from .schemas import (
    CheckRow,
    CurvatureConfig,
    CurvatureResult,
    DensityConfig,
    DensityResult,
    GeodesicConfig,
    GeodesicResult,
    SabrConfig,
    SmileConfig,
    SmileResult,
    ValidateConfig,
    ValidateReport,
)

# Histogram geometry for the validate job: log-space half width in
# forward/vol standard deviations, and the minimum expected count for
# a bin to enter the bulk comparison.
_HIST_HALF_WIDTH = 4.0
_BULK_MIN_COUNT = 25.0
_PRICE_TOL_SE = 3.0
_BIN_TOL_SE = 3.0
_BULK_SHARE_MIN = 0.95


def config_digest(raw) -> str:
    """Short digest of a config structure (canonical JSON, sha256)."""
    blob = json.dumps(raw, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def _to_params(cfg: SabrConfig) -> SabrParams:
    return SabrParams(
        f0=cfg.f0, alpha=cfg.alpha, beta=cfg.beta, nu=cfg.nu, rho=cfg.rho
    )


def run_curvature(cfg: CurvatureConfig) -> CurvatureResult:
    dim = len(cfg.grid)
    if cfg.metric == "euclidean":
        metric = euclidean_metric(dim)
    else:
        metric = hn_metric(dim)
    axes = [np.linspace(ax.min, ax.max, ax.n) for ax in cfg.grid]
    coord_names = [f"x{i + 1}" for i in range(dim)]
    ricci_names = [
        f"ricci_{i + 1}{j + 1}" for i in range(dim) for j in range(dim)
    ]
    rows = []
    for point in itertools.product(*axes):
        bundle = curvature_at(metric, point)
        rows.append(
            [float(c) for c in point]
            + [float(bundle.scalar)]
            + [float(v) for v in bundle.ricci.ravel()]
        )
    return CurvatureResult(
        columns=coord_names + ["scalar"] + ricci_names, rows=rows
    )


def _closed_form_meta(geo):
    if isinstance(geo, VerticalLine):
        return "vertical", {"a": geo.a, "b": geo.b, "alpha": geo.alpha}
    if isinstance(geo, Semicircle):
        return "semicircle", {
            "c": geo.c, "r": geo.r, "alpha": geo.alpha, "t0": geo.t0,
        }
    if isinstance(geo, ConstantGeodesic):
        return "constant", {"x": geo.p.x, "y": geo.p.y}
    raise TypeError(f"unknown geodesic type {type(geo)!r}")


def run_geodesic(cfg: GeodesicConfig) -> GeodesicResult:
    z1 = HPoint(x=cfg.z1[0], y=cfg.z1[1])
    if cfg.z2 is not None:
        geo = geodesic_between(z1, HPoint(x=cfg.z2[0], y=cfg.z2[1]), cfg.t_end)
    else:
        geo = geodesic_from_initial(z1, cfg.v)
    kind, params = _closed_form_meta(geo)

    ts = np.linspace(0.0, cfg.t_end, cfg.n_samples)
    if cfg.mode == "closed" or kind == "constant":
        rows = []
        for t in ts:
            pt, _ = geodesic_eval(geo, float(t))
            rows.append([float(t), float(pt.x), float(pt.y)])
    else:
        # Integrate the geodesic ODE from the closed-form initial
        # velocity on a grid that contains the sample times exactly.
        v0 = geo.velocity(0.0)
        per = max(1, math.ceil(400 / (cfg.n_samples - 1)))
        step = cfg.t_end / (per * (cfg.n_samples - 1))
        path = geodesic_ivp(hn_metric(2), z1.as_array(), v0, cfg.t_end, step)
        rows = []
        for i in range(cfg.n_samples):
            j = i * per
            rows.append(
                [float(path.t[j]), float(path.points[j, 0]), float(path.points[j, 1])]
            )
    return GeodesicResult(
        columns=["t", "x", "y"], rows=rows, kind=kind, params=params
    )


_DENSITY_COLUMNS = ["t", "x2", "y2", "dist", "van_vleck", "par", "density"]


def _density_table_h2(cfg: DensityConfig):
    z1 = HPoint(x=cfg.z1[0], y=cfg.z1[1])
    x2 = np.linspace(cfg.x2_axis.min, cfg.x2_axis.max, cfg.x2_axis.n)
    y2 = np.linspace(cfg.y2_axis.min, cfg.y2_axis.max, cfg.y2_axis.n)
    gx, gy = np.meshgrid(x2, y2, indexing="ij")
    d = h2_distance_grid(z1, gx, gy)
    van = _van_vleck_of_dist(d)
    par = np.sqrt(gy / z1.y)
    dens = h2_density_grid(cfg.t, z1, gx, gy, order=cfg.order)
    return x2, y2, gx, gy, d, van, par, dens


def _density_table_euclidean(cfg: DensityConfig):
    z1 = np.asarray(cfg.z1, dtype=float)
    x2 = np.linspace(cfg.x2_axis.min, cfg.x2_axis.max, cfg.x2_axis.n)
    y2 = np.linspace(cfg.y2_axis.min, cfg.y2_axis.max, cfg.y2_axis.n)
    gx, gy = np.meshgrid(x2, y2, indexing="ij")
    d = np.hypot(gx - z1[0], gy - z1[1])
    van = np.ones_like(d)
    par = np.ones_like(d)
    # Constant metric: every correction term vanishes identically, so
    # the expansion is the exact Gaussian kernel at any order.
    dens = np.exp(-d * d / (4.0 * cfg.t)) / (4.0 * math.pi * cfg.t)
    return x2, y2, gx, gy, d, van, par, dens


def _density_table_sabr(cfg: DensityConfig):
    p = _to_params(cfg.sabr)
    f = np.linspace(cfg.f_axis.min, cfg.f_axis.max, cfg.f_axis.n)
    a = np.linspace(cfg.a_axis.min, cfg.a_axis.max, cfg.a_axis.n)
    parts = _density_parts(p, cfg.t, f[:, None], a[None, :], cfg.order)
    x2, y2, d, van, w, dens = np.broadcast_arrays(*parts)
    return f, a, d, van, w, dens, x2, y2


def run_density(cfg: DensityConfig, normalize: bool = False) -> DensityResult:
    if cfg.mode == "sabr":
        u, v, d, van, par, dens, x2, y2 = _density_table_sabr(cfg)
        rows = [
            [cfg.t, float(x2[i, j]), float(y2[i, j]), float(d[i, j]),
             float(van[i, j]), float(par[i, j]), float(dens[i, j])]
            for i in range(u.size)
            for j in range(v.size)
        ]
    else:
        table = (
            _density_table_h2(cfg)
            if cfg.mode == "half-plane"
            else _density_table_euclidean(cfg)
        )
        u, v, gu, gv, d, van, par, dens = table
        rows = [
            [cfg.t, float(gu[i, j]), float(gv[i, j]), float(d[i, j]),
             float(van[i, j]), float(par[i, j]), float(dens[i, j])]
            for i in range(u.size)
            for j in range(v.size)
        ]
    integral = None
    if normalize:
        if u.size < 2 or v.size < 2:
            raise ValueError("normalization needs at least 2 points per axis")
        integral = float(np.trapezoid(np.trapezoid(dens, v, axis=1), u))
    return DensityResult(
        columns=_DENSITY_COLUMNS, rows=rows, integral=integral
    )


def run_smile(cfg: SmileConfig) -> SmileResult:
    p = _to_params(cfg.sabr)
    request = SmileRequest(
        strikes=tuple(cfg.strikes), maturity=cfg.maturity, order=cfg.order
    )
    rows = []
    warnings = 0
    for strike, price, vol, hagan in smile_rows(p, request):
        if vol is None:
            warnings += 1
            rows.append([strike, price, None, hagan, None])
        else:
            rows.append(
                [strike, price, vol, hagan, abs(vol - hagan) * 1e4]
            )
    return SmileResult(
        columns=["strike", "hk_price", "hk_implied_vol", "hagan_vol", "abs_diff_bps"],
        rows=rows,
        warnings=warnings,
    )


def run_validate(cfg: ValidateConfig, digest: str = "") -> ValidateReport:
    """Monte Carlo cross-check of the heat-kernel pricing route.

    One simulation serves both the per-strike price comparison and the
    terminal density histogram (common random numbers), so reruns with
    the same config are bit-stable.
    """
    p = _to_params(cfg.sabr)
    T = cfg.maturity
    mc = McConfig(
        n_paths=cfg.mc.n_paths, n_steps=cfg.mc.n_steps, seed=cfg.mc.seed
    )
    terminal = simulate_terminal(p, T, mc)
    fT = terminal[:, 0]
    aT = terminal[:, 1]
    n = mc.n_paths

    checks = []
    for strike in cfg.strikes:
        payoff = np.maximum(fT - strike, 0.0)
        est = float(payoff.mean())
        se = float(payoff.std(ddof=1) / math.sqrt(n))
        hk = call_price_hk(p, strike, T, cfg.order)
        measured = abs(hk - est) / se if se > 0.0 else math.inf
        checks.append(
            CheckRow(
                name=f"price_K={strike:g}",
                measured=measured,
                tolerance=_PRICE_TOL_SE,
                passed=bool(measured <= _PRICE_TOL_SE),
            )
        )

    sig_f = (
        p.alpha * p.f0 ** (p.beta - 1.0) * math.sqrt(T)
        * math.exp(2.0 * p.nu * math.sqrt(T))
    )
    sig_a = p.nu * math.sqrt(T)
    f_edges = p.f0 * np.exp(
        np.linspace(-_HIST_HALF_WIDTH * sig_f, _HIST_HALF_WIDTH * sig_f, cfg.hist_bins + 1)
    )
    a_edges = p.alpha * np.exp(
        np.linspace(-_HIST_HALF_WIDTH * sig_a, _HIST_HALF_WIDTH * sig_a, cfg.hist_bins + 1)
    )
    alive = fT > 0.0
    counts, _, _ = np.histogram2d(fT[alive], aT[alive], bins=[f_edges, a_edges])
    mass = counts / n
    se_bins = np.sqrt(mass * (1.0 - mass) / n)
    predicted = bin_masses(p, T, f_edges, a_edges, cfg.order)
    bulk = counts >= _BULK_MIN_COUNT
    n_bulk = int(bulk.sum())
    if n_bulk == 0:
        share = 1.0
    else:
        hits = np.abs(predicted - mass) <= _BIN_TOL_SE * se_bins
        share = float(hits[bulk].mean())
    checks.append(
        CheckRow(
            name="density_bulk_share",
            measured=share,
            tolerance=_BULK_SHARE_MIN,
            passed=bool(share >= _BULK_SHARE_MIN),
        )
    )

    return ValidateReport(
        version=__version__,
        config_digest=digest,
        checks=checks,
        all_passed=all(c.passed for c in checks),
    )
