"""Seeded Monte Carlo oracle for the SABR system.

Simulates dF = A F^beta dW, dA = nu A dZ with corr(W, Z) = rho.  The
volatility factor is advanced exactly (its law is geometric Brownian
motion); the forward uses an Euler step with permanent absorption at
zero.  Randomness comes from a counter-based generator with one
substream per path: path i always consumes the 64-bit draws
[i*2*n_steps, (i+1)*2*n_steps) of the keyed stream, so results are
bitwise reproducible for a given (seed, n_steps) regardless of how
paths are partitioned into blocks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.special import ndtri

# Paths simulated per vectorized block; bounds peak memory at roughly
# 3 * _BLOCK * 2 * n_steps doubles without changing any output.
_BLOCK = 10_000


@dataclass(frozen=True)
class McConfig:
    """Simulation controls; seed fixes every draw."""

    n_paths: int
    n_steps: int
    seed: int
    scheme: str = "euler_abs"

    def __post_init__(self):
        if self.n_paths < 1 or self.n_steps < 1:
            raise ValueError("n_paths and n_steps must be at least 1")
        if not (0 <= int(self.seed) < 2**64):
            raise ValueError("seed must fit an unsigned 64-bit integer")
        if self.scheme != "euler_abs":
            raise ValueError(f"unknown scheme {self.scheme!r}")


@dataclass(frozen=True)
class HistBin:
    f_low: float
    f_high: float
    a_low: float
    a_high: float
    mass: float
    std_err: float


@dataclass(frozen=True)
class McResult:
    """estimate/std_error plus an optional 2-D terminal histogram.

    histogram bins are row-major in (f, a); their masses sum to the
    covered fraction, with paths absorbed at f = 0 reported separately
    in absorbed_mass.  n_effective is the number of paths the estimate
    aggregates (all paths for prices, unabsorbed paths for histograms).
    """

    estimate: float
    std_error: float
    n_effective: int
    histogram: Optional[Tuple[HistBin, ...]] = None
    absorbed_mass: float = 0.0


def _normal_block(seed: int, first_path: int, n_paths: int, n_steps: int):
    """Standard-normal pairs (z, z_perp), each (n_paths, n_steps).

    Path p owns the uniform doubles [p*stride, p*stride + 2*n_steps)
    of the keyed stream, where stride rounds 2*n_steps up to a
    multiple of 4: the generator emits 4 doubles per counter tick, so
    path starts must sit on tick boundaries to be seekable.  Normals
    come from the inverse CDF, which keeps the consumption pattern
    independent of the drawn values.
    """
    m = 2 * n_steps
    stride = -(-m // 4) * 4
    bg = np.random.Philox(key=np.uint64(seed))
    bg.advance(first_path * (stride // 4))
    u = np.random.Generator(bg).random((n_paths, stride))[:, :m]
    # ndtri(0) is -inf; the generator can emit exactly 0.0.
    z = ndtri(np.maximum(u, 1e-300))
    return z[:, 0::2], z[:, 1::2]


def simulate_terminal(p, T: float, cfg: McConfig) -> np.ndarray:
    """Terminal states: array of shape (n_paths, 2) with rows (F_T, A_T).

    A is advanced exactly:

        A_{t+dt} = A_t * exp(nu sqrt(dt) z - nu^2 dt / 2),

    F by Euler with the pre-step values and the correlated increment
    w = rho z + sqrt(1-rho^2) z_perp; a step that takes F to or below
    zero absorbs the path at exactly 0 for good.
    """
    if not (T > 0.0):
        raise ValueError("T must be positive")
    dt = T / cfg.n_steps
    sq = math.sqrt(dt)
    rho_c = math.sqrt(1.0 - p.rho * p.rho)
    drift = -0.5 * p.nu * p.nu * dt
    out = np.empty((cfg.n_paths, 2))
    for start in range(0, cfg.n_paths, _BLOCK):
        nb = min(_BLOCK, cfg.n_paths - start)
        z, zp = _normal_block(cfg.seed, start, nb, cfg.n_steps)
        f = np.full(nb, float(p.f0))
        a = np.full(nb, float(p.alpha))
        alive = np.ones(nb, dtype=bool)
        for k in range(cfg.n_steps):
            zk = z[:, k]
            w = p.rho * zk + rho_c * zp[:, k]
            f_next = f + a * f**p.beta * sq * w
            f = np.where(alive, f_next, f)
            hit = alive & (f <= 0.0)
            if hit.any():
                f[hit] = 0.0
                alive &= ~hit
            a *= np.exp(p.nu * sq * zk + drift)
        out[start : start + nb, 0] = f
        out[start : start + nb, 1] = a
    return out


def price_call(p, strike: float, T: float, cfg: McConfig) -> McResult:
    """Sample mean of (F_T - K)+ with its standard error."""
    term = simulate_terminal(p, T, cfg)
    payoff = np.maximum(term[:, 0] - strike, 0.0)
    n = cfg.n_paths
    est = float(payoff.mean())
    se = float(payoff.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    absorbed = float((term[:, 0] == 0.0).sum()) / n
    return McResult(estimate=est, std_error=se, n_effective=n, absorbed_mass=absorbed)


def density_histogram(p, T: float, cfg: McConfig, f_edges, a_edges) -> McResult:
    """2-D histogram of (F_T, A_T) masses with binomial errors.

    Bin (i, j) covers [f_edges[i], f_edges[i+1]) x [a_edges[j],
    a_edges[j+1]); masses are fractions of all paths, so with covering
    edges the masses plus absorbed_mass sum to one exactly.
    """
    f_edges = np.asarray(f_edges, dtype=float)
    a_edges = np.asarray(a_edges, dtype=float)
    if f_edges.ndim != 1 or f_edges.size < 2 or np.any(np.diff(f_edges) <= 0):
        raise ValueError("f_edges must be increasing with at least two entries")
    if a_edges.ndim != 1 or a_edges.size < 2 or np.any(np.diff(a_edges) <= 0):
        raise ValueError("a_edges must be increasing with at least two entries")
    term = simulate_terminal(p, T, cfg)
    surviving = term[term[:, 0] > 0.0]
    n = cfg.n_paths
    counts, _, _ = np.histogram2d(
        surviving[:, 0], surviving[:, 1], bins=[f_edges, a_edges]
    )
    mass = counts / n
    se = np.sqrt(mass * (1.0 - mass) / n)
    bins = []
    for i in range(f_edges.size - 1):
        for j in range(a_edges.size - 1):
            bins.append(
                HistBin(
                    f_low=float(f_edges[i]),
                    f_high=float(f_edges[i + 1]),
                    a_low=float(a_edges[j]),
                    a_high=float(a_edges[j + 1]),
                    mass=float(mass[i, j]),
                    std_err=float(se[i, j]),
                )
            )
    covered = float(mass.sum())
    return McResult(
        estimate=covered,
        std_error=float(np.sqrt(covered * (1.0 - covered) / n)),
        n_effective=int(surviving.shape[0]),
        histogram=tuple(bins),
        absorbed_mass=float(n - surviving.shape[0]) / n,
    )
