"""Riemannian geometry of the SABR stochastic-volatility model.

The package computes connections, curvature, geodesics and parallel
transport for metrics on subsets of R^n, provides the closed-form
geometry of the Poincare half-plane, assembles the first-order
short-time heat-kernel expansion, and applies the machinery to the
SABR model: transition densities in the original (forward, vol)
coordinates, call prices by quadrature, and Black implied
volatilities, all validated against a seeded Monte Carlo oracle.
"""

__version__ = "0.1.0"

from . import geometry_core, heat_kernel, mc_oracle, poincare, sabr, schemas, service

__all__ = [
    "__version__",
    "geometry_core",
    "poincare",
    "heat_kernel",
    "sabr",
    "mc_oracle",
    "schemas",
    "service",
]
