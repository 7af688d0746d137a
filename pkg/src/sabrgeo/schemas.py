"""Request and response models shared by the CLI and the HTTP API.

Every config model rejects unknown keys and re-checks the same range
rules the library types enforce, so a config file is validated once
at the boundary and the service layer can assume clean inputs.
"""

from __future__ import annotations

from typing import Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class GridAxis(StrictModel):
    """Uniform axis: n points from min to max inclusive."""

    min: float
    max: float
    n: int = Field(ge=1, le=2000)

    @model_validator(mode="after")
    def _ordered(self):
        if self.n > 1 and not (self.max > self.min):
            raise ValueError("max must exceed min when n > 1")
        if self.n == 1 and self.max != self.min:
            raise ValueError("a single-point axis needs min == max")
        return self


class SabrConfig(StrictModel):
    """Model constants; same ranges as the library parameter type."""

    f0: float = Field(gt=0)
    alpha: float = Field(gt=0)
    beta: float = Field(ge=0, le=1)
    nu: float = Field(gt=0)
    rho: float = Field(gt=-1, lt=1)


class McSection(StrictModel):
    """Monte Carlo controls; seed fixes every draw."""

    n_paths: int = Field(default=200_000, ge=1, le=5_000_000)
    n_steps: int = Field(default=200, ge=1, le=100_000)
    seed: int = Field(default=42, ge=0, lt=2**64)


class CurvatureConfig(StrictModel):
    """Point grid for curvature tables.

    The grid length fixes the dimension; the half-plane family needs
    at least two axes and a positive last axis.
    """

    metric: Literal["euclidean", "poincare-hn"]
    grid: List[GridAxis] = Field(min_length=1, max_length=4)

    @model_validator(mode="after")
    def _domain(self):
        total = 1
        for ax in self.grid:
            total *= ax.n
        if total > 20_000:
            raise ValueError("grid exceeds 20000 points")
        if self.metric == "poincare-hn":
            if len(self.grid) < 2:
                raise ValueError("poincare-hn needs at least two axes")
            last = self.grid[-1]
            if last.min <= 0.0:
                raise ValueError("last axis must stay positive (y > 0)")
        return self


class GeodesicConfig(StrictModel):
    """Half-plane geodesic job: endpoints or point plus velocity."""

    mode: Literal["closed", "ode"] = "closed"
    z1: Tuple[float, float]
    z2: Optional[Tuple[float, float]] = None
    v: Optional[Tuple[float, float]] = None
    t_end: float = Field(default=1.0, gt=0)
    n_samples: int = Field(default=101, ge=2, le=100_000)

    @model_validator(mode="after")
    def _exactly_one(self):
        if (self.z2 is None) == (self.v is None):
            raise ValueError("exactly one of z2 and v is required")
        if self.z1[1] <= 0.0:
            raise ValueError("z1 must satisfy y > 0")
        if self.z2 is not None and self.z2[1] <= 0.0:
            raise ValueError("z2 must satisfy y > 0")
        return self


class DensityConfig(StrictModel):
    """Density table job.

    half-plane and euclidean modes need z1 and the target axes
    (x2_axis, y2_axis); sabr mode needs the model block and the
    (f_axis, a_axis) grid.
    """

    mode: Literal["half-plane", "euclidean", "sabr"] = "half-plane"
    t: float = Field(gt=0)
    order: Literal[0, 1] = 1
    z1: Optional[Tuple[float, float]] = None
    x2_axis: Optional[GridAxis] = None
    y2_axis: Optional[GridAxis] = None
    sabr: Optional[SabrConfig] = None
    f_axis: Optional[GridAxis] = None
    a_axis: Optional[GridAxis] = None

    @model_validator(mode="after")
    def _mode_fields(self):
        if self.mode == "sabr":
            missing = [
                k for k in ("sabr", "f_axis", "a_axis")
                if getattr(self, k) is None
            ]
            if missing:
                raise ValueError(f"sabr mode requires {missing}")
            for k in ("z1", "x2_axis", "y2_axis"):
                if getattr(self, k) is not None:
                    raise ValueError(f"{k} is not used in sabr mode")
            if self.f_axis.min <= 0.0 or self.a_axis.min <= 0.0:
                raise ValueError("f and a grids must be positive")
        else:
            missing = [
                k for k in ("z1", "x2_axis", "y2_axis")
                if getattr(self, k) is None
            ]
            if missing:
                raise ValueError(f"{self.mode} mode requires {missing}")
            for k in ("sabr", "f_axis", "a_axis"):
                if getattr(self, k) is not None:
                    raise ValueError(f"{k} is only used in sabr mode")
            if self.mode == "half-plane":
                if self.z1[1] <= 0.0 or self.y2_axis.min <= 0.0:
                    raise ValueError("half-plane points need y > 0")
        return self


class SmileConfig(StrictModel):
    """Strike ladder job for one maturity."""

    sabr: SabrConfig
    maturity: float = Field(gt=0)
    strikes: List[float] = Field(min_length=1, max_length=10_000)
    order: Literal[0, 1] = 1

    @model_validator(mode="after")
    def _strikes(self):
        if any(k <= 0.0 for k in self.strikes):
            raise ValueError("strikes must be positive")
        if any(b <= a for a, b in zip(self.strikes, self.strikes[1:])):
            raise ValueError("strikes must be strictly ascending")
        return self


class ValidateConfig(StrictModel):
    """Monte Carlo cross-check job; defaults match the desk-scale run."""

    sabr: SabrConfig = SabrConfig(f0=100.0, alpha=0.3, beta=1.0, nu=0.3, rho=-0.5)
    maturity: float = Field(default=0.5, gt=0)
    strikes: List[float] = Field(
        default=[80.0, 90.0, 100.0, 110.0, 120.0],
        min_length=1,
        max_length=100,
    )
    order: Literal[0, 1] = 1
    mc: McSection = McSection()
    hist_bins: int = Field(default=24, ge=2, le=200)

    @model_validator(mode="after")
    def _strikes(self):
        if any(k <= 0.0 for k in self.strikes):
            raise ValueError("strikes must be positive")
        if any(b <= a for a, b in zip(self.strikes, self.strikes[1:])):
            raise ValueError("strikes must be strictly ascending")
        return self


# ---------------------------------------------------------------------------
# Responses
# ---------------------------------------------------------------------------


class TableResult(StrictModel):
    """Column-named numeric table; None marks an unavailable cell."""

    columns: List[str]
    rows: List[List[Optional[float]]]


class CurvatureResult(TableResult):
    pass


class GeodesicResult(TableResult):
    """Sampled path plus the closed-form parameters of the curve."""

    kind: str
    params: Dict[str, float]


class DensityResult(TableResult):
    integral: Optional[float] = None


class SmileResult(TableResult):
    warnings: int = 0


class CheckRow(StrictModel):
    name: str
    measured: float
    tolerance: float
    passed: bool


class ValidateReport(StrictModel):
    version: str
    config_digest: str
    checks: List[CheckRow]
    all_passed: bool
