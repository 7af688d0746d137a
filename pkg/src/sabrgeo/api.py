"""HTTP face of the service layer.

Run with: uvicorn sabrgeo.api:app

Request bodies are the same JSON documents the CLI reads from config
files; responses are the service result models.  Config validation
failures surface as 422 (pydantic), degenerate requests as 422 with a
detail string, numerical failures as 500.  The validate report embeds
a digest of the request body so responses identify their runs the way
CLI output headers do.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException

from . import __version__
from .errors import DegenerateEndpointsError, GeometryError
from .schemas import (
    CurvatureConfig,
    CurvatureResult,
    DensityConfig,
    DensityResult,
    GeodesicConfig,
    GeodesicResult,
    SmileConfig,
    SmileResult,
    ValidateConfig,
    ValidateReport,
)
from .service import (
    config_digest,
    run_curvature,
    run_density,
    run_geodesic,
    run_smile,
    run_validate,
)

app = FastAPI(title="sabrgeo", version=__version__)


def _guarded(fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except (DegenerateEndpointsError, ValueError) as exc:
        raise HTTPException(status_code=422, detail=str(exc))
    except GeometryError as exc:
        raise HTTPException(status_code=500, detail=f"numerical failure: {exc}")


@app.get("/healthz")
def healthz() -> dict:
    return {"status": "ok", "version": __version__}


@app.post("/curvature", response_model=CurvatureResult)
def curvature(cfg: CurvatureConfig) -> CurvatureResult:
    return _guarded(run_curvature, cfg)


@app.post("/geodesic", response_model=GeodesicResult)
def geodesic(cfg: GeodesicConfig) -> GeodesicResult:
    return _guarded(run_geodesic, cfg)


@app.post("/density", response_model=DensityResult)
def density(cfg: DensityConfig, normalize: bool = False) -> DensityResult:
    return _guarded(run_density, cfg, normalize=normalize)


@app.post("/smile", response_model=SmileResult)
def smile(cfg: SmileConfig) -> SmileResult:
    return _guarded(run_smile, cfg)


@app.post("/validate", response_model=ValidateReport)
def validate(cfg: ValidateConfig) -> ValidateReport:
    digest = config_digest(cfg.model_dump(mode="json"))
    return _guarded(run_validate, cfg, digest)
