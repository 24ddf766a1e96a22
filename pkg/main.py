"""
FastAPI server for the rbdoa estimators.
Provides REST API endpoints for single estimates, transform diagnostics and background sweeps.
"""

import logging
import math
import uuid
from datetime import datetime, timezone
from typing import Dict, List, Literal, Optional, Union

import numpy as np
from fastapi import BackgroundTasks, Depends, FastAPI, HTTPException, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field, ValidationError
from sqlmodel import Session

from database import get_session
from models import DirectionResponse, EstimateResponse, ModeResidualResponse, TransformInfoResponse
from rbdoa.array_model import Direction, SnapshotMatrix, SourceScenario, UcaGeometry, synthesize_snapshots
from rbdoa.beamspace import transform_diagnostics
from rbdoa.db import load_sweep_records
from rbdoa.errors import ConfigurationError, DimensionError, RbdoaError
from rbdoa.harness import ExperimentConfig, GridRegion, run_method, run_sweep
from rbdoa.settings import configure_logging
from rbdoa.sparse_solver import SolverConfig

configure_logging()
logger = logging.getLogger(__name__)

# Initialize FastAPI app
app = FastAPI(
    title="rbdoa API",
    description="Real-beamspace sparse DOA estimation for uniform circular arrays",
    version="1.0.0",
)

app.add_middleware(
    CORSMiddleware,
    allow_origins=["http://localhost:3000"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

# Global storage for background jobs
background_jobs: Dict[str, Dict] = {}


@app.exception_handler(RbdoaError)
async def rbdoa_error_handler(request: Request, exc: RbdoaError):
    logger.warning("[API] %s rejected: %s", request.url.path, exc)
    return JSONResponse(status_code=400, content={"detail": str(exc), "error_type": type(exc).__name__})


# Pydantic models for request/response
class EstimateRequest(BaseModel):
    geometry: UcaGeometry = Field(default_factory=lambda: UcaGeometry(n_sensors=13, radius_over_wavelength=1.0))
    method: Literal["rb-l1svd", "c-l1svd", "rb-music"] = "rb-l1svd"
    sources: Optional[List[Direction]] = Field(None, description="Directions to synthesize data for")
    source_count: Optional[int] = Field(None, ge=1, description="K; defaults to len(sources)")
    snapshots_real: Optional[List[List[float]]] = Field(None, description="Real part of a supplied N x T snapshot matrix")
    snapshots_imag: Optional[List[List[float]]] = Field(None, description="Imaginary part of the supplied matrix")
    noise_variance: Optional[float] = Field(None, ge=0, description="Known sigma^2 of supplied data")
    snr_db: float = 10.0
    n_snapshots: int = Field(100, ge=1)
    seed: int = 0
    grid_region: Optional[GridRegion] = None
    coarse_step_deg: float = Field(1.0, gt=0)
    fine_step_deg: float = Field(0.1, gt=0)
    refine: bool = True
    solver: SolverConfig = Field(default_factory=SolverConfig)
    confidence: float = Field(0.99, gt=0, lt=1)


class RunResponse(BaseModel):
    success: bool
    message: str
    run_id: Optional[str] = None


def _snapshots_from_request(request: EstimateRequest) -> Union[SnapshotMatrix, np.ndarray]:
    """Supplied data without a noise_variance goes through as a bare array so the noise is estimated."""
    if request.snapshots_real is not None:
        real = np.asarray(request.snapshots_real, dtype=float)
        imag = np.asarray(request.snapshots_imag, dtype=float) if request.snapshots_imag is not None else np.zeros_like(real)
        if real.shape != imag.shape or real.ndim != 2:
            raise DimensionError("snapshots_real and snapshots_imag must be matrices of equal shape")
        if request.noise_variance is None:
            return real + 1j * imag
        return SnapshotMatrix(entries=real + 1j * imag, noise_variance=request.noise_variance)
    if not request.sources:
        raise DimensionError("either sources or snapshot data must be given")
    scenario = SourceScenario(
        directions=request.sources,
        snr_db=request.snr_db,
        n_snapshots=request.n_snapshots,
        rng_seed=request.seed,
    )
    return synthesize_snapshots(request.geometry, scenario)


def _nan_to_none(value):
    if isinstance(value, float) and math.isnan(value):
        return None
    return value


@app.get("/api/transform-info", response_model=TransformInfoResponse)
def get_transform_info(
    n_sensors: int = 13,
    radius_over_wavelength: float = 1.0,
    elevation_deg: float = 90.0,
    n_directions: int = 1000,
    seed: int = 0,
):
    """Mode order, beam count and realness residual diagnostics for a geometry"""
    try:
        geom = UcaGeometry(n_sensors=n_sensors, radius_over_wavelength=radius_over_wavelength)
    except ValidationError as e:
        raise ConfigurationError(f"invalid geometry: {e}") from e
    info = transform_diagnostics(geom, elevation_deg=elevation_deg, n_directions=n_directions, seed=seed)
    return TransformInfoResponse(
        **info.model_dump(exclude={"mode_residuals"}),
        mode_residuals=[ModeResidualResponse(**r.model_dump(exclude={"q_terms_used"})) for r in info.mode_residuals],
    )


@app.post("/api/run/estimate", response_model=EstimateResponse)
def run_estimate(request: EstimateRequest):
    """Run one estimator on supplied or synthesized snapshots"""
    logger.info("[API] Received %s estimate request", request.method)
    snapshots = _snapshots_from_request(request)
    K = request.source_count or (len(request.sources) if request.sources else None)
    if K is None:
        raise DimensionError("source_count is required with supplied snapshot data")

    region = request.grid_region
    if region is None:
        region = GridRegion.around(request.sources) if request.sources else GridRegion(full_grid=True)
    grid = region.build(request.coarse_step_deg)
    fine_step = request.fine_step_deg if request.refine and request.fine_step_deg < request.coarse_step_deg else None

    estimate = run_method(
        request.method, snapshots, request.geometry, K, grid,
        solver=request.solver, confidence=request.confidence, fine_step_deg=fine_step,
    )
    summary = estimate.summary()
    return EstimateResponse(
        **{k: v for k, v in summary.items() if k not in ("directions", "coarse_directions")},
        directions=[DirectionResponse(**d) for d in summary["directions"]],
        coarse_directions=[DirectionResponse(**d) for d in summary["coarse_directions"]]
        if summary["coarse_directions"] else None,
    )


def run_sweep_background(job_id: str, config: ExperimentConfig):
    """Background task running a Monte Carlo sweep"""
    logger.info("[BACKGROUND] Starting sweep job %s", job_id)
    try:
        background_jobs[job_id]["status"] = "running"
        result = run_sweep(config)

        background_jobs[job_id]["status"] = "completed"
        background_jobs[job_id]["sweep_run_id"] = result.sweep_run_id
        background_jobs[job_id]["results"] = [
            {k: _nan_to_none(v) for k, v in row.model_dump().items()} for row in result.rows
        ]
        background_jobs[job_id]["completed_at"] = datetime.now(timezone.utc)
        logger.info("[BACKGROUND] Job %s completed successfully", job_id)

    except Exception as e:
        logger.exception("[BACKGROUND] Error in job %s", job_id)
        background_jobs[job_id]["status"] = "failed"
        background_jobs[job_id]["error"] = str(e)
        background_jobs[job_id]["completed_at"] = datetime.now(timezone.utc)


@app.post("/api/run/sweep", response_model=RunResponse)
async def start_sweep(config: ExperimentConfig, background_tasks: BackgroundTasks):
    """Start a Monte Carlo sweep (runs in background)"""
    job_id = f"sweep-{uuid.uuid4()}"
    background_jobs[job_id] = {
        "status": "queued",
        "config_hash": config.config_hash(),
        "created_at": datetime.now(timezone.utc),
        "sweep_run_id": None,
        "results": None,
        "error": None,
        "completed_at": None,
    }
    background_tasks.add_task(run_sweep_background, job_id, config)
    logger.info("[API] Queued sweep job %s", job_id)
    return RunResponse(success=True, message="Sweep started successfully", run_id=job_id)


@app.get("/api/run/sweep/status/{job_id}")
async def get_sweep_status(job_id: str):
    """Check the status of a sweep background job"""
    if job_id not in background_jobs:
        raise HTTPException(status_code=404, detail="Job not found")

    job = background_jobs[job_id]
    return {
        "job_id": job_id,
        "status": job["status"],
        "config_hash": job["config_hash"],
        "created_at": job["created_at"],
        "completed_at": job["completed_at"],
        "sweep_run_id": job["sweep_run_id"],
        "results": job["results"],
        "error": job["error"],
    }


@app.get("/api/sweeps/{sweep_run_id}")
async def get_recorded_sweep(sweep_run_id: str, session: Session = Depends(get_session)):
    """Rows of a sweep persisted with RBDOA_RECORD_RUNS enabled"""
    records = load_sweep_records(sweep_run_id, session=session)
    if not records:
        raise HTTPException(status_code=404, detail="Sweep not found")
    return {"sweep_run_id": sweep_run_id, "rows": [r.model_dump() for r in records]}


@app.get("/")
async def root():
    """Health check endpoint"""
    return {"message": "rbdoa API is running", "version": "1.0.0"}


if __name__ == "__main__":
    import uvicorn

    uvicorn.run(app, host="0.0.0.0", port=8000)
