from datetime import datetime, timezone
from typing import List, Optional
from uuid import uuid4

from pydantic import BaseModel
from sqlalchemy import JSON, Column, Index
from sqlmodel import Field, SQLModel


class PipelineExecutionLog(SQLModel, table=True):
    """
    Lightweight audit log for estimator runs.

    Design choices:
    - One row per pipeline invocation (c-l1svd, rb-l1svd, rb-music, sweep)
    - Stores input snapshot (shapes, grid size, step) for reproducibility
    - Status: 'running', 'success', 'failure', 'partial' (solver not converged)
    """
    __tablename__ = "pipeline_execution_logs"

    id: str = Field(default_factory=lambda: str(uuid4()), primary_key=True)
    pipeline_name: str = Field(index=True, description="Name of pipeline: 'rb-l1svd', 'c-l1svd', etc.")
    execution_id: str = Field(description="Unique ID for this execution")
    input_snapshot: Optional[dict] = Field(
        default=None,
        sa_column=Column(JSON),
        description="Snapshot of input dimensions and settings",
    )

    status: str = Field(description="'running', 'success', 'failure', 'partial'")
    error_message: Optional[str] = Field(default=None, description="Error details if failed")
    execution_metadata: Optional[dict] = Field(
        default=None,
        sa_column=Column(JSON),
        description="Additional execution details: wall time, solver iterations, beta",
    )

    started_at: datetime = Field(default_factory=lambda: datetime.now(timezone.utc))
    completed_at: Optional[datetime] = Field(default=None)


class SweepRecord(SQLModel, table=True):
    """
    One (method, SNR) cell of a Monte Carlo sweep.

    Rows of one sweep share sweep_run_id; config_hash identifies the
    ExperimentConfig that produced them.
    """
    __tablename__ = "sweep_records"

    id: str = Field(default_factory=lambda: str(uuid4()), primary_key=True)
    sweep_run_id: str = Field(index=True)
    method: str = Field(index=True, description="'rb-l1svd', 'c-l1svd' or 'rb-music'")
    snr_db: float
    rmse_az_deg: Optional[float] = Field(default=None)
    rmse_el_deg: Optional[float] = Field(default=None)
    resolution_probability: Optional[float] = Field(default=None, ge=0, le=1)
    mean_wall_time_ms: Optional[float] = Field(default=None)
    n_runs_used: int = Field(ge=0)
    n_runs_failed: int = Field(default=0, ge=0)
    config_hash: str = Field(index=True, description="SHA-256 of the experiment config JSON")
    created_at: datetime = Field(default_factory=lambda: datetime.now(timezone.utc))

    __table_args__ = (
        Index("ix_sweep_records_run_method_snr", "sweep_run_id", "method", "snr_db"),
    )


# API Response Models
class DirectionResponse(BaseModel):
    azimuth_deg: float
    elevation_deg: float


class EstimateResponse(BaseModel):
    method: str
    pipeline_tag: str
    directions: List[DirectionResponse]
    coarse_directions: Optional[List[DirectionResponse]] = None
    refined: bool
    wall_time_s: float
    converged: bool
    solver_iterations: int
    peaks_filled: bool
    beta: Optional[float] = None


class ModeResidualResponse(BaseModel):
    mode: int
    principal_magnitude: float
    residual_magnitude: float


class TransformInfoResponse(BaseModel):
    n_sensors: int
    radius_over_wavelength: float
    mode_order: int
    beam_count: int
    sensor_count_ok: bool
    elevation_deg: float
    mode_residuals: List[ModeResidualResponse]
    sampling_residual_bound: float
    measured_imag_residual: float
    directions_sampled: int
