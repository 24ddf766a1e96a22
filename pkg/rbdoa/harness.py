"""
Monte Carlo experiment driver.

Runs every configured method on the same synthetic realization per trial,
pairs estimates with the true directions and aggregates RMSE, resolution
probability and wall time per (method, SNR) cell.
"""

import csv
import hashlib
import io
import itertools
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, List, Literal, Optional, Sequence, TextIO, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, ValidationError, model_validator
from scipy.optimize import linear_sum_assignment

from rbdoa.array_model import Direction, SnapshotMatrix, SourceScenario, UcaGeometry, synthesize_snapshots
from rbdoa.baselines import rb_music
from rbdoa.errors import ConfigurationError, DimensionError, NoSuccessfulRunsError, RbdoaError
from rbdoa.graph import c_l1_svd, rb_l1_svd
from rbdoa.sparse_solver import AnyGrid, DirectionGrid, DoaEstimate, SolverConfig, build_grid, full_direction_grid

logger = logging.getLogger(__name__)

Method = Literal["rb-l1svd", "c-l1svd", "rb-music"]

SWEEP_COLUMNS = ["method", "snr_db", "rmse_az_deg", "rmse_el_deg", "mean_wall_time_ms", "n_runs_used"]
RESOLVE_COLUMNS = ["method", "snr_db", "resolution_probability", "n_runs_used"]

# exhaustive pairing up to this many sources, Hungarian assignment above
_ENUMERATION_LIMIT = 6


# =============================================================================
# CONFIGURATION
# =============================================================================

class GridRegion(BaseModel):
    """Azimuth/elevation rectangle searched on the coarse grid."""
    az_start: float = Field(0.0, ge=0, lt=360)
    az_end: float = Field(359.0, ge=0, lt=360)
    el_start: float = Field(0.0, ge=0, le=90)
    el_end: float = Field(89.0, ge=0, le=90)
    full_grid: bool = Field(False, description="Ignore the rectangle and search all of [0, 360) x [0, 90)")

    @classmethod
    def around(cls, sources: Sequence[Direction], margin_deg: float = 10.0, step_deg: float = 1.0) -> "GridRegion":
        """Region of interest covering every source plus a margin, snapped to the step."""
        az = [d.azimuth_deg for d in sources]
        el = [d.elevation_deg for d in sources]

        def down(x: float) -> float:
            return float(np.floor(x / step_deg) * step_deg)

        def up(x: float) -> float:
            return float(np.ceil(x / step_deg) * step_deg)

        return cls(
            az_start=max(0.0, down(min(az) - margin_deg)),
            az_end=min(360.0 - step_deg, up(max(az) + margin_deg)),
            el_start=max(0.0, down(min(el) - margin_deg)),
            el_end=min(90.0 - step_deg, up(max(el) + margin_deg)),
        )

    def build(self, step_deg: float) -> DirectionGrid:
        if self.full_grid:
            return full_direction_grid(step_deg)
        return build_grid(self.az_start, self.az_end, self.el_start, self.el_end, step_deg)


class ExperimentConfig(BaseModel):
    """Everything a sweep needs; JSON config files use these field names."""
    geometry: UcaGeometry = Field(default_factory=lambda: UcaGeometry(n_sensors=13, radius_over_wavelength=1.0))
    sources: List[Direction] = Field(..., min_length=1)
    snr_sweep_db: List[float] = Field(default_factory=lambda: [-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0], min_length=1)
    n_snapshots: int = Field(100, ge=1, description="Snapshots per trial T")
    n_runs: int = Field(50, ge=1, description="Monte Carlo runs per SNR L")
    base_seed: int = Field(0, ge=0)
    methods: List[Method] = Field(default_factory=lambda: ["rb-l1svd", "c-l1svd", "rb-music"], min_length=1)
    coarse_step_deg: float = Field(1.0, gt=0)
    fine_step_deg: float = Field(0.1, gt=0)
    grid_region: GridRegion = Field(default_factory=GridRegion)
    solver: SolverConfig = Field(default_factory=SolverConfig)
    confidence: float = Field(0.99, gt=0, lt=1)
    refine: bool = Field(True, description="Refine coarse estimates on the fine grid")
    window_cells: int = Field(2, ge=1)
    noiseless: bool = Field(False, description="Drop the noise term; SNR values only label rows")
    max_workers: int = Field(1, ge=1, description="Threads running trials concurrently")

    @model_validator(mode="after")
    def _check_steps(self) -> "ExperimentConfig":
        if self.fine_step_deg > self.coarse_step_deg:
            raise ValueError("fine_step_deg must not exceed coarse_step_deg")
        if len(set(self.methods)) != len(self.methods):
            raise ValueError("methods must not repeat")
        if len(set(self.sources)) != len(self.sources):
            raise ValueError("sources must be distinct directions")
        return self

    @classmethod
    def from_json_file(cls, path: Union[str, Path], **overrides) -> "ExperimentConfig":
        """Load a JSON config; keyword overrides replace file values."""
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigurationError(f"cannot read config {path}: {e}") from e
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls.parse_config(data)

    @classmethod
    def parse_config(cls, data: dict) -> "ExperimentConfig":
        try:
            return cls.model_validate(data)
        except ValidationError as e:
            raise ConfigurationError(f"invalid experiment config: {e}") from e

    def config_hash(self) -> str:
        return hashlib.sha256(self.model_dump_json().encode()).hexdigest()

    @property
    def refine_step(self) -> Optional[float]:
        if self.refine and self.fine_step_deg < self.coarse_step_deg:
            return self.fine_step_deg
        return None


def three_source_config(**overrides) -> ExperimentConfig:
    """Three well separated sources, 13 sensors at r = lambda, T = 100, L = 50."""
    sources = [
        Direction(azimuth_deg=110.1, elevation_deg=35.3),
        Direction(azimuth_deg=120.8, elevation_deg=45.0),
        Direction(azimuth_deg=170.5, elevation_deg=85.0),
    ]
    settings = {
        "sources": sources,
        "snr_sweep_db": [0.0, 5.0, 10.0, 15.0, 20.0],
        "grid_region": GridRegion.around(sources, margin_deg=5.0),
    }
    settings.update(overrides)
    return ExperimentConfig(**settings)


def close_pair_config(**overrides) -> ExperimentConfig:
    """Two closely spaced sources for resolution-probability sweeps."""
    sources = [
        Direction(azimuth_deg=200.3, elevation_deg=69.4),
        Direction(azimuth_deg=205.7, elevation_deg=74.5),
    ]
    settings = {
        "sources": sources,
        "snr_sweep_db": [-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0],
        "grid_region": GridRegion.around(sources, margin_deg=5.0),
    }
    settings.update(overrides)
    return ExperimentConfig(**settings)


# =============================================================================
# METRICS
# =============================================================================

def wrap_azimuth_difference(delta_deg):
    """Map azimuth differences into (-180, 180]."""
    wrapped = np.mod(np.asarray(delta_deg, dtype=float) + 180.0, 360.0) - 180.0
    wrapped = np.where(wrapped == -180.0, 180.0, wrapped)
    return float(wrapped) if wrapped.ndim == 0 else wrapped


def _squared_error(estimate: Direction, truth: Direction) -> float:
    d_az = wrap_azimuth_difference(estimate.azimuth_deg - truth.azimuth_deg)
    d_el = estimate.elevation_deg - truth.elevation_deg
    return d_az * d_az + d_el * d_el


def pair_estimates(estimates: Sequence[Direction], truth: Sequence[Direction]) -> Tuple[int, ...]:
    """
    Assignment minimizing the total squared angular error.

    Returns perm with estimates[perm[k]] paired to truth[k]. Exhaustive for
    K <= 6, where ties resolve to the lexicographically smallest permutation.
    """
    if len(estimates) != len(truth):
        raise DimensionError(f"{len(estimates)} estimates for {len(truth)} true directions")
    K = len(truth)
    if K == 0:
        return ()
    cost = np.array([[_squared_error(e, t) for e in estimates] for t in truth])

    if K > _ENUMERATION_LIMIT:
        _, columns = linear_sum_assignment(cost)
        return tuple(int(c) for c in columns)

    rows = np.arange(K)
    best_perm, best_cost = None, np.inf
    for perm in itertools.permutations(range(K)):
        total = float(cost[rows, perm].sum())
        if best_perm is None or total < best_cost - 1e-12 * max(1.0, best_cost):
            best_perm, best_cost = perm, total
    return tuple(best_perm)


def paired_errors(estimates: Sequence[Direction], truth: Sequence[Direction]) -> Tuple[np.ndarray, np.ndarray]:
    """Wrapped azimuth and elevation errors after optimal pairing, ordered like truth."""
    perm = pair_estimates(estimates, truth)
    d_az = np.array([wrap_azimuth_difference(estimates[p].azimuth_deg - t.azimuth_deg) for p, t in zip(perm, truth)])
    d_el = np.array([estimates[p].elevation_deg - t.elevation_deg for p, t in zip(perm, truth)])
    return d_az, d_el


def rmse(runs: Sequence[Sequence[Direction]], truth: Sequence[Direction]) -> Tuple[float, float]:
    """Root mean square azimuth and elevation error over all runs and sources."""
    if len(runs) == 0:
        raise NoSuccessfulRunsError("no successful runs to average")
    az_sq, el_sq = [], []
    for estimates in runs:
        d_az, d_el = paired_errors(estimates, truth)
        az_sq.append(d_az ** 2)
        el_sq.append(d_el ** 2)
    return float(np.sqrt(np.mean(np.concatenate(az_sq)))), float(np.sqrt(np.mean(np.concatenate(el_sq))))


def resolution_trial(estimates: Sequence[Direction], truth: Sequence[Direction]) -> bool:
    """
    Two sources count as resolved when every paired azimuth error is below half
    their azimuth separation and every elevation error below half their elevation separation.
    """
    if len(truth) != 2:
        raise DimensionError(f"resolution needs exactly 2 sources, got {len(truth)}")
    d_az, d_el = paired_errors(estimates, truth)
    az_threshold = abs(wrap_azimuth_difference(truth[0].azimuth_deg - truth[1].azimuth_deg)) / 2.0
    el_threshold = abs(truth[0].elevation_deg - truth[1].elevation_deg) / 2.0
    return bool(np.max(np.abs(d_az)) < az_threshold and np.max(np.abs(d_el)) < el_threshold)


# =============================================================================
# SWEEP
# =============================================================================

class SweepRow(BaseModel):
    method: Method
    snr_db: float
    rmse_az_deg: float = Field(..., description="NaN when no run succeeded")
    rmse_el_deg: float
    resolution_probability: Optional[float] = Field(None, ge=0, le=1)
    mean_wall_time_ms: float
    n_runs_used: int = Field(..., ge=0)
    n_runs_failed: int = Field(0, ge=0)


class SweepResult(BaseModel):
    rows: List[SweepRow]
    config_hash: str
    sweep_run_id: Optional[str] = Field(None, description="Set once the rows are persisted")

    def row(self, method: str, snr_db: float) -> SweepRow:
        for r in self.rows:
            if r.method == method and r.snr_db == snr_db:
                return r
        raise KeyError((method, snr_db))

    @property
    def all_failed(self) -> bool:
        return all(r.n_runs_used == 0 for r in self.rows)


class TrialOutcome(BaseModel):
    method: Method
    directions: Optional[List[Direction]] = None
    wall_time_s: float = 0.0
    error: Optional[str] = None


def trial_seed(base_seed: int, snr_index: int, run_index: int) -> int:
    """Per-trial seed, independent of execution order."""
    return int(np.random.SeedSequence([base_seed, snr_index, run_index]).generate_state(1)[0])


def run_method(
    method: str,
    snapshots: Union[SnapshotMatrix, np.ndarray],
    geometry: UcaGeometry,
    K: int,
    grid: AnyGrid,
    *,
    solver: SolverConfig,
    confidence: float = 0.99,
    fine_step_deg: Optional[float] = None,
    window_cells: int = 2,
) -> DoaEstimate:
    """Dispatch one estimator by method name."""
    if method == "rb-music":
        return rb_music(snapshots, geometry, K, grid, fine_step_deg=fine_step_deg, window_cells=window_cells)
    if method not in ("rb-l1svd", "c-l1svd"):
        raise ConfigurationError(f"unknown method {method!r}")
    estimator = rb_l1_svd if method == "rb-l1svd" else c_l1_svd
    return estimator(
        snapshots, geometry, K, grid, solver,
        confidence=confidence, fine_step_deg=fine_step_deg, window_cells=window_cells,
    )


def _run_trial(config: ExperimentConfig, grid: AnyGrid, snr_index: int, run_index: int) -> List[TrialOutcome]:
    scenario = SourceScenario(
        directions=config.sources,
        snr_db=config.snr_sweep_db[snr_index],
        n_snapshots=config.n_snapshots,
        rng_seed=trial_seed(config.base_seed, snr_index, run_index),
        noiseless=config.noiseless,
    )
    snapshots = synthesize_snapshots(config.geometry, scenario)

    outcomes = []
    for method in config.methods:
        try:
            estimate = run_method(
                method, snapshots, config.geometry, len(config.sources), grid,
                solver=config.solver, confidence=config.confidence,
                fine_step_deg=config.refine_step, window_cells=config.window_cells,
            )
        except RbdoaError as e:
            logger.warning("[SWEEP] %s failed at snr index %d run %d: %s", method, snr_index, run_index, e)
            outcomes.append(TrialOutcome(method=method, error=str(e)))
            continue
        if not estimate.converged:
            outcomes.append(TrialOutcome(method=method, wall_time_s=estimate.wall_time_s, error="solver did not converge"))
            continue
        outcomes.append(TrialOutcome(method=method, directions=estimate.directions, wall_time_s=estimate.wall_time_s))
    return outcomes


def run_sweep(config: ExperimentConfig, *, record_runs: Optional[bool] = None) -> SweepResult:
    """
    L trials per SNR, every method on the same realization per trial.

    Rows come out ordered by SNR then by config.methods, independent of
    max_workers. Failed trials are excluded and counted.
    """
    grid = config.grid_region.build(config.coarse_step_deg)
    K = len(config.sources)
    jobs = [(i, r) for i in range(len(config.snr_sweep_db)) for r in range(config.n_runs)]
    logger.info(
        "[SWEEP] %d SNR values x %d runs, methods %s, %d grid points",
        len(config.snr_sweep_db), config.n_runs, ",".join(config.methods), grid.size,
    )

    def work(job: Tuple[int, int]) -> List[TrialOutcome]:
        return _run_trial(config, grid, *job)

    if config.max_workers > 1:
        with ThreadPoolExecutor(max_workers=config.max_workers) as pool:
            results = list(pool.map(work, jobs))
    else:
        results = [work(job) for job in jobs]

    cells: Dict[Tuple[int, str], List[TrialOutcome]] = {}
    for (snr_index, _), outcomes in zip(jobs, results):
        for outcome in outcomes:
            cells.setdefault((snr_index, outcome.method), []).append(outcome)

    rows = []
    for snr_index, snr_db in enumerate(config.snr_sweep_db):
        for method in config.methods:
            outcomes = cells.get((snr_index, method), [])
            good = [o for o in outcomes if o.error is None]
            failed = len(outcomes) - len(good)
            if good:
                runs = [o.directions for o in good]
                rmse_az, rmse_el = rmse(runs, config.sources)
                mean_ms = 1000.0 * float(np.mean([o.wall_time_s for o in good]))
                resolution = (
                    float(np.mean([resolution_trial(d, config.sources) for d in runs])) if K == 2 else None
                )
            else:
                rmse_az = rmse_el = mean_ms = float("nan")
                resolution = None
                logger.error("[SWEEP] %s at %.1f dB: every run failed", method, snr_db)
            rows.append(SweepRow(
                method=method,
                snr_db=snr_db,
                rmse_az_deg=rmse_az,
                rmse_el_deg=rmse_el,
                resolution_probability=resolution,
                mean_wall_time_ms=mean_ms,
                n_runs_used=len(good),
                n_runs_failed=failed,
            ))

    result = SweepResult(rows=rows, config_hash=config.config_hash())

    if record_runs is None:
        from rbdoa.settings import get_settings
        record_runs = get_settings().record_runs
    if record_runs:
        from rbdoa.db import persist_sweep_result
        result.sweep_run_id = persist_sweep_result(result)
    return result


# =============================================================================
# CSV
# =============================================================================

def _fmt(value: Optional[float]) -> str:
    if value is None:
        return ""
    return f"{value:.6f}"


def _write_rows(columns: List[str], records: List[dict], out: Optional[Union[str, Path, TextIO]]) -> str:
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    for record in records:
        writer.writerow(record)
    text = buffer.getvalue()
    if isinstance(out, (str, Path)):
        path = Path(out)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    elif out is not None:
        out.write(text)
    return text


def write_sweep_csv(result: SweepResult, out: Optional[Union[str, Path, TextIO]] = None) -> str:
    """RMSE table; returns the CSV text and writes it to out when given."""
    records = [
        {
            "method": r.method,
            "snr_db": _fmt(r.snr_db),
            "rmse_az_deg": _fmt(r.rmse_az_deg),
            "rmse_el_deg": _fmt(r.rmse_el_deg),
            "mean_wall_time_ms": _fmt(r.mean_wall_time_ms),
            "n_runs_used": r.n_runs_used,
        }
        for r in result.rows
    ]
    return _write_rows(SWEEP_COLUMNS, records, out)


def write_resolution_csv(result: SweepResult, out: Optional[Union[str, Path, TextIO]] = None) -> str:
    """Resolution probability table; only meaningful for two-source sweeps."""
    records = [
        {
            "method": r.method,
            "snr_db": _fmt(r.snr_db),
            "resolution_probability": _fmt(r.resolution_probability),
            "n_runs_used": r.n_runs_used,
        }
        for r in result.rows
    ]
    return _write_rows(RESOLVE_COLUMNS, records, out)
