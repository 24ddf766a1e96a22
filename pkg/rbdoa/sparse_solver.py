"""
Direction grids and group-sparse recovery.

The recovery program is

    min  sum_i ||S(i, :)||_2   subject to   ||Y - D S||_F <= beta

solved by ADMM (a row-wise shrinkage on a copy of S alternating with a
projection of the fitted data onto the Frobenius ball around Y) over a
working set of dictionary columns grown from the dual constraints.
Real inputs stay real end to end; complex inputs use complex arithmetic.
"""

import logging
from functools import lru_cache
from typing import List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from rbdoa.array_model import Direction
from rbdoa.errors import (
    ConfigurationError,
    DimensionError,
    InfeasibleProblemError,
    NoPeaksError,
    SolverError,
)

logger = logging.getLogger(__name__)

_ROUND_DECIMALS = 10


# =============================================================================
# GRIDS
# =============================================================================

def _strictly_increasing(values: Tuple[float, ...]) -> bool:
    return all(b > a for a, b in zip(values, values[1:]))


class DirectionGrid(BaseModel):
    """
    Product grid of candidate directions.

    Points are flattened elevation-major: index p = i_el * n_az + i_az, so the
    azimuth index varies fastest.
    """
    model_config = ConfigDict(frozen=True)

    azimuth_samples: Tuple[float, ...] = Field(..., min_length=1, description="Sorted azimuths in degrees")
    elevation_samples: Tuple[float, ...] = Field(..., min_length=1, description="Sorted elevations in degrees")

    @field_validator("azimuth_samples")
    @classmethod
    def _check_azimuths(cls, values: Tuple[float, ...]) -> Tuple[float, ...]:
        if not _strictly_increasing(values):
            raise ValueError("azimuth samples must be strictly increasing")
        if values[0] < 0.0 or values[-1] >= 360.0:
            raise ValueError("azimuth samples must lie in [0, 360)")
        return values

    @field_validator("elevation_samples")
    @classmethod
    def _check_elevations(cls, values: Tuple[float, ...]) -> Tuple[float, ...]:
        if not _strictly_increasing(values):
            raise ValueError("elevation samples must be strictly increasing")
        if values[0] < 0.0 or values[-1] > 90.0:
            raise ValueError("elevation samples must lie in [0, 90]")
        return values

    @property
    def shape(self) -> Tuple[int, int]:
        return len(self.elevation_samples), len(self.azimuth_samples)

    @property
    def size(self) -> int:
        return len(self.elevation_samples) * len(self.azimuth_samples)

    @property
    def patches(self) -> Tuple["DirectionGrid", ...]:
        return (self,)

    @property
    def step_deg(self) -> Optional[float]:
        """Sampling step, taken from azimuth when it has two samples, else elevation."""
        for samples in (self.azimuth_samples, self.elevation_samples):
            if len(samples) > 1:
                return round(samples[1] - samples[0], _ROUND_DECIMALS)
        return None

    @property
    def wraps_azimuth(self) -> bool:
        """True when the azimuth samples close the full circle, so 0 and 360 are neighbours."""
        az = self.azimuth_samples
        if len(az) < 3:
            return False
        step = az[1] - az[0]
        return abs(az[-1] + step - (az[0] + 360.0)) < 1e-6 * max(1.0, step)

    def flat_angles_deg(self) -> Tuple[np.ndarray, np.ndarray]:
        return _flat_angles(self)

    def direction_at(self, index: int) -> Direction:
        az, el = self.flat_angles_deg()
        return Direction(azimuth_deg=float(az[index]), elevation_deg=float(el[index]))

    @property
    def points(self) -> List[Direction]:
        az, el = self.flat_angles_deg()
        return [Direction(azimuth_deg=float(a), elevation_deg=float(e)) for a, e in zip(az, el)]

    def local_maxima(self, values: np.ndarray) -> np.ndarray:
        """Flat boolean mask of points >= every available 8-neighbour."""
        grid_values = np.asarray(values, dtype=float).reshape(self.shape)
        if self.wraps_azimuth:
            padded = np.pad(grid_values, ((0, 0), (1, 1)), mode="wrap")
        else:
            padded = np.pad(grid_values, ((0, 0), (1, 1)), constant_values=-np.inf)
        padded = np.pad(padded, ((1, 1), (0, 0)), constant_values=-np.inf)
        n_el, n_az = self.shape
        mask = np.ones(self.shape, dtype=bool)
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                if di == 0 and dj == 0:
                    continue
                neighbour = padded[1 + di:1 + di + n_el, 1 + dj:1 + dj + n_az]
                mask &= grid_values >= neighbour
        return mask.ravel()


@lru_cache(maxsize=64)
def _flat_angles(grid: DirectionGrid) -> Tuple[np.ndarray, np.ndarray]:
    az_mesh, el_mesh = np.meshgrid(
        np.asarray(grid.azimuth_samples), np.asarray(grid.elevation_samples), indexing="xy"
    )
    az, el = az_mesh.ravel(), el_mesh.ravel()
    az.flags.writeable = False
    el.flags.writeable = False
    return az, el


class GridUnion(BaseModel):
    """Union of disjoint product-grid patches; points are flattened patch by patch."""
    model_config = ConfigDict(frozen=True)

    patches: Tuple[DirectionGrid, ...] = Field(..., min_length=1)

    @property
    def size(self) -> int:
        return sum(p.size for p in self.patches)

    @property
    def step_deg(self) -> Optional[float]:
        steps = [p.step_deg for p in self.patches if p.step_deg is not None]
        return min(steps) if steps else None

    def flat_angles_deg(self) -> Tuple[np.ndarray, np.ndarray]:
        pairs = [p.flat_angles_deg() for p in self.patches]
        return np.concatenate([a for a, _ in pairs]), np.concatenate([e for _, e in pairs])

    def direction_at(self, index: int) -> Direction:
        az, el = self.flat_angles_deg()
        return Direction(azimuth_deg=float(az[index]), elevation_deg=float(el[index]))

    @property
    def points(self) -> List[Direction]:
        return [pt for p in self.patches for pt in p.points]

    def local_maxima(self, values: np.ndarray) -> np.ndarray:
        """
        Flat boolean mask of points >= every 8-neighbour present in the union.

        Neighbours are looked up on the shared fine lattice, so patches that
        touch or sit on both sides of the 0/360 seam see each other.
        """
        values = np.asarray(values, dtype=float)
        step = self.step_deg
        if step is None:
            return np.ones(values.size, dtype=bool)
        az, el = self.flat_angles_deg()
        n_az = int(round(360.0 / step))
        ia = np.rint(az / step).astype(np.int64) % n_az
        ie = np.rint(el / step).astype(np.int64)
        keys = ie * n_az + ia
        order = np.argsort(keys, kind="stable")
        sorted_keys = keys[order]
        mask = np.ones(values.size, dtype=bool)
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                if di == 0 and dj == 0:
                    continue
                wanted = (ie + di) * n_az + (ia + dj) % n_az
                pos = np.minimum(np.searchsorted(sorted_keys, wanted), sorted_keys.size - 1)
                present = (sorted_keys[pos] == wanted) & (ie + di >= 0)
                neighbour = np.full(values.size, -np.inf)
                neighbour[present] = values[order[pos[present]]]
                mask &= values >= neighbour
        return mask


AnyGrid = Union[DirectionGrid, GridUnion]


def _samples(start: float, end: float, step: float) -> Tuple[float, ...]:
    count = int(np.floor((end - start) / step + 1e-9)) + 1
    return tuple(float(v) for v in np.round(start + step * np.arange(count), _ROUND_DECIMALS))


def build_grid(az_start: float, az_end: float, el_start: float, el_end: float, step_deg: float) -> DirectionGrid:
    """Uniform grid over [az_start, az_end] x [el_start, el_end], endpoints included when reachable."""
    if step_deg <= 0:
        raise ConfigurationError(f"grid step must be positive, got {step_deg}")
    if az_end < az_start or el_end < el_start:
        raise ConfigurationError(
            f"empty grid range: azimuth [{az_start}, {az_end}], elevation [{el_start}, {el_end}]"
        )
    if az_start < 0 or az_end >= 360 or el_start < 0 or el_end > 90:
        raise ConfigurationError("grid range outside [0, 360) x [0, 90]")
    try:
        return DirectionGrid(
            azimuth_samples=_samples(az_start, az_end, step_deg),
            elevation_samples=_samples(el_start, el_end, step_deg),
        )
    except ValueError as e:
        raise ConfigurationError(f"invalid grid: {e}") from e


def full_direction_grid(step_deg: float = 1.0) -> DirectionGrid:
    """The whole [0, 360) x [0, 90) domain; 360 x 90 points at one degree."""
    return build_grid(0.0, 360.0 - step_deg, 0.0, 90.0 - step_deg, step_deg)


def _snap(value: float, step: float) -> float:
    return round(round(value / step) * step, _ROUND_DECIMALS)


def _rectangles_overlap(a: Tuple[float, ...], b: Tuple[float, ...]) -> bool:
    return a[0] <= b[1] and b[0] <= a[1] and a[2] <= b[3] and b[2] <= a[3]


def build_refined_grid(
    centers: Sequence[Direction],
    coarse_step: float,
    fine_step: float,
    window_cells: int = 2,
) -> GridUnion:
    """
    Fine grid covering +/- window_cells coarse cells around each center.

    Samples sit on the global fine lattice (multiples of fine_step). Windows that
    cross the 0/360 seam are split; overlapping windows are merged into their
    bounding box.
    """
    if fine_step <= 0 or fine_step >= coarse_step:
        raise ConfigurationError(f"fine step {fine_step} must be positive and below the coarse step {coarse_step}")
    if window_cells < 1:
        raise ConfigurationError("window_cells must be >= 1")
    if not centers:
        raise DimensionError("refinement needs at least one center")

    half = window_cells * coarse_step
    az_top = _snap(360.0 - fine_step, fine_step)
    el_top = _snap(90.0 - fine_step, fine_step)

    rects: List[Tuple[float, float, float, float]] = []
    for center in centers:
        az_lo = _snap(center.azimuth_deg - half, fine_step)
        az_hi = _snap(center.azimuth_deg + half, fine_step)
        el_lo = max(0.0, _snap(center.elevation_deg - half, fine_step))
        el_hi = min(el_top, _snap(center.elevation_deg + half, fine_step))
        if az_lo < 0:
            rects.append((_snap(az_lo + 360.0, fine_step), az_top, el_lo, el_hi))
            rects.append((0.0, az_hi, el_lo, el_hi))
        elif az_hi > az_top:
            rects.append((az_lo, az_top, el_lo, el_hi))
            rects.append((0.0, _snap(az_hi - 360.0, fine_step), el_lo, el_hi))
        else:
            rects.append((az_lo, az_hi, el_lo, el_hi))

    merged = True
    while merged:
        merged = False
        for i in range(len(rects)):
            for j in range(i + 1, len(rects)):
                if _rectangles_overlap(rects[i], rects[j]):
                    a, b = rects[i], rects[j]
                    rects[i] = (min(a[0], b[0]), max(a[1], b[1]), min(a[2], b[2]), max(a[3], b[3]))
                    del rects[j]
                    merged = True
                    break
            if merged:
                break

    rects.sort(key=lambda r: (r[2], r[0]))
    return GridUnion(patches=tuple(build_grid(r[0], r[1], r[2], r[3], fine_step) for r in rects))


# =============================================================================
# SOLVER
# =============================================================================

class SolverConfig(BaseModel):
    """Settings of the group-l1 ADMM solver."""
    beta: Optional[float] = Field(None, ge=0, description="Residual bound; pipelines derive it from the noise when unset")
    max_iterations: int = Field(20000, ge=1)
    feasibility_tolerance: float = Field(1e-3, gt=0, description="Relative slack allowed on ||Y - DS|| <= beta")
    objective_tolerance: float = Field(1e-3, gt=0, description="Relative duality gap accepted as optimal")
    rho: float = Field(1.0, gt=0, description="Initial ADMM penalty on the splitting constraints")
    adaptive_rho: bool = Field(True, description="Rebalance rho from the primal and dual residuals")
    check_every: int = Field(10, ge=1, description="Iterations between convergence checks")
    working_set_size: int = Field(
        64, ge=1, description="Columns solved for at first; columns violating the dual are added as needed"
    )
    min_beta_ratio: float = Field(1e-2, ge=0, description="beta relative to ||Y||_F used when sigma^2 is zero")
    normalize_columns: bool = Field(False, description="Scale dictionary columns to unit norm before solving")


class RowSparseSolution(BaseModel):
    """Coefficient matrix S of the group-l1 program plus solver diagnostics."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    coefficients: np.ndarray = Field(..., description="P x K coefficient matrix")
    residual_norm: float = Field(..., ge=0, description="||Y - D S||_F")
    objective: float = Field(..., ge=0, description="sum_i ||S(i, :)||_2")
    iterations: int = Field(..., ge=0)
    converged: bool
    duality_gap_estimate: float
    beta: float = Field(..., ge=0)


def group_shrink(G: np.ndarray, threshold: float) -> np.ndarray:
    """Row-wise proximal map of threshold * sum_i ||row_i||_2."""
    norms = np.linalg.norm(G, axis=1)
    factor = np.maximum(0.0, 1.0 - threshold / np.maximum(norms, np.finfo(float).tiny))
    return G * factor[:, np.newaxis]


def _ball_projection(W: np.ndarray, center: np.ndarray, radius: float) -> np.ndarray:
    offset = W - center
    dist = np.linalg.norm(offset)
    if dist <= radius:
        return W
    return center + offset * (radius / dist)


def _range_analysis(D: np.ndarray, Y: np.ndarray) -> Tuple[float, float]:
    """Spectral norm of D and the distance from Y to the column space of D."""
    u, s, _ = np.linalg.svd(D, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        return 0.0, float(np.linalg.norm(Y))
    rank = int(np.sum(s > s[0] * max(D.shape) * np.finfo(float).eps))
    u_r = u[:, :rank]
    distance = float(np.linalg.norm(Y - u_r @ (u_r.conj().T @ Y)))
    return float(s[0]), distance


def _restore_feasibility(U: np.ndarray, Dw: np.ndarray, Y: np.ndarray, beta: float) -> Tuple[np.ndarray, float]:
    """
    Pull U back inside ||Y - Dw U|| <= beta with a least-squares correction.

    The correction lives on the support of U when that suffices, otherwise on
    all working columns, and is scaled so the residual lands on the ball.
    """
    R = Y - Dw @ U
    r = float(np.linalg.norm(R))
    if r <= beta:
        return U, r
    support = np.flatnonzero(np.linalg.norm(U, axis=1) > 0)
    for columns in (support, np.arange(Dw.shape[1])):
        if columns.size == 0:
            continue
        delta = np.linalg.lstsq(Dw[:, columns], R, rcond=None)[0]
        fitted = Dw[:, columns] @ delta
        leftover_sq = float(np.linalg.norm(R - fitted) ** 2)
        if leftover_sq > beta * beta:
            continue
        gamma = 1.0 - np.sqrt(beta * beta - leftover_sq) / float(np.linalg.norm(fitted))
        repaired = U.copy()
        repaired[columns] += gamma * delta
        return repaired, float(np.linalg.norm(Y - Dw @ repaired))
    return U, r


class _WorkingSet:
    """Columns currently in the ADMM subproblem plus the Woodbury factor of I + Dw^H Dw."""

    def __init__(self, D: np.ndarray, columns: np.ndarray):
        self.D = D
        self.columns = np.sort(columns)
        self.Dw = D[:, self.columns]
        # (I + Dw^H Dw)^-1 = I - Dw^H G Dw with G = (I + Dw Dw^H)^-1
        rows = D.shape[0]
        self.G = np.linalg.inv(np.eye(rows, dtype=D.dtype) + self.Dw @ self.Dw.conj().T)

    def solve(self, rhs: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """S = (I + Dw^H Dw)^-1 rhs together with Dw S = G Dw rhs."""
        GDr = self.G @ (self.Dw @ rhs)
        return rhs - self.Dw.conj().T @ GDr, GDr

    def grown(self, extra: np.ndarray) -> Tuple["_WorkingSet", np.ndarray]:
        """Working set with extra columns, plus where each old-then-new column now sits."""
        merged = np.concatenate([self.columns, extra])
        order = np.argsort(merged, kind="stable")
        positions = np.empty(merged.size, dtype=int)
        positions[order] = np.arange(merged.size)
        return _WorkingSet(self.D, merged), positions


def _initial_columns(D: np.ndarray, Y: np.ndarray, size: int) -> np.ndarray:
    n_points = D.shape[1]
    if n_points <= size:
        return np.arange(n_points)
    correlation = np.linalg.norm(D.conj().T @ Y, axis=1)
    # stable so equal scores keep grid order
    return np.argsort(-correlation, kind="stable")[:size]


def solve_group_l1(Y: np.ndarray, D: np.ndarray, config: SolverConfig) -> RowSparseSolution:
    """
    Minimize the sum of row l2-norms of S subject to ||Y - D S||_F <= beta.

    ADMM on the splitting S = U, D S = Z with a row shrinkage on U and a ball
    projection on Z. The subproblem starts from the columns best correlated
    with Y and grows by the columns whose dual constraint ||D_i^H L|| <= 1 is
    violated. Convergence is declared when the (repaired) iterate is feasible
    within feasibility_tolerance and the duality gap over the whole dictionary
    is below objective_tolerance (both relative). Otherwise the last iterate is
    returned with converged=False.
    """
    if config.beta is None:
        raise ConfigurationError("solve_group_l1 needs an explicit beta")
    Y = np.asarray(Y)
    if Y.ndim == 1:
        Y = Y[:, np.newaxis]
    D = np.asarray(D)
    if D.ndim != 2 or D.shape[0] != Y.shape[0]:
        raise DimensionError(f"dictionary shape {D.shape} incompatible with data shape {Y.shape}")
    if not (np.all(np.isfinite(Y)) and np.all(np.isfinite(D))):
        raise SolverError("data or dictionary contains non-finite values")

    is_real = not (np.iscomplexobj(Y) or np.iscomplexobj(D))
    dtype = np.float64 if is_real else np.complex128
    Y = Y.astype(dtype, copy=False)
    D = D.astype(dtype, copy=False)
    n_cols = Y.shape[1]
    n_points = D.shape[1]
    beta = float(config.beta)

    y_norm = float(np.linalg.norm(Y))
    if y_norm <= beta:
        logger.debug("[SOLVER] ||Y|| = %.6g <= beta = %.6g, zero solution is optimal", y_norm, beta)
        return RowSparseSolution(
            coefficients=np.zeros((n_points, n_cols), dtype=dtype),
            residual_norm=y_norm,
            objective=0.0,
            iterations=0,
            converged=True,
            duality_gap_estimate=0.0,
            beta=beta,
        )

    spectral_norm, distance = _range_analysis(D, Y)
    if distance > beta * (1.0 + config.feasibility_tolerance):
        raise InfeasibleProblemError(
            f"beta = {beta:.6g} is below the distance {distance:.6g} from the data to the dictionary range"
        )

    # units where ||Y||_F = 1 and ||D||_2 = 1; S = S_n * y_norm / spectral_norm
    Dn = D / spectral_norm
    Yn = Y / y_norm
    bn = beta / y_norm
    feasible_radius = bn * (1.0 + config.feasibility_tolerance)

    ws = _WorkingSet(Dn, _initial_columns(Dn, Yn, config.working_set_size))
    m = ws.columns.size
    rho = config.rho
    U = np.zeros((m, n_cols), dtype=dtype)
    A = np.zeros((m, n_cols), dtype=dtype)
    Z = np.zeros_like(Yn)
    B = np.zeros_like(Yn)

    converged = False
    gap = np.inf
    last_checked = (U, ws.columns)
    iteration = 0
    for iteration in range(1, config.max_iterations + 1):
        S, DS = ws.solve(U - A + ws.Dw.conj().T @ (Z - B))
        U_prev, Z_prev = U, Z
        U = group_shrink(S + A, 1.0 / rho)
        Z = _ball_projection(DS + B, Yn, bn)
        A = A + S - U
        B = B + DS - Z

        if iteration % config.check_every != 0 and iteration != config.max_iterations:
            continue

        if not (np.all(np.isfinite(U)) and np.all(np.isfinite(B))):
            raise SolverError(f"non-finite iterate after {iteration} iterations")

        U_feasible, residual = _restore_feasibility(U, ws.Dw, Yn, bn)
        last_checked = (U_feasible, ws.columns)
        objective = float(np.sum(np.linalg.norm(U_feasible, axis=1)))

        Lam = rho * B
        correlation = np.linalg.norm(Dn.conj().T @ Lam, axis=1)
        dual_scale = max(1.0, float(np.max(correlation)))
        Lam_full = Lam / dual_scale
        dual_value = -float(np.vdot(Lam_full, Yn).real) - bn * float(np.linalg.norm(Lam_full))
        gap = objective - dual_value
        threshold = config.objective_tolerance * max(objective, 1e-12)
        if residual <= feasible_radius and gap <= threshold:
            converged = True
            break

        # the subproblem is solved but the full dual is not feasible: bring in the violators
        inside = np.zeros(n_points, dtype=bool)
        inside[ws.columns] = True
        working_scale = max(1.0, float(np.max(correlation[inside])))
        Lam_w = Lam / working_scale
        working_gap = objective - (-float(np.vdot(Lam_w, Yn).real) - bn * float(np.linalg.norm(Lam_w)))
        violators = np.flatnonzero(~inside & (correlation > 1.0))
        if residual <= feasible_radius and working_gap <= threshold and violators.size:
            extra = violators[np.argsort(-correlation[violators], kind="stable")[: config.working_set_size]]
            ws, positions = ws.grown(extra)
            m = ws.columns.size
            grown_U = np.zeros((m, n_cols), dtype=dtype)
            grown_A = np.zeros((m, n_cols), dtype=dtype)
            grown_U[positions[: U.shape[0]]] = U
            grown_A[positions[: A.shape[0]]] = A
            # new columns start at the scaled dual point of the S update
            grown_A[positions[U.shape[0]:]] = -(Dn[:, extra].conj().T @ B)
            U, A = grown_U, grown_A
            logger.debug("[SOLVER] working set grown to %d columns at iteration %d", m, iteration)
            continue

        if config.adaptive_rho:
            primal_res = np.sqrt(np.linalg.norm(S - U) ** 2 + np.linalg.norm(DS - Z) ** 2)
            dual_res = rho * np.linalg.norm((U - U_prev) + ws.Dw.conj().T @ (Z - Z_prev))
            if primal_res > 10.0 * dual_res:
                rho, A, B = 2.0 * rho, A / 2.0, B / 2.0
            elif dual_res > 10.0 * primal_res:
                rho, A, B = rho / 2.0, A * 2.0, B * 2.0

    U_final, final_columns = last_checked
    coefficients = np.zeros((n_points, n_cols), dtype=dtype)
    coefficients[final_columns] = U_final * (y_norm / spectral_norm)
    residual_norm = float(np.linalg.norm(Y - D @ coefficients))
    objective = float(np.sum(np.linalg.norm(coefficients, axis=1)))
    gap_estimate = float(gap * y_norm / spectral_norm) if np.isfinite(gap) else float("inf")
    if converged:
        logger.debug(
            "[SOLVER] converged in %d iterations on %d of %d columns, objective %.6g, gap %.3e",
            iteration, ws.columns.size, n_points, objective, gap_estimate,
        )
    else:
        logger.warning(
            "[SOLVER] no convergence after %d iterations: residual %.6g vs beta %.6g, gap %.3e",
            iteration, residual_norm, beta, gap_estimate,
        )
    return RowSparseSolution(
        coefficients=coefficients,
        residual_norm=residual_norm,
        objective=objective,
        iterations=iteration,
        converged=converged,
        duality_gap_estimate=gap_estimate,
        beta=beta,
    )


# =============================================================================
# SPECTRA AND PEAKS
# =============================================================================

class SpatialSpectrum(BaseModel):
    """Non-negative value per grid point; peaks mark source directions."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    grid: AnyGrid
    values: np.ndarray

    @model_validator(mode="after")
    def _check_values(self) -> "SpatialSpectrum":
        if self.values.shape != (self.grid.size,):
            raise ValueError(f"spectrum has {self.values.shape} values for {self.grid.size} grid points")
        if np.any(self.values < 0):
            raise ValueError("spectrum values must be non-negative")
        return self

    def to_records(self) -> List[dict]:
        az, el = self.grid.flat_angles_deg()
        return [
            {"azimuth_deg": float(a), "elevation_deg": float(e), "value": float(v)}
            for a, e, v in zip(az, el, self.values)
        ]


class PeakSelection(BaseModel):
    indices: Tuple[int, ...]
    filled: bool = Field(False, description="True when fewer than K local maxima existed")


PipelineTag = Literal["complex-element-space", "real-beamspace"]
MethodName = Literal["rb-l1svd", "c-l1svd", "rb-music"]


class DoaEstimate(BaseModel):
    """K estimated directions, sorted by descending spectrum value."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    directions: List[Direction]
    spectrum: SpatialSpectrum
    refined: bool = False
    pipeline_tag: PipelineTag
    method: MethodName
    wall_time_s: float = Field(0.0, ge=0)
    converged: bool = True
    solver_iterations: int = 0
    peaks_filled: bool = False
    beta: Optional[float] = None
    coarse_directions: Optional[List[Direction]] = None

    def summary(self) -> dict:
        """JSON-friendly view without the spectrum."""
        return {
            "method": self.method,
            "pipeline_tag": self.pipeline_tag,
            "directions": [d.model_dump() for d in self.directions],
            "coarse_directions": [d.model_dump() for d in self.coarse_directions] if self.coarse_directions else None,
            "refined": self.refined,
            "wall_time_s": self.wall_time_s,
            "converged": self.converged,
            "solver_iterations": self.solver_iterations,
            "peaks_filled": self.peaks_filled,
            "beta": self.beta,
        }


def spectrum_from_solution(solution: RowSparseSolution, grid: AnyGrid) -> SpatialSpectrum:
    """value_i = ||S(i, :)||_2."""
    if solution.coefficients.shape[0] != grid.size:
        raise DimensionError(
            f"solution has {solution.coefficients.shape[0]} rows for a grid of {grid.size} points"
        )
    return SpatialSpectrum(grid=grid, values=np.linalg.norm(solution.coefficients, axis=1))


def locate_peaks(spectrum: SpatialSpectrum, K: int) -> PeakSelection:
    """
    Flat indices of the K largest positive local maxima; ties go to the lower
    index. Falls back to the largest remaining values when maxima run out.
    """
    if K < 1:
        raise DimensionError("K must be >= 1")
    values = spectrum.values
    if not np.any(values > 0):
        raise NoPeaksError("no peaks: spectrum is identically zero")
    if K > values.size:
        raise DimensionError(f"cannot pick {K} peaks from {values.size} grid points")

    candidates = np.flatnonzero(spectrum.grid.local_maxima(values) & (values > 0))
    ranked = candidates[np.lexsort((candidates, -values[candidates]))]
    chosen = [int(i) for i in ranked[:K]]
    filled = len(chosen) < K
    if filled:
        rest = np.setdiff1d(np.arange(values.size), chosen)
        rest_ranked = rest[np.lexsort((rest, -values[rest]))]
        chosen += [int(i) for i in rest_ranked[:K - len(chosen)]]
        logger.warning("[PEAKS] only %d local maxima for K = %d, filled with largest remaining values", len(ranked), K)
    return PeakSelection(indices=tuple(chosen), filled=filled)


def extract_peaks(spectrum: SpatialSpectrum, K: int) -> List[Direction]:
    """Directions of the K largest 2-D local maxima of a spectrum."""
    selection = locate_peaks(spectrum, K)
    return [spectrum.grid.direction_at(i) for i in selection.indices]
