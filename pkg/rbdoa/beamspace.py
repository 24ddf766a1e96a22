"""
Phase-mode beamspace for uniform circular arrays.

Builds the excitation beamformer F_e^H = C_v V^H and the real-valued
beamformer F_r^H = W^H F_e^H, which maps an N-element steering vector onto a
real M' = 2M + 1 dimensional beamspace manifold b(phi, theta) up to the
aperture-sampling residual terms.
"""

import logging
import threading
from typing import List, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PrivateAttr
from scipy.special import jv

from rbdoa.array_model import Direction, UcaGeometry, steering_matrix_from_angles, steering_vector
from rbdoa.errors import DimensionError, GeometryError

logger = logging.getLogger(__name__)


# =============================================================================
# DOMAIN TYPES
# =============================================================================

class BeamspaceTransform(BaseModel):
    """
    The real beamformer F_r^H for one geometry.

    Immutable apart from the running maximum of the imaginary residual seen by
    beamspace_manifold, which is updated under a lock.
    """
    model_config = ConfigDict(arbitrary_types_allowed=True)

    geometry: UcaGeometry
    mode_order: int = Field(..., ge=1, description="Highest excited phase mode M")
    fr_matrix: np.ndarray = Field(..., description="Complex M' x N matrix F_r^H")
    max_observed_imag_residual: float = Field(0.0, ge=0, description="Largest ||Im b|| / ||Re b|| seen so far")

    _lock: threading.Lock = PrivateAttr(default_factory=threading.Lock)

    @property
    def beam_count(self) -> int:
        return 2 * self.mode_order + 1

    def record_residual(self, residual: float) -> None:
        with self._lock:
            if residual > self.max_observed_imag_residual:
                self.max_observed_imag_residual = float(residual)


class ModeResidualReport(BaseModel):
    """Principal Bessel term of one phase mode against its sampling residual."""
    mode: int
    principal_magnitude: float = Field(..., ge=0, description="|J_m(zeta)|")
    residual_magnitude: float = Field(..., ge=0, description="Sum over q of |J_{Nq-m}| + |J_{Nq+m}|")
    q_terms_used: int = Field(..., ge=1)


# =============================================================================
# OPERATIONS
# =============================================================================

def max_mode_order(geom: UcaGeometry) -> int:
    """Highest usable phase mode, M = floor(k0 r)."""
    # the small guard keeps exact integers (k0 r = 3.0) from flooring to 2
    order = int(np.floor(geom.wavenumber_radius + 1e-9))
    if order < 1:
        raise GeometryError(
            f"array too small electrically: k0 r = {geom.wavenumber_radius:.4f} gives M = {order} < 1"
        )
    return order


def phase_mode_weights(geom: UcaGeometry, m: int) -> np.ndarray:
    """
    Weight vector w_m whose conjugate transpose is (1/N)[e^{j m gamma_0}, ..., e^{j m gamma_{N-1}}].
    """
    if abs(m) > geom.n_sensors / 2:
        raise GeometryError(f"mode {m} aliases on a {geom.n_sensors}-element array (|m| must be <= N/2)")
    return np.exp(-1j * m * geom.sensor_angles) / geom.n_sensors


def _check_sensor_count(geom: UcaGeometry, mode_order: int) -> None:
    if geom.n_sensors < 2 * mode_order:
        raise GeometryError(
            f"mode order M = {mode_order} needs at least N = {2 * mode_order} sensors, "
            f"array has {geom.n_sensors}"
        )
    if geom.n_sensors == 2 * mode_order:
        logger.warning(
            "[BEAMSPACE] N = 2M = %d: modes +M and -M alias and F_r^H rows are not orthonormal",
            geom.n_sensors,
        )


def _mode_indices(mode_order: int) -> np.ndarray:
    return np.arange(-mode_order, mode_order + 1)


def build_Fe(geom: UcaGeometry, mode_order: int) -> np.ndarray:
    """Excitation beamformer F_e^H = C_v V^H with C_v = diag(j^{-|m|}), m = -M..M."""
    _check_sensor_count(geom, mode_order)
    modes = _mode_indices(mode_order)
    V = np.sqrt(geom.n_sensors) * np.column_stack([phase_mode_weights(geom, m) for m in modes])
    # j^{-|m|} cycles through 1, -j, -1, j
    c_v = np.array([1, -1j, -1, 1j])[np.abs(modes) % 4]
    return c_v[:, np.newaxis] * V.conj().T


def build_W(mode_order: int) -> np.ndarray:
    """
    Unitary M' x M' matrix of columns v(alpha_k)/sqrt(M'), alpha_k = 2 pi k / M'.

    v(phi) = [e^{-jM phi}, ..., 1, ..., e^{jM phi}]^T, so flipping the rows
    conjugates the matrix.
    """
    if mode_order < 1:
        raise GeometryError(f"mode order must be >= 1, got {mode_order}")
    modes = _mode_indices(mode_order)
    beam_count = modes.size
    alphas = 2.0 * np.pi * modes / beam_count
    return np.exp(1j * np.outer(modes, alphas)) / np.sqrt(beam_count)


def build_Fr(geom: UcaGeometry) -> BeamspaceTransform:
    """Real beamformer F_r^H = W^H F_e^H for the geometry's maximal mode order."""
    mode_order = max_mode_order(geom)
    fe_h = build_Fe(geom, mode_order)
    fr_h = build_W(mode_order).conj().T @ fe_h
    logger.debug(
        "[BEAMSPACE] built F_r^H: N=%d M=%d M'=%d", geom.n_sensors, mode_order, 2 * mode_order + 1
    )
    return BeamspaceTransform(geometry=geom, mode_order=mode_order, fr_matrix=fr_h)


def _relative_imag_residual(product: np.ndarray) -> np.ndarray:
    re_norm = np.linalg.norm(product.real, axis=0)
    im_norm = np.linalg.norm(product.imag, axis=0)
    return np.where(re_norm > 0, im_norm / np.where(re_norm > 0, re_norm, 1.0), im_norm)


def _check_transform(transform: BeamspaceTransform, geom: UcaGeometry) -> None:
    if transform.geometry != geom:
        raise DimensionError("beamspace transform was built for a different geometry")


def beamspace_manifold(transform: BeamspaceTransform, geom: UcaGeometry, direction: Direction) -> np.ndarray:
    """
    Real beamspace manifold b(phi, theta) = Re(F_r^H a(phi, theta)).

    The dropped imaginary part comes only from the aperture-sampling terms; its
    size relative to the real part is recorded on the transform.
    """
    _check_transform(transform, geom)
    product = transform.fr_matrix @ steering_vector(geom, direction)
    residual = float(_relative_imag_residual(product[:, np.newaxis])[0])
    transform.record_residual(residual)
    logger.debug(
        "[BEAMSPACE] b(%.3f, %.3f) imag residual %.3e",
        direction.azimuth_deg, direction.elevation_deg, residual,
    )
    return product.real.copy()


def beamspace_dictionary(
    transform: BeamspaceTransform,
    geom: UcaGeometry,
    azimuth_rad: np.ndarray,
    elevation_rad: np.ndarray,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Real beamspace matrix B = Re(F_r^H A) over many directions.

    Returns (B, per-column relative imaginary residual).
    """
    _check_transform(transform, geom)
    product = transform.fr_matrix @ steering_matrix_from_angles(geom, azimuth_rad, elevation_rad)
    residuals = _relative_imag_residual(product)
    if residuals.size:
        transform.record_residual(float(residuals.max()))
    return np.ascontiguousarray(product.real), residuals


def mode_residual(geom: UcaGeometry, m: int, direction: Direction, q_max: int) -> ModeResidualReport:
    """
    Compare the principal term |J_m(zeta)| of a phase mode with the truncated
    aperture-sampling residual sum_{q=1..q_max} |J_{Nq-m}(zeta)| + |J_{Nq+m}(zeta)|.
    """
    if q_max < 1:
        raise DimensionError("q_max must be >= 1")
    zeta = direction.zeta(geom)
    q = np.arange(1, q_max + 1)
    n = geom.n_sensors
    residual = float(np.sum(np.abs(jv(n * q - m, zeta)) + np.abs(jv(n * q + m, zeta))))
    return ModeResidualReport(
        mode=m,
        principal_magnitude=float(abs(jv(m, zeta))),
        residual_magnitude=residual,
        q_terms_used=q_max,
    )


def sampling_residual_bound(geom: UcaGeometry, mode_order: int, direction: Direction, q_max: int = 4) -> float:
    """
    Upper bound on ||F_e^H a - (principal part)||_2, i.e. sqrt(N) times the l2
    norm of the per-mode residuals. Bounds the imaginary part of F_r^H a since W is unitary.
    """
    residuals = np.array([
        mode_residual(geom, m, direction, q_max).residual_magnitude
        for m in range(-mode_order, mode_order + 1)
    ])
    return float(np.sqrt(geom.n_sensors) * np.linalg.norm(residuals))


class TransformDiagnostics(BaseModel):
    """Summary of a geometry's beamspace transform and its realness residual."""
    n_sensors: int
    radius_over_wavelength: float
    mode_order: int
    beam_count: int
    sensor_count_ok: bool = Field(..., description="N > 2M, so F_r^H has orthonormal rows")
    elevation_deg: float
    mode_residuals: List[ModeResidualReport]
    sampling_residual_bound: float
    measured_imag_residual: float = Field(..., description="Largest ||Im b|| / ||Re b|| over the sampled directions")
    directions_sampled: int


def transform_diagnostics(
    geom: UcaGeometry,
    elevation_deg: float = 90.0,
    n_directions: int = 1000,
    seed: int = 0,
    q_max: int = 4,
) -> TransformDiagnostics:
    """
    Mode order, per-mode residual table at one elevation, and the measured
    imaginary residual of F_r^H a over random directions.
    """
    transform = build_Fr(geom)
    direction = Direction(azimuth_deg=0.0, elevation_deg=elevation_deg)
    reports = [mode_residual(geom, m, direction, q_max) for m in range(transform.mode_order + 1)]

    rng = np.random.default_rng(seed)
    azimuth = rng.uniform(0.0, 2.0 * np.pi, n_directions)
    elevation = rng.uniform(0.0, np.pi / 2.0, n_directions)
    _, residuals = beamspace_dictionary(transform, geom, azimuth, elevation)

    return TransformDiagnostics(
        n_sensors=geom.n_sensors,
        radius_over_wavelength=geom.radius_over_wavelength,
        mode_order=transform.mode_order,
        beam_count=transform.beam_count,
        sensor_count_ok=geom.n_sensors > 2 * transform.mode_order,
        elevation_deg=elevation_deg,
        mode_residuals=reports,
        sampling_residual_bound=sampling_residual_bound(geom, transform.mode_order, direction, q_max),
        measured_imag_residual=float(residuals.max()) if residuals.size else 0.0,
        directions_sampled=n_directions,
    )
