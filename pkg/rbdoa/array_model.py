"""
Uniform circular array data model.

Geometry, steering vectors and synthetic snapshot generation for K narrowband
far-field sources impinging on an N-element UCA:

    X = A(phi, theta) S + E

Angles are degrees at every public interface and radians internally.
"""

import logging
from typing import List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from rbdoa.errors import DimensionError

logger = logging.getLogger(__name__)


# =============================================================================
# DOMAIN TYPES
# =============================================================================

class UcaGeometry(BaseModel):
    """N omnidirectional sensors equally spaced on a circle of radius r."""
    model_config = ConfigDict(frozen=True)

    n_sensors: int = Field(..., ge=3, description="Sensor count N")
    radius_over_wavelength: float = Field(..., gt=0, description="Array radius in wavelengths r/lambda")

    @property
    def wavenumber_radius(self) -> float:
        """zeta_max = k0 r = 2 pi r / lambda."""
        return 2.0 * np.pi * self.radius_over_wavelength

    @property
    def sensor_angles(self) -> np.ndarray:
        """Angular positions gamma_n = 2 pi n / N in radians."""
        return 2.0 * np.pi * np.arange(self.n_sensors) / self.n_sensors


class Direction(BaseModel):
    """A direction of arrival in degrees. Azimuth is stored reduced modulo 360."""
    model_config = ConfigDict(frozen=True)

    azimuth_deg: float = Field(..., description="Azimuth phi, reduced into [0, 360)")
    elevation_deg: float = Field(..., description="Elevation theta measured from the array axis")

    @field_validator("azimuth_deg")
    @classmethod
    def _reduce_azimuth(cls, value: float) -> float:
        if not np.isfinite(value):
            raise ValueError("azimuth must be finite")
        reduced = float(np.mod(value, 360.0))
        # np.mod can round tiny negatives up to exactly 360.0
        return 0.0 if reduced >= 360.0 else reduced

    @field_validator("elevation_deg")
    @classmethod
    def _check_elevation(cls, value: float) -> float:
        """Closed at 90 so end-fire directions can be expressed; grids stop one step short of it."""
        if not (0.0 <= value <= 90.0):
            raise ValueError(f"elevation {value} outside [0, 90]")
        return float(value)

    @property
    def azimuth_rad(self) -> float:
        return float(np.deg2rad(self.azimuth_deg))

    @property
    def elevation_rad(self) -> float:
        return float(np.deg2rad(self.elevation_deg))

    def zeta(self, geom: UcaGeometry) -> float:
        """zeta = k0 r sin(theta) for this direction."""
        return geom.wavenumber_radius * float(np.sin(self.elevation_rad))


class SourceScenario(BaseModel):
    """K uncorrelated narrowband sources observed over T snapshots."""
    model_config = ConfigDict(frozen=True)

    directions: List[Direction] = Field(..., min_length=1, description="True source directions")
    source_kind: str = Field(
        "circular-gaussian",
        description="Waveform model: unit-power circular complex Gaussian per snapshot",
    )
    snr_db: float = Field(10.0, description="Per-sensor SNR, -10 log10(sigma^2)")
    n_snapshots: int = Field(..., ge=1, description="Snapshot count T")
    rng_seed: int = Field(0, description="Seed of the generator driving waveforms and noise")
    noiseless: bool = Field(False, description="Skip the noise term entirely (E = 0)")
    unit_amplitude: bool = Field(False, description="Force every source sample to 1 instead of drawing it")

    @field_validator("source_kind")
    @classmethod
    def _known_kind(cls, value: str) -> str:
        if value != "circular-gaussian":
            raise ValueError(f"unsupported source kind {value!r}")
        return value

    @model_validator(mode="after")
    def _no_duplicates(self) -> "SourceScenario":
        keys = [(d.azimuth_deg, d.elevation_deg) for d in self.directions]
        if len(set(keys)) != len(keys):
            raise ValueError("scenario contains duplicate directions")
        return self

    @property
    def n_sources(self) -> int:
        return len(self.directions)

    @property
    def noise_variance(self) -> float:
        return 0.0 if self.noiseless else float(10.0 ** (-self.snr_db / 10.0))


class SnapshotMatrix(BaseModel):
    """Array output X (N x T) plus the noise variance used to generate it."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    entries: np.ndarray = Field(..., description="Complex N x T data matrix")
    noise_variance: float = Field(..., ge=0, description="sigma^2 of the additive noise")
    source_waveforms: Optional[np.ndarray] = Field(None, description="K x T source matrix S, when synthesized")
    noise: Optional[np.ndarray] = Field(None, description="N x T noise matrix E, when synthesized")

    @model_validator(mode="after")
    def _check_shape(self) -> "SnapshotMatrix":
        if self.entries.ndim != 2:
            raise ValueError("snapshot entries must be a 2-D matrix")
        if self.noise is not None and self.noise.shape != self.entries.shape:
            raise ValueError("noise matrix shape differs from the data")
        return self

    @property
    def n_sensors(self) -> int:
        return self.entries.shape[0]

    @property
    def n_snapshots(self) -> int:
        return self.entries.shape[1]


# =============================================================================
# OPERATIONS
# =============================================================================

def steering_matrix_from_angles(
    geom: UcaGeometry,
    azimuth_rad: np.ndarray,
    elevation_rad: np.ndarray,
) -> np.ndarray:
    """
    Vectorized manifold: column p is exp(j zeta_p cos(phi_p - gamma_n)).

    Returns a complex N x P matrix for P angle pairs.
    """
    azimuth_rad = np.atleast_1d(np.asarray(azimuth_rad, dtype=float))
    elevation_rad = np.atleast_1d(np.asarray(elevation_rad, dtype=float))
    zeta = geom.wavenumber_radius * np.sin(elevation_rad)
    phase = zeta[np.newaxis, :] * np.cos(azimuth_rad[np.newaxis, :] - geom.sensor_angles[:, np.newaxis])
    return np.exp(1j * phase)


def steering_vector(geom: UcaGeometry, direction: Direction) -> np.ndarray:
    """Steering vector a(phi, theta) of length N with unit-modulus entries."""
    return steering_matrix_from_angles(
        geom, np.array([direction.azimuth_rad]), np.array([direction.elevation_rad])
    )[:, 0]


def manifold_matrix(geom: UcaGeometry, directions: Sequence[Direction]) -> np.ndarray:
    """Array manifold A = [a(phi_1, theta_1) ... a(phi_K, theta_K)] as an N x K matrix."""
    if len(directions) == 0:
        raise DimensionError("manifold_matrix needs at least one direction")
    az = np.array([d.azimuth_rad for d in directions])
    el = np.array([d.elevation_rad for d in directions])
    return steering_matrix_from_angles(geom, az, el)


def synthesize_snapshots(geom: UcaGeometry, scenario: SourceScenario) -> SnapshotMatrix:
    """
    Generate X = A S + E for a scenario.

    S holds i.i.d. unit-power circular complex Gaussian samples (or ones when
    unit_amplitude is set), E holds i.i.d. circular complex Gaussian noise of
    variance sigma^2 = 10^(-snr_db/10). Identical seeds give identical output.
    """
    rng = np.random.default_rng(scenario.rng_seed)
    K, T, N = scenario.n_sources, scenario.n_snapshots, geom.n_sensors

    if scenario.unit_amplitude:
        sources = np.ones((K, T), dtype=complex)
    else:
        sources = (rng.standard_normal((K, T)) + 1j * rng.standard_normal((K, T))) / np.sqrt(2.0)

    signal = manifold_matrix(geom, scenario.directions) @ sources

    sigma_sq = scenario.noise_variance
    if scenario.noiseless:
        noise = np.zeros((N, T), dtype=complex)
    else:
        noise = np.sqrt(sigma_sq / 2.0) * (rng.standard_normal((N, T)) + 1j * rng.standard_normal((N, T)))

    logger.debug(
        "[SYNTH] K=%d T=%d N=%d snr_db=%s sigma_sq=%.6g seed=%d",
        K, T, N, "inf" if scenario.noiseless else scenario.snr_db, sigma_sq, scenario.rng_seed,
    )
    return SnapshotMatrix(
        entries=signal + noise,
        noise_variance=sigma_sq,
        source_waveforms=sources,
        noise=noise,
    )


def array_pattern(geom: UcaGeometry, weights: np.ndarray, direction: Direction) -> complex:
    """Array pattern f = w^H a(phi, theta) for a weight vector w of length N."""
    weights = np.asarray(weights)
    if weights.shape != (geom.n_sensors,):
        raise DimensionError(f"weights must have length {geom.n_sensors}, got shape {weights.shape}")
    return complex(np.vdot(weights, steering_vector(geom, direction)))
