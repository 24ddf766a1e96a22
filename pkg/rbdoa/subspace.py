"""
Signal-subspace reduction and noise bounds.

Both pipelines keep only the K dominant right singular directions of their
data before the sparse fit; the residual bound beta comes from the chi-square
law of the reduced noise.
"""

import logging
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.optimize import bisect
from scipy.special import gammainc

from rbdoa.errors import ConfigurationError, DimensionError, RealnessError

logger = logging.getLogger(__name__)

ComponentVarianceMode = Literal["real-part", "complex-entry"]


class ReducedData(BaseModel):
    """Data projected onto its K dominant right singular vectors, with the full spectrum."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    matrix: np.ndarray = Field(..., description="Reduced data, rows x K")
    source_count: int = Field(..., ge=1)
    singular_values: np.ndarray = Field(..., description="All singular values, descending")


class NoiseBound(BaseModel):
    """Residual bound beta with beta^2 = variance_per_component * chi2 quantile(confidence; dof)."""
    model_config = ConfigDict(frozen=True)

    beta: float = Field(..., ge=0)
    confidence: float = Field(..., gt=0, lt=1)
    dof: int = Field(..., ge=1)
    variance_per_component: float = Field(..., ge=0)


def _check_rank(K: int, shape: tuple) -> None:
    if not 1 <= K <= min(shape):
        raise DimensionError(f"source count K = {K} outside [1, {min(shape)}] for a {shape[0]}x{shape[1]} matrix")


def signal_subspace_reduce(X: np.ndarray, K: int) -> ReducedData:
    """X_SV = X V_s where V_s holds the right singular vectors of the K largest singular values."""
    X = np.asarray(X)
    if X.ndim != 2:
        raise DimensionError("signal_subspace_reduce expects a matrix")
    _check_rank(K, X.shape)
    _, singular_values, vh = np.linalg.svd(X, full_matrices=False)
    v_s = vh[:K].conj().T
    return ReducedData(matrix=X @ v_s, source_count=K, singular_values=singular_values)


def stack_real_imag(Y: np.ndarray) -> np.ndarray:
    """[Re(Y) | Im(Y)] as a real rows x 2K matrix."""
    Y = np.asarray(Y)
    return np.hstack([Y.real, Y.imag]).astype(float, copy=False)


def real_subspace_reduce(Ybar: np.ndarray, K: int) -> ReducedData:
    """Real-arithmetic counterpart of signal_subspace_reduce on a stacked beamspace matrix."""
    Ybar = np.asarray(Ybar)
    if np.iscomplexobj(Ybar):
        raise RealnessError("real_subspace_reduce received complex data")
    if Ybar.ndim != 2:
        raise DimensionError("real_subspace_reduce expects a matrix")
    _check_rank(K, Ybar.shape)
    _, singular_values, vh = np.linalg.svd(Ybar, full_matrices=False)
    v_s = vh[:K].T
    return ReducedData(matrix=Ybar @ v_s, source_count=K, singular_values=singular_values)


def chi2_quantile(confidence: float, dof: int, xtol: float = 1e-10) -> float:
    """Chi-square quantile by bisection on the regularized lower incomplete gamma function."""
    if not 0.0 < confidence < 1.0:
        raise ConfigurationError(f"confidence must lie in (0, 1), got {confidence}")
    if dof < 1:
        raise ConfigurationError(f"degrees of freedom must be >= 1, got {dof}")

    def excess(x: float) -> float:
        return gammainc(dof / 2.0, x / 2.0) - confidence

    upper = max(1.0, float(dof))
    while excess(upper) < 0:
        upper *= 2.0
    return float(bisect(excess, 0.0, upper, xtol=xtol, maxiter=500))


def noise_bound(
    sigma_sq: float,
    dof: int,
    confidence: float = 0.99,
    component_variance_mode: ComponentVarianceMode = "real-part",
) -> NoiseBound:
    """
    beta = sqrt(v * Q(confidence; dof)).

    sigma_sq is the complex noise variance. Each real component carries
    v = sigma^2 / 2: directly in "real-part" mode, and in "complex-entry" mode
    because every complex entry is counted as two real degrees of freedom in dof.
    """
    if sigma_sq <= 0:
        raise ConfigurationError(f"noise variance must be positive, got {sigma_sq}")
    if component_variance_mode not in ("real-part", "complex-entry"):
        raise ConfigurationError(f"unknown component variance mode {component_variance_mode!r}")
    variance = sigma_sq / 2.0
    quantile = chi2_quantile(confidence, dof)
    beta = float(np.sqrt(variance * quantile))
    logger.debug("[NOISE] beta=%.6g dof=%d confidence=%.3f mode=%s", beta, dof, confidence, component_variance_mode)
    return NoiseBound(beta=beta, confidence=confidence, dof=dof, variance_per_component=variance)


def estimate_noise_variance(singular_values: np.ndarray, K: int, n_rows: int, n_cols: int) -> float:
    """Noise-floor estimate: mean squared singular value beyond index K, divided by the column count."""
    singular_values = np.asarray(singular_values, dtype=float)
    available = min(n_rows, n_cols, singular_values.size)
    if K < 0 or K >= available:
        raise DimensionError(f"need more than K = {K} singular values, have {available}")
    tail = singular_values[K:available]
    return float(np.mean(tail ** 2) / n_cols)
