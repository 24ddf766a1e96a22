from typing import List, Literal, Optional, TypedDict

import numpy as np

from rbdoa.array_model import Direction, UcaGeometry
from rbdoa.sparse_solver import AnyGrid, SolverConfig, SpatialSpectrum


class EstimationState(TypedDict, total=False):
    """State shared by the nodes of the sparse estimation pipelines."""

    # Inputs
    pipeline_tag: Literal["complex-element-space", "real-beamspace"]
    snapshots: np.ndarray
    geometry: UcaGeometry
    source_count: int
    grid: AnyGrid
    config: SolverConfig
    sigma_sq: Optional[float]
    confidence: float
    refine: bool
    fine_step_deg: float
    window_cells: int

    # Stage outputs; arrays after "realify" must be real on the beamspace path
    singular_values: np.ndarray
    subspace_data: np.ndarray
    beamspace_data: np.ndarray
    stacked_data: np.ndarray
    data: np.ndarray
    dictionary: Optional[np.ndarray]
    beta: Optional[float]
    coefficients: np.ndarray
    converged: bool
    solver_iterations: int

    # Results
    spectrum: SpatialSpectrum
    directions: List[Direction]
    peaks_filled: bool
    refined: bool
    coarse_directions: Optional[List[Direction]]
