"""
Real-beamspace sparse direction-of-arrival estimation for uniform circular arrays.

Exposes the element-space and real-beamspace group-sparse estimators, the
RB-MUSIC baseline and the Monte Carlo sweep harness.
"""

from .array_model import Direction, SnapshotMatrix, SourceScenario, UcaGeometry, synthesize_snapshots
from .baselines import rb_music, rb_music_spectrum
from .graph import c_l1_svd, rb_l1_svd, refine_estimate
from .harness import ExperimentConfig, GridRegion, run_sweep
from .sparse_solver import DirectionGrid, DoaEstimate, SolverConfig, build_grid, solve_group_l1

__all__ = [
    "Direction",
    "DirectionGrid",
    "DoaEstimate",
    "ExperimentConfig",
    "GridRegion",
    "SnapshotMatrix",
    "SolverConfig",
    "SourceScenario",
    "UcaGeometry",
    "build_grid",
    "c_l1_svd",
    "rb_l1_svd",
    "rb_music",
    "rb_music_spectrum",
    "refine_estimate",
    "run_sweep",
    "solve_group_l1",
    "synthesize_snapshots",
]
