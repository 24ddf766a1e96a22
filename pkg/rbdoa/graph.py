"""
LangGraph workflows for the two sparse estimators.

    complex element space:  reduce -> dictionary -> noise_bound -> solve -> peaks [-> refine -> dictionary ...]
    real beamspace:         reduce -> beamspace -> realify -> real_reduce -> dictionary
                            -> noise_bound -> solve -> peaks [-> refine -> dictionary ...]

The refine node swaps in the fine union grid and loops back to the dictionary
stage, so refinement reuses the reduced data and the coarse beta.
"""

import logging
import time
from functools import lru_cache
from typing import Optional

import numpy as np
from langgraph.graph import END, START, StateGraph

from rbdoa.array_model import SnapshotMatrix, UcaGeometry, steering_matrix_from_angles
from rbdoa.beamspace import BeamspaceTransform, beamspace_dictionary, build_Fr
from rbdoa.errors import DimensionError, RealnessError
from rbdoa.sparse_solver import (
    AnyGrid,
    DoaEstimate,
    RowSparseSolution,
    SolverConfig,
    SpatialSpectrum,
    build_refined_grid,
    locate_peaks,
    solve_group_l1,
)
from rbdoa.state import EstimationState
from rbdoa.subspace import (
    estimate_noise_variance,
    noise_bound,
    real_subspace_reduce,
    signal_subspace_reduce,
    stack_real_imag,
)
from utils import log_pipeline_execution

logger = logging.getLogger(__name__)

ELEMENT_SPACE = "complex-element-space"
REAL_BEAMSPACE = "real-beamspace"


# =============================================================================
# DICTIONARY CACHE
# =============================================================================

def _freeze(array: np.ndarray) -> np.ndarray:
    array.flags.writeable = False
    return array


@lru_cache(maxsize=8)
def cached_transform(geom: UcaGeometry) -> BeamspaceTransform:
    """F_r^H per geometry, built once."""
    return build_Fr(geom)


@lru_cache(maxsize=32)
def element_dictionary(geom: UcaGeometry, grid: AnyGrid) -> np.ndarray:
    """Complex N x P manifold over the grid."""
    az, el = grid.flat_angles_deg()
    return _freeze(steering_matrix_from_angles(geom, np.deg2rad(az), np.deg2rad(el)))


@lru_cache(maxsize=32)
def real_beamspace_dictionary(geom: UcaGeometry, grid: AnyGrid) -> np.ndarray:
    """Real M' x P matrix B = Re(F_r^H A) over the grid."""
    az, el = grid.flat_angles_deg()
    B, _ = beamspace_dictionary(cached_transform(geom), geom, np.deg2rad(az), np.deg2rad(el))
    return _freeze(B)


# =============================================================================
# NODES
# =============================================================================

def _require_real(state: EstimationState, *keys: str) -> None:
    if state["pipeline_tag"] != REAL_BEAMSPACE:
        return
    for key in keys:
        value = state.get(key)
        if value is not None and np.iscomplexobj(value):
            raise RealnessError(f"complex array '{key}' reached a real beamspace stage")


def reduce_node(state: EstimationState) -> dict:
    X = state["snapshots"]
    K = state["source_count"]
    reduced = signal_subspace_reduce(X, K)
    update = {"singular_values": reduced.singular_values, "subspace_data": reduced.matrix}
    if state.get("sigma_sq") is None:
        sigma_sq = estimate_noise_variance(reduced.singular_values, K, X.shape[0], X.shape[1])
        # numerically rank-K data counts as noiseless
        if sigma_sq <= 1e-12 * reduced.singular_values[0] ** 2 / X.shape[1]:
            sigma_sq = 0.0
        logger.info("[PIPELINE] noise variance estimated from data: %.6g", sigma_sq)
        update["sigma_sq"] = sigma_sq
    if state["pipeline_tag"] == ELEMENT_SPACE:
        update["data"] = reduced.matrix
    return update


def beamspace_node(state: EstimationState) -> dict:
    transform = cached_transform(state["geometry"])
    return {"beamspace_data": transform.fr_matrix @ state["subspace_data"]}


def realify_node(state: EstimationState) -> dict:
    return {"stacked_data": stack_real_imag(state["beamspace_data"])}


def real_reduce_node(state: EstimationState) -> dict:
    _require_real(state, "stacked_data")
    reduced = real_subspace_reduce(state["stacked_data"], state["source_count"])
    return {"data": reduced.matrix}


def dictionary_node(state: EstimationState) -> dict:
    geom, grid = state["geometry"], state["grid"]
    if state["pipeline_tag"] == REAL_BEAMSPACE:
        D = real_beamspace_dictionary(geom, grid)
    else:
        D = element_dictionary(geom, grid)
    if state["config"].normalize_columns:
        # the spectrum then reads amplitudes of unit-norm atoms
        column_norms = np.linalg.norm(D, axis=0)
        D = D / np.where(column_norms > 0, column_norms, 1.0)
    _require_real(state, "data")
    if D.shape[0] != state["data"].shape[0]:
        raise DimensionError(f"dictionary rows {D.shape[0]} differ from data rows {state['data'].shape[0]}")
    return {"dictionary": D}


def noise_bound_node(state: EstimationState) -> dict:
    if state.get("beta") is not None:
        return {}
    config: SolverConfig = state["config"]
    if config.beta is not None:
        return {"beta": config.beta}

    Y = state["data"]
    sigma_sq = state.get("sigma_sq") or 0.0
    if sigma_sq <= 0:
        beta = config.min_beta_ratio * float(np.linalg.norm(Y))
        logger.info("[PIPELINE] zero noise variance, beta floored at %.3g ||Y||", config.min_beta_ratio)
        return {"beta": beta}

    K = state["source_count"]
    if state["pipeline_tag"] == REAL_BEAMSPACE:
        bound = noise_bound(sigma_sq, Y.shape[0] * K, state["confidence"], "real-part")
    else:
        bound = noise_bound(sigma_sq, 2 * Y.shape[0] * K, state["confidence"], "complex-entry")
    return {"beta": bound.beta}


def solve_node(state: EstimationState) -> dict:
    _require_real(state, "data", "dictionary")
    config = state["config"].model_copy(update={"beta": state["beta"]})
    solution: RowSparseSolution = solve_group_l1(state["data"], state["dictionary"], config)
    if state["pipeline_tag"] == REAL_BEAMSPACE and np.iscomplexobj(solution.coefficients):
        raise RealnessError("solver returned complex coefficients on the real beamspace path")
    return {
        "coefficients": solution.coefficients,
        "converged": state.get("converged", True) and solution.converged,
        "solver_iterations": state.get("solver_iterations", 0) + solution.iterations,
    }


def peaks_node(state: EstimationState) -> dict:
    grid = state["grid"]
    spectrum = SpatialSpectrum(grid=grid, values=np.linalg.norm(state["coefficients"], axis=1))
    selection = locate_peaks(spectrum, state["source_count"])
    return {
        "spectrum": spectrum,
        "directions": [grid.direction_at(i) for i in selection.indices],
        "peaks_filled": state.get("peaks_filled", False) or selection.filled,
    }


def refine_node(state: EstimationState) -> dict:
    coarse_step = state["grid"].step_deg
    if coarse_step is None:
        raise DimensionError("cannot refine a single-point grid")
    fine_grid = build_refined_grid(
        state["directions"], coarse_step, state["fine_step_deg"], state.get("window_cells", 2)
    )
    logger.debug("[PIPELINE] refining on %d points in %d patches", fine_grid.size, len(fine_grid.patches))
    return {
        "grid": fine_grid,
        "refined": True,
        "coarse_directions": state["directions"],
        "dictionary": None,
    }


def _after_peaks(state: EstimationState) -> str:
    if state.get("refine") and not state.get("refined"):
        return "refine"
    return END


# =============================================================================
# GRAPHS
# =============================================================================

def _add_shared_tail(graph: StateGraph, entry: str) -> None:
    graph.add_node("dictionary", dictionary_node)
    graph.add_node("noise_bound", noise_bound_node)
    graph.add_node("solve", solve_node)
    graph.add_node("peaks", peaks_node)
    graph.add_node("refine", refine_node)

    graph.add_edge(entry, "dictionary")
    graph.add_edge("dictionary", "noise_bound")
    graph.add_edge("noise_bound", "solve")
    graph.add_edge("solve", "peaks")
    graph.add_conditional_edges("peaks", _after_peaks, {"refine": "refine", END: END})
    graph.add_edge("refine", "dictionary")


def build_element_space_graph():
    """Complex element-space pipeline."""
    graph = StateGraph(EstimationState)
    graph.add_node("reduce", reduce_node)
    graph.add_edge(START, "reduce")
    _add_shared_tail(graph, "reduce")
    return graph.compile()


def build_beamspace_graph():
    """Real beamspace pipeline; every stage after realify runs in real arithmetic."""
    graph = StateGraph(EstimationState)
    graph.add_node("reduce", reduce_node)
    graph.add_node("beamspace", beamspace_node)
    graph.add_node("realify", realify_node)
    graph.add_node("real_reduce", real_reduce_node)

    graph.add_edge(START, "reduce")
    graph.add_edge("reduce", "beamspace")
    graph.add_edge("beamspace", "realify")
    graph.add_edge("realify", "real_reduce")
    _add_shared_tail(graph, "real_reduce")
    return graph.compile()


@lru_cache(maxsize=2)
def get_pipeline_graph(pipeline_tag: str):
    if pipeline_tag == REAL_BEAMSPACE:
        return build_beamspace_graph()
    return build_element_space_graph()


# =============================================================================
# ENTRY POINTS
# =============================================================================

def _as_array(X) -> np.ndarray:
    return X.entries if isinstance(X, SnapshotMatrix) else np.asarray(X)


def _resolve_sigma(X, sigma_sq: Optional[float]) -> Optional[float]:
    if sigma_sq is not None:
        return sigma_sq
    if isinstance(X, SnapshotMatrix):
        return X.noise_variance
    return None


def _run_pipeline(
    pipeline_tag: str,
    method: str,
    X,
    geom: UcaGeometry,
    K: int,
    grid: AnyGrid,
    config: SolverConfig,
    *,
    sigma_sq: Optional[float],
    confidence: float,
    fine_step_deg: Optional[float],
    window_cells: int,
    beta: Optional[float] = None,
    mark_refined: bool = False,
) -> DoaEstimate:
    entries = _as_array(X)
    if entries.ndim != 2 or entries.shape[0] != geom.n_sensors:
        raise DimensionError(f"snapshot matrix shape {entries.shape} does not match {geom.n_sensors} sensors")

    initial_state: EstimationState = {
        "pipeline_tag": pipeline_tag,
        "snapshots": entries,
        "geometry": geom,
        "source_count": K,
        "grid": grid,
        "config": config,
        "sigma_sq": _resolve_sigma(X, sigma_sq),
        "confidence": confidence,
        "refine": fine_step_deg is not None,
        "fine_step_deg": fine_step_deg or 0.0,
        "window_cells": window_cells,
        "beta": beta,
        "refined": False,
    }
    snapshot = {
        "pipeline": pipeline_tag,
        "n_sensors": geom.n_sensors,
        "n_snapshots": int(entries.shape[1]),
        "source_count": K,
        "grid_points": grid.size,
        "fine_step_deg": fine_step_deg,
    }
    with log_pipeline_execution(method, input_snapshot=snapshot) as run_log:
        start = time.perf_counter()
        final_state = get_pipeline_graph(pipeline_tag).invoke(initial_state)
        wall_time = time.perf_counter() - start

        estimate = DoaEstimate(
            directions=final_state["directions"],
            spectrum=final_state["spectrum"],
            refined=mark_refined or final_state.get("refined", False),
            pipeline_tag=pipeline_tag,
            method=method,
            wall_time_s=wall_time,
            converged=final_state["converged"],
            solver_iterations=final_state["solver_iterations"],
            peaks_filled=final_state["peaks_filled"],
            beta=final_state["beta"],
            coarse_directions=final_state.get("coarse_directions"),
        )
        metadata = {
            "wall_time_s": wall_time,
            "solver_iterations": estimate.solver_iterations,
            "beta": estimate.beta,
        }
        if estimate.converged:
            run_log.log_success(metadata)
        else:
            run_log.log_partial("solver did not converge", metadata)

    logger.info(
        "[PIPELINE] %s: %d directions in %.3f s (%d iterations%s)",
        method, len(estimate.directions), wall_time, estimate.solver_iterations,
        "" if estimate.converged else ", not converged",
    )
    return estimate


def c_l1_svd(
    X,
    geom: UcaGeometry,
    K: int,
    grid: AnyGrid,
    config: SolverConfig,
    *,
    sigma_sq: Optional[float] = None,
    confidence: float = 0.99,
    fine_step_deg: Optional[float] = None,
    window_cells: int = 2,
) -> DoaEstimate:
    """
    Complex element-space estimator on snapshot data X (SnapshotMatrix or N x T array).

    sigma_sq defaults to the SnapshotMatrix noise variance, or to an estimate
    from the data's singular values. Refinement runs when fine_step_deg is given.
    """
    return _run_pipeline(
        ELEMENT_SPACE, "c-l1svd", X, geom, K, grid, config,
        sigma_sq=sigma_sq, confidence=confidence,
        fine_step_deg=fine_step_deg, window_cells=window_cells,
    )


def rb_l1_svd(
    X,
    geom: UcaGeometry,
    K: int,
    grid: AnyGrid,
    config: SolverConfig,
    *,
    sigma_sq: Optional[float] = None,
    confidence: float = 0.99,
    fine_step_deg: Optional[float] = None,
    window_cells: int = 2,
) -> DoaEstimate:
    """Real beamspace estimator; same arguments as c_l1_svd."""
    return _run_pipeline(
        REAL_BEAMSPACE, "rb-l1svd", X, geom, K, grid, config,
        sigma_sq=sigma_sq, confidence=confidence,
        fine_step_deg=fine_step_deg, window_cells=window_cells,
    )


def refine_estimate(
    X,
    geom: UcaGeometry,
    K: int,
    coarse: DoaEstimate,
    config: SolverConfig,
    fine_step_deg: float,
    window_cells: int = 2,
    *,
    sigma_sq: Optional[float] = None,
    confidence: float = 0.99,
) -> DoaEstimate:
    """
    Re-solve a coarse sparse estimate on fine windows around its directions.

    The coarse beta is reused when the coarse estimate carries one.
    """
    coarse_step = coarse.spectrum.grid.step_deg
    if coarse_step is None:
        raise DimensionError("cannot refine a single-point grid")
    fine_grid = build_refined_grid(coarse.directions, coarse_step, fine_step_deg, window_cells)
    method = "rb-l1svd" if coarse.pipeline_tag == REAL_BEAMSPACE else "c-l1svd"
    refined = _run_pipeline(
        coarse.pipeline_tag, method, X, geom, K, fine_grid, config,
        sigma_sq=sigma_sq, confidence=confidence,
        fine_step_deg=None, window_cells=window_cells,
        beta=coarse.beta, mark_refined=True,
    )
    return refined.model_copy(update={"coarse_directions": coarse.directions})
