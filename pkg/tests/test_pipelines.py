import numpy as np
import pytest
from sqlmodel import Session, select

from models import PipelineExecutionLog
from rbdoa.array_model import Direction, SourceScenario, UcaGeometry, synthesize_snapshots
from rbdoa.errors import DimensionError, GeometryError, RealnessError
from rbdoa.graph import (
    REAL_BEAMSPACE,
    c_l1_svd,
    dictionary_node,
    element_dictionary,
    rb_l1_svd,
    real_beamspace_dictionary,
    real_reduce_node,
    refine_estimate,
    solve_node,
)
from rbdoa.harness import paired_errors, three_source_config
from rbdoa.sparse_solver import GridUnion, SolverConfig, build_grid

REGION = build_grid(100, 120, 30, 50, 1.0)
WIDE = build_grid(90, 170, 20, 80, 2.0)
PIPELINES = [c_l1_svd, rb_l1_svd]


def _noiseless(geom, directions, T=20, seed=0):
    return synthesize_snapshots(
        geom, SourceScenario(directions=directions, n_snapshots=T, noiseless=True, rng_seed=seed)
    )


def _noisy(geom, directions, snr_db, T=100, seed=0):
    return synthesize_snapshots(
        geom, SourceScenario(directions=directions, n_snapshots=T, snr_db=snr_db, rng_seed=seed)
    )


class TestDictionaries:
    def test_shapes_and_dtypes(self, reference_geometry):
        A = element_dictionary(reference_geometry, REGION)
        B = real_beamspace_dictionary(reference_geometry, REGION)
        assert A.shape == (13, 441) and np.iscomplexobj(A)
        assert B.shape == (13, 441) and B.dtype == np.float64

    def test_normalized_dictionary_has_unit_columns(self, reference_geometry, rng):
        state = {
            "pipeline_tag": REAL_BEAMSPACE,
            "geometry": reference_geometry,
            "grid": REGION,
            "config": SolverConfig(normalize_columns=True),
            "data": rng.standard_normal((13, 1)),
        }
        update = dictionary_node(state)
        assert set(update) == {"dictionary"}
        np.testing.assert_allclose(np.linalg.norm(update["dictionary"], axis=0), 1.0)

    def test_cached_and_read_only(self, reference_geometry):
        B = real_beamspace_dictionary(reference_geometry, REGION)
        assert real_beamspace_dictionary(reference_geometry, REGION) is B
        with pytest.raises(ValueError):
            B[0, 0] = 1.0


class TestNoiselessRecovery:
    @pytest.mark.parametrize("pipeline", PIPELINES)
    def test_single_on_grid_source(self, pipeline, reference_geometry):
        truth = Direction(azimuth_deg=110.0, elevation_deg=40.0)
        estimate = pipeline(_noiseless(reference_geometry, [truth]), reference_geometry, 1, REGION, SolverConfig())
        assert estimate.directions == [truth]
        assert estimate.converged
        assert not estimate.refined

    @pytest.mark.parametrize("pipeline", PIPELINES)
    def test_two_separated_on_grid_sources(self, pipeline, reference_geometry):
        truth = [Direction(azimuth_deg=100.0, elevation_deg=30.0), Direction(azimuth_deg=160.0, elevation_deg=70.0)]
        estimate = pipeline(_noiseless(reference_geometry, truth), reference_geometry, 2, WIDE, SolverConfig())
        assert estimate.converged
        key = lambda d: (d.azimuth_deg, d.elevation_deg)
        assert sorted(estimate.directions, key=key) == sorted(truth, key=key)

    def test_method_tags(self, reference_geometry):
        X = _noiseless(reference_geometry, [Direction(azimuth_deg=110.0, elevation_deg=40.0)])
        rb = rb_l1_svd(X, reference_geometry, 1, REGION, SolverConfig())
        c = c_l1_svd(X, reference_geometry, 1, REGION, SolverConfig())
        assert (rb.method, rb.pipeline_tag) == ("rb-l1svd", "real-beamspace")
        assert (c.method, c.pipeline_tag) == ("c-l1svd", "complex-element-space")
        assert rb.wall_time_s > 0 and c.wall_time_s > 0
        assert rb.beta > 0

    def test_extra_source_count_gives_weak_second_peak(self, reference_geometry):
        truth = Direction(azimuth_deg=110.0, elevation_deg=40.0)
        estimate = rb_l1_svd(_noiseless(reference_geometry, [truth]), reference_geometry, 2, REGION, SolverConfig())
        assert len(estimate.directions) == 2
        assert estimate.directions[0] == truth
        values = estimate.spectrum.values
        first = values[estimate.spectrum.grid.points.index(estimate.directions[0])]
        second = values[estimate.spectrum.grid.points.index(estimate.directions[1])]
        assert second < 0.2 * first


class TestNoisyRecovery:
    @pytest.mark.parametrize("pipeline", PIPELINES)
    def test_close_to_truth_at_high_snr(self, pipeline, reference_geometry):
        truth = Direction(azimuth_deg=110.0, elevation_deg=40.0)
        estimate = pipeline(_noisy(reference_geometry, [truth], 20.0), reference_geometry, 1, REGION, SolverConfig())
        d = estimate.directions[0]
        assert abs(d.azimuth_deg - 110.0) <= 1.0
        assert abs(d.elevation_deg - 40.0) <= 1.0

    def test_unknown_noise_variance_is_estimated(self, reference_geometry):
        truth = Direction(azimuth_deg=110.0, elevation_deg=40.0)
        X = _noisy(reference_geometry, [truth], 20.0)
        from_array = rb_l1_svd(X.entries, reference_geometry, 1, REGION, SolverConfig())
        assert from_array.beta > 0
        d = from_array.directions[0]
        assert abs(d.azimuth_deg - 110.0) <= 1.0 and abs(d.elevation_deg - 40.0) <= 1.0

    def test_explicit_beta_overrides_noise_bound(self, reference_geometry):
        X = _noisy(reference_geometry, [Direction(azimuth_deg=110.0, elevation_deg=40.0)], 10.0)
        estimate = rb_l1_svd(X, reference_geometry, 1, REGION, SolverConfig(beta=2.5))
        assert estimate.beta == 2.5

    def test_normalized_columns(self, reference_geometry):
        truth = Direction(azimuth_deg=110.0, elevation_deg=40.0)
        estimate = rb_l1_svd(
            _noiseless(reference_geometry, [truth]), reference_geometry, 1, REGION, SolverConfig(normalize_columns=True)
        )
        assert estimate.directions == [truth]


class TestThreeSourceScenario:
    @pytest.mark.parametrize("pipeline", PIPELINES)
    def test_converges_with_sub_degree_error(self, pipeline, reference_geometry, three_sources):
        grid = three_source_config().grid_region.build(1.0)
        X = _noisy(reference_geometry, three_sources, 20.0, seed=1)
        estimate = pipeline(X, reference_geometry, 3, grid, SolverConfig(), fine_step_deg=0.1)
        assert estimate.converged
        assert estimate.refined
        d_az, d_el = paired_errors(estimate.directions, three_sources)
        assert np.max(np.abs(d_az)) < 1.0
        assert np.max(np.abs(d_el)) < 1.0


class TestRefinement:
    def test_off_grid_source_recovered_on_fine_grid(self, reference_geometry):
        truth = Direction(azimuth_deg=110.1, elevation_deg=35.3)
        grid = build_grid(100, 120, 25, 45, 1.0)
        X = _noisy(reference_geometry, [truth], 20.0, seed=5)
        estimate = rb_l1_svd(X, reference_geometry, 1, grid, SolverConfig(), fine_step_deg=0.1)
        assert estimate.refined
        assert isinstance(estimate.spectrum.grid, GridUnion)
        assert estimate.coarse_directions is not None
        d = estimate.directions[0]
        assert abs(d.azimuth_deg - 110.1) <= 0.5
        assert abs(d.elevation_deg - 35.3) <= 0.5

    def test_refine_estimate_reuses_coarse_beta(self, reference_geometry):
        X = _noisy(reference_geometry, [Direction(azimuth_deg=110.1, elevation_deg=35.3)], 15.0, seed=2)
        coarse = c_l1_svd(X, reference_geometry, 1, REGION, SolverConfig())
        fine = refine_estimate(X, reference_geometry, 1, coarse, SolverConfig(), 0.1)
        assert fine.refined
        assert fine.beta == coarse.beta
        assert fine.coarse_directions == coarse.directions
        assert fine.pipeline_tag == coarse.pipeline_tag

    def test_on_grid_noiseless_source_is_a_fixed_point(self, reference_geometry):
        truth = Direction(azimuth_deg=110.0, elevation_deg=40.0)
        X = _noiseless(reference_geometry, [truth])
        coarse = rb_l1_svd(X, reference_geometry, 1, REGION, SolverConfig())
        fine = refine_estimate(X, reference_geometry, 1, coarse, SolverConfig(), 0.1)
        assert fine.directions == coarse.directions == [truth]

    def test_single_point_grid_cannot_refine(self, reference_geometry):
        grid = build_grid(110, 110, 40, 40, 1.0)
        X = _noiseless(reference_geometry, [Direction(azimuth_deg=110.0, elevation_deg=40.0)])
        with pytest.raises(DimensionError):
            rb_l1_svd(X, reference_geometry, 1, grid, SolverConfig(), fine_step_deg=0.1)


class TestGuards:
    def test_sensor_count_mismatch(self, reference_geometry, rng):
        X = rng.standard_normal((12, 20)) + 0j
        with pytest.raises(DimensionError):
            c_l1_svd(X, reference_geometry, 1, REGION, SolverConfig())

    def test_geometry_without_beamspace(self):
        geom = UcaGeometry(n_sensors=5, radius_over_wavelength=1.0)
        X = _noiseless(geom, [Direction(azimuth_deg=110.0, elevation_deg=40.0)])
        with pytest.raises(GeometryError):
            rb_l1_svd(X, geom, 1, REGION, SolverConfig())

    def test_real_stage_rejects_complex_data(self, rng):
        state = {"pipeline_tag": REAL_BEAMSPACE, "stacked_data": rng.standard_normal((13, 2)) + 1j, "source_count": 1}
        with pytest.raises(RealnessError):
            real_reduce_node(state)

    def test_real_solve_rejects_complex_dictionary(self, rng):
        state = {
            "pipeline_tag": REAL_BEAMSPACE,
            "data": rng.standard_normal((13, 1)),
            "dictionary": rng.standard_normal((13, 20)) * 1j,
            "config": SolverConfig(),
            "beta": 0.1,
        }
        with pytest.raises(RealnessError):
            solve_node(state)


def test_runs_recorded_when_enabled(recording, reference_geometry):
    X = _noiseless(reference_geometry, [Direction(azimuth_deg=110.0, elevation_deg=40.0)])
    rb_l1_svd(X, reference_geometry, 1, REGION, SolverConfig())
    with Session(recording) as session:
        rows = session.exec(select(PipelineExecutionLog)).all()
    assert len(rows) == 1
    assert rows[0].pipeline_name == "rb-l1svd"
    assert rows[0].status == "success"
    assert rows[0].input_snapshot["grid_points"] == 441
