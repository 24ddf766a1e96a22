import logging

import numpy as np
import pytest
from scipy.special import jv

from rbdoa.array_model import Direction, UcaGeometry, steering_matrix_from_angles, steering_vector
from rbdoa.beamspace import (
    beamspace_dictionary,
    beamspace_manifold,
    build_Fe,
    build_Fr,
    build_W,
    max_mode_order,
    mode_residual,
    phase_mode_weights,
    sampling_residual_bound,
    transform_diagnostics,
)
from rbdoa.errors import DimensionError, GeometryError
from tests.conftest import bessel_series

# (N, r/lambda) pairs covering M = 1..6 with N > 2M
GEOMETRIES = [(5, 0.2), (7, 0.35), (9, 0.5), (11, 0.7), (12, 0.85), (13, 1.0)]


def _random_directions(rng, count):
    return [Direction(azimuth_deg=rng.uniform(0, 360), elevation_deg=rng.uniform(0, 90)) for _ in range(count)]


class TestModeOrder:
    @pytest.mark.parametrize("radius, expected", [(1.0, 6), (0.5, 3), (0.2, 1)])
    def test_floor_of_k0r(self, radius, expected):
        assert max_mode_order(UcaGeometry(n_sensors=16, radius_over_wavelength=radius)) == expected

    def test_electrically_small_array_rejected(self):
        with pytest.raises(GeometryError):
            max_mode_order(UcaGeometry(n_sensors=8, radius_over_wavelength=0.1))


class TestPhaseModeWeights:
    def test_zero_mode_is_uniform(self):
        geom = UcaGeometry(n_sensors=4, radius_over_wavelength=0.5)
        np.testing.assert_allclose(phase_mode_weights(geom, 0), np.full(4, 0.25))

    def test_first_mode_on_four_elements(self):
        geom = UcaGeometry(n_sensors=4, radius_over_wavelength=0.5)
        np.testing.assert_allclose(phase_mode_weights(geom, 1), np.array([1, -1j, -1, 1j]) / 4, atol=1e-15)

    def test_modes_orthogonal(self, reference_geometry):
        for m in range(-6, 7):
            for n in range(-6, 7):
                inner = np.vdot(phase_mode_weights(reference_geometry, m), phase_mode_weights(reference_geometry, n))
                expected = 1 / 13 if m == n else 0.0
                assert abs(inner - expected) < 1e-14

    def test_aliasing_mode_rejected(self):
        geom = UcaGeometry(n_sensors=4, radius_over_wavelength=0.5)
        with pytest.raises(GeometryError):
            phase_mode_weights(geom, 3)


class TestExcitationBeamformer:
    def test_center_row_is_uniform(self, reference_geometry):
        fe = build_Fe(reference_geometry, 6)
        np.testing.assert_allclose(fe[6], np.ones(13) / np.sqrt(13))

    def test_broadside_maps_to_center_mode(self, reference_geometry):
        fe = build_Fe(reference_geometry, 6)
        a = steering_vector(reference_geometry, Direction(azimuth_deg=0.0, elevation_deg=0.0))
        expected = np.zeros(13)
        expected[6] = np.sqrt(13)
        np.testing.assert_allclose(fe @ a, expected, atol=1e-12)

    def test_rows_orthonormal(self, reference_geometry):
        fe = build_Fe(reference_geometry, 6)
        np.testing.assert_allclose(fe @ fe.conj().T, np.eye(13), atol=1e-12)

    def test_too_few_sensors(self):
        with pytest.raises(GeometryError):
            build_Fe(UcaGeometry(n_sensors=5, radius_over_wavelength=1.0), 6)

    def test_output_is_centro_hermitian_up_to_residual(self, reference_geometry, rng):
        fe = build_Fe(reference_geometry, 6)
        for d in _random_directions(rng, 50):
            v = fe @ steering_vector(reference_geometry, d)
            deviation = np.linalg.norm(v - np.flip(v.conj()))
            assert deviation <= 2 * sampling_residual_bound(reference_geometry, 6, d) + 1e-12


class TestRealBeamformer:
    @pytest.mark.parametrize("mode_order", [1, 2, 3, 6])
    def test_w_unitary_and_flip_conjugates(self, mode_order):
        W = build_W(mode_order)
        np.testing.assert_allclose(W.conj().T @ W, np.eye(2 * mode_order + 1), atol=1e-13)
        np.testing.assert_allclose(np.flipud(W), W.conj(), atol=1e-13)

    def test_single_mode_w(self):
        W = build_W(1)
        np.testing.assert_allclose(W[:, 1], np.ones(3) / np.sqrt(3))

    @pytest.mark.parametrize("n_sensors, radius", GEOMETRIES)
    def test_fr_rows_orthonormal(self, n_sensors, radius):
        geom = UcaGeometry(n_sensors=n_sensors, radius_over_wavelength=radius)
        transform = build_Fr(geom)
        fr = transform.fr_matrix
        assert fr.shape == (transform.beam_count, n_sensors)
        np.testing.assert_allclose(fr @ fr.conj().T, np.eye(transform.beam_count), atol=1e-12)

    def test_reference_shapes(self, reference_geometry):
        assert build_Fr(reference_geometry).fr_matrix.shape == (13, 13)
        assert build_Fr(UcaGeometry(n_sensors=8, radius_over_wavelength=0.5)).fr_matrix.shape == (7, 8)

    def test_too_few_sensors(self):
        with pytest.raises(GeometryError):
            build_Fr(UcaGeometry(n_sensors=5, radius_over_wavelength=1.0))

    def test_n_equal_2m_warns(self, caplog):
        with caplog.at_level(logging.WARNING, logger="rbdoa.beamspace"):
            transform = build_Fr(UcaGeometry(n_sensors=12, radius_over_wavelength=1.0))
        assert transform.mode_order == 6
        assert any("alias" in r.message for r in caplog.records)


class TestBeamspaceManifold:
    def test_broadside_vector(self, reference_geometry):
        transform = build_Fr(reference_geometry)
        b = beamspace_manifold(transform, reference_geometry, Direction(azimuth_deg=0.0, elevation_deg=0.0))
        np.testing.assert_allclose(b, np.ones(13), atol=1e-12)
        assert transform.max_observed_imag_residual < 1e-12

    def test_broadside_vector_scales_with_beam_count(self):
        geom = UcaGeometry(n_sensors=8, radius_over_wavelength=0.5)
        b = beamspace_manifold(build_Fr(geom), geom, Direction(azimuth_deg=0.0, elevation_deg=0.0))
        np.testing.assert_allclose(b, np.full(7, np.sqrt(8) / np.sqrt(7)), atol=1e-12)

    def test_output_is_real(self, reference_geometry):
        b = beamspace_manifold(build_Fr(reference_geometry), reference_geometry, Direction(azimuth_deg=10, elevation_deg=80))
        assert b.dtype == np.float64

    @pytest.mark.parametrize("n_sensors, radius", GEOMETRIES)
    def test_imaginary_part_within_sampling_bound(self, n_sensors, radius, rng):
        geom = UcaGeometry(n_sensors=n_sensors, radius_over_wavelength=radius)
        transform = build_Fr(geom)
        for d in _random_directions(rng, 200):
            product = transform.fr_matrix @ steering_vector(geom, d)
            bound = sampling_residual_bound(geom, transform.mode_order, d, q_max=8)
            assert np.linalg.norm(product.imag) <= bound + 1e-12

    def test_norm_nearly_azimuth_independent(self, reference_geometry):
        transform = build_Fr(reference_geometry)
        for elevation in (20.0, 50.0, 85.0):
            ref = Direction(azimuth_deg=0.0, elevation_deg=elevation)
            slack = 2 * sampling_residual_bound(reference_geometry, 6, ref)
            norms = [
                np.linalg.norm(beamspace_manifold(
                    transform, reference_geometry, Direction(azimuth_deg=az, elevation_deg=elevation)
                ))
                for az in np.linspace(0, 360, 37)
            ]
            assert max(norms) - min(norms) <= slack + 1e-12

    def test_dictionary_matches_manifold(self, reference_geometry, rng):
        transform = build_Fr(reference_geometry)
        directions = _random_directions(rng, 5)
        az = np.array([d.azimuth_rad for d in directions])
        el = np.array([d.elevation_rad for d in directions])
        B, residuals = beamspace_dictionary(transform, reference_geometry, az, el)
        assert B.shape == (13, 5)
        assert residuals.shape == (5,)
        for i, d in enumerate(directions):
            np.testing.assert_allclose(B[:, i], beamspace_manifold(transform, reference_geometry, d), atol=1e-13)

    def test_dictionary_residual_is_recorded(self, reference_geometry):
        transform = build_Fr(reference_geometry)
        _, residuals = beamspace_dictionary(
            transform, reference_geometry, np.deg2rad([10.0, 200.0]), np.deg2rad([80.0, 60.0])
        )
        assert transform.max_observed_imag_residual == pytest.approx(residuals.max())

    def test_other_geometry_rejected(self, reference_geometry):
        transform = build_Fr(reference_geometry)
        other = UcaGeometry(n_sensors=16, radius_over_wavelength=1.0)
        with pytest.raises(DimensionError):
            beamspace_manifold(transform, other, Direction(azimuth_deg=0.0, elevation_deg=10.0))

    def test_dictionary_consistent_with_element_manifold(self, reference_geometry):
        transform = build_Fr(reference_geometry)
        az, el = np.deg2rad([30.0, 140.0]), np.deg2rad([40.0, 70.0])
        B, _ = beamspace_dictionary(transform, reference_geometry, az, el)
        A = steering_matrix_from_angles(reference_geometry, az, el)
        np.testing.assert_allclose(B, (transform.fr_matrix @ A).real)


class TestBessel:
    @pytest.mark.parametrize("m", [0, 1, 2, 5, 6, 7, 13, 19, 20])
    def test_scipy_matches_series(self, m):
        for x in np.linspace(0.0, 2 * np.pi, 25):
            assert jv(m, x) == pytest.approx(bessel_series(m, x), abs=1e-10)

    def test_negative_order_symmetry(self):
        for m in range(1, 8):
            assert jv(-m, 3.3) == pytest.approx((-1) ** m * jv(m, 3.3), abs=1e-14)


class TestModeResidual:
    def test_broadside_has_no_residual(self, reference_geometry):
        report = mode_residual(reference_geometry, 0, Direction(azimuth_deg=0.0, elevation_deg=0.0), q_max=3)
        assert report.principal_magnitude == pytest.approx(1.0)
        assert report.residual_magnitude == pytest.approx(0.0, abs=1e-15)

    def test_highest_mode_single_term(self, reference_geometry):
        report = mode_residual(reference_geometry, 6, Direction(azimuth_deg=0.0, elevation_deg=90.0), q_max=1)
        expected = abs(bessel_series(7, 2 * np.pi)) + abs(bessel_series(19, 2 * np.pi))
        assert report.residual_magnitude == pytest.approx(expected, rel=1e-8)
        assert report.principal_magnitude == pytest.approx(abs(bessel_series(6, 2 * np.pi)), rel=1e-8)

    def test_monotone_in_q_max(self, reference_geometry):
        d = Direction(azimuth_deg=0.0, elevation_deg=70.0)
        values = [mode_residual(reference_geometry, 4, d, q).residual_magnitude for q in range(1, 6)]
        assert all(b >= a for a, b in zip(values, values[1:]))

    def test_q_max_must_be_positive(self, reference_geometry):
        with pytest.raises(DimensionError):
            mode_residual(reference_geometry, 0, Direction(azimuth_deg=0.0, elevation_deg=10.0), q_max=0)


class TestTransformDiagnostics:
    def test_reference_geometry(self, reference_geometry):
        info = transform_diagnostics(reference_geometry, n_directions=200)
        assert info.mode_order == 6
        assert info.beam_count == 13
        assert info.sensor_count_ok
        assert [r.mode for r in info.mode_residuals] == list(range(7))
        assert info.directions_sampled == 200
        assert 0.0 < info.measured_imag_residual < 1.0

    def test_seed_makes_measurement_repeatable(self, reference_geometry):
        a = transform_diagnostics(reference_geometry, n_directions=100, seed=4)
        b = transform_diagnostics(reference_geometry, n_directions=100, seed=4)
        assert a.measured_imag_residual == b.measured_imag_residual

    def test_boundary_geometry_flagged(self):
        info = transform_diagnostics(UcaGeometry(n_sensors=12, radius_over_wavelength=1.0), n_directions=10)
        assert not info.sensor_count_ok
