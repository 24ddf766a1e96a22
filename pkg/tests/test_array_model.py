import numpy as np
import pytest
from pydantic import ValidationError

from rbdoa.array_model import (
    Direction,
    SourceScenario,
    UcaGeometry,
    array_pattern,
    manifold_matrix,
    steering_vector,
    synthesize_snapshots,
)
from rbdoa.beamspace import phase_mode_weights
from rbdoa.errors import DimensionError
from tests.conftest import bessel_series


class TestGeometry:
    def test_sensor_angles_increasing_in_circle(self, reference_geometry):
        gamma = reference_geometry.sensor_angles
        assert gamma.shape == (13,)
        assert gamma[0] == 0.0
        assert np.all(np.diff(gamma) > 0)
        assert gamma[-1] < 2 * np.pi

    def test_wavenumber_radius(self, reference_geometry):
        assert reference_geometry.wavenumber_radius == pytest.approx(2 * np.pi)

    @pytest.mark.parametrize("n_sensors, radius", [(2, 1.0), (13, 0.0), (13, -1.0)])
    def test_rejects_invalid_geometry(self, n_sensors, radius):
        with pytest.raises(ValidationError):
            UcaGeometry(n_sensors=n_sensors, radius_over_wavelength=radius)


class TestDirection:
    def test_azimuth_reduced_modulo_360(self):
        assert Direction(azimuth_deg=370.0, elevation_deg=10.0).azimuth_deg == pytest.approx(10.0)
        assert Direction(azimuth_deg=-10.0, elevation_deg=10.0).azimuth_deg == pytest.approx(350.0)
        assert Direction(azimuth_deg=360.0, elevation_deg=10.0).azimuth_deg == 0.0

    @pytest.mark.parametrize("elevation", [-1.0, 90.5])
    def test_elevation_outside_domain_rejected(self, elevation):
        with pytest.raises(ValidationError):
            Direction(azimuth_deg=0.0, elevation_deg=elevation)

    def test_zeta(self, reference_geometry):
        d = Direction(azimuth_deg=0.0, elevation_deg=30.0)
        assert d.zeta(reference_geometry) == pytest.approx(np.pi)


class TestSteeringVector:
    def test_broadside_is_all_ones(self, reference_geometry):
        a = steering_vector(reference_geometry, Direction(azimuth_deg=77.0, elevation_deg=0.0))
        np.testing.assert_allclose(a, np.ones(13))

    def test_full_period_phase_at_first_sensor(self, reference_geometry):
        a = steering_vector(reference_geometry, Direction(azimuth_deg=0.0, elevation_deg=90.0))
        assert a[0] == pytest.approx(1.0 + 0.0j)

    def test_small_array_entry(self):
        geom = UcaGeometry(n_sensors=4, radius_over_wavelength=0.5 / (2 * np.pi))
        a = steering_vector(geom, Direction(azimuth_deg=45.0, elevation_deg=90.0))
        assert a[1] == pytest.approx(np.exp(1j * 0.5 * np.cos(np.deg2rad(-45.0))))

    def test_unit_modulus(self, reference_geometry, rng):
        for _ in range(20):
            d = Direction(azimuth_deg=rng.uniform(0, 360), elevation_deg=rng.uniform(0, 90))
            np.testing.assert_allclose(np.abs(steering_vector(reference_geometry, d)), 1.0, atol=1e-15)

    def test_azimuth_periodic(self, reference_geometry):
        a = steering_vector(reference_geometry, Direction(azimuth_deg=30.0, elevation_deg=50.0))
        b = steering_vector(reference_geometry, Direction(azimuth_deg=390.0, elevation_deg=50.0))
        np.testing.assert_allclose(a, b, atol=1e-13)

    def test_rotation_by_sensor_spacing_shifts_cyclically(self, reference_geometry, rng):
        spacing = 360.0 / reference_geometry.n_sensors
        for _ in range(10):
            az, el = rng.uniform(0, 360), rng.uniform(0, 90)
            a = steering_vector(reference_geometry, Direction(azimuth_deg=az, elevation_deg=el))
            rotated = steering_vector(reference_geometry, Direction(azimuth_deg=az + spacing, elevation_deg=el))
            np.testing.assert_allclose(rotated, np.roll(a, 1), atol=1e-12)


class TestManifold:
    def test_columns_are_steering_vectors(self, reference_geometry, three_sources):
        A = manifold_matrix(reference_geometry, three_sources)
        assert A.shape == (13, 3)
        np.testing.assert_allclose(np.abs(A), 1.0, atol=1e-15)
        for i, d in enumerate(three_sources):
            np.testing.assert_allclose(A[:, i], steering_vector(reference_geometry, d))

    def test_identical_directions_give_identical_columns(self, reference_geometry):
        d = Direction(azimuth_deg=12.0, elevation_deg=34.0)
        A = manifold_matrix(reference_geometry, [d, d])
        np.testing.assert_array_equal(A[:, 0], A[:, 1])

    def test_empty_list_rejected(self, reference_geometry):
        with pytest.raises(DimensionError):
            manifold_matrix(reference_geometry, [])


class TestSynthesis:
    def test_noiseless_is_exact_signal(self, reference_geometry, three_sources):
        scenario = SourceScenario(directions=three_sources, n_snapshots=50, rng_seed=3, noiseless=True)
        X = synthesize_snapshots(reference_geometry, scenario)
        A = manifold_matrix(reference_geometry, three_sources)
        np.testing.assert_array_equal(X.entries, A @ X.source_waveforms)
        assert X.noise_variance == 0.0
        assert not np.any(X.noise)

    def test_single_unit_source_gives_steering_vector(self, reference_geometry):
        d = Direction(azimuth_deg=40.0, elevation_deg=20.0)
        scenario = SourceScenario(directions=[d], n_snapshots=1, noiseless=True, unit_amplitude=True)
        X = synthesize_snapshots(reference_geometry, scenario)
        np.testing.assert_allclose(X.entries[:, 0], steering_vector(reference_geometry, d))

    def test_same_seed_is_bit_identical(self, reference_geometry, three_sources):
        scenario = SourceScenario(directions=three_sources, n_snapshots=20, snr_db=5.0, rng_seed=99)
        X1 = synthesize_snapshots(reference_geometry, scenario)
        X2 = synthesize_snapshots(reference_geometry, scenario)
        np.testing.assert_array_equal(X1.entries, X2.entries)
        X3 = synthesize_snapshots(reference_geometry, scenario.model_copy(update={"rng_seed": 100}))
        assert not np.array_equal(X1.entries, X3.entries)

    def test_noise_power_matches_snr(self, reference_geometry, three_sources):
        scenario = SourceScenario(directions=three_sources, n_snapshots=100, snr_db=10.0, rng_seed=7)
        X = synthesize_snapshots(reference_geometry, scenario)
        assert X.noise_variance == pytest.approx(0.1)
        assert np.mean(np.abs(X.noise) ** 2) == pytest.approx(0.1, rel=0.05)

    def test_noise_covariance_is_white(self, reference_geometry):
        scenario = SourceScenario(
            directions=[Direction(azimuth_deg=0.0, elevation_deg=0.0)], n_snapshots=10_000, snr_db=0.0, rng_seed=1
        )
        E = synthesize_snapshots(reference_geometry, scenario).noise
        R = E @ E.conj().T / E.shape[1]
        deviation = np.linalg.norm(R - np.eye(13)) / np.linalg.norm(np.eye(13))
        assert deviation < 0.1

    def test_duplicate_directions_rejected(self):
        d = Direction(azimuth_deg=10.0, elevation_deg=10.0)
        with pytest.raises(ValidationError):
            SourceScenario(directions=[d, d], n_snapshots=10)


class TestArrayPattern:
    def test_uniform_weights_at_broadside(self, reference_geometry):
        w = np.ones(13) / 13
        assert array_pattern(reference_geometry, w, Direction(azimuth_deg=0.0, elevation_deg=0.0)) == pytest.approx(1.0)

    def test_zero_mode_pattern_is_bessel_j0(self, reference_geometry, rng):
        w0 = phase_mode_weights(reference_geometry, 0)
        for _ in range(5):
            d = Direction(azimuth_deg=rng.uniform(0, 360), elevation_deg=rng.uniform(0, 90))
            f = array_pattern(reference_geometry, w0, d)
            assert f == pytest.approx(bessel_series(0, d.zeta(reference_geometry)), abs=1e-3)

    def test_indicator_weights_select_entry(self, reference_geometry):
        d = Direction(azimuth_deg=33.0, elevation_deg=60.0)
        e0 = np.zeros(13)
        e0[0] = 1.0
        assert array_pattern(reference_geometry, e0, d) == pytest.approx(steering_vector(reference_geometry, d)[0])

    def test_length_mismatch(self, reference_geometry):
        with pytest.raises(DimensionError):
            array_pattern(reference_geometry, np.ones(5), Direction(azimuth_deg=0.0, elevation_deg=0.0))
