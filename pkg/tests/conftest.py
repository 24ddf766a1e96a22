import math

import numpy as np
import pytest
from sqlalchemy.pool import StaticPool
from sqlmodel import SQLModel, create_engine

from rbdoa.array_model import Direction, UcaGeometry


def bessel_series(m: int, x: float, terms: int = 60) -> float:
    """J_m(x) from its ascending series; reference values for the scipy backend."""
    if m < 0:
        return (-1) ** (-m) * bessel_series(-m, x, terms)
    total = 0.0
    for k in range(terms):
        total += (-1) ** k * (x / 2.0) ** (2 * k + m) / (math.factorial(k) * math.factorial(k + m))
    return total


@pytest.fixture
def reference_geometry():
    """13 sensors on a circle of radius one wavelength (M = 6, M' = 13)."""
    return UcaGeometry(n_sensors=13, radius_over_wavelength=1.0)


@pytest.fixture
def three_sources():
    return [
        Direction(azimuth_deg=110.1, elevation_deg=35.3),
        Direction(azimuth_deg=120.8, elevation_deg=45.0),
        Direction(azimuth_deg=170.5, elevation_deg=85.0),
    ]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def memory_engine(monkeypatch):
    """In-memory SQLite engine swapped in for the module-level database engine."""
    import database
    import models  # noqa: F401

    engine = create_engine("sqlite://", connect_args={"check_same_thread": False}, poolclass=StaticPool)
    SQLModel.metadata.create_all(engine)
    monkeypatch.setattr(database, "engine", engine)
    yield engine
    engine.dispose()


@pytest.fixture
def recording(monkeypatch, memory_engine):
    """Enable run recording against the in-memory database."""
    from rbdoa.settings import get_settings

    monkeypatch.setenv("RBDOA_RECORD_RUNS", "true")
    get_settings.cache_clear()
    yield memory_engine
    get_settings.cache_clear()
