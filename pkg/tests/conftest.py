"""Fixture condivise dai test."""

import sys
from pathlib import Path

import pytest

# Stessi import piatti degli script in src/
sys.path.insert(0, str(Path(__file__).resolve().parent.parent / 'src'))

from model import ArrayGeometry, EstimatorConfig  # noqa: E402


def half_wave(m_sensors: int) -> ArrayGeometry:
    """ULA a mezza lunghezza d'onda (omega*d/c = pi)."""
    return ArrayGeometry.from_frequency(m_sensors, 3.75, 1500.0, 200.0)


@pytest.fixture
def geom() -> ArrayGeometry:
    return half_wave(15)


@pytest.fixture
def small_geom() -> ArrayGeometry:
    return half_wave(8)


@pytest.fixture
def cfg() -> EstimatorConfig:
    return EstimatorConfig()
