"""Shared fixtures: small meshes and a seeded generator per test."""

import numpy as np
import pytest

from sdfrecon.shapes import box, icosphere, torus


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def unit_cube():
    return box(1.0)


@pytest.fixture(scope="session")
def small_sphere():
    return icosphere(2, 0.3)


@pytest.fixture(scope="session")
def small_torus():
    return torus(0.3, 0.1, 24, 12)


@pytest.fixture(scope="session")
def fixture_meshes(unit_cube, small_sphere, small_torus):
    """The three meshes used for cross-implementation equivalence checks."""
    return [unit_cube, small_sphere, small_torus]
