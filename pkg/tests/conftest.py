import numpy as np
import pytest

from app.models.field import ScalarField, VectorField
from app.models.grid import Grid
from app.services.calculus_service import CalculusService
from app.services.field_service import FieldService


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def grid2():
    return Grid(2, 16)


@pytest.fixture
def grid3():
    return Grid(3, 8)


def random_scalar(grid, rng, band=3.0) -> ScalarField:
    """零均值实值带限标量场"""
    return FieldService.remove_mean(FieldService.random_real(grid, rng, band))


def random_vector(grid, rng, band=3.0) -> VectorField:
    return FieldService.remove_mean(FieldService.random_real(grid, rng, band, components=grid.dim))


def random_div_free(grid, rng, band=3.0) -> VectorField:
    return CalculusService.leray_project(random_vector(grid, rng, band))


def random_curl_free(grid, rng, band=3.0) -> VectorField:
    return CalculusService.gradient(random_scalar(grid, rng, band))
