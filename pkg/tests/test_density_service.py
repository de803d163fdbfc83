"""
Tests for invariant densities.
"""

import dataclasses

import numpy as np
import pytest

from src.models.errors import ConfigurationError, DivergenceError, TruncationError
from src.models.results import UniformGrid
from src.services.density_service import DensityService


def test_ou_second_moment_closed_form(ou_example):
    table = DensityService.auto_density(ou_example)
    assert table.second_moment == pytest.approx(1.0 / (2 * 0.031), rel=1e-8)


def test_unit_ou_on_explicit_grid(ou_unit):
    table = DensityService.invariant_density(ou_unit, UniformGrid(10.0, 4001))
    assert table.second_moment == pytest.approx(0.5, rel=1e-8)
    assert abs(table.total_mass - 1.0) < 1e-10


@pytest.mark.parametrize("fixture", ["ou_unit", "ou_example", "cubic_example"])
def test_density_is_normalized(fixture, request):
    table = DensityService.auto_density(request.getfixturevalue(fixture))
    assert abs(table.total_mass - 1.0) < 1e-10
    assert np.all(table.m >= 0)
    assert table.tail_ratio <= 1e-12


def test_small_domain_raises_truncation(ou_unit):
    with pytest.raises(TruncationError):
        DensityService.invariant_density(ou_unit, UniformGrid(1.0, 101))


def test_outward_drift_raises_divergence(ou_unit):
    repelling = dataclasses.replace(ou_unit, f_star=lambda x: np.asarray(x, dtype=float))
    with pytest.raises(DivergenceError):
        DensityService.invariant_density(repelling, UniformGrid(5.0, 101))


def test_x_independent_gets_point_mass(x_independent):
    table = DensityService.for_model(x_independent)
    assert table.point_mass
    assert table.expectation(np.array([3.0])) == 3.0


@pytest.mark.parametrize("half_width, n_points", [(0.0, 11), (5.0, 10), (5.0, 1)])
def test_invalid_grid_raises(half_width, n_points):
    with pytest.raises(ConfigurationError):
        UniformGrid(half_width, n_points)


def test_refined_grid_halves_spacing():
    grid = UniformGrid(4.0, 9)
    assert grid.refined().spacing == pytest.approx(grid.spacing / 2)
    assert grid.refined().half_width == grid.half_width
