# tests/test_grid.py
"""Grilles, quadrature et interpolation"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from models.grid import (TORUS, Grid, GridDensity, cumulative, cumulate, from_function, integrate, mass,
                         modulus_of_continuity, sample)
from utils.errors import DomainError, PositivityError, PreconditionError


class TestGrid:
    def test_cube_spacing_includes_both_ends(self):
        grid = Grid(dim=2, res=33)
        assert grid.spacing == pytest.approx(1.0 / 32)
        assert grid.nodes[0] == 0.0
        assert grid.nodes[-1] == 1.0

    def test_torus_spacing_excludes_wrap_node(self):
        grid = Grid(dim=2, res=32, topology=TORUS)
        assert grid.spacing == pytest.approx(1.0 / 32)
        assert grid.nodes[-1] == pytest.approx(31.0 / 32)

    def test_points_are_row_major(self):
        grid = Grid(dim=2, res=3)
        pts = grid.points()
        assert pts.shape == (9, 2)
        np.testing.assert_allclose(pts[1], [0.0, 0.5])

    @pytest.mark.parametrize('kwargs', [
        {'dim': 0}, {'dim': 5}, {'dim': 2, 'res': 2}, {'dim': 2, 'side': 0.0}, {'dim': 2, 'topology': 'sphere'},
    ])
    def test_invalid_grid(self, kwargs):
        with pytest.raises(PreconditionError):
            Grid(**kwargs)


class TestQuadrature:
    def test_constant_mass(self):
        grid = Grid(dim=3, res=9, side=2.0)
        assert mass(GridDensity(grid, np.ones(grid.shape))) == pytest.approx(8.0)

    def test_trapezoid_exact_on_bilinear(self):
        grid = Grid(dim=2, res=17)
        d = from_function(grid, lambda x, y: 1.0 + x + 2.0 * y + x * y)
        assert mass(d) == pytest.approx(2.75, abs=1e-13)

    def test_torus_rectangle_rule_on_trig(self):
        grid = Grid(dim=1, res=16, topology=TORUS)
        d = from_function(grid, lambda x: 1.0 + 0.5 * np.cos(2.0 * np.pi * x))
        assert mass(d) == pytest.approx(1.0, abs=1e-14)

    def test_cumulative_endpoint_is_fiber_mass(self, rng):
        grid = Grid(dim=2, res=21)
        d = GridDensity(grid, rng.uniform(0.5, 2.0, grid.shape))
        field = cumulative(d, 0)
        np.testing.assert_allclose(field.fiber_mass, integrate(grid, d.values, axes=[0]), rtol=1e-13)
        assert np.all(np.diff(field.table, axis=0) > 0)

    def test_torus_cumulative_closes_the_fiber(self):
        grid = Grid(dim=1, res=8, topology=TORUS)
        table = cumulate(grid, np.ones(8), axis=0)
        assert table.shape == (9,)
        assert table[-1] == pytest.approx(1.0)

    def test_cumulative_evaluate_between_nodes(self):
        grid = Grid(dim=1, res=11)
        field = cumulative(GridDensity(grid, np.full(grid.shape, 2.0)), 0)
        assert float(field.evaluate(0.35)) == pytest.approx(0.7)


class TestDensity:
    def test_nonpositive_values_rejected(self):
        grid = Grid(dim=1, res=5)
        with pytest.raises(PositivityError):
            GridDensity(grid, [1.0, 1.0, 0.0, 1.0, 1.0])

    def test_non_finite_values_rejected(self):
        grid = Grid(dim=1, res=3)
        with pytest.raises(PositivityError):
            GridDensity(grid, [1.0, np.nan, 1.0])

    def test_values_are_read_only(self):
        grid = Grid(dim=1, res=3)
        d = GridDensity(grid, [1.0, 2.0, 1.0])
        with pytest.raises(ValueError):
            d.values[0] = 3.0

    def test_normalized(self, rng):
        grid = Grid(dim=2, res=9)
        d = GridDensity(grid, rng.uniform(1.0, 3.0, grid.shape)).normalized(2.0)
        assert mass(d) == pytest.approx(2.0)

    def test_cube_rejects_outside_points(self):
        grid = Grid(dim=2, res=9)
        d = GridDensity(grid, np.ones(grid.shape))
        with pytest.raises(DomainError):
            d([[0.5, 1.1]])

    def test_wrong_point_dimension(self):
        grid = Grid(dim=2, res=9)
        d = GridDensity(grid, np.ones(grid.shape))
        with pytest.raises(DomainError) as info:
            d(np.zeros((4, 3)))
        assert info.value.exit_code == 2
        assert info.value.details['shape'] == [4, 3]

    def test_torus_wraps_points(self):
        grid = Grid(dim=1, res=16, topology=TORUS)
        d = from_function(grid, lambda x: 2.0 + np.sin(2.0 * np.pi * x))
        np.testing.assert_allclose(d([[1.25]]), d([[0.25]]))

    def test_modulus_of_linear_density(self):
        grid = Grid(dim=2, res=33)
        d = from_function(grid, lambda x, y: 1.0 + x + 0.5 * y)
        assert modulus_of_continuity(d) == pytest.approx(1.0)


class TestInterpolation:
    @settings(max_examples=30, deadline=None)
    @given(st.floats(0.0, 1.0), st.floats(0.0, 1.0))
    def test_bilinear_reproduced(self, x, y):
        grid = Grid(dim=2, res=9)
        a, b = grid.mesh()
        values = 1.0 + 2.0 * a - b + 3.0 * a * b
        assert sample(grid, values, [[x, y]])[0] == pytest.approx(1.0 + 2.0 * x - y + 3.0 * x * y, abs=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(0.0, 1.0), st.floats(0.0, 1.0))
    def test_interpolant_stays_within_node_range(self, x, y):
        grid = Grid(dim=2, res=7, topology=TORUS)
        values = np.random.default_rng(7).uniform(0.5, 1.5, grid.shape)
        value = sample(grid, values, [[x, y]])[0]
        assert values.min() - 1e-12 <= value <= values.max() + 1e-12

    def test_vector_field_on_torus(self):
        grid = Grid(dim=2, res=8, topology=TORUS)
        a, b = grid.mesh()
        field = np.stack([np.cos(2.0 * np.pi * a), np.sin(2.0 * np.pi * b)], axis=-1)
        out = sample(grid, field, [[0.0, 0.25], [1.0, 0.25]])
        assert out.shape == (2, 2)
        np.testing.assert_allclose(out[0], out[1], atol=1e-14)
