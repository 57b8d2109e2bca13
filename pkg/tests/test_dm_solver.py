# tests/test_dm_solver.py
"""Solveur de Dacorogna-Moser sur le cube"""

import numpy as np
import pytest

from data.instances import blend, bump_instance, interior_bump
from data.processor import monotone_nonincreasing
from models import dm_solver
from models.cutoffs import CutoffFamily, build_cutoffs
from models.grid import Grid, GridDensity, from_function
from utils.errors import MassMismatchError, PreconditionError, SupportError


@pytest.fixture(scope='module')
def cutoffs():
    return build_cutoffs(2, 0.1, 0.35)


@pytest.fixture(scope='module')
def bump_solution(bump_pair, cutoffs):
    f, g = bump_pair
    return dm_solver.dm_solve(f, g, cutoffs, metrics=False)


@pytest.fixture(scope='module')
def small_solution(small_bump_pair, cutoffs):
    f, g = small_bump_pair
    return dm_solver.dm_solve(f, g, cutoffs, metrics=True, seed=3)


class TestPreconditions:
    def test_mass_mismatch(self):
        grid = Grid(dim=2, res=17)
        f = GridDensity(grid, np.ones(grid.shape))
        with pytest.raises(MassMismatchError) as info:
            dm_solver.dm_solve(f, f.scaled(1.01), CutoffFamily.identity(2))
        assert info.value.exit_code == 2

    def test_support_violation(self, cutoffs):
        grid = Grid(dim=2, res=33)
        f = from_function(grid, lambda x, y: 1.0 + 0.1 * np.cos(2.0 * np.pi * x))
        g = GridDensity(grid, np.ones(grid.shape))
        with pytest.raises(SupportError):
            dm_solver.dm_solve(f, g, cutoffs)

    def test_torus_rejected(self):
        grid = Grid(dim=2, res=16, topology='torus')
        d = GridDensity(grid, np.ones(grid.shape))
        with pytest.raises(PreconditionError):
            dm_solver.dm_solve(d, d, CutoffFamily.identity(2))


class TestOneDimension:
    def test_linear_density_oracle(self):
        grid = Grid(dim=1, res=257)
        f = from_function(grid, lambda x: 0.5 + x)
        g = GridDensity(grid, np.ones(grid.shape))
        sol = dm_solver.dm_solve(f, g, metrics=False)
        x = grid.nodes
        image = dm_solver.apply(sol, x[:, None])[:, 0]
        np.testing.assert_allclose(image, 0.5 * x + 0.5 * x * x, atol=1e-10)

    def test_inverse_of_oracle(self):
        grid = Grid(dim=1, res=257)
        f = from_function(grid, lambda x: 0.5 + x)
        g = GridDensity(grid, np.ones(grid.shape))
        sol = dm_solver.dm_solve(f, g, metrics=False)
        y = np.array([[0.1], [0.5], [0.9]])
        x = dm_solver.apply_inverse(sol, y)[:, 0]
        np.testing.assert_allclose(0.5 * x + 0.5 * x * x, y[:, 0], atol=1e-5)


class TestBumpInstance:
    def test_equal_densities_give_identity(self, small_bump_pair, cutoffs):
        f, _ = small_bump_pair
        sol = dm_solver.dm_solve(f, f, cutoffs, metrics=False)
        assert sol.u_sup == pytest.approx(0.0, abs=1e-10)

    def test_residual(self, bump_solution, bump_pair):
        f, g = bump_pair
        assert dm_solver.residual(bump_solution, f, g) <= 2e-2

    def test_functional_residual(self, bump_solution):
        assert bump_solution.diagnostics['functional_residual'] <= 1e-10
        assert bump_solution.diagnostics['min_jacobian'] > 0

    def test_intermediates_keep_mass(self, bump_solution):
        assert bump_solution.diagnostics['mass_drift'] <= 1e-8

    def test_collar_is_fixed(self, bump_solution, cutoffs):
        side = np.linspace(0.0, 1.0, 11)
        inner = np.full(11, 0.5 * cutoffs.collar)
        pts = np.vstack([np.column_stack([inner, side]), np.column_stack([side, inner]),
                         np.column_stack([1.0 - inner, side])])
        np.testing.assert_allclose(dm_solver.apply(bump_solution, pts), pts, atol=1e-14)

    def test_apply_inverse_round_trip(self, bump_solution, rng):
        x = rng.uniform(size=(200, 2))
        back = dm_solver.apply_inverse(bump_solution, dm_solver.apply(bump_solution, x))
        np.testing.assert_allclose(back, x, atol=1e-9)

    def test_box_defect_within_sampling_noise(self, small_solution):
        diag = small_solution.diagnostics
        assert diag['box_defect'] <= 6.0 * diag['box_sigma'] + 5e-3

    def test_coerciveness_report(self, small_solution):
        diag = small_solution.diagnostics
        assert diag['Mg'] == pytest.approx(2.0)
        assert diag['dbar_id'] >= diag['c0_forward']
        assert diag['dM_value'] > 0

    def test_nonlinear_term_lemma(self, small_solution, small_bump_pair):
        f, g = small_bump_pair
        _, report = dm_solver.nonlinear_term(small_solution, f, g)
        assert report['lemma_ok']


@pytest.mark.slow
def test_residual_decreases_with_resolution(cutoffs):
    residuals = []
    for res in (65, 129):
        f, g = bump_instance(res=res)
        sol = dm_solver.dm_solve(f, g, cutoffs, metrics=False)
        residuals.append(dm_solver.residual(sol, f, g))
    assert residuals[1] <= 5e-3
    assert residuals[1] <= residuals[0] / 3.0


def test_first_layer_inverts_each_fiber(cutoffs):
    # fiber masses agree while the fiber profiles change with x_2
    grid = Grid(dim=2, res=33)
    f = from_function(grid, lambda x, y: 1.0 + 0.2 * interior_bump(x) * np.sin(2.0 * np.pi * x) * interior_bump(y))
    g = from_function(grid, lambda x, y: 1.0 + 0.1 * interior_bump(x) * np.sin(4.0 * np.pi * x) * interior_bump(y) ** 2)
    layer = dm_solver.solve_first_layer(g, f, cutoffs)
    assert np.abs(layer.u).max() > 1e-3
    assert layer.info['functional_residual'] <= 1e-12


def test_coarse_grid_keeps_slice_masses(cutoffs):
    f, g = bump_instance(res=33)
    sol = dm_solver.dm_solve(f, g, cutoffs, metrics=False)
    assert sol.diagnostics['marginal_defect'] <= 1e-10
    assert sol.diagnostics['slice_rescale'] <= 1e-2
    assert sol.diagnostics['functional_residual'] <= 1e-10


def test_coercive_sweep_is_monotone(small_bump_pair, cutoffs):
    f, g = small_bump_pair
    sizes = []
    for eps in (1.0, 0.5, 0.25, 0.125):
        sol = dm_solver.dm_solve(blend(f, g, eps), g, cutoffs, metrics=False)
        sizes.append(sol.u_sup)
    assert monotone_nonincreasing(sizes)
    assert sizes[-1] < sizes[0]


def test_subdivision_count():
    assert dm_solver.subdivision_from_bounds(1.0, 0.0) == 7
    assert dm_solver.subdivision_from_bounds(1.0, 1.0) >= dm_solver.subdivision_from_bounds(1.0, 0.0)
