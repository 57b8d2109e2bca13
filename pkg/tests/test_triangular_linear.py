# tests/test_triangular_linear.py
"""Opérateur linéarisé dΨ(0̄) et son inverse"""

import logging

import numpy as np
import pytest

from data.instances import blend
from models.cutoffs import CutoffFamily, build_cutoffs
from models.grid import Grid, GridDensity
from models.triangular_linear import (TriangularFieldVector, apply_dpsi0, bound_ratio, build_kernel,
                                      check_smoothness, cvec1_norm, invert_dpsi0, linearized_guess, mg_bound,
                                      mg_from_bounds, psi0)
from utils.errors import PreconditionError, RoughFieldError, SingularKernelError


@pytest.fixture(scope='module')
def grid():
    return Grid(dim=2, res=65)


@pytest.fixture(scope='module')
def kernel(grid):
    a1, a2 = grid.mesh()
    return build_kernel(GridDensity(grid, 1.0 + 0.2 * a1 * a2), CutoffFamily.identity(2))


@pytest.fixture(scope='module')
def flat_kernel():
    grid = Grid(dim=2, res=33)
    return build_kernel(GridDensity(grid, np.ones(grid.shape)), CutoffFamily.identity(2))


def smooth_field(grid: Grid) -> TriangularFieldVector:
    a1, a2 = grid.mesh()
    return TriangularFieldVector(grid, [np.sin(np.pi * a1) * np.cos(np.pi * a2),
                                        np.sin(2.0 * np.pi * grid.nodes)])


def quadratic_field(grid: Grid, seed: int) -> TriangularFieldVector:
    c = np.random.default_rng(seed).uniform(-1.0, 1.0, 9)
    a1, a2 = grid.mesh()
    t = grid.nodes
    y1 = c[0] + c[1] * a1 + c[2] * a2 + c[3] * a1 * a2 + c[4] * a1 ** 2 + c[5] * a2 ** 2
    return TriangularFieldVector(grid, [y1, c[6] + c[7] * t + c[8] * t ** 2])


def range_field(grid: Grid, seed: int) -> TriangularFieldVector:
    """Y_1 = a_2·p(a_1) with p quadratic, Y_2 constant"""
    c = np.random.default_rng(seed).uniform(-1.0, 1.0, 4)
    a1, a2 = grid.mesh()
    return TriangularFieldVector(grid, [a2 * (c[0] + c[1] * a1 + c[2] * a1 ** 2), np.full(grid.res, c[3])])


class TestFieldVector:
    def test_component_shapes_enforced(self, grid):
        with pytest.raises(PreconditionError):
            TriangularFieldVector(grid, [np.zeros(grid.shape), np.zeros(grid.shape)])

    def test_full_broadcasts_trailing_component(self, grid):
        X = smooth_field(grid)
        full = X.full(2)
        assert full.shape == grid.shape
        np.testing.assert_array_equal(full[5], X.component(2))


class TestKernel:
    def test_flat_kernel_blocks(self, flat_kernel):
        grid = flat_kernel.grid
        a1, _ = grid.mesh()
        np.testing.assert_allclose(flat_kernel.block(1, 1), 1.0)
        np.testing.assert_allclose(flat_kernel.block(1, 2), a1, atol=1e-14)
        np.testing.assert_allclose(flat_kernel.block(2, 2), 1.0)
        assert not flat_kernel.block(2, 1).any()

    def test_mg_constant(self):
        assert mg_from_bounds(0.5, 2.0, 2) == pytest.approx(16.0)
        assert mg_from_bounds(1.0, 1.0, 3) == pytest.approx(6.0)

    def test_mg_of_density(self, flat_kernel):
        grid = flat_kernel.grid
        assert mg_bound(GridDensity(grid, np.ones(grid.shape))) == pytest.approx(2.0)

    def test_singular_kernel(self):
        grid = Grid(dim=2, res=9)
        tiny = build_kernel(GridDensity(grid, np.full(grid.shape, 1e-16)), CutoffFamily.identity(2))
        with pytest.raises(SingularKernelError):
            invert_dpsi0(tiny, TriangularFieldVector.zeros(grid))

    def test_torus_rejected(self):
        grid = Grid(dim=2, res=8, topology='torus')
        with pytest.raises(PreconditionError):
            build_kernel(GridDensity(grid, np.ones(grid.shape)), CutoffFamily.identity(2))


class TestOperator:
    def test_linearity(self, kernel, grid):
        X = smooth_field(grid)
        Z = quadratic_field(grid, 3)
        lhs = apply_dpsi0(kernel, X.combine(Z, 2.0, -0.5))
        rhs = apply_dpsi0(kernel, X).combine(apply_dpsi0(kernel, Z), 2.0, -0.5)
        assert (lhs - rhs).sup() < 1e-12

    def test_round_trip(self, kernel, grid):
        X = smooth_field(grid)
        back = invert_dpsi0(kernel, apply_dpsi0(kernel, X))
        assert (back - X).sup() <= 5e-3

    def test_psi0_vanishes_on_equal_densities(self, small_bump_pair):
        f, _ = small_bump_pair
        assert psi0(f, f).sup() == 0.0

    def test_psi0_corner_is_mass_gap(self, small_bump_pair):
        f, g = small_bump_pair
        np.testing.assert_allclose(psi0(f, g).corner_value(), 0.0, atol=1e-12)

    @pytest.mark.parametrize('seed', range(20))
    def test_inverse_within_mg_bound(self, flat_kernel, seed):
        Y = range_field(flat_kernel.grid, seed)
        X = invert_dpsi0(flat_kernel, Y)
        mg = mg_bound(GridDensity(flat_kernel.grid, np.ones(flat_kernel.grid.shape)))
        assert X.sup() <= mg * Y.sup() + 1e-8
        assert bound_ratio(X, Y, mg) <= 1.0 + 1e-8

    def test_round_trip_converges_under_doubling(self):
        errors = []
        for res in (33, 65):
            grid = Grid(dim=2, res=res)
            a1, a2 = grid.mesh()
            kernel = build_kernel(GridDensity(grid, 1.0 + 0.2 * a1 * a2), CutoffFamily.identity(2))
            X = smooth_field(grid)
            errors.append((invert_dpsi0(kernel, apply_dpsi0(kernel, X)) - X).sup())
        assert errors[1] <= 5e-3
        assert np.log2(errors[0] / errors[1]) >= 1.5

    def test_cvec1_norm_dominates_sup(self, flat_kernel):
        Y = range_field(flat_kernel.grid, 4)
        # the mixed partial of Y_1 along a_2 is p(a_1), bounded by Y_1 at a_2 = 1
        assert cvec1_norm(Y) == pytest.approx(Y.sup(), abs=1e-10)

    def test_rough_field_refused(self, rng):
        grid = Grid(dim=2, res=33)
        Y = TriangularFieldVector(grid, [rng.normal(size=grid.shape), np.zeros(grid.res)])
        with pytest.raises(RoughFieldError):
            check_smoothness(Y)


class TestLinearizedGuess:
    def test_guess_scales_with_the_perturbation(self, bump_pair):
        f, g = bump_pair
        cutoffs = build_cutoffs(2, 0.1)
        kernel = build_kernel(g, cutoffs)
        full = linearized_guess(f, g, cutoffs, kernel)
        half = linearized_guess(blend(f, g, 0.5), g, cutoffs, kernel)
        assert full.sup() > 0
        assert (half.combine(full, 1.0, -0.5)).sup() <= 1e-8 * full.sup() + 1e-14

    def test_equal_densities_give_zero_guess(self, small_bump_pair, caplog):
        f, _ = small_bump_pair
        with caplog.at_level(logging.WARNING, logger='models.triangular_linear'):
            u0 = linearized_guess(f, f, build_cutoffs(2, 0.1))
        assert u0.sup() == 0.0
        assert not caplog.records
