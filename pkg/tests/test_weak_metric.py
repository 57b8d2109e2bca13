# tests/test_weak_metric.py
"""Métrique Lid_b, discrépance sur les boîtes et poussée en avant"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from models.grid import TORUS, Grid, GridDensity, from_function
from models.weak_metric import (FLAT_TORUS, AtomicMeasure, atomize, box_discrepancy, brute_force_lid,
                                coarse_atomize, lid_metric, measure_distance, pushforward)
from utils.errors import DomainError, PreconditionError, SizeError


def random_measure(seed: int, atoms: int, dim: int = 1) -> AtomicMeasure:
    rng = np.random.default_rng(seed)
    return AtomicMeasure(rng.uniform(size=(atoms, dim)), rng.uniform(0.1, 1.0, atoms))


class TestAtomicMeasure:
    def test_duplicates_are_merged(self):
        m = AtomicMeasure([[0.5], [0.5], [0.2]], [1.0, 2.0, 1.0])
        assert len(m) == 2
        assert m.total_mass == pytest.approx(4.0)

    def test_negative_weights_rejected(self):
        with pytest.raises(PreconditionError):
            AtomicMeasure([[0.1]], [-1.0])

    def test_atomize_keeps_mass(self):
        grid = Grid(dim=2, res=9)
        d = from_function(grid, lambda x, y: 1.0 + x * y)
        assert atomize(d).total_mass == pytest.approx(1.25)

    def test_coarse_atomize_bounds_atom_count(self):
        grid = Grid(dim=2, res=33)
        d = GridDensity(grid, np.ones(grid.shape))
        coarse, bound = coarse_atomize(d, 64)
        assert len(coarse) <= 64
        assert coarse.total_mass == pytest.approx(1.0)
        assert bound > 0


class TestLidMetric:
    def test_identical_measures(self):
        mu = random_measure(3, 4, dim=2)
        assert lid_metric(mu, mu).lid_value == 0.0

    @pytest.mark.parametrize('d, b', [(0.3, 1.0), (0.3, 0.1), (0.05, 2.0)])
    def test_two_unit_atoms(self, d, b):
        mu = AtomicMeasure([[0.0]], [1.0])
        nu = AtomicMeasure([[d]], [1.0])
        assert lid_metric(mu, nu, b).lid_value == pytest.approx(min(b, d), abs=1e-9)

    def test_mass_defect_costs_b(self):
        mu = AtomicMeasure([[0.2]], [0.75])
        nu = AtomicMeasure(np.zeros((0, 1)), np.zeros(0))
        assert lid_metric(mu, nu, 2.0).lid_value == pytest.approx(1.5)

    def test_torus_distance_wraps(self):
        mu = AtomicMeasure([[0.05]], [1.0], metric=FLAT_TORUS)
        nu = AtomicMeasure([[0.95]], [1.0], metric=FLAT_TORUS)
        assert lid_metric(mu, nu).lid_value == pytest.approx(0.1, abs=1e-9)

    def test_certificate_is_feasible(self):
        mu, nu = random_measure(1, 3, dim=2), random_measure(2, 3, dim=2)
        report = lid_metric(mu, nu, 0.5)
        f = report.certificate
        assert np.all(f >= -1e-12) and np.all(f <= 0.5 + 1e-12)
        assert report.to_dict()['value'] == report.lid_value

    @pytest.mark.parametrize('seed', range(50))
    def test_lp_matches_brute_force(self, seed):
        rng = np.random.default_rng(seed)
        dim = int(rng.integers(1, 3))
        mu = random_measure(100 + seed, 2, dim)
        nu = random_measure(200 + seed, int(rng.integers(1, 4)), dim)
        b = float(rng.uniform(0.2, 1.5))
        assert lid_metric(mu, nu, b).lid_value == pytest.approx(brute_force_lid(mu, nu, b), abs=1e-9)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 10_000))
    def test_symmetry_and_triangle_inequality(self, seed):
        mu, nu, rho = (random_measure(seed + k, 3, dim=2) for k in range(3))
        d_mn = lid_metric(mu, nu).lid_value
        assert d_mn == pytest.approx(lid_metric(nu, mu).lid_value, abs=1e-9)
        assert d_mn <= lid_metric(mu, rho).lid_value + lid_metric(rho, nu).lid_value + 1e-9

    @settings(max_examples=15, deadline=None)
    @given(st.integers(0, 10_000))
    def test_nondecreasing_in_b(self, seed):
        mu, nu = random_measure(seed, 3), random_measure(seed + 1, 4)
        assert lid_metric(mu, nu, 2.0).lid_value >= lid_metric(mu, nu, 1.0).lid_value - 1e-9

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000), st.floats(0.1, 4.0))
    def test_comparable_across_b(self, seed, b):
        mu, nu = random_measure(seed, 3, dim=2), random_measure(seed + 1, 2, dim=2)
        unit = lid_metric(mu, nu, 1.0).lid_value
        value = lid_metric(mu, nu, b).lid_value
        assert min(1.0, b) * unit - 1e-9 <= value <= max(1.0, b) * unit + 1e-9

    def test_size_cap(self):
        mu, nu = random_measure(5, 3), random_measure(6, 3)
        with pytest.raises(SizeError):
            lid_metric(mu, nu, cap=4)

    def test_brute_force_cap(self):
        mu, nu = random_measure(5, 4), random_measure(6, 4)
        with pytest.raises(SizeError):
            brute_force_lid(mu, nu)

    def test_dimension_mismatch(self):
        with pytest.raises(PreconditionError):
            lid_metric(random_measure(1, 2, dim=1), random_measure(2, 2, dim=2))


class TestBoxDiscrepancy:
    def test_identical_measures(self):
        grid = Grid(dim=2, res=9)
        m = atomize(from_function(grid, lambda x, y: 1.0 + x))
        assert box_discrepancy(m, m, grid) == 0.0

    def test_single_moved_atom(self):
        grid = Grid(dim=1, res=11)
        mu = AtomicMeasure([[0.2]], [0.5])
        nu = AtomicMeasure([[0.6]], [0.5])
        assert box_discrepancy(mu, nu, grid) == pytest.approx(0.5)

    def test_measure_distance_of_equal_densities(self):
        grid = Grid(dim=2, res=17)
        d = from_function(grid, lambda x, y: 1.0 + 0.5 * x)
        value, box, _ = measure_distance(d, d)
        assert value == 0.0
        assert box == 0.0


class TestPushforward:
    def test_translation_on_the_cube(self):
        mu = AtomicMeasure([[0.2]], [1.0])
        moved = pushforward(mu, lambda p: p + 0.1)
        np.testing.assert_allclose(moved.points, [[0.3]])
        assert lid_metric(mu, moved).lid_value == pytest.approx(0.1, abs=1e-9)

    def test_leaving_the_cube(self):
        mu = AtomicMeasure([[0.95]], [1.0])
        with pytest.raises(DomainError):
            pushforward(mu, lambda p: p + 0.1)

    def test_node_translation_on_the_torus_is_invisible(self):
        grid = Grid(dim=2, res=8, topology=TORUS)
        m = atomize(GridDensity(grid, np.ones(grid.shape)))
        shifted = pushforward(m, lambda p: p + np.array([3.0 / 8.0, 0.0]))
        assert lid_metric(m, shifted).lid_value == pytest.approx(0.0, abs=1e-9)
