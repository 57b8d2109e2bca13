# tests/test_manifold.py
"""Atlas du tore, décomposition et solution globale"""

import numpy as np
import pytest

from config.settings import SMOOTHING
from data.instances import linear_torus_family, torus_density
from models.manifold import (build_torus_atlas, decompose, edge_eps0_limit, global_solve, incidence,
                             interpolated_family, map_distance, parametric_solve)
from utils.errors import PartitionRefinementError, PreconditionError
from utils.helpers import torus_delta


@pytest.fixture(scope='module')
def torus_map(atlas64, torus_pair):
    sigma, tau = torus_pair
    return global_solve(sigma, tau, atlas64)


class TestAtlas:
    def test_chart_layout(self, atlas64):
        assert atlas64.size == 4
        assert atlas64.chart_side == pytest.approx(0.875)
        assert atlas64.chart_res == 57
        assert atlas64.overlap == pytest.approx(0.2)
        assert atlas64.predecessors[0] == -1
        assert all(0 <= p < k for k, p in enumerate(atlas64.predecessors) if k)

    def test_predecessors_share_an_axis(self, atlas64):
        # the widest overlap is with a chart translated along a single axis
        for k in range(1, atlas64.size):
            j = atlas64.predecessors[k]
            assert np.count_nonzero(atlas64.origins[k] != atlas64.origins[j]) == 1

    def test_bumps_use_every_overlap_arc(self, atlas64):
        for arcs in atlas64.bump_intervals[1:]:
            assert sorted(len(axis) for axis in arcs) == [1, 2]

    def test_bump_height_stays_moderate(self, atlas64):
        assert 1.0 < atlas64.c2 < 20.0

    def test_atlas_dict_lists_arcs(self, atlas64):
        data = atlas64.to_dict()
        assert data['bump_intervals'][0] is None
        assert all(len(arc) == 2 for axis in data['bump_intervals'][1] for arc in axis)

    def test_partition_of_unity(self, atlas64):
        np.testing.assert_allclose(atlas64.partition.sum(axis=0), 1.0, atol=1e-12)
        assert atlas64.partition.min() >= 0.0

    def test_partition_supported_in_inner_cubes(self, atlas64):
        points = atlas64.grid.points()
        lo, hi = atlas64.inner
        for j in range(atlas64.size):
            local = atlas64.local(j, points)
            outside = np.any((local < lo) | (local > hi), axis=1)
            assert not atlas64.partition[j].ravel()[outside].any()

    def test_bumps_have_unit_mass(self, atlas64):
        cell = atlas64.grid.spacing ** 2
        for bump in atlas64.bumps[1:]:
            assert float(bump.sum() * cell) == pytest.approx(1.0)

    def test_incidence_columns_cancel(self, atlas64):
        np.testing.assert_array_equal(incidence(atlas64).sum(axis=0), 0.0)

    def test_misaligned_resolution(self):
        with pytest.raises(PreconditionError):
            build_torus_atlas(2, res=30)

    def test_unsupported_dimension(self):
        with pytest.raises(PreconditionError):
            build_torus_atlas(4, res=64)


class TestDecomposition:
    def test_pieces_sum_and_balance(self, atlas64, torus_pair):
        sigma, _ = torus_pair
        decomp = decompose(sigma.values, atlas64)
        assert decomp.diagnostics['sum_defect'] <= 1e-12
        np.testing.assert_allclose(decomp.diagnostics['piece_masses'], 0.0, atol=1e-12)
        np.testing.assert_allclose(decomp.intermediates[-1], sigma.values, atol=1e-12)

    def test_bump_terms_stay_small(self, atlas64, torus_pair):
        sigma, tau = torus_pair
        decomp = decompose(tau.values / sigma.values, atlas64, base=sigma.values)
        assert atlas64.c2 * decomp.c3 <= 0.15
        assert decomp.diagnostics['min_intermediate'] >= 0.7

    def test_pieces_live_in_their_chart(self, atlas64, torus_pair):
        sigma, _ = torus_pair
        decomp = decompose(sigma.values, atlas64)
        points = atlas64.grid.points()
        for j, piece in enumerate(decomp.pieces):
            inside = np.all(atlas64.local(j, points) <= atlas64.chart_side, axis=1)
            assert not piece.ravel()[~inside].any()

    def test_interpolated_family_endpoints(self, atlas64, torus_pair):
        sigma, _ = torus_pair
        decomp = decompose(sigma.values, atlas64)
        np.testing.assert_array_equal(interpolated_family(decomp, [0.0] * atlas64.size), 1.0)
        np.testing.assert_allclose(interpolated_family(decomp, [1.0] * atlas64.size), sigma.values, atol=1e-12)

    def test_mass_mismatch(self, atlas64):
        with pytest.raises(PreconditionError):
            decompose(np.full(atlas64.grid.shape, 1.1), atlas64)


class TestGlobalSolve:
    def test_equal_densities_give_identity_edges(self, atlas64):
        ones = np.ones(atlas64.grid.shape)
        gmap = global_solve(ones, ones, atlas64)
        assert all(edge.is_identity for edge in gmap.edges)
        assert gmap.diagnostics['dbar_id'] == 0.0
        assert gmap.lam == pytest.approx(1.0)

    def test_pullback_defect_shrinks(self, torus_map, torus_pair):
        sigma, tau = torus_pair
        initial = float(np.max(np.abs(sigma.values - tau.values)))
        assert torus_map.diagnostics['pullback_residual'] <= 0.1 * initial
        assert torus_map.diagnostics['pullback_mass'] == pytest.approx(1.0, abs=1e-2)

    @pytest.mark.slow
    def test_pullback_residual_at_fine_resolution(self):
        sigma = torus_density(128, 0.1)
        atlas = build_torus_atlas(2, res=128)
        gmap = global_solve(sigma, np.ones(sigma.grid.shape), atlas)
        assert gmap.diagnostics['pullback_residual'] <= 1e-2

    def test_edge_cutoffs_follow_density_bounds(self, atlas64, torus_pair):
        sigma, _ = torus_pair
        decomp = decompose(1.0 / sigma.values, atlas64, base=sigma.values)
        limit = edge_eps0_limit(sigma.values, decomp.intermediates)
        assert 0.0 < limit < 0.5
        flat = edge_eps0_limit(np.ones(atlas64.grid.shape), [np.ones(atlas64.grid.shape)])
        assert flat == pytest.approx(0.5)

    def test_scaling_source_only_changes_lambda(self, atlas64, torus_pair):
        sigma, tau = torus_pair
        base = global_solve(sigma.values, tau.values, atlas64, metrics=False)
        scaled = global_solve(2.0 * sigma.values, tau.values, atlas64, metrics=False)
        assert scaled.lam == pytest.approx(2.0 * base.lam)
        for a, b in zip(base.edges, scaled.edges):
            assert a.is_identity == b.is_identity
            if not a.is_identity:
                for la, lb in zip(a.solution.layers, b.solution.layers):
                    np.testing.assert_array_equal(la.u, lb.u)

    def test_distance_within_edge_sum(self, torus_map):
        assert torus_map.diagnostics['dbar_within_sum']
        assert torus_map.diagnostics['edges_solved'] >= 1

    def test_inverse_round_trip(self, torus_map, rng):
        x = rng.uniform(size=(100, 2))
        back = torus_map.apply_inverse(torus_map.apply(x))
        assert float(np.max(np.abs(torus_delta(back, x, 1.0)))) <= 1e-8

    def test_map_distance_to_itself(self, torus_map):
        assert map_distance(torus_map, torus_map) == 0.0

    def test_lambda_is_mass_ratio(self, atlas64):
        sigma = 2.0 * torus_density(64, 0.1).values
        gmap = global_solve(sigma, np.ones(atlas64.grid.shape), atlas64, metrics=False)
        assert gmap.lam == pytest.approx(2.0)


class TestParametric:
    def test_linear_family(self, atlas64):
        ones = np.ones(atlas64.grid.shape)
        family = parametric_solve(linear_torus_family(64, 0.1), ones, atlas64, partition=[0.0, 0.5, 1.0],
                                  threads=2)
        diag = family.diagnostics
        assert family.partition == [0.0, 0.5, 1.0]
        assert family.maps[0].diagnostics['edges_solved'] == 0
        assert diag['modulus'] > 0
        assert diag['max_dbar_step'] <= 2.0 * diag['largest_lid_step'] * diag['modulus'] + 1e-9

    def test_sampled_family_cannot_be_refined(self, atlas64):
        ones = np.ones(atlas64.grid.shape)
        members = {0.0: ones, 1.0: torus_density(64, 0.3).values}
        strict = dict(SMOOTHING, lid_step=1e-6)
        with pytest.raises(PartitionRefinementError):
            parametric_solve(members, ones, atlas64, settings=strict)

    def test_mismatched_parameters(self, atlas64):
        ones = np.ones(atlas64.grid.shape)
        with pytest.raises(PreconditionError):
            parametric_solve({0.0: ones, 1.0: ones}, {0.0: ones, 0.5: ones}, atlas64)

    def test_single_member_rejected(self, atlas64):
        ones = np.ones(atlas64.grid.shape)
        with pytest.raises(PreconditionError):
            parametric_solve(ones, ones, atlas64, partition=[0.0])
