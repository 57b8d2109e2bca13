# tests/test_cutoffs.py
"""Fonctions de coupure"""

import numpy as np
import pytest

from models.cutoffs import CutoffFamily, build_cutoffs, default_cutoffs, eta_for_dim, smoothstep
from models.grid import Grid, integrate
from utils.errors import InfeasibleCutoffError, PreconditionError


@pytest.fixture(scope='module')
def family():
    return default_cutoffs(3)


def test_smoothstep_endpoints():
    np.testing.assert_allclose(smoothstep(np.array([-1.0, 0.0, 0.5, 1.0, 2.0])), [0.0, 0.0, 0.5, 1.0, 1.0])


def test_collar_is_zero(family):
    t = np.linspace(0.0, 0.99 * family.collar, 11)
    assert np.all(family.kappa(t) == 0.0)
    assert np.all(family.kappa(1.0 - t) == 0.0)


def test_unit_mean_on_quadrature_grid(family):
    for s in (2, 3):
        grid = family.quadrature_grid(s - 1)
        values = family.sample(s, grid)
        assert float(integrate(grid, values)) == pytest.approx(1.0, abs=1e-12)


def test_evaluate_matches_sample(family):
    grid = Grid(dim=2, res=9)
    values = family.sample(3, grid).ravel()
    np.testing.assert_allclose(family.evaluate(3, grid.points()), values, rtol=1e-12)


def test_eps0_meets_target(family):
    assert family.eps0 <= 0.35
    assert family.eps1 <= family.eps0
    assert family.sup(3) == pytest.approx(1.0 / family.normalizer ** 2)


def test_small_eta_gives_small_eps0():
    assert build_cutoffs(2, 0.01, 0.1).eps0 <= 0.1


def test_unreachable_target():
    with pytest.raises(InfeasibleCutoffError) as info:
        build_cutoffs(2, 0.4, 0.1)
    assert info.value.details['min_eps0'] > 0.1


@pytest.mark.parametrize('eta', [0.0, 0.5, -0.1])
def test_invalid_eta(eta):
    with pytest.raises(PreconditionError):
        build_cutoffs(2, eta)


def test_identity_family():
    ident = CutoffFamily.identity(3)
    assert ident.is_identity
    np.testing.assert_array_equal(ident.evaluate(3, np.full((4, 2), 0.01)), np.ones(4))


def test_dict_round_trip(family):
    assert CutoffFamily.from_dict(family.to_dict()) == family


def test_collar_shrinks_with_dimension():
    assert eta_for_dim(2, 0.1) == 0.1
    eta3 = eta_for_dim(3, 0.1)
    assert eta3 < 0.1
    assert (1.0 - eta3) ** 2 == pytest.approx(0.9)


@pytest.mark.parametrize('n', [2, 3])
def test_default_family_is_feasible(n):
    family = default_cutoffs(n)
    assert family.eps0 <= 0.35
    assert family.eta == pytest.approx(eta_for_dim(n))


def test_fixed_collar_is_infeasible_in_3d():
    with pytest.raises(InfeasibleCutoffError) as info:
        build_cutoffs(3, 0.1, 0.35)
    assert info.value.details['min_eps0'] > 0.35
