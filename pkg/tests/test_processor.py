# tests/test_processor.py
"""Tableaux de balayage et sorties"""

import numpy as np
import pandas as pd
import pytest

from components.charts import create_coercive_chart, create_defect_heatmap
from components.tables import field_table
from data.instances import blend, bump_instance
from data.processor import flatten, monotone_nonincreasing, monotonicity_summary, sweep_table, validate_torus_pair
from models.grid import Grid, GridDensity
from utils.errors import PreconditionError


def test_sweep_table_orders_and_types():
    rows = [{'eps': 0.25, 'dM': 0.01, 'u_sup': 0.002, 'dbar': 0.002, 'bound_ok': True},
            {'eps': 1.0, 'dM': 0.04, 'u_sup': 0.008, 'dbar': 0.008, 'bound_ok': False}]
    df = sweep_table(rows)
    assert df['eps'].tolist() == [1.0, 0.25]
    assert df['bound_ok'].dtype == bool
    assert df['box'].isna().all()
    assert monotonicity_summary(df) == {'dM': True, 'u_sup': True, 'dbar': True}


@pytest.mark.parametrize('values, expected', [
    ([3.0, 2.0, 1.0], True),
    ([3.0, 3.1, 1.0], True),
    ([1.0, 2.0], False),
])
def test_monotone_with_noise(values, expected):
    assert monotone_nonincreasing(values) is expected


def test_flatten():
    assert flatten({'a': {'b': 1, 'c': {'d': 2}}, 'e': [1, 2]}) == {'a.b': 1, 'a.c.d': 2, 'e': [1, 2]}


def test_blend_endpoints():
    f, g = bump_instance(res=17)
    assert blend(f, g, 0.0) is g
    np.testing.assert_allclose(blend(f, g, 1.0).values, f.values)
    with pytest.raises(PreconditionError):
        blend(f, g, 1.5)


def test_torus_pair_needs_torus_grids():
    grid = Grid(dim=2, res=8)
    d = GridDensity(grid, np.ones(grid.shape))
    with pytest.raises(PreconditionError):
        validate_torus_pair(d, d)


def test_charts_and_tables():
    df = pd.DataFrame({'dM': [0.01, 0.02], 'dbar': [0.001, 0.002], 'u_sup': [0.001, 0.002],
                       'mg_bound': [0.04, 0.08]})
    fig = create_coercive_chart(df)
    assert len(fig.data) == 3
    assert create_coercive_chart(df.iloc[0:0]) is None
    heat = create_defect_heatmap(np.zeros((4, 4)), "zero")
    assert np.asarray(heat.data[0].z).shape == (4, 4)
    grid = Grid(dim=2, res=3)
    table = field_table(grid, {'v': np.arange(9.0).reshape(3, 3)})
    assert list(table.columns) == ['x1', 'x2', 'v']
    assert table['v'].tolist() == list(np.arange(9.0))
