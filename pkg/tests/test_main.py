# tests/test_main.py
"""Interface en ligne de commande"""

import json

import numpy as np

from data.loader import write_density
from main import main
from models.grid import Grid, GridDensity, from_function


def test_selftest_passes(tmp_path):
    assert main(['selftest', '--out', str(tmp_path)]) == 0
    report = json.loads((tmp_path / 'selftest.json').read_text())
    assert report['passed']
    assert {c['check'] for c in report['checks']} >= {'mass', 'oracle_1d', 'round_trip'}
    assert (tmp_path / 'manifest.json').exists()


def test_mass_mismatch_exit_code(tmp_path):
    grid = Grid(dim=2, res=9)
    f = write_density(GridDensity(grid, np.ones(grid.shape)), tmp_path / 'f.json')
    g = write_density(GridDensity(grid, np.full(grid.shape, 1.5)), tmp_path / 'g.json')
    out = tmp_path / 'run'
    assert main(['solve-cube', '--f', str(f), '--g', str(g), '--out', str(out)]) == 2
    error = json.loads((out / 'error.json').read_text())
    assert error['error'] == 'mass mismatch'
    assert error['exit_code'] == 2


def test_metric_of_identical_files(tmp_path):
    grid = Grid(dim=2, res=9)
    path = write_density(from_function(grid, lambda x, y: 1.0 + 0.5 * x), tmp_path / 'mu.json')
    out = tmp_path / 'run'
    assert main(['metric', '--mu', str(path), '--nu', str(path), '--out', str(out)]) == 0
    summary = json.loads((out / 'metric.json').read_text())
    assert summary['value'] == 0.0
    assert summary['box'] == 0.0


def test_one_dimensional_cube_solve(tmp_path):
    assert main(['solve-cube', '--n', '1', '--res', '129', '--out', str(tmp_path)]) == 0
    diagnostics = json.loads((tmp_path / 'diagnostics.json').read_text())['diagnostics']
    assert diagnostics['residual_sup'] < 1e-2
    assert (tmp_path / 'layers.csv').exists()


def test_unknown_setting_is_refused(tmp_path):
    config = tmp_path / 'config.json'
    config.write_text(json.dumps({'tolerances': {'bogus': 1.0}}))
    assert main(['selftest', '--config', str(config), '--out', str(tmp_path)]) == 2


def test_torus_solve_writes_displacement_fields(tmp_path):
    assert main(['solve-torus', '--res', '32', '--out', str(tmp_path)]) == 0
    manifest = json.loads((tmp_path / 'global_map' / 'displacement.json').read_text())
    assert manifest['topology'] == 'torus'
    assert manifest['components'] == 2
    assert (tmp_path / 'global_map' / manifest['data']).stat().st_size == 32 * 32 * 2 * 8
