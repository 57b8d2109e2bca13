# commands/solve_torus.py
"""Sous-commande solve-torus : correction globale sur le tore plat"""

import logging
from typing import Any, Dict

import numpy as np

from commands.common import output_dir, param, torus_atlas, write_summary
from components.charts import create_steps_chart, save_figure
from components.tables import edge_table, parametric_table, write_csv
from config.settings import RunConfig
from data.instances import linear_torus_family, torus_density
from data.loader import read_density, write_atlas, write_global_map
from data.processor import validate_torus_pair
from models.grid import GridDensity
from models.manifold import cutoffs_for, global_solve, parametric_solve

logger = logging.getLogger(__name__)


def load_pair(config: RunConfig):
    sigma_path, tau_path = param(config, 'sigma'), param(config, 'tau')
    if sigma_path and tau_path:
        return read_density(sigma_path), read_density(tau_path)
    res = int(param(config, 'res', 64))
    n = int(param(config, 'n', 2))
    sigma = torus_density(res, float(param(config, 'amplitude', 0.1)), n)
    return sigma, GridDensity(sigma.grid, np.ones(sigma.grid.shape))


def run(config: RunConfig) -> Dict[str, Any]:
    out = output_dir(config)
    sigma, tau = load_pair(config)
    inputs = validate_torus_pair(sigma, tau)
    grid = sigma.grid
    atlas = torus_atlas(config, grid.dim, grid.res)
    target = param(config, 'eps0_target')
    cutoffs = cutoffs_for(atlas, float(target)) if target is not None else None

    gmap = global_solve(sigma, tau, atlas, cutoffs, config.tolerances, config.section('solver'))
    write_atlas(atlas, out / 'atlas.json')
    write_csv(edge_table(gmap), out / 'edges.csv')
    write_global_map(gmap, out / 'global_map')
    summary = {'inputs': inputs, 'atlas': atlas.to_dict(), 'diagnostics': gmap.diagnostics,
               'decomposition': gmap.decomposition.diagnostics}

    if param(config, 'parametric', False):
        family = parametric_solve(linear_torus_family(grid.res, float(param(config, 'amplitude', 0.1)), grid.dim),
                                  tau, atlas, threads=config.threads, tolerances=config.tolerances,
                                  settings=config.section('smoothing'), solver=config.section('solver'))
        table = parametric_table(family)
        write_csv(table, out / 'parametric.csv')
        save_figure(create_steps_chart(table, 's', ['lid_step', 'dbar_step', 'dbar_id'],
                                       "Parametric family"), out / 'parametric')
        summary['parametric'] = family.diagnostics

    write_summary(out, 'diagnostics.json', summary)
    return summary
