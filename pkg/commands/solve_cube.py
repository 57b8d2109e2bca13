# commands/solve_cube.py
"""Sous-commande solve-cube : solution DM sur un cube"""

import logging
from typing import Any, Dict

from commands.common import cube_cutoffs, output_dir, param, write_summary
from components.charts import create_defect_heatmap, save_figure
from components.tables import field_table, layer_table, write_csv
from config.settings import RunConfig
from data.instances import bump_instance
from data.loader import read_density, write_solution
from data.processor import validate_pair
from models import dm_solver

logger = logging.getLogger(__name__)


def load_pair(config: RunConfig):
    f_path, g_path = param(config, 'f'), param(config, 'g')
    if f_path and g_path:
        return read_density(f_path), read_density(g_path)
    return bump_instance(res=int(param(config, 'res', 65)), n=int(param(config, 'n', 2)),
                         amplitude=float(param(config, 'amplitude', 0.2)))


def run(config: RunConfig) -> Dict[str, Any]:
    out = output_dir(config)
    f, g = load_pair(config)
    cutoffs = cube_cutoffs(config, f.grid.dim, f.grid.side)
    inputs = validate_pair(f, g, cutoffs, config.tolerances)

    sol = dm_solver.dm_solve(f, g, cutoffs, metrics=True, tolerances=config.tolerances,
                             solver=config.section('solver'), seed=config.seed)
    _, lemma = dm_solver.nonlinear_term(sol, f, g, config.tolerances)
    sol.diagnostics.update(lemma)

    write_solution(sol, out / 'solution')
    write_csv(layer_table(sol), out / 'layers.csv')
    pulled = dm_solver.pullback_density(sol, g)
    write_csv(field_table(f.grid, {'f': f.values, 'pullback': pulled, 'residual': pulled - f.values}),
              out / 'residual.csv')
    if f.grid.dim == 2:
        save_figure(create_defect_heatmap(pulled - f.values, "g(ψ) det∇ψ - f", f.grid.side),
                    out / 'residual')

    summary = {'inputs': inputs, 'diagnostics': sol.diagnostics}
    write_summary(out, 'diagnostics.json', summary)
    logger.info(f"solve-cube: max|u|={sol.u_sup:.4g}, residual={sol.diagnostics['residual_sup']:.3g}")
    return summary
