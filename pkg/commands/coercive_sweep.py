# commands/coercive_sweep.py
"""Sous-commande coercive-sweep : taille C⁰ de ψ contre d_M le long de f_ε"""

import logging
from typing import Any, Dict, List

import numpy as np

from commands.common import cube_cutoffs, output_dir, param, write_summary
from commands.solve_cube import load_pair
from components.charts import create_coercive_chart, save_figure
from components.tables import write_csv
from config.settings import RunConfig
from data.instances import blend
from data.processor import monotonicity_summary, sweep_table
from models import dm_solver
from utils.helpers import log_log_slope

logger = logging.getLogger(__name__)

DEFAULT_EPS = [1.0, 0.5, 0.25, 0.125, 0.0625]


def sweep_rows(f, g, eps_values, cutoffs, config: RunConfig) -> List[Dict[str, Any]]:
    metric = config.section('metric')
    rows = []
    for eps in eps_values:
        f_eps = blend(f, g, float(eps))
        sol = dm_solver.dm_solve(f_eps, g, cutoffs, metrics=False, tolerances=config.tolerances,
                                 solver=config.section('solver'), seed=config.seed)
        check = dm_solver.coerciveness_check(sol, f_eps, g, metric['b'], metric['coarse_atoms'])
        _, lemma = dm_solver.nonlinear_term(sol, f_eps, g, config.tolerances)
        bound = check['coercive_bound']
        rows.append({
            'eps': float(eps),
            'dM': check['dM_value'],
            'box': check['box_value'],
            'u_sup': sol.u_sup,
            'dbar': check['dbar_id'],
            'mg_bound': bound,
            'bound_ok': bool(sol.u_sup <= bound + 1e-12),
            'applicable': check['coercive_applicable'],
            'N_sup': lemma['N_sup'],
            'lemma_slack': lemma['lemma_slack'],
            'lemma_ok': lemma['lemma_ok'],
        })
        logger.info(f"eps={eps:g}: dM={check['dM_value']:.3g}, max|u|={sol.u_sup:.3g}, "
                    f"d-bar={check['dbar_id']:.3g}")
    return rows


def run(config: RunConfig) -> Dict[str, Any]:
    out = output_dir(config)
    f, g = load_pair(config)
    cutoffs = cube_cutoffs(config, f.grid.dim, f.grid.side)
    eps_values = [float(e) for e in param(config, 'eps', DEFAULT_EPS)]

    df = sweep_table(sweep_rows(f, g, eps_values, cutoffs, config))
    write_csv(df, out / 'sweep.csv')
    save_figure(create_coercive_chart(df), out / 'coercive')

    positive = df[(df['eps'] > 0) & (df['N_sup'] > 0)]
    slope = log_log_slope(positive['eps'], positive['N_sup']) if len(positive) >= 2 else None
    small = df[df['applicable']]
    summary = {
        'rows': len(df),
        'monotone': monotonicity_summary(df),
        'bound_ok_small_dM': bool(small['bound_ok'].all()) if len(small) else None,
        'N_slope': slope,
        'lemma_ok': bool(df['lemma_ok'].all()),
    }
    write_summary(out, 'summary.json', summary)
    return summary
