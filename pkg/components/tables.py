# components/tables.py
"""Tableaux de diagnostics (pandas) et écriture CSV"""

import logging
from pathlib import Path
from typing import Dict, Union

import numpy as np
import pandas as pd

from models.dm_solver import TriangularSolution
from models.grid import Grid
from models.manifold import GlobalMap, ParametricFamily

logger = logging.getLogger(__name__)


def write_csv(df: pd.DataFrame, path: Union[str, Path]) -> Path:
    """Deterministic CSV: fixed column order, full float precision"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False, float_format='%.17g')
    return path


def layer_table(sol: TriangularSolution) -> pd.DataFrame:
    """One row per layer: size of u and the solver's own residual figures"""
    rows = []
    for layer in sol.layers:
        info = layer.info
        rows.append({
            's': layer.s,
            'u_sup': float(np.max(np.abs(layer.u))),
            'du_sup': float(np.max(np.abs(layer.du))),
            'newton_iterations': info.get('newton_iterations', 0),
            'bracket_expansions': info.get('bracket_expansions', 0),
            'functional_residual': info.get('functional_residual', 0.0),
            'marginal_defect': info.get('marginal_defect', 0.0),
            'min_jacobian': info.get('min_jacobian', np.nan),
        })
    return pd.DataFrame(rows)


def field_table(grid: Grid, fields: Dict[str, np.ndarray]) -> pd.DataFrame:
    """Node coordinates plus one column per nodal field"""
    points = grid.points()
    df = pd.DataFrame(points, columns=[f"x{i + 1}" for i in range(grid.dim)])
    for name, values in fields.items():
        df[name] = np.asarray(values, dtype=np.float64).ravel()
    return df


def edge_table(gmap: GlobalMap) -> pd.DataFrame:
    rows = []
    for k, edge in enumerate(gmap.edges):
        diag = edge.diagnostics
        rows.append({
            'edge': k,
            'chart': edge.chart,
            'identity': edge.is_identity,
            'u_sup': diag.get('u_sup', 0.0),
            'sup_bound': diag.get('sup_bound', 0.0),
            'newton_iterations': diag.get('newton_iterations', 0),
            'cube_residual': diag.get('cube_residual', 0.0),
            'dbar': diag.get('dbar', 0.0),
        })
    return pd.DataFrame(rows)


def parametric_table(family: ParametricFamily) -> pd.DataFrame:
    steps = family.lid_steps + [np.nan]
    dbar_steps = family.dbar_steps + [np.nan]
    return pd.DataFrame({
        's': family.partition,
        'dbar_id': [m.diagnostics.get('dbar_id', np.nan) for m in family.maps],
        'lid_step': steps,
        'dbar_step': dbar_steps,
    })


def report_table(parameters, reports) -> pd.DataFrame:
    """One row per smoothing report"""
    df = pd.DataFrame([r.to_dict() for r in reports])
    df.insert(0, 't', list(parameters))
    return df
