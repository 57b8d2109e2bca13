# data/processor.py
"""Validation des entrées et préparation des tableaux de balayage"""

import logging
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from config.settings import TOLERANCES
from models.cutoffs import CutoffFamily
from models.dm_solver import check_pair
from models.grid import GridDensity, mass, resolution_diagnostic
from utils.errors import PreconditionError

logger = logging.getLogger(__name__)

SWEEP_COLUMNS = ['eps', 'dM', 'box', 'u_sup', 'dbar', 'mg_bound', 'bound_ok']


def describe_density(d: GridDensity) -> Dict[str, Any]:
    return {
        'topology': d.grid.topology,
        'dim': d.grid.dim,
        'res': d.grid.res,
        'mass': mass(d),
        'min': d.min,
        'max': d.max,
        'resolution': resolution_diagnostic(d),
    }


def validate_pair(f: GridDensity, g: GridDensity, cutoffs: Optional[CutoffFamily] = None,
                  tolerances: Optional[Dict] = None) -> Dict[str, Any]:
    """Cube pair checks (grid, mass, collar support) plus a resolution warning"""
    tolerances = tolerances or TOLERANCES
    check_pair(f, g, cutoffs, tolerances)
    summary = {'f': describe_density(f), 'g': describe_density(g)}
    for name, info in summary.items():
        if info['resolution'] > tolerances.get('resolution', TOLERANCES['resolution']):
            logger.warning(f"Density {name} varies by {info['resolution']:.3g} across one cell; "
                           f"consider a finer grid")
    return summary


def validate_torus_pair(sigma: GridDensity, tau: GridDensity) -> Dict[str, Any]:
    if not (sigma.grid.periodic and tau.grid.periodic):
        raise PreconditionError("Torus solves need densities on torus grids")
    if sigma.grid != tau.grid:
        raise PreconditionError("Both densities must share one torus grid")
    if sigma.grid.side != 1.0:
        raise PreconditionError("Torus densities live on the unit torus")
    return {'sigma': describe_density(sigma), 'tau': describe_density(tau)}


def sweep_table(rows: List[Dict[str, Any]]) -> pd.DataFrame:
    """Coerciveness sweep rows, sorted by decreasing eps"""
    df = pd.DataFrame(rows)
    for col in SWEEP_COLUMNS:
        if col not in df.columns:
            df[col] = np.nan
    numeric = [c for c in df.columns if c != 'bound_ok' and df[c].dtype != bool]
    df[numeric] = df[numeric].apply(pd.to_numeric, errors='coerce')
    df['bound_ok'] = df['bound_ok'].astype(bool)
    ordered = SWEEP_COLUMNS + [c for c in df.columns if c not in SWEEP_COLUMNS]
    return df[ordered].sort_values('eps', ascending=False).reset_index(drop=True)


def monotone_nonincreasing(values: Sequence[float], noise: float = 0.05) -> bool:
    """True when each value is at most the previous one, up to `noise` relative slack"""
    vals = [float(v) for v in values]
    return all(b <= a * (1.0 + noise) + 1e-12 for a, b in zip(vals, vals[1:]))


def monotonicity_summary(df: pd.DataFrame, columns: Sequence[str] = ('dM', 'u_sup', 'dbar'),
                         noise: float = 0.05) -> Dict[str, bool]:
    """Columns that decrease as eps decreases; df sorted by decreasing eps"""
    return {col: monotone_nonincreasing(df[col].tolist(), noise) for col in columns if col in df.columns}


def flatten(data: Dict[str, Any], prefix: str = '') -> Dict[str, Any]:
    """Nested diagnostics -> one-level dict with dotted keys (lists are kept as is)"""
    out = {}
    for key, value in data.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            out.update(flatten(value, f"{name}."))
        else:
            out[name] = value
    return out
