# commands/metric.py
"""Sous-commande metric : Lid_b et discrépance de boîtes entre deux fichiers"""

import logging
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

from commands.common import output_dir, param, write_summary
from config.settings import RunConfig
from data.loader import read_density, read_measure
from models.grid import Grid, TORUS
from models.weak_metric import (EUCLIDEAN, FLAT_TORUS, AtomicMeasure, atomize, box_discrepancy,
                                coarse_atomize, lid_metric)
from utils.errors import PreconditionError

logger = logging.getLogger(__name__)


def _load(path: str, config: RunConfig) -> Tuple[AtomicMeasure, Optional[Grid], float]:
    """Measure from a CSV of atoms or a density manifest; returns (measure, grid, aggregation bound)"""
    if Path(path).suffix == '.csv':
        metric = FLAT_TORUS if param(config, 'topology') == TORUS else EUCLIDEAN
        return read_measure(path, float(param(config, 'side', 1.0)), metric), None, 0.0
    density = read_density(path)
    max_atoms = param(config, 'max_atoms')
    if max_atoms:
        measure, bound = coarse_atomize(density, int(max_atoms))
        return measure, density.grid, bound
    return atomize(density), density.grid, 0.0


def run(config: RunConfig) -> Dict[str, Any]:
    out = output_dir(config)
    mu_path, nu_path = param(config, 'mu'), param(config, 'nu')
    if not (mu_path and nu_path):
        raise PreconditionError("metric needs two input files (mu and nu)")
    mu, grid_mu, err_mu = _load(mu_path, config)
    nu, grid_nu, err_nu = _load(nu_path, config)
    b = float(param(config, 'b', config.section('metric')['b']))

    report = lid_metric(mu, nu, b, config.section('metric')['atom_cap'])
    grid = grid_mu or grid_nu
    if grid is None:
        topology = TORUS if mu.periodic else 'cube'
        grid = Grid(dim=mu.dim, side=mu.side, res=int(param(config, 'box_res', 65)), topology=topology)
    summary = report.to_dict()
    summary.update({
        'box': box_discrepancy(mu, nu, grid),
        'aggregation_bound': err_mu + err_nu,
        'atoms': [len(mu), len(nu)],
    })
    write_summary(out, 'metric.json', summary)
    logger.info(f"Lid_{b:g} = {report.lid_value:.6g}, box = {summary['box']:.6g}")
    return summary
