# commands/selftest.py
"""Sous-commande selftest : suite réduite d'invariants"""

import logging
import time
from typing import Any, Callable, Dict, List, Tuple

import numpy as np

from commands.common import output_dir, write_summary
from config.settings import EXIT_CODES, RunConfig
from models import dm_solver
from models.cutoffs import CutoffFamily
from models.grid import Grid, GridDensity, cumulative, from_function, integrate, mass
from models.triangular_linear import TriangularFieldVector, apply_dpsi0, build_kernel, invert_dpsi0
from models.weak_metric import AtomicMeasure, brute_force_lid, lid_metric
from utils.errors import MoserError

logger = logging.getLogger(__name__)

Check = Callable[[int], Tuple[float, float]]


def check_mass(seed: int) -> Tuple[float, float]:
    grid = Grid(dim=2, res=33)
    return abs(mass(GridDensity(grid, np.ones(grid.shape))) - 1.0), 1e-12


def check_cumulative(seed: int) -> Tuple[float, float]:
    rng = np.random.default_rng(seed)
    grid = Grid(dim=2, res=33)
    d = GridDensity(grid, rng.uniform(0.5, 2.0, grid.shape))
    field = cumulative(d, 1)
    fibers = integrate(grid, d.values, axes=[1])
    return float(np.max(np.abs(field.fiber_mass - fibers) / fibers)), 1e-12


def check_lp(seed: int) -> Tuple[float, float]:
    rng = np.random.default_rng(seed)
    mu = AtomicMeasure(rng.uniform(size=(3, 2)), rng.uniform(0.1, 1.0, 3))
    nu = AtomicMeasure(rng.uniform(size=(3, 2)), rng.uniform(0.1, 1.0, 3))
    return abs(lid_metric(mu, nu, 1.0).lid_value - brute_force_lid(mu, nu, 1.0)), 1e-9


def check_oracle_1d(seed: int) -> Tuple[float, float]:
    grid = Grid(dim=1, res=4097)
    f = from_function(grid, lambda x: 0.5 + x)
    g = GridDensity(grid, np.ones(grid.shape))
    sol = dm_solver.dm_solve(f, g, metrics=False)
    x = grid.nodes
    return float(np.max(np.abs(dm_solver.apply(sol, x[:, None])[:, 0] - (0.5 * x + 0.5 * x * x)))), 1e-6


def check_round_trip(seed: int) -> Tuple[float, float]:
    grid = Grid(dim=2, res=65)
    a1, a2 = grid.mesh()
    g = GridDensity(grid, 1.0 + 0.2 * a1 * a2)
    kernel = build_kernel(g, CutoffFamily.identity(2))
    X = TriangularFieldVector(grid, [np.sin(np.pi * a1) * np.cos(np.pi * a2), np.sin(2.0 * np.pi * grid.nodes)])
    back = invert_dpsi0(kernel, apply_dpsi0(kernel, X))
    return (back - X).sup(), 5e-3


CHECKS: List[Tuple[str, Check]] = [
    ('mass', check_mass),
    ('cumulative', check_cumulative),
    ('lp_vs_brute_force', check_lp),
    ('oracle_1d', check_oracle_1d),
    ('round_trip', check_round_trip),
]


def run(config: RunConfig) -> Dict[str, Any]:
    out = output_dir(config)
    results = []
    for name, check in CHECKS:
        start = time.perf_counter()
        try:
            value, threshold = check(config.seed)
            entry = {'check': name, 'value': value, 'threshold': threshold, 'passed': bool(value <= threshold)}
        except MoserError as e:
            entry = {'check': name, 'passed': False, 'error': e.to_dict()}
        entry['seconds'] = round(time.perf_counter() - start, 3)
        level = logging.INFO if entry['passed'] else logging.ERROR
        logger.log(level, f"selftest {name}: {'pass' if entry['passed'] else 'FAIL'}")
        results.append(entry)

    passed = all(r['passed'] for r in results)
    summary = {'passed': passed, 'checks': results,
               'exit_code': EXIT_CODES['ok'] if passed else EXIT_CODES['error']}
    write_summary(out, 'selftest.json', summary)
    return summary
