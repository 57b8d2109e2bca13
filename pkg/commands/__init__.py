# commands/__init__.py
"""Sous-commandes de la ligne de commande; chacune expose run(config)"""

from . import coercive_sweep, metric, selftest, smooth, smooth_isotopy, solve_cube, solve_torus

COMMANDS = {
    'solve-cube': solve_cube,
    'solve-torus': solve_torus,
    'coercive-sweep': coercive_sweep,
    'smooth': smooth,
    'smooth-isotopy': smooth_isotopy,
    'metric': metric,
    'selftest': selftest,
}

__all__ = ['COMMANDS']
