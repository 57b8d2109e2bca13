# config/settings.py
"""Configuration et constantes du solveur de Moser"""

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional

from utils.errors import PreconditionError

# Constantes de l'application
APP_CONFIG = {
    'title': "moser-c0",
    'subtitle': "Coercive Dacorogna-Moser transport and area-preserving smoothing",
    'version': "1.0",
}

# Enveloppe des grilles
GRID_LIMITS = {
    'max_dim': 4,
    'min_res': 3,
}

# Tolérances (toutes surchargeables via --config)
TOLERANCES = {
    'mass_match': 1e-8,          # relative, mass(f) vs mass(g)
    'marginal': 1e-3,            # relative, per-parameter marginal defect
    'support': 1e-12,            # |f - g| allowed inside the collar
    'root': 1e-12,               # absolute in b
    'functional': 1e-10,         # |G(a,u) - F(a)|
    'domain': 1e-12,
    'certificate': 1e-9,
    'round_trip': 1e-8,
    'kernel_singular': 1e-14,
    'lemma_slack': 1e-6,
    'pullback_mass': 2e-3,
    'homeo_inverse': 1e-8,
    'area_preserving': 0.05,     # box discrepancy of h_* uniform vs uniform
    'partition_sum': 1e-10,
    'smoothness': 0.1,           # relative drift of mixed partials under h -> 2h
    'resolution': 0.1,           # L*h above which a density is flagged as under-resolved
}

# Paramètres des solveurs
SOLVER = {
    'max_newton': 100,
    'max_bisection': 200,
    'bracket_growth': 2.0,
    'min_derivative': 1e-14,
    'mc_samples': 100_000,
    'mc_boxes': 100,
    'inverse_iterations': 64,
}

# Fonctions de coupure
CUTOFFS = {
    'eta': 0.1,
    'eps0_target': 0.35,
    'quad_res': 257,
    'min_ramp_fraction': 1.0 / 64.0,   # of eta
}

# Métrique faible
METRIC = {
    'b': 1.0,
    'atom_cap': 2000,
    'brute_cap': 6,
    'coarse_atoms': 256,
    'lp_method': 'highs-ds',
    'lp_tolerance': 1e-10,
}

# Atlas du tore
ATLAS = {
    'charts_per_axis': 2,
    'chart_side_factor': 1.75,   # chart side = factor / charts_per_axis
    'eta': 0.1,
}

# Lissage 2D
SMOOTHING = {
    'scale_spacings': 4.0,
    'min_scale_spacings': 2.0,
    'max_halvings': 3,
    'newton_tol': 1e-10,
    'newton_max_iter': 50,
    'isotopy_step': 0.1,
    'lid_step': 0.05,
    'max_refinements': 4,
    'continuity_factor': 2.0,
}

EXIT_CODES = {
    'ok': 0,
    'error': 1,
    'precondition': 2,
    'validation': 3,
    'size': 4,
    'solver': 5,
}

# Style des graphiques
CHART_STYLE = {
    'primary': '#FF6B35',
    'secondary': '#3B82F6',
    'success': '#10B981',
    'error': '#EF4444',
    'gray': '#6B7280',
    'width': 720,
    'height': 480,
}

DEFAULT_SECTIONS = {
    'tolerances': TOLERANCES,
    'solver': SOLVER,
    'cutoffs': CUTOFFS,
    'metric': METRIC,
    'atlas': ATLAS,
    'smoothing': SMOOTHING,
}


@dataclass
class RunConfig:
    """Resolved configuration of one CLI run"""
    command: str
    params: Dict[str, Any] = field(default_factory=dict)
    sections: Dict[str, Dict[str, Any]] = field(default_factory=lambda: copy.deepcopy(DEFAULT_SECTIONS))
    seed: int = 0
    threads: int = 1
    out_dir: Path = Path("out")
    overrides: Dict[str, Any] = field(default_factory=dict)

    @property
    def tolerances(self) -> Dict[str, Any]:
        return self.sections['tolerances']

    def section(self, name: str) -> Dict[str, Any]:
        return self.sections[name]

    def to_manifest(self) -> Dict[str, Any]:
        return {
            'command': self.command,
            'params': self.params,
            'sections': self.sections,
            'seed': self.seed,
            'threads': self.threads,
            'out_dir': str(self.out_dir),
            'overrides': self.overrides,
            'version': APP_CONFIG['version'],
        }


def merge_sections(overrides: Dict[str, Dict[str, Any]]) -> Dict[str, Dict[str, Any]]:
    """Merge user overrides on top of the defaults; unknown keys are rejected"""
    merged = copy.deepcopy(DEFAULT_SECTIONS)
    for name, values in overrides.items():
        if name not in merged:
            raise PreconditionError(f"Unknown configuration section '{name}'")
        for key, value in values.items():
            if key not in merged[name]:
                raise PreconditionError(f"Unknown setting '{name}.{key}'")
            merged[name][key] = value
    return merged


def load_run_config(path: Optional[str], command: str,
                    cli_overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """Load a JSON run configuration and apply command-line overrides"""
    raw: Dict[str, Any] = {}
    if path:
        try:
            with open(path, encoding='utf-8') as handle:
                raw = json.load(handle)
        except FileNotFoundError:
            raise PreconditionError(f"Config file not found: {path}")
        except json.JSONDecodeError as e:
            raise PreconditionError(f"Config file is not valid JSON: {e}")

    section_overrides = {k: v for k, v in raw.items() if k in DEFAULT_SECTIONS}
    cli_overrides = {k: v for k, v in (cli_overrides or {}).items() if v is not None}

    config = RunConfig(
        command=command,
        params=dict(raw.get('params', {})),
        sections=merge_sections(section_overrides),
        seed=int(cli_overrides.get('seed', raw.get('seed', 0))),
        threads=max(1, int(cli_overrides.get('threads', raw.get('threads', 1)))),
        out_dir=Path(cli_overrides.get('out', raw.get('out_dir', 'out'))),
        overrides={'config': section_overrides, 'cli': cli_overrides},
    )
    return config
