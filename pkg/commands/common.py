# commands/common.py
"""Outils partagés par les sous-commandes"""

import logging
from pathlib import Path
from typing import Any, Dict, Optional

from config.settings import RunConfig
from data.loader import write_json
from models.cutoffs import CutoffFamily, build_cutoffs, eta_for_dim
from models.manifold import TorusAtlas, build_torus_atlas

logger = logging.getLogger(__name__)


def output_dir(config: RunConfig) -> Path:
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def param(config: RunConfig, key: str, default: Any = None) -> Any:
    value = config.params.get(key)
    return default if value is None else value


def cube_cutoffs(config: RunConfig, n: int, side: float = 1.0) -> Optional[CutoffFamily]:
    """None in 1D (the solver's identity default), the configured family otherwise"""
    if n == 1:
        return None
    cfg = config.section('cutoffs')
    eta = param(config, 'eta')
    eta = eta_for_dim(n, cfg['eta']) if eta is None else float(eta)
    return build_cutoffs(n, eta,
                         float(param(config, 'eps0_target', cfg['eps0_target'])),
                         side=side, quad_res=cfg['quad_res'])


def torus_atlas(config: RunConfig, n: int, res: int) -> TorusAtlas:
    cfg = config.section('atlas')
    return build_torus_atlas(n, cfg['charts_per_axis'], res, cfg['chart_side_factor'], cfg['eta'])


def write_summary(out: Path, name: str, data: Dict[str, Any]) -> Path:
    path = write_json(data, out / name)
    logger.info(f"Wrote {path}")
    return path
