# commands/smooth_isotopy.py
"""Sous-commande smooth-isotopy : lissage d'une isotopie préservant l'aire"""

import logging
from typing import Any, Dict, List

import pandas as pd

from commands.common import output_dir, param, torus_atlas, write_summary
from components.charts import create_steps_chart, save_figure
from components.tables import report_table, write_csv
from config.settings import RunConfig
from data.instances import hamiltonian_isotopy, translation_isotopy
from data.loader import read_homeo
from models.smoothing import SampledHomeo, smooth_isotopy

logger = logging.getLogger(__name__)


def load_members(config: RunConfig) -> List[SampledHomeo]:
    paths = param(config, 'homeos')
    if paths:
        return [read_homeo(p) for p in paths]
    res = int(param(config, 'res', 64))
    members = int(param(config, 'members', 6))
    if param(config, 'family', 'hamiltonian') == 'translation':
        return translation_isotopy(res, float(param(config, 'speed', 0.05)), members)
    return hamiltonian_isotopy(res, float(param(config, 'amplitude', 0.05)),
                               float(param(config, 'shear', 0.02)), members)


def run(config: RunConfig) -> Dict[str, Any]:
    out = output_dir(config)
    members = load_members(config)
    atlas = torus_atlas(config, 2, members[0].grid.res)
    scale = param(config, 'scale')

    result = smooth_isotopy(members, None if scale is None else float(scale), atlas,
                            parameters=param(config, 'parameters'), threads=config.threads,
                            tolerances=config.tolerances, settings=config.section('smoothing'),
                            solver=config.section('solver'))
    write_csv(report_table(result.parameters, result.reports), out / 'reports.csv')
    steps = pd.DataFrame({
        't': result.parameters[1:],
        'input_step': result.diagnostics['input_steps'],
        'output_step': result.diagnostics['output_steps'],
    })
    write_csv(steps, out / 'steps.csv')
    save_figure(create_steps_chart(steps, 't', ['input_step', 'output_step'], "Isotopy steps"),
                out / 'steps')

    summary = {'diagnostics': result.diagnostics, 'reports': [r.to_dict() for r in result.reports]}
    write_summary(out, 'isotopy.json', summary)
    return summary
