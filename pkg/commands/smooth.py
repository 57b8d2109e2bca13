# commands/smooth.py
"""Sous-commande smooth : lissage d'un homéomorphisme préservant l'aire"""

import logging
from typing import Any, Dict

from commands.common import output_dir, param, torus_atlas, write_summary
from components.charts import create_defect_heatmap, save_figure
from components.tables import field_table, report_table, write_csv
from config.settings import RunConfig
from data.instances import sheared_hamiltonian
from data.loader import read_homeo, write_homeo
from models.smoothing import SampledHomeo, smooth

logger = logging.getLogger(__name__)


def load_homeo(config: RunConfig) -> SampledHomeo:
    path = param(config, 'homeo')
    if path:
        return read_homeo(path, param(config, 'claimed_area_preserving'))
    return sheared_hamiltonian(res=int(param(config, 'res', 128)),
                               amplitude=float(param(config, 'amplitude', 0.05)),
                               shear_amplitude=float(param(config, 'shear', 0.02)))


def run(config: RunConfig) -> Dict[str, Any]:
    out = output_dir(config)
    h = load_homeo(config)
    atlas = torus_atlas(config, 2, h.grid.res)
    scales = param(config, 'scales') or [param(config, 'scale')]

    results = [smooth(h, None if s is None else float(s), atlas, config.tolerances,
                      config.section('smoothing'), config.section('solver')) for s in scales]
    phi, report = results[0]
    reports = [r for _, r in results]

    write_homeo(phi.as_homeo(), out / 'phi.json')
    psi1_defect = phi.psi1.jacobian_det() - 1.0
    phi_defect = phi.jacobian_det() - 1.0
    write_csv(field_table(h.grid, {'det_psi1_minus_1': psi1_defect, 'det_phi_minus_1': phi_defect}),
              out / 'defects.csv')
    save_figure(create_defect_heatmap(psi1_defect, "det dψ₁ - 1"), out / 'defect_before')
    save_figure(create_defect_heatmap(phi_defect, "det dφ - 1"), out / 'defect_after')
    write_csv(report_table([r.scale for r in reports], reports), out / 'scales.csv')

    summary = {
        'report': report.to_dict(),
        'input_area_box': h.info.get('area_box'),
        'scales': [r.to_dict() for r in reports],
    }
    write_summary(out, 'report.json', summary)
    return summary
