# components/__init__.py
"""Composants de sortie : graphiques et tableaux"""

from .charts import create_coercive_chart, create_defect_heatmap, create_steps_chart, save_figure
from .tables import edge_table, field_table, layer_table, parametric_table, report_table, write_csv

__all__ = [
    'create_coercive_chart',
    'create_defect_heatmap',
    'create_steps_chart',
    'save_figure',
    'edge_table',
    'field_table',
    'layer_table',
    'parametric_table',
    'report_table',
    'write_csv',
]
