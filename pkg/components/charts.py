# components/charts.py
"""Graphiques réutilisables (plotly) et export statique"""

import logging
from pathlib import Path
from typing import Optional, Union

import numpy as np
import pandas as pd
import plotly.graph_objects as go

from config.settings import CHART_STYLE

logger = logging.getLogger(__name__)


def _layout(fig: go.Figure, title: str, x_title: str, y_title: str) -> go.Figure:
    fig.update_layout(
        title=title,
        width=CHART_STYLE['width'],
        height=CHART_STYLE['height'],
        template='simple_white',
        font=dict(size=13),
    )
    fig.update_xaxes(title_text=x_title)
    fig.update_yaxes(title_text=y_title)
    return fig


def create_coercive_chart(df: pd.DataFrame, log_scale: bool = True) -> Optional[go.Figure]:
    """d̄(ψ, id) and max|u| against d_M, with the 2·M_g·d_M bound"""
    if df.empty or 'dM' not in df.columns:
        return None
    data = df[df['dM'] > 0].sort_values('dM') if log_scale else df.sort_values('dM')
    if data.empty:
        return None

    fig = go.Figure()
    fig.add_trace(go.Scatter(
        x=data['dM'], y=data['dbar'], mode='markers+lines', name='d̄(ψ, id)',
        marker=dict(color=CHART_STYLE['primary'], size=9),
    ))
    fig.add_trace(go.Scatter(
        x=data['dM'], y=data['u_sup'], mode='markers', name='max |u|',
        marker=dict(color=CHART_STYLE['secondary'], size=7, symbol='diamond'),
    ))
    if 'mg_bound' in data.columns:
        fig.add_trace(go.Scatter(
            x=data['dM'], y=data['mg_bound'], mode='lines', name='2·M_g·d_M',
            line=dict(color=CHART_STYLE['gray'], dash='dash'),
        ))
    _layout(fig, "Coerciveness sweep", "d_M(f, g)", "C⁰ size")
    if log_scale:
        fig.update_xaxes(type='log')
        fig.update_yaxes(type='log')
    return fig


def create_defect_heatmap(values: np.ndarray, title: str, side: float = 1.0) -> go.Figure:
    """Heatmap of a 2D nodal field (first axis horizontal)"""
    values = np.asarray(values, dtype=np.float64)
    res = values.shape[0]
    nodes = np.arange(res) * side / res
    bound = float(np.max(np.abs(values))) or 1.0
    fig = go.Figure(go.Heatmap(
        x=nodes, y=nodes, z=values.T, colorscale='RdBu', zmid=0.0, zmin=-bound, zmax=bound,
    ))
    _layout(fig, title, "x₁", "x₂")
    fig.update_yaxes(scaleanchor='x')
    return fig


def create_steps_chart(df: pd.DataFrame, x: str, columns, title: str) -> Optional[go.Figure]:
    """Line chart of per-step diagnostics (parametric and isotopy runs)"""
    if df.empty:
        return None
    colors = [CHART_STYLE['primary'], CHART_STYLE['secondary'], CHART_STYLE['success']]
    fig = go.Figure()
    for color, col in zip(colors, columns):
        if col in df.columns:
            fig.add_trace(go.Scatter(x=df[x], y=df[col], mode='markers+lines', name=col,
                                     line=dict(color=color)))
    return _layout(fig, title, x, "value")


def save_figure(fig: Optional[go.Figure], path: Union[str, Path]) -> Optional[Path]:
    """Write a static SVG through kaleido; fall back to standalone HTML"""
    if fig is None:
        return None
    path = Path(path).with_suffix('.svg')
    path.parent.mkdir(parents=True, exist_ok=True)
    try:
        fig.write_image(str(path), format='svg')
        return path
    except Exception as e:
        fallback = path.with_suffix('.html')
        logger.warning(f"Static export unavailable ({e}); writing {fallback.name} instead")
        fig.write_html(str(fallback), include_plotlyjs='cdn')
        return fallback
