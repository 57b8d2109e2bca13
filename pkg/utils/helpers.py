# utils/helpers.py
"""Fonctions utilitaires génériques"""

from typing import Any, Optional

import numpy as np

from utils.errors import DomainError


def as_points(x: Any, dim: int) -> np.ndarray:
    """Coerce a point or a stack of points to a (m, dim) float array"""
    pts = np.asarray(x, dtype=np.float64)
    if pts.ndim == 0:
        pts = pts.reshape(1, 1)
    elif pts.ndim == 1:
        pts = pts.reshape(1, dim) if pts.size == dim else pts.reshape(-1, 1)
    if pts.shape[-1] != dim:
        raise DomainError(f"Expected points of dimension {dim}, got shape {pts.shape}",
                          {'dim': dim, 'shape': list(pts.shape)})
    return pts


def wrap(x: np.ndarray, side: float) -> np.ndarray:
    """Wrap coordinates into [0, side)"""
    out = np.mod(x, side)
    # np.mod can return side itself for tiny negative inputs
    return np.where(out >= side, out - side, out)


def torus_delta(a: np.ndarray, b: np.ndarray, side: float) -> np.ndarray:
    """Signed coordinate difference a - b on the flat torus, in [-side/2, side/2)"""
    d = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    return d - side * np.round(d / side)


def point_distances(a: np.ndarray, b: np.ndarray, side: Optional[float] = None) -> np.ndarray:
    """Row-wise Euclidean distance, flat-torus distance when side is given"""
    if side is None:
        diff = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    else:
        diff = torus_delta(a, b, side)
    return np.sqrt(np.sum(diff * diff, axis=-1))


def pairwise_distances(points: np.ndarray, side: Optional[float] = None) -> np.ndarray:
    """All-pairs distance matrix of a point set"""
    pts = np.asarray(points, dtype=np.float64)
    diff = np.abs(pts[:, None, :] - pts[None, :, :])
    if side is not None:
        diff = np.minimum(diff, side - diff)
    return np.sqrt(np.sum(diff * diff, axis=-1))


def sup_distance(a: np.ndarray, b: np.ndarray, side: Optional[float] = None) -> float:
    if len(a) == 0:
        return 0.0
    return float(np.max(point_distances(a, b, side)))


def dbar(forward_a: np.ndarray, forward_b: np.ndarray,
         inverse_a: np.ndarray, inverse_b: np.ndarray,
         side: Optional[float] = None) -> float:
    """d̄ between two homeomorphisms sampled at the same nodes: max of the
    sup-distances of the maps and of their inverses"""
    return max(sup_distance(forward_a, forward_b, side),
               sup_distance(inverse_a, inverse_b, side))


def centered_gradient(values: np.ndarray, spacing: float, axis: int,
                      periodic: bool = False) -> np.ndarray:
    """Centered differences along one axis; second-order one-sided at the
    edges of non-periodic arrays"""
    if periodic:
        return (np.roll(values, -1, axis=axis) - np.roll(values, 1, axis=axis)) / (2.0 * spacing)
    if values.shape[axis] < 3:
        return np.gradient(values, spacing, axis=axis, edge_order=1)
    return np.gradient(values, spacing, axis=axis, edge_order=2)


def interp_along_axis(values: np.ndarray, spacing: float, targets: np.ndarray,
                      axis: int) -> np.ndarray:
    """Piecewise-linear interpolation of `values` along `axis` at per-node
    target coordinates (same shape as values); targets are clamped to the fiber"""
    vals = np.moveaxis(values, axis, -1)
    tgt = np.moveaxis(targets, axis, -1)
    n = vals.shape[-1]
    t = np.clip(tgt / spacing, 0.0, n - 1)
    idx = np.minimum(np.floor(t).astype(np.intp), n - 2)
    frac = t - idx
    lo = np.take_along_axis(vals, idx, axis=-1)
    hi = np.take_along_axis(vals, idx + 1, axis=-1)
    return np.moveaxis(lo + frac * (hi - lo), -1, axis)


def log_log_slope(x: np.ndarray, y: np.ndarray) -> float:
    """Least-squares slope of log y against log x"""
    lx = np.log(np.asarray(x, dtype=np.float64))
    ly = np.log(np.asarray(y, dtype=np.float64))
    slope, _ = np.polyfit(lx, ly, 1)
    return float(slope)
