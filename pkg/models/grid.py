# models/grid.py
"""Grilles tensorielles, densités échantillonnées, quadrature et interpolation"""

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid
from scipy.interpolate import RegularGridInterpolator

from config.settings import GRID_LIMITS, TOLERANCES
from utils.errors import DomainError, PositivityError, PreconditionError
from utils.helpers import as_points, wrap

logger = logging.getLogger(__name__)

CUBE = 'cube'
TORUS = 'torus'


@dataclass(frozen=True)
class Grid:
    """Uniform tensor grid on the cube [0, side]^dim or the flat torus"""
    dim: int
    side: float = 1.0
    res: int = 33
    topology: str = CUBE

    def __post_init__(self):
        if not 1 <= self.dim <= GRID_LIMITS['max_dim']:
            raise PreconditionError(f"dim must be in 1..{GRID_LIMITS['max_dim']}, got {self.dim}")
        if self.res < GRID_LIMITS['min_res']:
            raise PreconditionError(f"res must be >= {GRID_LIMITS['min_res']}, got {self.res}")
        if not self.side > 0:
            raise PreconditionError(f"side must be positive, got {self.side}")
        if self.topology not in (CUBE, TORUS):
            raise PreconditionError(f"Unknown topology '{self.topology}'")

    @property
    def periodic(self) -> bool:
        return self.topology == TORUS

    @property
    def spacing(self) -> float:
        return self.side / self.res if self.periodic else self.side / (self.res - 1)

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.res,) * self.dim

    @property
    def size(self) -> int:
        return self.res ** self.dim

    @cached_property
    def nodes(self) -> np.ndarray:
        if self.periodic:
            return np.arange(self.res) * self.spacing
        return np.linspace(0.0, self.side, self.res)

    def mesh(self) -> Tuple[np.ndarray, ...]:
        return np.meshgrid(*([self.nodes] * self.dim), indexing='ij')

    def points(self) -> np.ndarray:
        """Node coordinates, row-major (last axis fastest), shape (res^dim, dim)"""
        return np.stack([m.ravel() for m in self.mesh()], axis=-1)

    @cached_property
    def weights_1d(self) -> np.ndarray:
        w = np.full(self.res, self.spacing)
        if not self.periodic:
            w[0] = w[-1] = 0.5 * self.spacing
        return w

    def quadrature_weights(self) -> np.ndarray:
        weights = np.ones(self.shape)
        for axis in range(self.dim):
            shape = [1] * self.dim
            shape[axis] = self.res
            weights = weights * self.weights_1d.reshape(shape)
        return weights

    def with_dim(self, dim: int) -> 'Grid':
        return Grid(dim=dim, side=self.side, res=self.res, topology=self.topology)

    def check_points(self, x, tol: Optional[float] = None) -> np.ndarray:
        """Validate (cube) or wrap (torus) points; returns an (m, dim) array"""
        pts = as_points(x, self.dim)
        if self.periodic:
            return wrap(pts, self.side)
        tol = TOLERANCES['domain'] if tol is None else tol
        if np.any(pts < -tol) or np.any(pts > self.side + tol):
            worst = pts[np.argmax(np.max(np.maximum(-pts, pts - self.side), axis=1))]
            raise DomainError(f"Point {worst.tolist()} outside [0, {self.side}]^{self.dim}",
                              {'point': worst.tolist()})
        return np.clip(pts, 0.0, self.side)


def integrate(grid: Grid, values: np.ndarray, axes: Optional[Sequence[int]] = None) -> np.ndarray:
    """Tensor trapezoid (cube) or rectangle (torus) quadrature over the given axes"""
    axes = range(values.ndim) if axes is None else axes
    out = np.asarray(values, dtype=np.float64)
    for axis in sorted(axes, reverse=True):
        if grid.periodic:
            out = out.sum(axis=axis) * grid.spacing
        else:
            out = trapezoid(out, dx=grid.spacing, axis=axis)
    return out


def cumulate(grid: Grid, values: np.ndarray, axis: int) -> np.ndarray:
    """Running trapezoid integral along one axis, starting at 0.

    On the torus the fiber is closed by the wrap node, so the table has
    res + 1 entries per fiber and its last entry is the fiber mass."""
    vals = np.asarray(values, dtype=np.float64)
    if grid.periodic:
        vals = np.concatenate([vals, np.take(vals, [0], axis=axis)], axis=axis)
    return cumulative_trapezoid(vals, dx=grid.spacing, axis=axis, initial=0.0)


def table_lookup(table: np.ndarray, spacing: float, heights: np.ndarray) -> np.ndarray:
    """Evaluate running integrals stored on the last axis at arbitrary heights.

    Linear between nodes, extended linearly with the end-cell slopes outside the
    tabulated range. `heights` broadcasts against table[..., 0]."""
    n = table.shape[-1]
    t = np.asarray(heights, dtype=np.float64) / spacing
    idx = np.clip(np.floor(t), 0, n - 2).astype(np.intp)
    frac = t - idx
    target_shape = np.broadcast_shapes(table.shape[:-1], np.shape(t))
    tab = np.broadcast_to(table, target_shape + (n,))
    idx_b = np.broadcast_to(idx, target_shape)[..., None]
    lo = np.take_along_axis(tab, idx_b, axis=-1)[..., 0]
    hi = np.take_along_axis(tab, idx_b + 1, axis=-1)[..., 0]
    return lo + frac * (hi - lo)


def cell_slope(table: np.ndarray, spacing: float, heights: np.ndarray) -> np.ndarray:
    """Derivative of the piecewise-linear table at `heights` (the cell average
    of the integrated density)"""
    n = table.shape[-1]
    t = np.asarray(heights, dtype=np.float64) / spacing
    idx = np.clip(np.floor(t), 0, n - 2).astype(np.intp)
    target_shape = np.broadcast_shapes(table.shape[:-1], np.shape(t))
    tab = np.broadcast_to(table, target_shape + (n,))
    idx_b = np.broadcast_to(idx, target_shape)[..., None]
    lo = np.take_along_axis(tab, idx_b, axis=-1)[..., 0]
    hi = np.take_along_axis(tab, idx_b + 1, axis=-1)[..., 0]
    return (hi - lo) / spacing


def interpolator(grid: Grid, values: np.ndarray) -> RegularGridInterpolator:
    """Multilinear interpolant of a nodal field; periodic fields are closed by
    the wrap node"""
    vals = np.asarray(values, dtype=np.float64)
    axes = [grid.nodes] * grid.dim
    if grid.periodic:
        # trailing non-grid axes (vector fields) are not padded
        vals = np.pad(vals, [(0, 1)] * grid.dim + [(0, 0)] * (vals.ndim - grid.dim), mode='wrap')
        axes = [np.append(grid.nodes, grid.side)] * grid.dim
    return RegularGridInterpolator(tuple(axes), vals, method='linear', bounds_error=False, fill_value=None)


def sample(grid: Grid, values: np.ndarray, x) -> np.ndarray:
    """Multilinear interpolation of a nodal field at points (exact at nodes)"""
    return interpolator(grid, values)(grid.check_points(x))


@dataclass(frozen=True, eq=False)
class GridDensity:
    """Strictly positive sampled density on a grid"""
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64).reshape(self.grid.shape)
        if not np.all(np.isfinite(values)):
            raise PositivityError("Density has non-finite values")
        if np.any(values <= 0):
            idx = np.unravel_index(np.argmin(values), values.shape)
            raise PositivityError(f"Density must be strictly positive; min {values[idx]:.3e} at node {idx}",
                                  {'node': [int(i) for i in idx], 'value': float(values[idx])})
        values.setflags(write=False)
        object.__setattr__(self, 'values', values)

    @property
    def min(self) -> float:
        return float(self.values.min())

    @property
    def max(self) -> float:
        return float(self.values.max())

    @cached_property
    def _interpolator(self) -> RegularGridInterpolator:
        return interpolator(self.grid, self.values)

    def __call__(self, x) -> np.ndarray:
        return self._interpolator(self.grid.check_points(x))

    def scaled(self, factor: float) -> 'GridDensity':
        return GridDensity(self.grid, self.values * factor)

    def normalized(self, target_mass: float = 1.0) -> 'GridDensity':
        return GridDensity(self.grid, self.values * (target_mass / mass(self)))


@dataclass(frozen=True, eq=False)
class CumulativeField:
    """Fiberwise running integrals of a density along one axis"""
    base: GridDensity
    axis: int
    table: np.ndarray

    @property
    def fiber_mass(self) -> np.ndarray:
        return np.take(self.table, -1, axis=self.axis)

    def evaluate(self, height) -> np.ndarray:
        """Table value at `height` for every fiber (broadcast over fibers)"""
        table = np.moveaxis(self.table, self.axis, -1)
        return table_lookup(table, self.base.grid.spacing, height)


def mass(d: GridDensity) -> float:
    """Total mass by tensor trapezoid (cube) or periodic rectangle rule (torus)"""
    return float(integrate(d.grid, d.values))


def evaluate(d: GridDensity, x) -> np.ndarray:
    return d(x)


def cumulative(d: GridDensity, axis: int) -> CumulativeField:
    """Running integrals of every fiber along `axis` (0-based)"""
    return CumulativeField(base=d, axis=axis, table=cumulate(d.grid, d.values, axis))


def corner_table(grid: Grid, values: np.ndarray, axes: Sequence[int]) -> np.ndarray:
    """Running integrals over [0, a_i] along each of `axes` (cube only)"""
    out = np.asarray(values, dtype=np.float64)
    for axis in axes:
        out = cumulate(grid, out, axis)
    return out


def modulus_of_continuity(d: GridDensity) -> float:
    """Largest |Δvalue|/h over adjacent node pairs (wrap pairs included on the torus)"""
    h = d.grid.spacing
    worst = 0.0
    for axis in range(d.grid.dim):
        if d.grid.periodic:
            diffs = np.diff(d.values, axis=axis, append=np.take(d.values, [0], axis=axis))
        else:
            diffs = np.diff(d.values, axis=axis)
        worst = max(worst, float(np.max(np.abs(diffs))) / h)
    return worst


def resolution_diagnostic(d: GridDensity) -> float:
    """L·h: how much the density can vary across one cell"""
    return modulus_of_continuity(d) * d.grid.spacing


def from_function(grid: Grid, func) -> GridDensity:
    """Sample func(*mesh) on the grid nodes"""
    return GridDensity(grid, func(*grid.mesh()))
