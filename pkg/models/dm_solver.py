# models/dm_solver.py
"""Solveur de Dacorogna-Moser par couches triangulaires sur le cube"""

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from config.settings import METRIC, SOLVER, TOLERANCES
from models.cutoffs import CutoffFamily, default_cutoffs
from models.grid import (Grid, GridDensity, cell_slope, corner_table, cumulate, integrate,
                         interpolator, mass, modulus_of_continuity, sample, table_lookup)
from models.triangular_linear import (TriangularFieldVector, apply_dpsi0, build_kernel,
                                      corner_integrals, mg_bound, psi0)
from models.weak_metric import measure_distance
from utils.errors import (BracketError, ConsistencyError, MassMismatchError, PreconditionError,
                          StepRejectedError, SupportError)
from utils.helpers import centered_gradient, dbar, interp_along_axis, sup_distance

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class Layer:
    """φ_s: x_s -> x_s + ζ_s(x^{s-1}) u_s(x_s, x̃_s).

    `u` lives on the lattice of (x_s, ..., x_n); `du` is ∂u/∂x_s at the
    same nodes, zero wherever u is pinned to zero."""
    s: int
    u: np.ndarray
    du: np.ndarray
    grid: Grid
    info: Dict[str, Any] = field(default_factory=dict)

    @cached_property
    def sub_grid(self) -> Grid:
        return self.grid.with_dim(self.grid.dim - self.s + 1)

    @cached_property
    def _interpolator(self) -> RegularGridInterpolator:
        return interpolator(self.sub_grid, self.u)

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """u_s at points of shape (m, n-s+1)"""
        pts = np.clip(np.asarray(points, dtype=np.float64), 0.0, self.grid.side)
        return self._interpolator(pts)


@dataclass(eq=False)
class TriangularSolution:
    """ψ = φ_n ∘ ... ∘ φ_1 with its intermediate densities g_n = g, ..., g_1"""
    grid: Grid
    cutoffs: CutoffFamily
    layers: List[Layer]
    intermediates: Dict[int, GridDensity]
    diagnostics: Dict[str, Any] = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.grid.dim

    def layer(self, s: int) -> Layer:
        return self.layers[s - 1]

    def u_field(self) -> TriangularFieldVector:
        return TriangularFieldVector(self.grid, [layer.u for layer in self.layers])

    @property
    def u_sup(self) -> float:
        return max(float(np.max(np.abs(layer.u))) for layer in self.layers)


# --- fiber layout -------------------------------------------------------------

def _to_fibers(values: np.ndarray, s: int) -> np.ndarray:
    """(x_1..x_n) array -> (P, Q, res) with P over x̃_s, Q over x^{s-1}, last axis x_s"""
    moved = np.moveaxis(values, s - 1, -1)
    res = moved.shape[-1]
    q = int(np.prod(moved.shape[:s - 1], dtype=np.int64))
    p = int(np.prod(moved.shape[s - 1:-1], dtype=np.int64))
    return moved.reshape(q, p, res).transpose(1, 0, 2)


def _from_fibers(fibers: np.ndarray, s: int, n: int) -> np.ndarray:
    res = fibers.shape[-1]
    moved = fibers.transpose(1, 0, 2).reshape((res,) * n)
    return np.moveaxis(moved, -1, s - 1)


def _layer_array(u_pj: np.ndarray, s: int, n: int) -> np.ndarray:
    res = u_pj.shape[-1]
    return u_pj.T.reshape((res,) * (n - s + 1))


def _fiber_array(u: np.ndarray) -> np.ndarray:
    res = u.shape[0]
    return u.reshape(res, -1).T


def collar_nodes(grid: Grid, collar: float) -> np.ndarray:
    """Nodes whose cell touches the collar; u is pinned to zero there so that
    interpolation vanishes on the whole collar"""
    if collar <= 0:
        return np.zeros(grid.res, dtype=bool)
    reach = collar + grid.spacing * (1.0 - 1e-9)
    return (grid.nodes < reach) | (grid.nodes > grid.side - reach)


def _parameter_mask(grid: Grid, node_mask: np.ndarray, count: int) -> np.ndarray:
    mask = np.zeros((grid.res,) * count, dtype=bool)
    for axis in range(count):
        shape = [1] * count
        shape[axis] = grid.res
        mask = mask | node_mask.reshape(shape)
    return mask.ravel()


def _slice_weights(grid: Grid, s: int) -> np.ndarray:
    if s <= 1:
        return np.ones(1)
    return grid.with_dim(s - 1).quadrature_weights().ravel()


# --- validation ----------------------------------------------------------------

def check_pair(f: GridDensity, g: GridDensity, cutoffs: Optional[CutoffFamily] = None,
               tolerances: Optional[Dict] = None) -> float:
    """Same cube grid, matching masses and (when cutoffs have a collar) f = g on it"""
    tol = tolerances or TOLERANCES
    if f.grid != g.grid:
        raise PreconditionError("f and g must share one grid")
    if f.grid.periodic:
        raise PreconditionError("The layered solver works on cubes; use the torus reduction")
    mf, mg = mass(f), mass(g)
    rel = abs(mf - mg) / max(abs(mf), abs(mg))
    if rel > tol['mass_match']:
        raise MassMismatchError(f"mass(f)={mf:.12g} differs from mass(g)={mg:.12g} (relative {rel:.3e})",
                                {'mass_f': mf, 'mass_g': mg, 'relative': rel})
    if cutoffs is not None and not cutoffs.is_identity:
        grid = f.grid
        margin = 0.5 * cutoffs.eta * grid.side
        near = (grid.nodes < margin) | (grid.nodes > grid.side - margin)
        collar = _parameter_mask(grid, near, grid.dim).reshape(grid.shape)
        gap = np.abs(f.values - g.values) * collar
        if np.max(gap) > tol['support']:
            idx = np.unravel_index(np.argmax(gap), gap.shape)
            node = [float(grid.nodes[i]) for i in idx]
            raise SupportError(f"f - g is nonzero in the collar at {node} (|f-g|={gap[idx]:.3e})",
                               {'node': node, 'gap': float(gap[idx])})
    return rel


def _check_epsilon(g_s: GridDensity, f: GridDensity, cutoffs: CutoffFamily, s: int):
    """ε·max g_s < min{min g_s, min f / 2}"""
    if cutoffs.is_identity:
        return
    lhs = cutoffs.eps0 * g_s.max
    rhs = min(g_s.min, 0.5 * f.min)
    if not lhs < rhs:
        raise PreconditionError(
            f"Cutoff too coarse for layer {s}: eps0*max g_s = {lhs:.4g} >= {rhs:.4g}; "
            f"lower eps0_target or shrink the instance",
            {'layer': s, 'eps0': cutoffs.eps0, 'lhs': lhs, 'rhs': rhs})


def _marginal_scale(g_tab: np.ndarray, f_tab: np.ndarray, weights: np.ndarray,
                    grid: Grid, s: int, tolerances: Dict) -> Tuple[np.ndarray, float]:
    """Per-parameter ratio of fiber masses G(K,0)/F(K) and its worst defect"""
    g_end = g_tab[:, :, -1] @ weights
    f_end = f_tab[:, :, -1] @ weights
    kappa = g_end / f_end
    defect = np.abs(kappa - 1.0)
    worst = int(np.argmax(defect))
    if defect[worst] > tolerances['marginal']:
        param = np.unravel_index(worst, (grid.res,) * (grid.dim - s)) if grid.dim > s else ()
        where = [float(grid.nodes[i]) for i in param]
        raise ConsistencyError(
            f"Layer {s}: fiber masses disagree by {defect[worst]:.3e} at x'={where}",
            {'layer': s, 'parameter': where, 'defect': float(defect[worst])})
    return kappa, float(defect.max())


# --- layer solves --------------------------------------------------------------

def pull_back(g_s: GridDensity, layer: Layer, cutoffs: CutoffFamily,
              marginal: Optional[GridDensity] = None, renormalize: bool = True) -> GridDensity:
    """g_{s-1}(x) = g_s(φ_s(x)) det∇φ_s(x).

    With `marginal`, every slice x^{s-1} ↦ g_{s-1}(x^{s-1}, x_s, x̃_s) is rescaled
    to the slice mass of `marginal`, which is what layer s-1 needs. Otherwise
    only the fiber masses over Q^s are kept."""
    grid, s, n = g_s.grid, layer.s, g_s.grid.dim
    h = grid.spacing
    fibers = _to_fibers(g_s.values, s)
    zeta = cutoffs.sample(s, grid).ravel() if s > 1 else np.ones(1)
    u_pj = _fiber_array(layer.u)
    du_pj = _fiber_array(layer.du)

    targets = grid.nodes[None, None, :] + zeta[None, :, None] * u_pj[:, None, :]
    jacobian = 1.0 + zeta[None, :, None] * du_pj[:, None, :]
    min_jac = float(jacobian.min())
    if min_jac <= 0:
        raise StepRejectedError(
            f"Layer {s} folds: 1 + zeta*du/dx_s reaches {min_jac:.3e}; refine the grid or subdivide",
            {'layer': s, 'min_jacobian': min_jac})
    moved = interp_along_axis(fibers, h, targets, axis=-1) * jacobian

    weights = _slice_weights(grid, s)
    if marginal is not None:
        want = np.einsum('pqj,q->pj', _to_fibers(marginal.values, s), weights)
        have = np.einsum('pqj,q->pj', moved, weights)
        ratio = want / have
        layer.info['slice_rescale'] = float(np.max(np.abs(ratio - 1.0)))
        moved = moved * ratio[:, None, :]
    elif renormalize:
        old = integrate(grid.with_dim(1), fibers, axes=[2]) @ weights
        new = integrate(grid.with_dim(1), moved, axes=[2]) @ weights
        moved = moved * (old / new)[:, None, None]
    if np.any(moved <= 0):
        raise StepRejectedError(f"Layer {s} produced a nonpositive intermediate density",
                                {'layer': s, 'min': float(moved.min())})
    layer.info['min_jacobian'] = min_jac
    return GridDensity(grid, _from_fibers(moved, s, n))


def _finish_layer(u_pj: np.ndarray, grid: Grid, s: int, param_mask: np.ndarray,
                  height_mask: np.ndarray, info: Dict) -> Layer:
    n = grid.dim
    u_pj[param_mask, :] = 0.0
    u_pj[:, height_mask] = 0.0
    u_pj[:, 0] = 0.0
    u_pj[:, -1] = 0.0
    du_pj = centered_gradient(u_pj, grid.spacing, axis=1)
    du_pj[param_mask, :] = 0.0
    du_pj[:, height_mask] = 0.0
    return Layer(s=s, u=_layer_array(u_pj, s, n), du=_layer_array(du_pj, s, n), grid=grid, info=info)


def solve_first_layer(g1: GridDensity, f: GridDensity, cutoffs: Optional[CutoffFamily] = None,
                      tolerances: Optional[Dict] = None) -> Layer:
    """v(a, x') = G⁻¹_{x'}(F_{x'}(a)) by monotone inversion of the cumulative tables"""
    tol = tolerances or TOLERANCES
    grid, n = g1.grid, g1.grid.dim
    cutoffs = cutoffs or CutoffFamily.identity(n, grid.side)
    g_tab = cumulate(grid, _to_fibers(g1.values, 1), axis=2)
    f_tab = cumulate(grid, _to_fibers(f.values, 1), axis=2)
    weights = np.ones(1)
    kappa, defect = _marginal_scale(g_tab, f_tab, weights, grid, 1, tol)
    targets = f_tab[:, 0, :] * kappa[:, None]

    nodes = grid.nodes
    v = np.empty_like(targets)
    for p in range(targets.shape[0]):
        v[p] = np.interp(targets[p], g_tab[p, 0], nodes)
    u_pj = v - nodes[None, :]

    node_mask = collar_nodes(grid, cutoffs.collar)
    param_mask = _parameter_mask(grid, node_mask, n - 1)
    solved = ~param_mask[:, None] & ~node_mask[None, :]
    solved[:, [0, -1]] = False
    functional = np.abs(table_lookup(g_tab[:, 0, None, :], grid.spacing, v) - targets)
    info = {
        'newton_iterations': 0,
        'bracket_expansions': 0,
        'marginal_defect': defect,
        'functional_residual': float(functional[solved].max()) if solved.any() else 0.0,
        'min_dG_db': float(g1.min),
    }
    layer = _finish_layer(u_pj, grid, 1, param_mask, node_mask, info)
    logger.info(f"Layer 1: max|u|={np.max(np.abs(layer.u)):.4g}, marginal defect={defect:.2e}")
    return layer


def _bracket(residual, lo: np.ndarray, hi: np.ndarray, side: float,
             growth: float, s: int, height: float) -> Tuple[np.ndarray, np.ndarray, int]:
    """Widen [lo, hi] geometrically, up to [-side, side], until it brackets the root"""
    expansions = 0
    while True:
        bad_lo = residual(lo) > 0
        bad_hi = residual(hi) < 0
        if not (bad_lo.any() or bad_hi.any()):
            return lo, hi, expansions
        stuck = (bad_lo & (lo <= -side)) | (bad_hi & (hi >= side))
        if stuck.any():
            p = int(np.argmax(stuck))
            raise BracketError(f"Layer {s}: root not bracketed in [-{side}, {side}] at height {height:.4g}",
                               {'layer': s, 'height': height, 'parameter_index': p})
        lo = np.where(bad_lo, np.maximum(lo * growth, -side), lo)
        hi = np.where(bad_hi, np.minimum(hi * growth, side), hi)
        expansions += 1


def solve_layer(g_s: GridDensity, f: GridDensity, s: int, cutoffs: CutoffFamily,
                warm_start: Optional[np.ndarray] = None, tolerances: Optional[Dict] = None,
                solver: Optional[Dict] = None) -> Tuple[Layer, GridDensity]:
    """Solve G(a, u(a)) = F(a) on every fiber x̃_s, then pull g_s back to g_{s-1}.

    Safeguarded Newton vectorized over the parameters, marching upward in the
    height a; bisection takes over whenever a step leaves the bracket."""
    tol = tolerances or TOLERANCES
    cfg = solver or SOLVER
    grid, n = g_s.grid, g_s.grid.dim
    h, side = grid.spacing, grid.side
    if not 2 <= s <= n:
        raise PreconditionError(f"Layer index must be in 2..{n}, got {s}")
    _check_epsilon(g_s, f, cutoffs, s)

    weights = _slice_weights(grid, s)
    zeta = cutoffs.sample(s, grid).ravel()
    g_tab = cumulate(grid, _to_fibers(g_s.values, s), axis=2)
    f_tab = cumulate(grid, _to_fibers(f.values, s), axis=2)
    kappa, defect = _marginal_scale(g_tab, f_tab, weights, grid, s, tol)
    F = np.einsum('pqj,q->pj', f_tab, weights) * kappa[:, None]

    node_mask = collar_nodes(grid, cutoffs.collar)
    param_mask = _parameter_mask(grid, node_mask, n - s)
    n_params = F.shape[0]
    u_pj = np.zeros((n_params, grid.res))
    warm = _fiber_array(warm_start) if warm_start is not None else None

    radius = cutoffs.eta * side if cutoffs.eta > 0 else 0.5 * side
    active = ~param_mask
    iterations = expansions = 0
    functional = 0.0
    min_slope = math.inf

    for j in range(1, grid.res - 1):
        if node_mask[j] or not active.any():
            continue
        a = grid.nodes[j]
        tab = g_tab[active]
        target = F[active, j]

        def residual(b):
            return table_lookup(tab, h, a + zeta[None, :] * b[:, None]) @ weights - target

        def slope(b):
            return (cell_slope(tab, h, a + zeta[None, :] * b[:, None]) * zeta[None, :]) @ weights

        lo = np.full(target.shape, -radius)
        hi = np.full(target.shape, radius)
        lo, hi, grown = _bracket(residual, lo, hi, side, cfg['bracket_growth'], s, a)
        expansions += grown

        b = warm[active, j] if warm is not None else u_pj[active, j - 1]
        b = np.clip(b, lo, hi)
        done = np.zeros(b.shape, dtype=bool)
        for it in range(cfg['max_newton'] + cfg['max_bisection']):
            r = residual(b)
            done = (np.abs(r) <= tol['functional']) | (hi - lo <= tol['root'])
            if done.all():
                break
            hi = np.where(r > 0, b, hi)
            lo = np.where(r < 0, b, lo)
            d = slope(b)
            with np.errstate(divide='ignore', invalid='ignore'):
                step = b - r / d
            use_newton = (it < cfg['max_newton']) & (d > cfg['min_derivative']) & (step > lo) & (step < hi)
            b = np.where(done, b, np.where(use_newton, step, 0.5 * (lo + hi)))
        iterations += it + 1
        if not done.all():
            raise BracketError(f"Layer {s}: root search did not converge at height {a:.4g}",
                               {'layer': s, 'height': a})
        u_pj[active, j] = b
        functional = max(functional, float(np.max(np.abs(residual(b)))))
        min_slope = min(min_slope, float(np.min(slope(b))))

    info = {
        'newton_iterations': iterations,
        'bracket_expansions': expansions,
        'marginal_defect': defect,
        'functional_residual': functional,
        'min_dG_db': min_slope if math.isfinite(min_slope) else 0.0,
    }
    layer = _finish_layer(u_pj, grid, s, param_mask, node_mask, info)
    g_prev = pull_back(g_s, layer, cutoffs, marginal=f)
    logger.info(f"Layer {s}: max|u|={np.max(np.abs(layer.u)):.4g}, {iterations} root iterations, "
                f"{expansions} bracket expansions, min jacobian={layer.info['min_jacobian']:.4g}")
    return layer, g_prev


# --- composition ---------------------------------------------------------------

def dm_solve(f: GridDensity, g: GridDensity, cutoffs: Optional[CutoffFamily] = None,
             warm_start: Optional[TriangularFieldVector] = None, metrics: bool = True,
             tolerances: Optional[Dict] = None, solver: Optional[Dict] = None,
             seed: int = 0) -> TriangularSolution:
    """Build ψ with g(ψ(x)) det∇ψ(x) = f(x), layers from s = n down to 1"""
    tol = tolerances or TOLERANCES
    grid, n = f.grid, f.grid.dim
    if cutoffs is None:
        cutoffs = default_cutoffs(n, grid.side)
    check_pair(f, g, cutoffs, tol)

    layers: Dict[int, Layer] = {}
    intermediates = {n: g}
    g_s = g
    for s in range(n, 1, -1):
        warm = warm_start.component(s) if warm_start is not None else None
        layers[s], g_s = solve_layer(g_s, f, s, cutoffs, warm, tol, solver)
        intermediates[s - 1] = g_s
    layers[1] = solve_first_layer(g_s, f, cutoffs, tol)
    # g_0 = ψ*g, the discrete image of f
    intermediates[0] = pull_back(g_s, layers[1], cutoffs)

    sol = TriangularSolution(grid, cutoffs, [layers[s] for s in range(1, n + 1)], intermediates)
    sol.diagnostics.update({
        'n': n,
        'res': grid.res,
        'side': grid.side,
        'eta': cutoffs.eta,
        'eps0': cutoffs.eps0,
        'eps1': cutoffs.eps1,
        'u_sup': sol.u_sup,
        'newton_iterations': sum(l.info['newton_iterations'] for l in sol.layers),
        'bracket_expansions': sum(l.info['bracket_expansions'] for l in sol.layers),
        'functional_residual': max(l.info['functional_residual'] for l in sol.layers),
        'marginal_defect': max(l.info['marginal_defect'] for l in sol.layers),
        'slice_rescale': max(l.info.get('slice_rescale', 0.0) for l in sol.layers),
        'min_dG_db': min(l.info['min_dG_db'] for l in sol.layers),
        'min_jacobian': min(l.info['min_jacobian'] for l in sol.layers),
        'mass_drift': max(abs(mass(d) / mass(f) - 1.0) for d in intermediates.values()),
        'warm_start': warm_start is not None,
    })
    if metrics:
        sol.diagnostics['residual_sup'] = residual(sol, f, g)
        defect, sigma = box_defect(sol, f, g, seed=seed, solver=solver)
        sol.diagnostics['box_defect'] = defect
        sol.diagnostics['box_sigma'] = sigma
        sol.diagnostics.update(coerciveness_check(sol, f, g))
    logger.info(f"DM solve n={n} res={grid.res}: max|u|={sol.u_sup:.4g}, "
                f"{sol.diagnostics['newton_iterations']} root iterations")
    return sol


def apply(sol: TriangularSolution, x) -> np.ndarray:
    """ψ(x), with ζ_s evaluated at v^{s-1}(x) and u_s at the original (x_s, ..., x_n)"""
    pts = sol.grid.check_points(x)
    y = pts.copy()
    for layer in sol.layers:
        s = layer.s
        zeta = sol.cutoffs.evaluate(s, y[:, :s - 1])
        y[:, s - 1] = pts[:, s - 1] + zeta * layer.evaluate(pts[:, s - 1:])
    return y.reshape(np.shape(x)) if np.ndim(x) == 1 and np.size(x) == sol.n else y


def apply_inverse(sol: TriangularSolution, y, iterations: Optional[int] = None) -> np.ndarray:
    """ψ⁻¹(y) by monotone bisection, last layer first"""
    iterations = iterations or SOLVER['inverse_iterations']
    pts = sol.grid.check_points(y)
    x = pts.copy()
    side = sol.grid.side
    for layer in reversed(sol.layers):
        s = layer.s
        zeta = sol.cutoffs.evaluate(s, pts[:, :s - 1])
        target = pts[:, s - 1]
        rest = x[:, s:]
        lo = np.zeros(len(pts))
        hi = np.full(len(pts), side)
        for _ in range(iterations):
            mid = 0.5 * (lo + hi)
            value = mid + zeta * layer.evaluate(np.column_stack([mid, rest]))
            below = value < target
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        x[:, s - 1] = 0.5 * (lo + hi)
    return x.reshape(np.shape(y)) if np.ndim(y) == 1 and np.size(y) == sol.n else x


def _node_jacobian(sol: TriangularSolution) -> Tuple[np.ndarray, np.ndarray]:
    """ψ at every node and det∇ψ = Π_s (1 + ζ_s(v^{s-1}) ∂_s u_s)"""
    grid = sol.grid
    pts = grid.points()
    y = pts.copy()
    det = np.ones(len(pts))
    for layer in sol.layers:
        s = layer.s
        zeta = sol.cutoffs.evaluate(s, y[:, :s - 1])
        u = np.broadcast_to(layer.u.reshape((1,) * (s - 1) + layer.u.shape), grid.shape).ravel()
        du = np.broadcast_to(layer.du.reshape((1,) * (s - 1) + layer.du.shape), grid.shape).ravel()
        y[:, s - 1] = pts[:, s - 1] + zeta * u
        det *= 1.0 + zeta * du
    return y, det


def pullback_density(sol: TriangularSolution, g: GridDensity) -> np.ndarray:
    """g(ψ(x)) det∇ψ(x) on the grid nodes"""
    y, det = _node_jacobian(sol)
    return (g(y) * det).reshape(sol.grid.shape)


def residual(sol: TriangularSolution, f: GridDensity, g: GridDensity) -> float:
    """sup over interior nodes of |g(ψ(x)) det∇ψ(x) - f(x)|"""
    gap = np.abs(pullback_density(sol, g) - f.values)
    interior = (slice(1, -1),) * sol.n
    return float(np.max(gap[interior])) if gap[interior].size else float(np.max(gap))


def box_defect(sol: TriangularSolution, f: GridDensity, g: GridDensity, seed: int = 0,
               solver: Optional[Dict] = None) -> Tuple[float, float]:
    """max over random corner boxes E = [0, a] of |∫_E f - ∫_{ψ(E)} g|, with the
    Monte Carlo standard error of the worst box"""
    cfg = solver or SOLVER
    grid, n = sol.grid, sol.n
    rng = np.random.default_rng(seed)
    corners = rng.uniform(0.0, grid.side, size=(cfg['mc_boxes'], n))
    exact = sample(grid, corner_table(grid, f.values, range(n)), corners)

    y = rng.uniform(0.0, grid.side, size=(cfg['mc_samples'], n))
    x = apply_inverse(sol, y)
    values = g(y) * grid.side ** n
    worst, sigma = 0.0, 0.0
    for a, target in zip(corners, exact):
        contrib = values * np.all(x <= a, axis=1)
        gap = abs(target - contrib.mean())
        if gap >= worst:
            worst, sigma = gap, float(contrib.std(ddof=1) / math.sqrt(len(contrib)))
    return float(worst), sigma


def triangular_fields(sol: TriangularSolution, f: GridDensity,
                      g: GridDensity) -> Dict[str, TriangularFieldVector]:
    """G_j(a; u) = ∫_{v(Q^n_{a;j})} g (through the pullback) and F_j(a)"""
    grid = sol.grid
    pulled = pullback_density(sol, g)
    G = [corner_integrals(grid, pulled, j) for j in range(1, sol.n + 1)]
    F = [corner_integrals(grid, f.values, j) for j in range(1, sol.n + 1)]
    return {'G': TriangularFieldVector(grid, G), 'F': TriangularFieldVector(grid, F)}


def nonlinear_term(sol: TriangularSolution, f: GridDensity, g: GridDensity,
                   tolerances: Optional[Dict] = None) -> Tuple[TriangularFieldVector, Dict[str, Any]]:
    """N(u) = Ψ(u) - Ψ(0̄) - dΨ(0̄)u and the slack of
    |N(u)| <= C_4 (|ζ·u| + ε_1 + L_g |ζ·u|) |u|"""
    tol = tolerances or TOLERANCES
    fields = triangular_fields(sol, f, g)
    psi_u = fields['G'] - fields['F']
    u = sol.u_field()
    kernel = build_kernel(g, sol.cutoffs)
    N = psi_u - psi0(f, g) - apply_dpsi0(kernel, u)

    zeta_u = max(sol.cutoffs.sup(layer.s) * float(np.max(np.abs(layer.u))) for layer in sol.layers)
    u_norm = u.sup()
    c4 = max(8.0 * g.max, 4.0)
    lip = modulus_of_continuity(g)
    bound = c4 * (zeta_u + sol.cutoffs.eps1 + lip * zeta_u) * u_norm
    slack = bound - N.sup()
    grid_error = sol.diagnostics.get('residual_sup')
    if grid_error is None:
        grid_error = residual(sol, f, g)
    allowance = tol['lemma_slack'] + 10.0 * grid_error * sol.grid.side ** sol.n
    report = {
        'N_sup': N.sup(),
        'lemma_bound': bound,
        'lemma_slack': slack,
        'lemma_allowance': allowance,
        'lemma_ok': slack >= -allowance,
    }
    if not report['lemma_ok']:
        logger.warning(f"Nonlinear bound violated: |N|={N.sup():.4g} > {bound:.4g} beyond {allowance:.2g}")
    return N, report


def subdivision_from_bounds(g_max: float, lipschitz: float) -> int:
    c4 = max(8.0 * g_max, 4.0)
    n0 = 1
    while not c4 * (1.0 + lipschitz) * 2.0 ** (-(n0 - 1)) < 0.25:
        n0 += 1
    return n0


def choose_subdivision(g: GridDensity) -> int:
    """Smallest N₀ with C₄ (1 + L_g) 2^{-(N₀-1)} < 1/4"""
    return subdivision_from_bounds(g.max, modulus_of_continuity(g))


def coerciveness_check(sol: TriangularSolution, f: GridDensity, g: GridDensity,
                       b: Optional[float] = None, max_atoms: Optional[int] = None) -> Dict[str, Any]:
    """|u| <= 2 M_g d_M(m_f, m_g) when C₄ d_M < 1/4, and d̄(ψ, id)"""
    b = METRIC['b'] if b is None else b
    max_atoms = max_atoms or METRIC['coarse_atoms']
    d_m, box, aggregation = measure_distance(f, g, b, max_atoms)
    mg = mg_bound(g)
    c4 = max(8.0 * g.max, 4.0)
    u_sup = sol.u_sup

    nodes = sol.grid.points()
    forward = apply(sol, nodes)
    inverse = apply_inverse(sol, nodes)
    c0_forward = sup_distance(forward, nodes)
    c0_inverse = sup_distance(inverse, nodes)
    psi0_sup = psi0(f, g).sup()

    applicable = c4 * d_m < 0.25
    report = {
        'dM_value': d_m,
        'dM_aggregation_bound': aggregation,
        'box_value': box,
        'Mg': mg,
        'C4': c4,
        'N0': choose_subdivision(g),
        'coercive_applicable': bool(applicable),
        'coercive_bound': 2.0 * mg * d_m,
        'coercive_ok': bool(u_sup <= 2.0 * mg * d_m) if applicable else None,
        'coercive_ok_box': bool(u_sup <= 2.0 * mg * box),
        'dbar_id': dbar(forward, nodes, inverse, nodes),
        'c0_forward': c0_forward,
        'c0_inverse': c0_inverse,
        'psi0_sup': psi0_sup,
        'psi0_within_box': bool(psi0_sup <= box + 1e-10),
        'psi0_within_dM': bool(psi0_sup <= d_m + aggregation + 1e-10),
    }
    if not applicable:
        logger.info(f"Coerciveness precondition C4*dM={c4 * d_m:.3g} >= 1/4; bound reported as not applicable")
    return report
