# models/manifold.py
"""Réduction sur le tore plat: atlas, décomposition en morceaux locaux,
assemblage des solutions de cube le long du chemin d'arêtes"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from config.settings import ATLAS, CUTOFFS, METRIC, SMOOTHING, TOLERANCES
from models import dm_solver
from models.cutoffs import CutoffFamily, build_cutoffs, eta_for_dim, smoothstep
from models.grid import CUBE, TORUS, Grid, GridDensity
from models.weak_metric import coarse_atomize, lid_metric
from utils.errors import MoserError, PartitionRefinementError, PositivityError, PreconditionError
from utils.helpers import centered_gradient, sup_distance, torus_delta, wrap

logger = logging.getLogger(__name__)

DensityLike = Union[GridDensity, np.ndarray, Callable[..., np.ndarray]]


@dataclass(eq=False)
class TorusAtlas:
    """Translated cube charts [o_j, o_j + S]^n on the unit torus.

    Partition functions live in each chart's inner cube [ηS, S - ηS]^n;
    bump k sits in the overlap of the inner cubes of k and ρ(k)."""
    n: int
    res: int
    charts_per_axis: int
    chart_side: float
    eta: float
    origins: np.ndarray
    predecessors: List[int]
    bump_intervals: List[Optional[List[List[Tuple[float, float]]]]]
    partition: np.ndarray
    bumps: List[Optional[np.ndarray]]
    c2: float

    @cached_property
    def grid(self) -> Grid:
        return Grid(dim=self.n, side=1.0, res=self.res, topology=TORUS)

    @cached_property
    def chart_grid(self) -> Grid:
        return Grid(dim=self.n, side=self.chart_side, res=self.chart_res, topology=CUBE)

    @property
    def chart_res(self) -> int:
        return int(round(self.chart_side * self.res)) + 1

    @property
    def size(self) -> int:
        """m + 1"""
        return len(self.origins)

    @property
    def inner(self) -> Tuple[float, float]:
        return self.eta * self.chart_side, self.chart_side - self.eta * self.chart_side

    def local(self, j: int, points: np.ndarray) -> np.ndarray:
        """Chart-j coordinates of torus points, in [0, 1)"""
        return wrap(np.asarray(points, dtype=np.float64) - self.origins[j], 1.0)

    def chart_indices(self, j: int) -> Tuple[np.ndarray, ...]:
        """Torus node indices of chart j's cube lattice, one array per axis"""
        offsets = np.rint(self.origins[j] * self.res).astype(int)
        local = np.arange(self.chart_res)
        return tuple((o + local) % self.res for o in offsets)

    def restrict(self, j: int, values: np.ndarray) -> np.ndarray:
        return np.asarray(values)[np.ix_(*self.chart_indices(j))]

    def _raw_bump(self, t: np.ndarray) -> np.ndarray:
        lo, hi = self.inner
        ramp = min(self.overlap, 0.5 * (hi - lo))
        inside = t <= self.chart_side
        return np.where(inside, smoothstep((t - lo) / ramp) * smoothstep((hi - t) / ramp), 0.0)

    @property
    def overlap(self) -> float:
        return self.chart_side - 2.0 * self.eta * self.chart_side - 1.0 / self.charts_per_axis

    def partition_at(self, points: np.ndarray) -> np.ndarray:
        """φ_j at arbitrary torus points, shape (m+1, k)"""
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        raw = np.stack([np.prod(self._raw_bump(self.local(j, pts)), axis=1) for j in range(self.size)])
        return raw / raw.sum(axis=0, keepdims=True)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'n': self.n, 'res': self.res, 'charts_per_axis': self.charts_per_axis,
            'chart_side': self.chart_side, 'eta': self.eta,
            'origins': self.origins.tolist(), 'predecessors': self.predecessors,
            'bump_intervals': [None if b is None else [[list(arc) for arc in axis] for axis in b]
                               for b in self.bump_intervals],
            'C2': self.c2,
        }


def _arc_overlaps(a0: float, b0: float, lo: float, hi: float) -> List[Tuple[float, float]]:
    """Pieces of [lo, hi] meeting the arc [a0, b0] + Z"""
    pieces = []
    for shift in (-1.0, 0.0, 1.0):
        start, stop = max(lo, a0 + shift), min(hi, b0 + shift)
        if stop > start:
            pieces.append((start, stop))
    return pieces


def _sin2_bump(t: np.ndarray, arcs: Sequence[Tuple[float, float]]) -> np.ndarray:
    out = np.zeros_like(t)
    for start, stop in arcs:
        inside = (t > start) & (t < stop)
        out = out + np.where(inside, np.sin(np.pi * (t - start) / (stop - start)) ** 2, 0.0)
    return out


def _overlap_volume(arcs: Sequence[Sequence[Tuple[float, float]]]) -> float:
    return float(np.prod([sum(stop - start for start, stop in axis) for axis in arcs]))


def build_torus_atlas(n: int, charts_per_axis: Optional[int] = None, res: int = 64,
                      chart_side_factor: Optional[float] = None,
                      eta: Optional[float] = None) -> TorusAtlas:
    """Overlapping cube charts of the unit torus with a partition of unity and
    the normalized overlap bumps η_k (∫η_k = 1)"""
    charts_per_axis = charts_per_axis or ATLAS['charts_per_axis']
    factor = chart_side_factor or ATLAS['chart_side_factor']
    eta = ATLAS['eta'] if eta is None else eta
    if not 1 <= n <= 3:
        raise PreconditionError(f"Torus dimension must be 1..3, got {n}")
    if charts_per_axis < 2:
        raise PreconditionError("At least two charts per axis are needed for overlaps")
    side = factor / charts_per_axis
    if side >= 1.0:
        raise PreconditionError(f"Chart side {side:g} must stay below the torus period")
    if res % charts_per_axis or abs(side * res - round(side * res)) > 1e-9:
        raise PreconditionError(f"Torus res {res} must align chart origins and chart side {side:g} with nodes")

    grid1 = Grid(dim=1, side=1.0, res=res, topology=TORUS)
    origins_1d = np.arange(charts_per_axis) / charts_per_axis
    origins = np.array(np.meshgrid(*([origins_1d] * n), indexing='ij')).reshape(n, -1).T

    atlas = TorusAtlas(n=n, res=res, charts_per_axis=charts_per_axis, chart_side=side, eta=eta,
                       origins=origins, predecessors=[-1], bump_intervals=[None],
                       partition=np.zeros(0), bumps=[None], c2=0.0)
    if atlas.overlap <= 0:
        raise PreconditionError(f"Inner chart cubes do not overlap (overlap {atlas.overlap:.3g})")

    points = atlas.grid.points()
    atlas.partition = atlas.partition_at(points).reshape((atlas.size,) + atlas.grid.shape)

    lo, hi = atlas.inner
    h = grid1.spacing
    for k in range(1, atlas.size):
        candidates = []
        for j in range(k):
            arcs = [_arc_overlaps(origins[j, i] + lo - origins[k, i], origins[j, i] + hi - origins[k, i], lo, hi)
                    for i in range(n)]
            if all(arcs):
                candidates.append((_overlap_volume(arcs), -j, arcs))
        if not candidates:
            raise PreconditionError(f"Chart {k} meets no earlier chart")
        # widest overlap first, lowest index on ties
        _, neg_j, arcs = max(candidates, key=lambda c: (c[0], c[1]))
        j = -neg_j
        atlas.predecessors.append(j)
        atlas.bump_intervals.append(arcs)
        local = atlas.local(k, points)
        bump = np.prod([_sin2_bump(local[:, i], arcs[i]) for i in range(n)], axis=0)
        if bump.sum() <= 0:
            raise PreconditionError(f"Overlap of charts {j} and {k} holds no interior node at res {res}")
        bump = bump / (bump.sum() * h ** n)
        atlas.bumps.append(bump.reshape(atlas.grid.shape))

    atlas.c2 = max((float(b.max()) for b in atlas.bumps[1:]), default=0.0)
    logger.info(f"Torus atlas n={n}: {atlas.size} charts of side {side:.4g}, C2={atlas.c2:.4g}")
    return atlas


@dataclass
class Decomposition:
    """f - 1 = Σ g_j with supp g_j in chart j and ∫ g_j w = 0 for the base weight w"""
    pieces: List[np.ndarray]
    lambdas: np.ndarray
    intermediates: List[np.ndarray]
    base: np.ndarray
    diagnostics: Dict[str, Any] = field(default_factory=dict)

    @property
    def c3(self) -> float:
        return float(np.max(np.abs(self.lambdas))) if len(self.lambdas) else 0.0


def incidence(atlas: TorusAtlas) -> np.ndarray:
    """α_jk = 1 if j = k, -1 if j = ρ(k), for k = 1..m"""
    alpha = np.zeros((atlas.size, atlas.size - 1))
    for k in range(1, atlas.size):
        alpha[k, k - 1] = 1.0
        alpha[atlas.predecessors[k], k - 1] = -1.0
    return alpha


def interpolated_family(decomp: Decomposition, t: Sequence[float], s: float = 1.0) -> np.ndarray:
    """1 + s Σ t_j g_j"""
    out = np.ones_like(decomp.pieces[0])
    for weight, piece in zip(t, decomp.pieces):
        if weight:
            out = out + s * weight * piece
    return out


def decompose(f: np.ndarray, atlas: TorusAtlas, base: Optional[np.ndarray] = None,
              tolerances: Optional[Dict] = None) -> Decomposition:
    """Split f - 1 into chart-supported pieces of zero weighted mass.

    `base` is the normalized reference density w (uniform when omitted);
    pieces satisfy ∫ g_j w = 0 and f_k = 1 + Σ_{i<=k} g_i stays positive."""
    tol = tolerances or TOLERANCES
    grid = atlas.grid
    cell = grid.spacing ** grid.dim
    f = np.asarray(f, dtype=np.float64).reshape(grid.shape)
    w = np.ones(grid.shape) if base is None else np.asarray(base, dtype=np.float64).reshape(grid.shape)

    total = float(np.sum(f * w) * cell)
    reference = float(np.sum(w) * cell)
    if abs(total - reference) > tol['mass_match'] * reference:
        raise PreconditionError(f"Decomposition needs matching mass: {total:.12g} vs {reference:.12g}",
                                {'mass': total, 'reference': reference})

    excess = f - 1.0
    shares = np.array([np.sum(excess * phi * w) * cell for phi in atlas.partition])
    bumps = [None] + [b / (np.sum(b * w) * cell) for b in atlas.bumps[1:]]

    alpha = incidence(atlas)
    # the j = 0 row is the negative sum of the others
    lambdas = np.linalg.lstsq(alpha[1:], shares[1:], rcond=None)[0] if atlas.size > 1 else np.zeros(0)

    pieces = []
    for j in range(atlas.size):
        piece = excess * atlas.partition[j]
        for k in range(1, atlas.size):
            if alpha[j, k - 1]:
                piece = piece - lambdas[k - 1] * alpha[j, k - 1] * bumps[k]
        pieces.append(piece)

    decomp = Decomposition(pieces=pieces, lambdas=lambdas, intermediates=[], base=w)
    running = np.ones(grid.shape)
    for k, piece in enumerate(pieces):
        running = running + piece
        if np.any(running <= 0):
            raise PositivityError(
                f"Intermediate density f_{k} is not positive (min {running.min():.3e}); "
                f"the pair is too far apart in d_M for the patchwise correction",
                {'k': k, 'min': float(running.min())})
        decomp.intermediates.append(running.copy())

    decomp.diagnostics = {
        'C2': atlas.c2,
        'C3': decomp.c3,
        'sum_defect': float(np.max(np.abs(sum(pieces) - excess))),
        'piece_masses': [float(np.sum(p * w) * cell) for p in pieces],
        'min_intermediate': min(float(fk.min()) for fk in decomp.intermediates),
    }
    logger.debug(f"Decomposition: |lambda|={decomp.c3:.4g}, sum defect={decomp.diagnostics['sum_defect']:.2e}")
    return decomp


# --- global maps -----------------------------------------------------------------

@dataclass(eq=False)
class EdgeSolve:
    """One step of the edge path: a cube solution living in chart `chart`"""
    chart: int
    solution: Optional[dm_solver.TriangularSolution]
    diagnostics: Dict[str, Any] = field(default_factory=dict)

    @property
    def is_identity(self) -> bool:
        return self.solution is None


@dataclass(eq=False)
class GlobalMap:
    """ψ₂ = Φ_0 ∘ Φ_1 ∘ ... ∘ Φ_m with Φ_k the chart-k cube solution read on the torus"""
    atlas: TorusAtlas
    edges: List[EdgeSolve]
    lam: float
    decomposition: Optional[Decomposition] = None
    diagnostics: Dict[str, Any] = field(default_factory=dict)

    @property
    def grid(self) -> Grid:
        return self.atlas.grid

    def _move(self, edge: EdgeSolve, pts: np.ndarray, inverse: bool) -> np.ndarray:
        if edge.is_identity:
            return pts
        atlas = self.atlas
        local = atlas.local(edge.chart, pts)
        inside = np.all(local <= atlas.chart_side, axis=1)
        if not inside.any():
            return pts
        mover = dm_solver.apply_inverse if inverse else dm_solver.apply
        moved = pts.copy()
        image = mover(edge.solution, local[inside])
        moved[inside] = wrap(image + atlas.origins[edge.chart], 1.0)
        return moved

    def apply(self, x) -> np.ndarray:
        pts = self.grid.check_points(x)
        for edge in reversed(self.edges):
            pts = self._move(edge, pts, inverse=False)
        return pts

    def apply_inverse(self, y) -> np.ndarray:
        pts = self.grid.check_points(y)
        for edge in self.edges:
            pts = self._move(edge, pts, inverse=True)
        return pts

    def displacement(self) -> np.ndarray:
        """ψ(x) - x on the torus nodes (minimal image), shape (res^n, n)"""
        nodes = self.grid.points()
        return torus_delta(self.apply(nodes), nodes, 1.0)

    def inverse_displacement(self) -> np.ndarray:
        nodes = self.grid.points()
        return torus_delta(self.apply_inverse(nodes), nodes, 1.0)


def displacement_jacobian(grid: Grid, disp: np.ndarray) -> np.ndarray:
    """det(I + ∇d) by periodic centered differences; disp has shape (res^n, n)"""
    n = grid.dim
    fields = [disp[:, i].reshape(grid.shape) for i in range(n)]
    jac = np.empty(grid.shape + (n, n))
    for i in range(n):
        for k in range(n):
            jac[..., i, k] = (i == k) + centered_gradient(fields[i], grid.spacing, k, periodic=True)
    return np.linalg.det(jac)


def _edge_bound(sol: dm_solver.TriangularSolution) -> float:
    """sup|ψ - id| over the whole cube: interpolated u never exceeds its nodal max"""
    parts = [sol.cutoffs.sup(layer.s) * float(np.max(np.abs(layer.u))) for layer in sol.layers]
    return float(np.sqrt(np.sum(np.square(parts))))


def _normalize(values: np.ndarray, grid: Grid) -> np.ndarray:
    return values / (np.sum(values) * grid.spacing ** grid.dim)


def _as_values(density: DensityLike, grid: Grid) -> np.ndarray:
    if isinstance(density, np.ndarray):
        return GridDensity(grid, density).values
    if isinstance(density, GridDensity):
        if density.grid != grid:
            raise PreconditionError("Density grid does not match the atlas grid")
        return density.values
    return GridDensity(grid, density(*grid.mesh())).values


def cutoffs_for(atlas: TorusAtlas, eps0_target: Optional[float] = None) -> CutoffFamily:
    target = CUTOFFS['eps0_target'] if eps0_target is None else eps0_target
    return build_cutoffs(atlas.n, eta_for_dim(atlas.n, atlas.eta), target, side=atlas.chart_side)


def edge_eps0_limit(s_hat: np.ndarray, intermediates: Sequence[np.ndarray]) -> float:
    """Largest ε₀ with ε₀ max g < min(min g, ½ min f) on every edge g = ŝ f_{k-1} -> f = ŝ f_k"""
    limits = []
    previous = s_hat
    for current in intermediates:
        f = s_hat * current
        limits.append(min(previous.min(), 0.5 * f.min()) / previous.max())
        previous = f
    return float(min(limits))


def global_solve(sigma: DensityLike, tau: DensityLike, atlas: TorusAtlas,
                 cutoffs: Optional[CutoffFamily] = None, tolerances: Optional[Dict] = None,
                 solver: Optional[Dict] = None, metrics: bool = True) -> GlobalMap:
    """ψ₂ with ψ₂*σ = λτ, λ = ∫σ/∫τ, by one cube solve per edge of the path
    from (0, ..., 0) to (1, ..., 1)"""
    tol = tolerances or TOLERANCES
    grid = atlas.grid
    sigma_v = _as_values(sigma, grid)
    tau_v = _as_values(tau, grid)
    lam = float(np.sum(sigma_v) / np.sum(tau_v))
    s_hat = _normalize(sigma_v, grid)
    t_hat = _normalize(tau_v, grid)
    decomp = decompose(t_hat / s_hat, atlas, base=s_hat, tolerances=tol)
    if cutoffs is None:
        limit = edge_eps0_limit(s_hat, decomp.intermediates)
        cutoffs = cutoffs_for(atlas, min(CUTOFFS['eps0_target'], 0.99 * limit))
    edges: List[EdgeSolve] = []
    previous = np.ones(grid.shape)
    for k in range(atlas.size):
        current = decomp.intermediates[k]
        if np.array_equal(current, previous):
            edges.append(EdgeSolve(chart=k, solution=None, diagnostics={'identity': True}))
            continue
        chart_grid = atlas.chart_grid
        g_cube = GridDensity(chart_grid, atlas.restrict(k, s_hat * previous))
        f_cube = GridDensity(chart_grid, atlas.restrict(k, s_hat * current))
        try:
            sol = dm_solver.dm_solve(f_cube, g_cube, cutoffs, metrics=False, tolerances=tol, solver=solver)
        except MoserError as e:
            e.details['edge'] = k
            e.message = f"Edge {k}: {e.message}"
            raise
        diag = {
            'identity': False,
            'u_sup': sol.u_sup,
            'sup_bound': _edge_bound(sol),
            'newton_iterations': sol.diagnostics['newton_iterations'],
        }
        if metrics:
            diag['cube_residual'] = dm_solver.residual(sol, f_cube, g_cube)
            nodes = chart_grid.points()
            diag['dbar'] = max(sup_distance(dm_solver.apply(sol, nodes), nodes),
                               sup_distance(dm_solver.apply_inverse(sol, nodes), nodes))
        edges.append(EdgeSolve(chart=k, solution=sol, diagnostics=diag))
        logger.debug(f"Edge {k}: max|u|={sol.u_sup:.4g}")
        previous = current

    gmap = GlobalMap(atlas=atlas, edges=edges, lam=lam, decomposition=decomp)
    gmap.diagnostics.update({
        'lambda': lam,
        'C2': atlas.c2,
        'C3': decomp.c3,
        'edges_solved': sum(not e.is_identity for e in edges),
        'sum_edge_bounds': sum(e.diagnostics.get('sup_bound', 0.0) for e in edges),
    })
    if metrics:
        gmap.diagnostics.update(global_diagnostics(gmap, s_hat, t_hat))
    logger.info(f"Global solve: lambda={lam:.6g}, {gmap.diagnostics['edges_solved']} edges, "
                f"|lambda_k|={decomp.c3:.3g}")
    return gmap


def global_diagnostics(gmap: GlobalMap, s_hat: np.ndarray, t_hat: np.ndarray) -> Dict[str, Any]:
    """Pullback defect |ŝ(ψ) det∇ψ - t̂| and d̄(ψ₂, id) against the edge sum bound"""
    grid = gmap.grid
    nodes = grid.points()
    forward = gmap.apply(nodes)
    disp = torus_delta(forward, nodes, 1.0)
    inv_disp = gmap.inverse_displacement()
    det = displacement_jacobian(grid, disp)
    pulled = GridDensity(grid, s_hat)(forward).reshape(grid.shape) * det
    c0_forward = float(np.max(np.linalg.norm(disp, axis=1)))
    c0_inverse = float(np.max(np.linalg.norm(inv_disp, axis=1)))
    dbar_id = max(c0_forward, c0_inverse)
    bound = gmap.diagnostics['sum_edge_bounds']
    return {
        'pullback_residual': float(np.max(np.abs(pulled - t_hat))),
        'pullback_mass': float(np.sum(pulled) * grid.spacing ** grid.dim),
        'dbar_id': dbar_id,
        'c0_forward': c0_forward,
        'c0_inverse': c0_inverse,
        'dbar_within_sum': bool(dbar_id <= bound + 1e-9),
    }


# --- parametric version ----------------------------------------------------------

FamilyLike = Union[GridDensity, np.ndarray, Mapping[float, Any], Callable[[float], Any]]


def _is_constant(source: FamilyLike) -> bool:
    return isinstance(source, (GridDensity, np.ndarray))


def _member_values(source: FamilyLike, s: float, grid: Grid) -> np.ndarray:
    """Member s of a family: constants ignore s, mappings are read, callables are called"""
    if isinstance(source, np.ndarray):
        return GridDensity(grid, source).values
    if isinstance(source, GridDensity):
        return _as_values(source, grid)
    if isinstance(source, Mapping):
        if s not in source:
            raise PreconditionError(f"Family has no member at s={s:g}", {'s': s})
        member = source[s]
    else:
        member = source(s)
    if isinstance(member, np.ndarray):
        return GridDensity(grid, member).values
    return _as_values(member, grid)


def _lid_between(a: np.ndarray, b: np.ndarray, grid: Grid, max_atoms: int) -> float:
    if np.array_equal(a, b):
        return 0.0
    ma, _ = coarse_atomize(GridDensity(grid, _normalize(a, grid)), max_atoms)
    mb, _ = coarse_atomize(GridDensity(grid, _normalize(b, grid)), max_atoms)
    return lid_metric(ma, mb, METRIC['b']).lid_value


def map_distance(a: GlobalMap, b: GlobalMap) -> float:
    """d̄(ψ_a, ψ_b) on the torus nodes"""
    nodes = a.grid.points()
    forward = sup_distance(a.apply(nodes), b.apply(nodes), 1.0)
    inverse = sup_distance(a.apply_inverse(nodes), b.apply_inverse(nodes), 1.0)
    return max(forward, inverse)


@dataclass(eq=False)
class ParametricFamily:
    partition: List[float]
    maps: List[GlobalMap]
    lid_steps: List[float]
    dbar_steps: List[float]
    diagnostics: Dict[str, Any] = field(default_factory=dict)


def _default_partition(sources: Sequence[FamilyLike]) -> List[float]:
    keys = [sorted(float(k) for k in src) for src in sources if isinstance(src, Mapping)]
    if not keys:
        return [float(s) for s in np.linspace(0.0, 1.0, 6)]
    if any(k != keys[0] for k in keys[1:]):
        raise PreconditionError("Both families must be sampled on the same parameters")
    return keys[0]


def parametric_solve(sigma: FamilyLike, tau: FamilyLike, atlas: TorusAtlas,
                     partition: Optional[Sequence[float]] = None, threads: int = 1,
                     tolerances: Optional[Dict] = None, settings: Optional[Dict] = None,
                     solver: Optional[Dict] = None, max_atoms: Optional[int] = None) -> ParametricFamily:
    """ψ_{2,s} with ψ_{2,s}*σ_s = λ_s τ_s for every s, sharing atlas, cutoffs and subdivision.

    Each of `sigma` and `tau` is a fixed density (GridDensity or nodal array),
    a mapping s -> density on a fixed partition, or a callable s -> density.
    When every varying family is callable the partition is refined by midpoint
    insertion until consecutive members are within the configured Lid step."""
    cfg = settings or SMOOTHING
    grid = atlas.grid
    sources = (sigma, tau)
    varying = [src for src in sources if not _is_constant(src)]
    refinable = all(callable(src) and not isinstance(src, Mapping) for src in varying)
    points = [float(s) for s in partition] if partition is not None else _default_partition(sources)
    if len(points) < 2:
        raise PreconditionError("A parametric solve needs at least two parameters")
    max_atoms = max_atoms or METRIC['coarse_atoms']

    cache: Dict[Tuple[int, float], np.ndarray] = {}

    def member(which: int, s: float) -> np.ndarray:
        key = (which, 0.0 if _is_constant(sources[which]) else s)
        if key not in cache:
            cache[key] = _member_values(sources[which], s, grid)
        return cache[key]

    def step(a: float, b: float) -> float:
        return max(_lid_between(member(i, a), member(i, b), grid, max_atoms)
                   for i in range(2))

    steps: List[float] = []
    for attempt in range(cfg['max_refinements'] + 1):
        steps = [step(a, b) for a, b in zip(points, points[1:])]
        bad = [i for i, value in enumerate(steps) if value > cfg['lid_step']]
        if not bad:
            break
        if not refinable or attempt == cfg['max_refinements']:
            i = bad[0]
            raise PartitionRefinementError(
                f"Members s={points[i]:g} and s={points[i + 1]:g} are {steps[i]:.3g} apart in Lid "
                f"(step bound {cfg['lid_step']:g})",
                {'interval': [points[i], points[i + 1]], 'lid_step': steps[i]})
        for i in reversed(bad):
            points.insert(i + 1, 0.5 * (points[i] + points[i + 1]))
        logger.info(f"Refined partition to {len(points)} members")

    # one cutoff family against the most restrictive member
    limits = []
    for s in points:
        s_hat = _normalize(member(0, s), grid)
        t_hat = _normalize(member(1, s), grid)
        decomp = decompose(t_hat / s_hat, atlas, base=s_hat, tolerances=tolerances)
        limits.append(edge_eps0_limit(s_hat, decomp.intermediates))
    target = min(CUTOFFS['eps0_target'], 0.99 * min(limits))
    cutoffs = cutoffs_for(atlas, target)

    def solve(s: float) -> GlobalMap:
        return global_solve(member(0, s), member(1, s), atlas, cutoffs, tolerances, solver)

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        maps = list(pool.map(solve, points))

    dbar_steps = [map_distance(a, b) for a, b in zip(maps, maps[1:])]
    lid_gap = [_lid_between(member(0, s), member(1, s), grid, max_atoms) for s in points]
    ratios = [m.diagnostics['dbar_id'] / d for m, d in zip(maps, lid_gap) if d > 1e-12]
    modulus = max(ratios, default=0.0)
    largest_step = max(steps, default=0.0)
    allowance = cfg['continuity_factor'] * largest_step * modulus
    result = ParametricFamily(points, maps, steps, dbar_steps)
    result.diagnostics = {
        'members': len(points),
        'modulus': modulus,
        'largest_lid_step': largest_step,
        'continuity_allowance': allowance,
        'max_dbar_step': max(dbar_steps, default=0.0),
        'continuity_ok': all(d <= allowance + 1e-9 for d in dbar_steps),
        'eps0': cutoffs.eps0,
    }
    if not result.diagnostics['continuity_ok']:
        logger.warning(f"Parametric continuity: max d-bar step {result.diagnostics['max_dbar_step']:.3g} "
                       f"exceeds {allowance:.3g}")
    return result
