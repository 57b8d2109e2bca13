# models/weak_metric.py
"""Topologie faible des mesures : mesures atomiques, métriques Lid_b, boîtes"""

import itertools
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import csr_matrix

from config.settings import METRIC, TOLERANCES
from models.grid import Grid, GridDensity
from utils.errors import DomainError, PreconditionError, SizeError, SolverError
from utils.helpers import pairwise_distances, wrap

logger = logging.getLogger(__name__)

EUCLIDEAN = 'euclidean'
FLAT_TORUS = 'torus'


@dataclass(frozen=True, eq=False)
class AtomicMeasure:
    """Finite weighted point set; duplicate points are merged on construction"""
    points: np.ndarray
    weights: np.ndarray
    side: float = 1.0
    metric: str = EUCLIDEAN

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        w = np.asarray(self.weights, dtype=np.float64).ravel()
        if len(pts) != len(w):
            raise PreconditionError(f"{len(pts)} points but {len(w)} weights")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise PreconditionError("Atomic weights must be finite and nonnegative")
        if self.metric not in (EUCLIDEAN, FLAT_TORUS):
            raise PreconditionError(f"Unknown metric '{self.metric}'")
        if len(pts):
            keys = np.round(pts, 12)
            uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
            if len(uniq) < len(pts):
                w = np.bincount(inverse.ravel(), weights=w, minlength=len(uniq))
                pts = uniq
        object.__setattr__(self, 'points', pts)
        object.__setattr__(self, 'weights', w)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    @property
    def periodic(self) -> bool:
        return self.metric == FLAT_TORUS

    def __len__(self) -> int:
        return len(self.weights)


@dataclass
class MetricReport:
    lid_value: float
    b: float
    certificate: np.ndarray
    method: str
    orientation: int = 1
    support: np.ndarray = field(default_factory=lambda: np.zeros((0, 1)))
    signed_weights: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def to_dict(self) -> dict:
        return {
            'value': self.lid_value,
            'b': self.b,
            'method': self.method,
            'orientation': self.orientation,
            'certificate': self.certificate.tolist(),
        }


def empty_measure(dim: int, side: float = 1.0, metric: str = EUCLIDEAN) -> AtomicMeasure:
    return AtomicMeasure(np.zeros((0, dim)), np.zeros(0), side, metric)


def atomize(d: GridDensity) -> AtomicMeasure:
    """One atom per node, weight = quadrature weight x value"""
    grid = d.grid
    weights = (grid.quadrature_weights() * d.values).ravel()
    return AtomicMeasure(grid.points(), weights, grid.side,
                         FLAT_TORUS if grid.periodic else EUCLIDEAN)


def coarse_atomize(d: GridDensity, max_atoms: Optional[int] = None) -> Tuple[AtomicMeasure, float]:
    """Aggregate node atoms in blocks so that at most `max_atoms` remain.

    Each block's mass sits at the mean of its node coordinates. Returns the
    measure and the transport bound (block diameter x mass) of the aggregation."""
    max_atoms = max_atoms or METRIC['coarse_atoms']
    grid = d.grid
    if grid.size <= max_atoms:
        return atomize(d), 0.0

    per_axis = max(1, int(np.floor(max_atoms ** (1.0 / grid.dim) + 1e-9)))
    block = int(np.ceil(grid.res / per_axis))
    starts = np.arange(0, grid.res, block)
    weighted = grid.quadrature_weights() * d.values
    for axis in range(grid.dim):
        weighted = np.add.reduceat(weighted, starts, axis=axis)
    counts = np.add.reduceat(np.ones(grid.res), starts)
    centers = np.add.reduceat(grid.nodes, starts) / counts

    mesh = np.meshgrid(*([centers] * grid.dim), indexing='ij')
    points = np.stack([m.ravel() for m in mesh], axis=-1)
    diameter = np.sqrt(grid.dim) * (block - 1) * grid.spacing
    measure = AtomicMeasure(points, weighted.ravel(), grid.side,
                            FLAT_TORUS if grid.periodic else EUCLIDEAN)
    logger.debug(f"Coarsened {grid.size} atoms to {len(measure)} (block {block})")
    return measure, float(diameter * measure.total_mass)


def _signed_union(mu: AtomicMeasure, nu: AtomicMeasure) -> Tuple[np.ndarray, np.ndarray]:
    """Union of supports and the signed weights mu - nu on it"""
    if len(mu) and len(nu) and mu.dim != nu.dim:
        raise PreconditionError(f"Dimension mismatch: {mu.dim} vs {nu.dim}")
    if mu.metric != nu.metric:
        raise PreconditionError(f"Metric mismatch: {mu.metric} vs {nu.metric}")
    dim = mu.dim if len(mu) else nu.dim
    pts = np.concatenate([mu.points.reshape(-1, dim), nu.points.reshape(-1, dim)])
    if len(pts) == 0:
        return np.zeros((0, dim)), np.zeros(0)
    uniq, inverse = np.unique(np.round(pts, 12), axis=0, return_inverse=True)
    inverse = inverse.ravel()
    m = len(mu)
    w = (np.bincount(inverse[:m], weights=mu.weights, minlength=len(uniq))
         - np.bincount(inverse[m:], weights=nu.weights, minlength=len(uniq)))
    return uniq, w


def _distances(points: np.ndarray, measure: AtomicMeasure) -> np.ndarray:
    return pairwise_distances(points, measure.side if measure.periodic else None)


def _lipschitz_repair(f: np.ndarray, dist: np.ndarray, b: float) -> np.ndarray:
    """Project a near-feasible test function onto the feasible set by the
    inf-convolution f_i = min_j (f_j + d_ij)"""
    f = np.clip(f, 0.0, b)
    return np.min(f[None, :] + dist, axis=1)


def lid_metric(mu: AtomicMeasure, nu: AtomicMeasure, b: float = 1.0,
               cap: Optional[int] = None) -> MetricReport:
    """Lid_b(mu, nu) as the exact optimum of the all-pairs linear program"""
    cap = cap or METRIC['atom_cap']
    points, w = _signed_union(mu, nu)
    n_atoms = len(w)
    if n_atoms > cap:
        raise SizeError(f"{n_atoms} atoms exceed the LP cap of {cap}; coarsen the measures first",
                        {'atoms': n_atoms, 'cap': cap})
    if n_atoms == 0 or np.all(w == 0):
        return MetricReport(0.0, b, np.zeros(n_atoms), 'lp', 1, points, w)

    dist = _distances(points, mu)
    if n_atoms > 1:
        rows_i, rows_j = np.nonzero(~np.eye(n_atoms, dtype=bool))
        n_rows = len(rows_i)
        data = np.concatenate([np.ones(n_rows), -np.ones(n_rows)])
        row_idx = np.concatenate([np.arange(n_rows), np.arange(n_rows)])
        col_idx = np.concatenate([rows_i, rows_j])
        a_ub = csr_matrix((data, (row_idx, col_idx)), shape=(n_rows, n_atoms))
        b_ub = dist[rows_i, rows_j]
    else:
        a_ub, b_ub = None, None

    tol = METRIC['lp_tolerance']
    options = {'primal_feasibility_tolerance': tol, 'dual_feasibility_tolerance': tol}
    best = None
    for orientation in (1, -1):
        res = linprog(-orientation * w, A_ub=a_ub, b_ub=b_ub, bounds=[(0.0, b)] * n_atoms,
                      method=METRIC['lp_method'], options=options)
        if res.status != 0:
            raise SolverError(f"Lid LP failed: {res.message}", {'status': int(res.status)})
        certificate = _lipschitz_repair(res.x, dist, b)
        value = float(orientation * certificate @ w)
        if best is None or value > best[0]:
            best = (value, certificate, orientation)

    value, certificate, orientation = best
    violation = float(np.max(certificate[:, None] - certificate[None, :] - dist))
    if violation > TOLERANCES['certificate']:
        raise SolverError(f"Certificate violates the Lipschitz bound by {violation:.2e}")
    return MetricReport(max(value, 0.0), b, certificate, 'lp', orientation, points, w)


def brute_force_lid(mu: AtomicMeasure, nu: AtomicMeasure, b: float = 1.0) -> float:
    """Lid_b by enumerating every vertex of the test-function polytope.

    A vertex is fixed by a spanning forest of tight pair constraints, each tree
    anchored at one bound (0 or b); rooting each tree at its anchored atom, a
    vertex is a parent map plus one bit per atom (bound choice for roots,
    sign of the tight edge for the others)."""
    points, w = _signed_union(mu, nu)
    n_atoms = len(w)
    if n_atoms > METRIC['brute_cap']:
        raise SizeError(f"brute_force_lid handles at most {METRIC['brute_cap']} atoms, got {n_atoms}")
    if n_atoms == 0:
        return 0.0

    dist = _distances(points, mu)
    bits = (np.arange(2 ** n_atoms)[:, None] >> np.arange(n_atoms)[None, :]) & 1
    signs = 2.0 * bits - 1.0
    tol = TOLERANCES['certificate'] * 1e-3
    best = 0.0
    choices = [[-1] + [j for j in range(n_atoms) if j != i] for i in range(n_atoms)]
    for parents in itertools.product(*choices):
        order = _forest_order(parents)
        if order is None:
            continue
        values = np.empty((len(bits), n_atoms))
        for i in order:
            p = parents[i]
            if p < 0:
                values[:, i] = bits[:, i] * b
            else:
                values[:, i] = values[:, p] + signs[:, i] * dist[i, p]
        feasible = np.all((values >= -tol) & (values <= b + tol), axis=1)
        gaps = values[:, :, None] - values[:, None, :] - dist[None, :, :]
        feasible &= np.all(gaps <= tol, axis=(1, 2))
        if not np.any(feasible):
            continue
        objective = values[feasible] @ w
        best = max(best, float(np.max(np.abs(objective))))
    return best


def _forest_order(parents: Tuple[int, ...]) -> Optional[list]:
    """Topological order (roots first) of a parent map, None if it has a cycle"""
    n = len(parents)
    depth = [-1] * n
    for start in range(n):
        path = []
        node = start
        while node >= 0 and depth[node] < 0:
            if node in path:
                return None
            path.append(node)
            node = parents[node]
        base = depth[node] if node >= 0 else -1
        for k, item in enumerate(reversed(path)):
            depth[item] = base + 1 + k
    return sorted(range(n), key=lambda i: depth[i])


def box_discrepancy(mu: AtomicMeasure, nu: AtomicMeasure, grid: Grid) -> float:
    """sup over j and grid corners a of |mu(Q_{a;j}) - nu(Q_{a;j})|.

    Q_{a;j} spans the whole side along axes < j and [0, a_i] along axes >= j."""
    dim = grid.dim
    hist = np.zeros((grid.res + 1,) * dim)
    for measure, sign in ((mu, 1.0), (nu, -1.0)):
        if len(measure) == 0:
            continue
        # atoms within round-off of a node belong to that node
        idx = np.stack([np.searchsorted(grid.nodes, measure.points[:, i] - 1e-9 * grid.spacing,
                                        side='left') for i in range(dim)], axis=0)
        idx = np.minimum(idx, grid.res)
        np.add.at(hist, tuple(idx), sign * measure.weights)

    worst = 0.0
    for j in range(dim):
        table = hist.sum(axis=tuple(range(j))) if j else hist
        for axis in range(table.ndim):
            table = np.cumsum(table, axis=axis)
        table = table[(slice(0, grid.res),) * table.ndim]
        worst = max(worst, float(np.max(np.abs(table))))
    return worst


def pushforward(m: AtomicMeasure, mapping: Callable[[np.ndarray], np.ndarray]) -> AtomicMeasure:
    """Relocate atoms through `mapping` (vectorized over (k, dim) arrays)"""
    if len(m) == 0:
        return m
    moved = np.asarray(mapping(m.points.copy()), dtype=np.float64).reshape(m.points.shape)
    if m.periodic:
        moved = wrap(moved, m.side)
    else:
        tol = TOLERANCES['domain']
        if np.any(moved < -tol) or np.any(moved > m.side + tol):
            raise DomainError("Pushforward moved atoms outside the cube")
        moved = np.clip(moved, 0.0, m.side)
    return AtomicMeasure(moved, m.weights.copy(), m.side, m.metric)


def measure_distance(f: GridDensity, g: GridDensity, b: float = 1.0,
                     max_atoms: Optional[int] = None) -> Tuple[float, float, float]:
    """(Lid_b, box discrepancy, aggregation bound) of two densities on one grid.

    The Lid value is computed on block-aggregated atoms; the box value on the
    full node atoms."""
    coarse_f, err_f = coarse_atomize(f, max_atoms)
    coarse_g, err_g = coarse_atomize(g, max_atoms)
    value = lid_metric(coarse_f, coarse_g, b).lid_value
    box = box_discrepancy(atomize(f), atomize(g), f.grid)
    return value, box, err_f + err_g
