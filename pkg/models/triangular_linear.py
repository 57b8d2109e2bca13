# models/triangular_linear.py
"""Linéarisation dΨ(0̄): opérateur intégral triangulaire, inversion, borne M_g"""

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from config.settings import TOLERANCES
from models.cutoffs import CutoffFamily
from models.grid import Grid, GridDensity, cumulate, integrate
from utils.errors import PreconditionError, RoughFieldError, SingularKernelError
from utils.helpers import centered_gradient

logger = logging.getLogger(__name__)


@dataclass
class TriangularFieldVector:
    """Components Y_1..Y_n; Y_j is stored on the lattice of (a_j, ..., a_n)"""
    grid: Grid
    components: List[np.ndarray]

    def __post_init__(self):
        n = self.grid.dim
        if len(self.components) != n:
            raise PreconditionError(f"Expected {n} components, got {len(self.components)}")
        comps = []
        for j, comp in enumerate(self.components, start=1):
            arr = np.asarray(comp, dtype=np.float64)
            expected = (self.grid.res,) * (n - j + 1)
            if arr.shape != expected:
                raise PreconditionError(f"Component {j} has shape {arr.shape}, expected {expected}")
            comps.append(arr)
        self.components = comps

    @property
    def n(self) -> int:
        return self.grid.dim

    @classmethod
    def zeros(cls, grid: Grid) -> 'TriangularFieldVector':
        return cls(grid, [np.zeros((grid.res,) * (grid.dim - j)) for j in range(grid.dim)])

    def component(self, j: int) -> np.ndarray:
        """1-based access"""
        return self.components[j - 1]

    def sup(self) -> float:
        return max(float(np.max(np.abs(c))) for c in self.components)

    def corner_value(self) -> np.ndarray:
        """Y(K, ..., K)"""
        return np.array([c[(-1,) * c.ndim] for c in self.components])

    def full(self, j: int) -> np.ndarray:
        """Component j broadcast onto the whole n-dimensional lattice"""
        comp = self.component(j)
        return np.broadcast_to(comp.reshape((1,) * (j - 1) + comp.shape), self.grid.shape)

    def combine(self, other: 'TriangularFieldVector', alpha: float = 1.0,
                beta: float = 1.0) -> 'TriangularFieldVector':
        return TriangularFieldVector(self.grid, [alpha * a + beta * b
                                                 for a, b in zip(self.components, other.components)])

    def __neg__(self) -> 'TriangularFieldVector':
        return TriangularFieldVector(self.grid, [-c for c in self.components])

    def __sub__(self, other: 'TriangularFieldVector') -> 'TriangularFieldVector':
        return self.combine(other, 1.0, -1.0)


@dataclass
class OperatorKernel:
    """C_jk(a_j, ..., a_k, x̃_k) for j <= k, each stored on the lattice of component j"""
    grid: Grid
    blocks: Dict[Tuple[int, int], np.ndarray]
    g_min: float
    g_max: float
    info: Dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.grid.dim

    def block(self, j: int, k: int) -> np.ndarray:
        if k < j:
            return np.zeros((self.grid.res,) * (self.n - j + 1))
        return self.blocks[(j, k)]

    def diagonal_min(self) -> float:
        return min(float(self.blocks[(j, j)].min()) for j in range(1, self.n + 1))


def _require_cube(grid: Grid):
    if grid.periodic:
        raise PreconditionError("The triangular operator is defined on cubes only")


def corner_integrals(grid: Grid, values: np.ndarray, j: int) -> np.ndarray:
    """∫ over Q^n_{a;j}: full range in x_1..x_{j-1}, [0, a_i] in x_j..x_n"""
    out = np.asarray(values, dtype=np.float64)
    for axis in range(j - 1, grid.dim):
        out = cumulate(grid, out, axis)
    return integrate(grid, out, axes=range(j - 1))


def psi0(f: GridDensity, g: GridDensity) -> TriangularFieldVector:
    """Ψ(0̄)_j(a) = ∫_{Q^n_{a;j}} (g - f)"""
    grid = f.grid
    _require_cube(grid)
    diff = g.values - f.values
    return TriangularFieldVector(grid, [corner_integrals(grid, diff, j) for j in range(1, grid.dim + 1)])


def build_kernel(g: GridDensity, cutoffs: CutoffFamily) -> OperatorKernel:
    """Assemble C_jk = ∫_{Q^{k-1}_{a;j}} ζ_k(x^{k-1}) g(x^{k-1}, a_k, x̃_k) dx^{k-1}"""
    grid = g.grid
    _require_cube(grid)
    n = grid.dim
    blocks = {}
    for k in range(1, n + 1):
        zeta = cutoffs.sample(k, grid)
        weighted = g.values * zeta.reshape(zeta.shape + (1,) * (n - k + 1))
        for j in range(1, k + 1):
            out = weighted
            for axis in range(j - 1, k - 1):
                out = cumulate(grid, out, axis)
            blocks[(j, k)] = integrate(grid, out, axes=range(j - 1))

    kernel = OperatorKernel(grid, blocks, g.min, g.max)
    kernel.info['diagonal_min'] = kernel.diagonal_min()
    logger.debug(f"Kernel assembled for n={n}, res={grid.res}: min C_jj={kernel.info['diagonal_min']:.4g}")
    return kernel


def apply_dpsi0(kernel: OperatorKernel, X: TriangularFieldVector) -> TriangularFieldVector:
    """(dΨ(0̄)X)_j(a) = Σ_{k>=j} ∫_{[0,a_{k+1}]x..x[0,a_n]} X_k(a_k, x̃_k) C_jk dx̃_k"""
    grid, n = kernel.grid, kernel.n
    out = []
    for j in range(1, n + 1):
        total = np.zeros((grid.res,) * (n - j + 1))
        for k in range(j, n + 1):
            xk = X.component(k)
            integrand = xk.reshape((1,) * (k - j) + xk.shape) * kernel.block(j, k)
            for axis in range(k - j + 1, n - j + 1):
                integrand = cumulate(grid, integrand, axis)
            total = total + integrand
        out.append(total)
    return TriangularFieldVector(grid, out)


def mixed_partial(values: np.ndarray, spacing: float, axes: Sequence[int]) -> np.ndarray:
    """Nested centered differences ∂^|axes| along each of `axes`"""
    out = values
    for axis in axes:
        out = centered_gradient(out, spacing, axis)
    return out


def _smoothness_drift(values: np.ndarray, spacing: float, axes: Sequence[int]) -> Optional[float]:
    """Relative change of a mixed partial when the lattice is coarsened by 2"""
    if not axes or any((values.shape[a] - 1) % 2 for a in axes) or min(values.shape) < 5:
        return None
    fine = mixed_partial(values, spacing, axes)
    coarse = mixed_partial(values[(slice(None, None, 2),) * values.ndim], 2 * spacing, axes)
    scale = float(np.max(np.abs(fine)))
    if scale < 1e-14:
        return 0.0
    return float(np.max(np.abs(fine[(slice(None, None, 2),) * values.ndim] - coarse))) / scale


def check_smoothness(Y: TriangularFieldVector, threshold: Optional[float] = None) -> Dict[int, float]:
    """Refuse fields whose inversion derivatives are unstable under grid doubling"""
    threshold = TOLERANCES['smoothness'] if threshold is None else threshold
    drifts = {}
    for l in range(1, Y.n):
        drift = _smoothness_drift(Y.component(l), Y.grid.spacing, range(1, Y.n - l + 1))
        if drift is None:
            continue
        drifts[l] = drift
        if drift > threshold:
            raise RoughFieldError(
                f"Component {l} is too rough to invert: mixed partial drifts by {drift:.3g} under h -> 2h",
                {'component': l, 'drift': drift, 'threshold': threshold})
    return drifts


def invert_dpsi0(kernel: OperatorKernel, Y: TriangularFieldVector,
                 check_smooth: bool = True) -> TriangularFieldVector:
    """Back-substitution X_n = Y_n / C_nn, then downward in l:
    X_l = (D_{l+1..n} Y_l - Σ_{k>l} D_{l+1..k}[X_k C_lk]) / C_ll"""
    grid, n = kernel.grid, kernel.n
    h = grid.spacing
    singular = TOLERANCES['kernel_singular']
    for l in range(1, n + 1):
        c_min = float(kernel.block(l, l).min())
        if c_min < singular:
            raise SingularKernelError(f"C_{l}{l} drops to {c_min:.3e}", {'component': l, 'min': c_min})
    if check_smooth:
        check_smoothness(Y)

    X: Dict[int, np.ndarray] = {n: Y.component(n) / kernel.block(n, n)}
    for l in range(n - 1, 0, -1):
        rhs = mixed_partial(Y.component(l), h, range(1, n - l + 1))
        for k in range(l + 1, n + 1):
            xk = X[k]
            product = xk.reshape((1,) * (k - l) + xk.shape) * kernel.block(l, k)
            rhs = rhs - mixed_partial(product, h, range(1, k - l + 1))
        X[l] = rhs / kernel.block(l, l)
    return TriangularFieldVector(grid, [X[j] for j in range(1, n + 1)])


def mg_from_bounds(g_min: float, g_max: float, n: int) -> float:
    """n! · max{(1/min g)(max g/min g)^{n-1}, 1}"""
    return math.factorial(n) * max((1.0 / g_min) * (g_max / g_min) ** (n - 1), 1.0)


def mg_bound(g: GridDensity, n: Optional[int] = None) -> float:
    return mg_from_bounds(g.min, g.max, n or g.grid.dim)


def bound_ratio(X: TriangularFieldVector, Y: TriangularFieldVector, mg: float) -> float:
    """|X|/(M_g |Y|); at most 1 whenever the sup-norm bound holds"""
    y = Y.sup()
    if y == 0:
        return 0.0 if X.sup() == 0 else math.inf
    return X.sup() / (mg * y)


def cvec1_norm(Y: TriangularFieldVector) -> float:
    """max_j max over α ⊂ {j+1..n} of sup|D^α Y_j|"""
    h = Y.grid.spacing
    best = 0.0
    for j in range(1, Y.n + 1):
        local = range(1, Y.n - j + 1)
        for size in range(len(local) + 1):
            for alpha in itertools.combinations(local, size):
                best = max(best, float(np.max(np.abs(mixed_partial(Y.component(j), h, alpha)))))
    return best


def linearized_guess(f: GridDensity, g: GridDensity, cutoffs: CutoffFamily,
                     kernel: Optional[OperatorKernel] = None) -> TriangularFieldVector:
    """u₀ = -dΨ(0̄)⁻¹ Ψ(0̄), the solution with the higher-order term dropped"""
    kernel = kernel or build_kernel(g, cutoffs)
    Y = psi0(f, g)
    u0 = -invert_dpsi0(kernel, Y)
    mg = mg_bound(g)
    if u0.sup() > mg * Y.sup() + 1e-8:
        logger.warning(f"Linearized guess exceeds the M_g bound: |u0|={u0.sup():.4g}, "
                       f"M_g|Psi(0)|={mg * Y.sup():.4g} (ratio {bound_ratio(u0, Y, mg):.4g})")
    logger.debug(f"Linearized guess: |u0|={u0.sup():.4g}, |Psi(0)|={Y.sup():.4g}")
    return u0
