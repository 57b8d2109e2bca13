# models/cutoffs.py
"""Fonctions de coupure ζ_s du schéma de Dacorogna-Moser"""

import logging
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from config.settings import CUTOFFS
from models.grid import Grid
from utils.errors import InfeasibleCutoffError, PreconditionError

logger = logging.getLogger(__name__)


def smoothstep(t: np.ndarray) -> np.ndarray:
    """C² quintic ramp from 0 (t <= 0) to 1 (t >= 1)"""
    t = np.clip(t, 0.0, 1.0)
    return t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)


@dataclass(frozen=True)
class CutoffFamily:
    """Tensor plateau bumps ζ_s(x^{s-1}) = Π κ(x_i) / ν^{s-1}, s = 2..n.

    κ vanishes on the collar of width eta*side/2, ramps up over `ramp` and
    equals 1 on the plateau. ν is the trapezoid mean of κ on the `quad_res`
    sampling grid, so each ζ_s has mean exactly 1 there (∫ζ_s = 1 on the
    unit cube). eps0 and eps1 are measured on the same sampling grid."""
    n: int
    eta: float
    side: float = 1.0
    ramp: float = 0.0
    normalizer: float = 1.0
    quad_res: int = 257
    eps0: float = 0.0
    eps1: float = 0.0
    mean_deviation: Tuple[float, ...] = ()

    @classmethod
    def identity(cls, n: int, side: float = 1.0) -> 'CutoffFamily':
        """ζ ≡ 1 (eta = 0); a reference family, not a valid collar construction"""
        return cls(n=n, eta=0.0, side=side, mean_deviation=(0.0,) * max(n - 1, 0))

    @property
    def is_identity(self) -> bool:
        return self.eta == 0.0

    @property
    def collar(self) -> float:
        """Width of the zero collar, eta*side/2"""
        return 0.5 * self.eta * self.side

    def kappa(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=np.float64)
        if self.is_identity:
            return np.ones_like(t)
        c, w, k = self.collar, self.ramp, self.side
        return smoothstep((t - c) / w) * smoothstep((k - c - t) / w)

    def evaluate(self, s: int, points: np.ndarray) -> np.ndarray:
        """ζ_s at points of shape (m, s-1); ζ_1 ≡ 1"""
        pts = np.asarray(points, dtype=np.float64)
        m = pts.shape[0] if pts.ndim > 1 else len(pts)
        if s <= 1 or self.is_identity:
            return np.ones(m)
        pts = pts.reshape(m, -1)[:, :s - 1]
        return np.prod(self.kappa(pts), axis=1) / self.normalizer ** (s - 1)

    def sample(self, s: int, grid: Grid) -> np.ndarray:
        """ζ_s on the nodes of the (s-1)-dimensional lattice of `grid`"""
        if s <= 1:
            return np.ones(())
        k1 = self.kappa(grid.nodes) / self.normalizer
        out = np.ones(())
        for _ in range(s - 1):
            out = np.multiply.outer(out, k1)
        return out

    def sup(self, s: int) -> float:
        if s <= 1 or self.is_identity:
            return 1.0
        return 1.0 / self.normalizer ** (s - 1)

    def quadrature_grid(self, dim: int) -> Grid:
        return Grid(dim=max(dim, 1), side=self.side, res=self.quad_res)

    def to_dict(self) -> Dict:
        return {
            'n': self.n, 'eta': self.eta, 'side': self.side, 'ramp': self.ramp,
            'normalizer': self.normalizer, 'quad_res': self.quad_res,
            'eps0': self.eps0, 'eps1': self.eps1,
            'mean_deviation': list(self.mean_deviation),
        }

    @classmethod
    def from_dict(cls, data: Dict) -> 'CutoffFamily':
        data = dict(data)
        data['mean_deviation'] = tuple(data.get('mean_deviation', ()))
        return cls(**data)


def _mean_abs_deviation(k1: np.ndarray, weights: np.ndarray, dim: int) -> float:
    """Trapezoid mean of |Π k1(x_i) - 1| over the dim-fold tensor grid"""
    if dim == 1:
        return float(np.sum(weights * np.abs(k1 - 1.0)))
    inner = np.ones(())
    inner_w = np.ones(())
    for _ in range(dim - 1):
        inner = np.multiply.outer(inner, k1)
        inner_w = np.multiply.outer(inner_w, weights)
    total = 0.0
    # chunked over the first axis to bound memory at dim 3
    for value, weight in zip(k1, weights):
        total += weight * float(np.sum(inner_w * np.abs(value * inner - 1.0)))
    return total


def _measure(n: int, eta: float, side: float, ramp: float, quad_res: int) -> CutoffFamily:
    family = CutoffFamily(n=n, eta=eta, side=side, ramp=ramp, quad_res=quad_res)
    grid = family.quadrature_grid(1)
    weights = grid.weights_1d / side
    kappa = family.kappa(grid.nodes)
    normalizer = float(np.sum(weights * kappa))
    k1 = kappa / normalizer
    deviations = tuple(_mean_abs_deviation(k1, weights, s - 1) for s in range(2, n + 1))
    sups = [1.0 / normalizer ** (s - 1) - 1.0 for s in range(2, n + 1)]
    eps1 = max(deviations, default=0.0)
    eps0 = max([eps1] + sups)
    return CutoffFamily(n=n, eta=eta, side=side, ramp=ramp, normalizer=normalizer,
                        quad_res=quad_res, eps0=eps0, eps1=eps1, mean_deviation=deviations)


def build_cutoffs(n: int, eta: float, eps0_target: Optional[float] = None,
                  side: float = 1.0, quad_res: Optional[int] = None) -> CutoffFamily:
    """Build ζ_2..ζ_n with achieved ε₀ <= eps0_target.

    The ramp starts at width eta*side/2 (plateau = Q(1-eta)) and is halved,
    widening the plateau, until the target is met."""
    eps0_target = CUTOFFS['eps0_target'] if eps0_target is None else eps0_target
    quad_res = quad_res or CUTOFFS['quad_res']
    if not 0.0 < eta < 0.5:
        raise PreconditionError(f"eta must lie in (0, 1/2), got {eta}")
    if eps0_target <= 0:
        raise PreconditionError(f"eps0_target must be positive, got {eps0_target}")

    if n == 1:
        return CutoffFamily(n=1, eta=eta, side=side, ramp=0.5 * eta * side, quad_res=quad_res)

    ramp = 0.5 * eta * side
    floor = CUTOFFS['min_ramp_fraction'] * eta * side
    family = _measure(n, eta, side, ramp, quad_res)
    while family.eps0 > eps0_target:
        if ramp / 2.0 < floor:
            raise InfeasibleCutoffError(
                f"eps0 target {eps0_target:g} unreachable at eta={eta:g}; "
                f"minimum achievable eps0 is {family.eps0:.4g}",
                {'eta': eta, 'target': eps0_target, 'min_eps0': family.eps0})
        ramp /= 2.0
        family = _measure(n, eta, side, ramp, quad_res)
        logger.debug(f"Cutoff ramp narrowed to {ramp:.4g}, eps0={family.eps0:.4g}")

    logger.info(f"Cutoffs n={n} eta={eta:g}: eps0={family.eps0:.4g}, eps1={family.eps1:.4g}")
    return family


def eta_for_dim(n: int, eta: Optional[float] = None) -> float:
    """Collar width in dimension n keeping the plateau fraction of Q^{n-1}
    at the 2D value 1 - eta"""
    eta = CUTOFFS['eta'] if eta is None else eta
    if n <= 2:
        return eta
    return 1.0 - (1.0 - eta) ** (1.0 / (n - 1))


def default_cutoffs(n: int, side: float = 1.0, eps0_target: Optional[float] = None,
                    eta: Optional[float] = None) -> CutoffFamily:
    """build_cutoffs with the configured 2D collar carried to dimension n"""
    if n == 1:
        return CutoffFamily.identity(1, side)
    return build_cutoffs(n, eta_for_dim(n, eta), eps0_target, side=side)
