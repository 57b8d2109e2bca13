# models/smoothing.py
"""Lissage 2D des homéomorphismes préservant l'aire : mollification puis correction"""

import logging
from dataclasses import asdict, dataclass, field
from functools import cached_property
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.ndimage import gaussian_filter

from config.settings import METRIC, SMOOTHING, TOLERANCES
from models.grid import Grid, GridDensity, interpolator
from models.manifold import (GlobalMap, TorusAtlas, build_torus_atlas, displacement_jacobian,
                             global_solve, parametric_solve)
from models.weak_metric import atomize, box_discrepancy, measure_distance, pushforward
from utils.errors import (InversionError, PartitionRefinementError, PreconditionError,
                          SurrogateFailureError, ValidationError)
from utils.helpers import centered_gradient, dbar, torus_delta, wrap

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class SampledHomeo:
    """h(x) = x + d(x) on the unit 2-torus, d sampled on the grid nodes"""
    grid: Grid
    disp: np.ndarray
    claimed_area_preserving: bool = True
    info: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.grid.dim != 2 or not self.grid.periodic:
            raise PreconditionError("Sampled homeomorphisms live on the 2-torus")
        if self.grid.side != 1.0:
            raise PreconditionError("Sampled homeomorphisms live on the unit torus")
        disp = np.asarray(self.disp, dtype=np.float64).reshape(self.grid.shape + (2,))
        if not np.all(np.isfinite(disp)):
            raise PreconditionError("Displacement field has non-finite values")
        self.disp = disp

    @classmethod
    def identity(cls, grid: Grid) -> 'SampledHomeo':
        return cls(grid, np.zeros(grid.shape + (2,)))

    @classmethod
    def from_map(cls, grid: Grid, func: Callable[[np.ndarray], np.ndarray],
                 claimed_area_preserving: bool = True) -> 'SampledHomeo':
        """Sample a torus map given on (m, 2) point arrays"""
        nodes = grid.points()
        disp = torus_delta(np.asarray(func(nodes), dtype=np.float64), nodes, 1.0)
        return cls(grid, disp.reshape(grid.shape + (2,)), claimed_area_preserving)

    @cached_property
    def _displacement(self):
        return interpolator(self.grid, self.disp)

    @cached_property
    def _gradient(self):
        """∂d_i/∂x_k on the nodes, stacked as (..., i, k)"""
        h = self.grid.spacing
        grad = np.empty(self.grid.shape + (2, 2))
        for i in range(2):
            for k in range(2):
                grad[..., i, k] = centered_gradient(self.disp[..., i], h, k, periodic=True)
        return interpolator(self.grid, grad)

    def apply(self, x) -> np.ndarray:
        pts = self.grid.check_points(x)
        return wrap(pts + self._displacement(pts), 1.0)

    def jacobian_at(self, x) -> np.ndarray:
        pts = self.grid.check_points(x)
        return np.eye(2) + self._gradient(pts)

    def apply_inverse(self, y, settings: Optional[Dict] = None) -> np.ndarray:
        """Damped Newton on x + d(x) = y, started from y - d(y)"""
        cfg = settings or SMOOTHING
        target = self.grid.check_points(y)
        x = wrap(target - self._displacement(target), 1.0)
        residual = torus_delta(x + self._displacement(x), target, 1.0)
        err = np.linalg.norm(residual, axis=1)
        iterations = 0
        for iterations in range(1, cfg['newton_max_iter'] + 1):
            active = np.flatnonzero(err > cfg['newton_tol'])
            if not len(active):
                break
            try:
                delta = np.linalg.solve(self.jacobian_at(x[active]), residual[active][..., None])[..., 0]
            except np.linalg.LinAlgError:
                raise InversionError("Singular Jacobian during Newton inversion")
            step = np.ones(len(active))
            best_x, best_r, best_e = x[active], residual[active], err[active]
            pending = np.ones(len(active), dtype=bool)
            for _ in range(6):
                cand = wrap(x[active] - step[:, None] * delta, 1.0)
                r_cand = torus_delta(cand + self._displacement(cand), target[active], 1.0)
                e_cand = np.linalg.norm(r_cand, axis=1)
                take = pending & (e_cand < err[active])
                best_x[take], best_r[take], best_e[take] = cand[take], r_cand[take], e_cand[take]
                pending &= ~take
                if not pending.any():
                    break
                step[pending] *= 0.5
            x[active], residual[active], err[active] = best_x, best_r, best_e

        worst = float(err.max()) if len(err) else 0.0
        if worst > TOLERANCES['homeo_inverse']:
            raise InversionError(
                f"Newton inversion stalled: residual {worst:.3e} after {iterations} iterations",
                {'residual': worst, 'iterations': iterations})
        return x

    @cached_property
    def forward_nodes(self) -> np.ndarray:
        return self.apply(self.grid.points())

    @cached_property
    def inverse_nodes(self) -> np.ndarray:
        return self.apply_inverse(self.grid.points())

    def inverse_displacement(self) -> np.ndarray:
        return torus_delta(self.inverse_nodes, self.grid.points(), 1.0)

    def jacobian_det(self) -> np.ndarray:
        return displacement_jacobian(self.grid, self.disp.reshape(-1, 2)).reshape(self.grid.shape)


@dataclass(eq=False)
class SmoothMap:
    """φ = ψ₂ ∘ ψ₁"""
    psi1: SampledHomeo
    psi2: GlobalMap

    @property
    def grid(self) -> Grid:
        return self.psi1.grid

    def apply(self, x) -> np.ndarray:
        return self.psi2.apply(self.psi1.apply(x))

    def apply_inverse(self, y) -> np.ndarray:
        return self.psi1.apply_inverse(self.psi2.apply_inverse(y))

    @cached_property
    def forward_nodes(self) -> np.ndarray:
        return self.apply(self.grid.points())

    @cached_property
    def inverse_nodes(self) -> np.ndarray:
        return self.apply_inverse(self.grid.points())

    def displacement(self) -> np.ndarray:
        return torus_delta(self.forward_nodes, self.grid.points(), 1.0)

    def jacobian_det(self) -> np.ndarray:
        return displacement_jacobian(self.grid, self.displacement()).reshape(self.grid.shape)

    def as_homeo(self) -> SampledHomeo:
        return SampledHomeo(self.grid, self.displacement(), claimed_area_preserving=True)


@dataclass
class SmoothingReport:
    scale: float
    halvings: int
    dbar_psi1_h: Optional[float]
    dM: float
    box: float
    dM_aggregation_bound: float
    dbar_psi2_id: float
    dbar_phi_psi1: float
    dbar_phi_h: Optional[float]
    det_defect: float
    psi1_det_defect: float
    correction_residual: float
    fd_error: float
    defect_bound: float
    c0_forward: float
    c0_inverse: float
    triangle_ok: Optional[bool]
    defect_ok: bool

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def homeo_distance(a, b) -> float:
    """d̄ between two maps exposing forward_nodes / inverse_nodes on one grid"""
    return dbar(a.forward_nodes, b.forward_nodes, a.inverse_nodes, b.inverse_nodes, 1.0)


def identity_distance(a) -> Tuple[float, float]:
    """(sup|a - id|, sup|a⁻¹ - id|) over the nodes"""
    nodes = a.grid.points()
    forward = np.linalg.norm(torus_delta(a.forward_nodes, nodes, 1.0), axis=1)
    inverse = np.linalg.norm(torus_delta(a.inverse_nodes, nodes, 1.0), axis=1)
    return float(forward.max()), float(inverse.max())


def validate_area_preserving(h: SampledHomeo, tol: Optional[float] = None) -> float:
    """Box discrepancy of h_* (node measure of Ω) against Ω itself"""
    tol = TOLERANCES['area_preserving'] if tol is None else tol
    grid = h.grid
    uniform = atomize(GridDensity(grid, np.ones(grid.shape)))
    value = box_discrepancy(pushforward(uniform, h.apply), uniform, grid)
    h.info['area_box'] = value
    if h.claimed_area_preserving and value > tol:
        raise ValidationError(
            f"Input is not area-preserving: box discrepancy {value:.3g} exceeds {tol:g}",
            {'box_discrepancy': value, 'tolerance': tol})
    logger.debug(f"Area-preservation check: box discrepancy {value:.3g}")
    return value


def _smoothed(h: SampledHomeo, scale: float) -> np.ndarray:
    sigma = scale / h.grid.spacing
    return np.stack([gaussian_filter(h.disp[..., i], sigma, mode='wrap') for i in range(2)], axis=-1)


def mollify(h: SampledHomeo, scale: Optional[float] = None,
            settings: Optional[Dict] = None) -> SampledHomeo:
    """ψ₁: periodic Gaussian convolution of the displacement field.

    This is a surrogate for a genuine smoothing theorem: the scale is halved
    when the result folds, and the surrogate gives up below the configured
    floor."""
    cfg = settings or SMOOTHING
    spacing = h.grid.spacing
    scale = cfg['scale_spacings'] * spacing if scale is None else float(scale)
    floor = cfg['min_scale_spacings'] * spacing
    if scale < floor - 1e-12:
        raise PreconditionError(f"Mollification scale {scale:.4g} is below {cfg['min_scale_spacings']:g} "
                                f"grid spacings ({floor:.4g})", {'scale': scale, 'floor': floor})

    attempts = []
    for halvings in range(cfg['max_halvings'] + 1):
        psi1 = SampledHomeo(h.grid, _smoothed(h, scale), claimed_area_preserving=False)
        det = psi1.jacobian_det()
        attempts.append({'scale': scale, 'min_det': float(det.min())})
        if det.min() > 0:
            psi1.info.update({
                'scale': scale,
                'halvings': halvings,
                'min_det': float(det.min()),
                'dbar_to_source': homeo_distance(psi1, h),
            })
            logger.info(f"Mollified at scale {scale:.4g} ({halvings} halvings): "
                        f"d-bar to input {psi1.info['dbar_to_source']:.4g}")
            return psi1
        if scale / 2.0 < floor - 1e-12:
            break
        logger.warning(f"Mollified map folds at scale {scale:.4g} (min det {det.min():.3g}); halving")
        scale /= 2.0

    raise SurrogateFailureError(
        "Mollification surrogate produced no diffeomorphism at any attempted scale; "
        "the input may still be smoothable, but not by Gaussian convolution at this resolution",
        {'attempts': attempts})


def pullback_density(psi1: SampledHomeo, tolerances: Optional[Dict] = None) -> GridDensity:
    """f = det dψ₁ by periodic centered differences, so that ψ₁*Ω = f Ω"""
    tol = tolerances or TOLERANCES
    det = psi1.jacobian_det()
    if det.min() <= 0:
        raise SurrogateFailureError(f"Smoothed map is not a diffeomorphism: min det {det.min():.3e}",
                                    {'min_det': float(det.min())})
    density = GridDensity(psi1.grid, det)
    total = float(np.sum(det) * psi1.grid.spacing ** 2)
    if abs(total - 1.0) > tol['pullback_mass']:
        logger.warning(f"Pullback density has mass {total:.6g}, expected 1")
    return density


def _fd_error(phi_det: np.ndarray, disp: np.ndarray, grid: Grid) -> float:
    """Jacobian change when the lattice is coarsened by 2 (even resolutions only)"""
    if grid.res % 2:
        return 0.0
    coarse_grid = Grid(dim=2, res=grid.res // 2, topology=grid.topology)
    coarse = disp.reshape(grid.shape + (2,))[::2, ::2]
    coarse_det = displacement_jacobian(coarse_grid, coarse.reshape(-1, 2)).reshape(coarse_grid.shape)
    return float(np.max(np.abs(phi_det[::2, ::2] - coarse_det)))


def area_correct(psi1: SampledHomeo, atlas: TorusAtlas, h: Optional[SampledHomeo] = None,
                 tolerances: Optional[Dict] = None, solver: Optional[Dict] = None,
                 max_atoms: Optional[int] = None) -> Tuple[SmoothMap, SmoothingReport]:
    """φ = ψ₂ ∘ ψ₁ with ψ₂ correcting Ω against (ψ₁⁻¹)*Ω; the target form is always Ω"""
    grid = psi1.grid
    if atlas.grid != grid:
        raise PreconditionError("Atlas grid does not match the map's grid")
    tol = tolerances or TOLERANCES
    f = pullback_density(psi1, tol)
    tau = 1.0 / f(psi1.inverse_nodes).reshape(grid.shape)

    psi2 = global_solve(np.ones(grid.shape), tau, atlas, tolerances=tol, solver=solver)
    phi = SmoothMap(psi1, psi2)
    return phi, smoothing_report(phi, f, h, max_atoms)


def smoothing_report(phi: SmoothMap, f: GridDensity, h: Optional[SampledHomeo] = None,
                     max_atoms: Optional[int] = None) -> SmoothingReport:
    psi1, psi2 = phi.psi1, phi.psi2
    grid = phi.grid
    uniform = GridDensity(grid, np.ones(grid.shape))
    d_m, box, bound = measure_distance(f, uniform, METRIC['b'], max_atoms)

    nodes = grid.points()
    dbar_psi2_id = max(identity_distance_global(psi2, nodes))
    dbar_phi_psi1 = homeo_distance(phi, psi1)
    dbar_psi1_h = homeo_distance(psi1, h) if h is not None else None
    dbar_phi_h = homeo_distance(phi, h) if h is not None else None
    triangle_ok = None
    if h is not None:
        triangle_ok = bool(dbar_phi_h <= dbar_phi_psi1 + dbar_psi1_h + 1e-9)

    det = phi.jacobian_det()
    det_defect = float(np.max(np.abs(det - 1.0)))
    fd_error = _fd_error(det, phi.displacement(), grid)
    correction = float(psi2.diagnostics.get('pullback_residual', 0.0))
    defect_bound = correction * f.max + 3.0 * fd_error
    c0_forward, c0_inverse = identity_distance(phi)
    report = SmoothingReport(
        scale=float(psi1.info.get('scale', 0.0)),
        halvings=int(psi1.info.get('halvings', 0)),
        dbar_psi1_h=dbar_psi1_h,
        dM=d_m,
        box=box,
        dM_aggregation_bound=bound,
        dbar_psi2_id=dbar_psi2_id,
        dbar_phi_psi1=dbar_phi_psi1,
        dbar_phi_h=dbar_phi_h,
        det_defect=det_defect,
        psi1_det_defect=float(np.max(np.abs(f.values - 1.0))),
        correction_residual=correction,
        fd_error=fd_error,
        defect_bound=defect_bound,
        c0_forward=c0_forward,
        c0_inverse=c0_inverse,
        triangle_ok=triangle_ok,
        defect_ok=bool(det_defect <= defect_bound + 1e-9),
    )
    if not report.defect_ok:
        logger.warning(f"Area defect {det_defect:.3g} exceeds its estimate {defect_bound:.3g}")
    logger.info(f"Smoothing: |det dphi - 1|={det_defect:.3g}, d_M={d_m:.3g}, "
                f"d-bar(psi2, id)={dbar_psi2_id:.3g}")
    return report


def identity_distance_global(gmap: GlobalMap, nodes: np.ndarray) -> Tuple[float, float]:
    forward = np.linalg.norm(torus_delta(gmap.apply(nodes), nodes, 1.0), axis=1)
    inverse = np.linalg.norm(torus_delta(gmap.apply_inverse(nodes), nodes, 1.0), axis=1)
    return float(forward.max()), float(inverse.max())


def smooth(h: SampledHomeo, scale: Optional[float] = None, atlas: Optional[TorusAtlas] = None,
           tolerances: Optional[Dict] = None, settings: Optional[Dict] = None,
           solver: Optional[Dict] = None) -> Tuple[SmoothMap, SmoothingReport]:
    """Validate, mollify, then correct the area"""
    tol = tolerances or TOLERANCES
    atlas = atlas or build_torus_atlas(2, res=h.grid.res)
    validate_area_preserving(h, tol['area_preserving'])
    psi1 = mollify(h, scale, settings)
    return area_correct(psi1, atlas, h, tol, solver)


@dataclass(eq=False)
class SmoothIsotopy:
    parameters: List[float]
    maps: List[SmoothMap]
    reports: List[SmoothingReport]
    diagnostics: Dict[str, Any] = field(default_factory=dict)


def _shared_mollification(members: Sequence[SampledHomeo], scale: Optional[float],
                          cfg: Dict) -> List[SampledHomeo]:
    """Mollify every member at one scale, the smallest any member needed"""
    current = scale
    for _ in range(cfg['max_halvings'] + 2):
        smoothed = [mollify(h, current, cfg) for h in members]
        scales = [p.info['scale'] for p in smoothed]
        if all(s == scales[0] for s in scales):
            return smoothed
        current = min(scales)
        logger.info(f"Isotopy members disagree on scale; retrying all at {current:.4g}")
    raise SurrogateFailureError("No shared mollification scale found for the isotopy",
                                {'scales': scales})


def smooth_isotopy(members: Sequence[SampledHomeo], scale: Optional[float] = None,
                   atlas: Optional[TorusAtlas] = None, parameters: Optional[Sequence[float]] = None,
                   threads: int = 1, tolerances: Optional[Dict] = None,
                   settings: Optional[Dict] = None, solver: Optional[Dict] = None) -> SmoothIsotopy:
    """Smooth isotopy φ_t from a sampled isotopy h_t with h_0 = id"""
    cfg = settings or SMOOTHING
    tol = tolerances or TOLERANCES
    if len(members) < 2:
        raise PreconditionError("An isotopy needs at least two members")
    grid = members[0].grid
    if any(m.grid != grid for m in members):
        raise PreconditionError("Isotopy members must share one grid")
    if np.max(np.abs(members[0].disp)) > 1e-12:
        raise PreconditionError("The isotopy must start at the identity")
    params = [float(t) for t in (parameters if parameters is not None
                                 else np.linspace(0.0, 1.0, len(members)))]
    if len(params) != len(members):
        raise PreconditionError(f"{len(params)} parameters for {len(members)} members")
    atlas = atlas or build_torus_atlas(2, res=grid.res)

    for h in members:
        validate_area_preserving(h, tol['area_preserving'])
    input_steps = [homeo_distance(a, b) for a, b in zip(members, members[1:])]
    for i, step in enumerate(input_steps):
        if step > cfg['isotopy_step']:
            raise PartitionRefinementError(
                f"Members t={params[i]:g} and t={params[i + 1]:g} are {step:.3g} apart in d-bar "
                f"(step bound {cfg['isotopy_step']:g}); sample the isotopy more finely",
                {'interval': [params[i], params[i + 1]], 'dbar_step': step})

    smoothed = _shared_mollification(members, scale, cfg)
    densities = [pullback_density(p, tol) for p in smoothed]
    taus = {t: 1.0 / f(p.inverse_nodes).reshape(grid.shape)
            for t, f, p in zip(params, densities, smoothed)}

    family = parametric_solve(np.ones(grid.shape), taus, atlas, partition=params, threads=threads,
                              tolerances=tol, settings=cfg, solver=solver)
    corrections = list(family.maps)
    # φ_0 = id exactly
    start = SampledHomeo.identity(grid)
    start.info.update(smoothed[0].info)
    smoothed[0] = start
    corrections[0] = GlobalMap(atlas=atlas, edges=[], lam=1.0, diagnostics={'pullback_residual': 0.0})

    maps = [SmoothMap(p, c) for p, c in zip(smoothed, corrections)]
    reports = [smoothing_report(phi, f, h) for phi, f, h in zip(maps, densities, members)]
    output_steps = [homeo_distance(a, b) for a, b in zip(maps, maps[1:])]
    allowance = cfg['continuity_factor'] * max(input_steps)
    result = SmoothIsotopy(params, maps, reports)
    result.diagnostics = {
        'members': len(maps),
        'scale': smoothed[-1].info.get('scale'),
        'input_steps': input_steps,
        'output_steps': output_steps,
        'max_output_step': max(output_steps),
        'continuity_allowance': allowance,
        'continuity_ok': bool(max(output_steps) <= allowance + 1e-9),
        'parametric': family.diagnostics,
    }
    if not result.diagnostics['continuity_ok']:
        logger.warning(f"Isotopy continuity: max step {max(output_steps):.3g} exceeds {allowance:.3g}")
    return result
