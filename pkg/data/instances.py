# data/instances.py
"""Génération d'instances de démonstration et de test"""

import logging
from typing import Callable, Dict, List, Tuple

import numpy as np

from models.grid import CUBE, TORUS, Grid, GridDensity, mass
from models.smoothing import SampledHomeo
from utils.errors import PreconditionError

logger = logging.getLogger(__name__)


def interior_bump(t: np.ndarray, lo: float = 0.2, hi: float = 0.8) -> np.ndarray:
    """sin² bump supported in [lo, hi]"""
    t = np.asarray(t, dtype=np.float64)
    inside = (t > lo) & (t < hi)
    return np.where(inside, np.sin(np.pi * (t - lo) / (hi - lo)) ** 2, 0.0)


def bump_instance(res: int = 65, n: int = 2, amplitude: float = 0.2) -> Tuple[GridDensity, GridDensity]:
    """(f, g) on the unit cube with g ≡ 1 and
    f = 1 + amplitude·β(x_1)···β(x_{n-1})·β(x_n)·sin(2πx_n)"""
    grid = Grid(dim=n, side=1.0, res=res, topology=CUBE)
    mesh = grid.mesh()
    profile = interior_bump(mesh[-1]) * np.sin(2.0 * np.pi * mesh[-1])
    for axis in range(n - 1):
        profile = profile * interior_bump(mesh[axis])
    g = GridDensity(grid, np.ones(grid.shape))
    f = GridDensity(grid, 1.0 + amplitude * profile).normalized(mass(g))
    return f, g


def blend(f: GridDensity, g: GridDensity, eps: float) -> GridDensity:
    """f_ε = (1 - ε)g + εf rescaled to the mass of g"""
    if not 0.0 <= eps <= 1.0:
        raise PreconditionError(f"eps must lie in [0, 1], got {eps}")
    if eps == 0.0:
        return g
    return GridDensity(g.grid, (1.0 - eps) * g.values + eps * f.values).normalized(mass(g))


def eps_family(f: GridDensity, g: GridDensity, eps_values) -> Dict[float, GridDensity]:
    return {float(eps): blend(f, g, float(eps)) for eps in eps_values}


def torus_density(res: int = 64, amplitude: float = 0.1, n: int = 2) -> GridDensity:
    """1 + amplitude·Π sin(2πx_i), normalized on the unit torus"""
    grid = Grid(dim=n, side=1.0, res=res, topology=TORUS)
    wave = np.ones(grid.shape)
    for coord in grid.mesh():
        wave = wave * np.sin(2.0 * np.pi * coord)
    return GridDensity(grid, 1.0 + amplitude * wave).normalized()


def linear_torus_family(res: int = 64, amplitude: float = 0.1,
                        n: int = 2) -> Callable[[float], GridDensity]:
    """s -> 1 + s·amplitude·Π sin(2πx_i)"""
    def member(s: float) -> GridDensity:
        return torus_density(res, s * amplitude, n)
    return member


# --- test homeomorphisms ---------------------------------------------------------

def hamiltonian_flow(points: np.ndarray, amplitude: float, time: float = 1.0,
                     steps: int = 16) -> np.ndarray:
    """Leapfrog flow of H = (a/2π)(cos 2πx + cos 2πy): ẋ = -a sin 2πy, ẏ = a sin 2πx.

    Every substep is a composition of shears, so the discrete map is exactly
    area-preserving."""
    x = np.array(points[:, 0], dtype=np.float64)
    y = np.array(points[:, 1], dtype=np.float64)
    dt = time / steps
    for _ in range(steps):
        x = x - 0.5 * dt * amplitude * np.sin(2.0 * np.pi * y)
        y = y + dt * amplitude * np.sin(2.0 * np.pi * x)
        x = x - 0.5 * dt * amplitude * np.sin(2.0 * np.pi * y)
    return np.mod(np.stack([x, y], axis=-1), 1.0)


def triangle_wave(t: np.ndarray, amplitude: float, frequency: int = 2) -> np.ndarray:
    """Periodic piecewise-linear profile with peak `amplitude` and kinks at multiples of 1/(2·frequency)"""
    phase = np.mod(frequency * np.asarray(t, dtype=np.float64), 1.0)
    return amplitude * (1.0 - 2.0 * np.abs(phase - 0.5))


def shear(points: np.ndarray, amplitude: float, frequency: int = 2) -> np.ndarray:
    """x_1 += p(x_2) with p a triangle wave: Lipschitz, area-preserving, not smooth"""
    out = np.array(points, dtype=np.float64)
    out[:, 0] = out[:, 0] + triangle_wave(out[:, 1], amplitude, frequency)
    return np.mod(out, 1.0)


def hamiltonian_homeo(res: int = 128, amplitude: float = 0.05, time: float = 1.0,
                      steps: int = 16) -> SampledHomeo:
    grid = Grid(dim=2, res=res, topology=TORUS)
    return SampledHomeo.from_map(grid, lambda p: hamiltonian_flow(p, amplitude, time, steps))


def shear_homeo(res: int = 128, amplitude: float = 0.02, frequency: int = 2) -> SampledHomeo:
    grid = Grid(dim=2, res=res, topology=TORUS)
    return SampledHomeo.from_map(grid, lambda p: shear(p, amplitude, frequency))


def sheared_hamiltonian(res: int = 128, amplitude: float = 0.05, shear_amplitude: float = 0.02,
                        time: float = 1.0, frequency: int = 2, steps: int = 16) -> SampledHomeo:
    """Shear ∘ Hamiltonian time-`time` map"""
    grid = Grid(dim=2, res=res, topology=TORUS)

    def composite(p: np.ndarray) -> np.ndarray:
        return shear(hamiltonian_flow(p, amplitude, time, steps), shear_amplitude, frequency)

    return SampledHomeo.from_map(grid, composite)


def translation(res: int, offset) -> SampledHomeo:
    grid = Grid(dim=2, res=res, topology=TORUS)
    shift = np.asarray(offset, dtype=np.float64).reshape(1, 2)
    return SampledHomeo.from_map(grid, lambda p: np.mod(p + shift, 1.0))


def translation_isotopy(res: int = 64, speed: float = 0.05, members: int = 6) -> List[SampledHomeo]:
    """h_t = translation by (t·speed, 0)"""
    return [translation(res, (t * speed, 0.0)) for t in np.linspace(0.0, 1.0, members)]


def hamiltonian_isotopy(res: int = 64, amplitude: float = 0.05, shear_amplitude: float = 0.02,
                        members: int = 6, steps: int = 16) -> List[SampledHomeo]:
    """h_t = shear_{t} ∘ flow_t, starting at the identity"""
    out = []
    for t in np.linspace(0.0, 1.0, members):
        out.append(sheared_hamiltonian(res, amplitude, t * shear_amplitude, float(t), steps=steps))
    logger.debug(f"Built {members}-member Hamiltonian isotopy at res {res}")
    return out
