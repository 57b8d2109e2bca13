# data/loader.py
"""Chargement et écriture des fichiers : densités, mesures, solutions, atlas, rapports"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np
import pandas as pd

from models.cutoffs import CutoffFamily, build_cutoffs
from models.dm_solver import Layer, TriangularSolution
from models.grid import CUBE, Grid, GridDensity
from models.manifold import GlobalMap, TorusAtlas, build_torus_atlas
from models.smoothing import SampledHomeo
from models.weak_metric import EUCLIDEAN, AtomicMeasure
from utils.errors import PreconditionError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
DTYPE = '<f8'


def _jsonable(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def write_json(data: Dict[str, Any], path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as handle:
        json.dump(data, handle, indent=2, sort_keys=True, default=_jsonable)
    return path


def read_json(path: PathLike) -> Dict[str, Any]:
    try:
        with open(path, encoding='utf-8') as handle:
            return json.load(handle)
    except FileNotFoundError:
        raise PreconditionError(f"File not found: {path}")
    except json.JSONDecodeError as e:
        raise PreconditionError(f"{path} is not valid JSON: {e}")


def _write_array(values: np.ndarray, path: Path):
    np.ascontiguousarray(values, dtype=DTYPE).tofile(path)


def _read_array(path: Path, shape) -> np.ndarray:
    try:
        raw = np.fromfile(path, dtype=DTYPE)
    except FileNotFoundError:
        raise PreconditionError(f"Binary file not found: {path}")
    expected = int(np.prod(shape))
    if raw.size != expected:
        raise PreconditionError(f"{path} holds {raw.size} values, expected {expected}",
                                {'file': str(path), 'size': int(raw.size), 'expected': expected})
    return raw.reshape(shape).astype(np.float64)


def _grid_dict(grid: Grid) -> Dict[str, Any]:
    return {'dim': grid.dim, 'side': grid.side, 'res': grid.res, 'topology': grid.topology}


def _grid_from(data: Dict[str, Any]) -> Grid:
    try:
        return Grid(dim=int(data['dim']), side=float(data.get('side', 1.0)), res=int(data['res']),
                    topology=data.get('topology', CUBE))
    except KeyError as e:
        raise PreconditionError(f"Grid manifest is missing {e}")


# Champs sur grille: manifeste JSON {dim, side, res, topology, data} + valeurs brutes
# float64 little-endian (dernier axe le plus rapide, composantes en dernier)

def write_field(values: np.ndarray, grid: Grid, path: PathLike,
                extra: Optional[Dict[str, Any]] = None) -> Path:
    path = Path(path)
    binary = path.with_suffix('.bin')
    values = np.asarray(values, dtype=np.float64)
    manifest = {**_grid_dict(grid), 'data': binary.name}
    if values.shape != grid.shape:
        manifest['components'] = int(values.size // int(np.prod(grid.shape)))
    manifest.update(extra or {})
    write_json(manifest, path)
    _write_array(values, binary)
    return path


def read_field(path: PathLike) -> Tuple[Grid, np.ndarray, Dict[str, Any]]:
    path = Path(path)
    manifest = read_json(path)
    if 'data' not in manifest:
        raise PreconditionError(f"{path} is not a grid field manifest (no 'data' entry)")
    grid = _grid_from(manifest)
    components = int(manifest.get('components', 1))
    shape = grid.shape + ((components,) if 'components' in manifest else ())
    values = _read_array(path.parent / manifest['data'], shape)
    return grid, values, manifest


def write_density(density: GridDensity, path: PathLike) -> Path:
    return write_field(density.values, density.grid, path)


def read_density(path: PathLike) -> GridDensity:
    grid, values, _ = read_field(path)
    if values.shape != grid.shape:
        raise PreconditionError(f"{path} holds a vector field, not a density")
    logger.debug(f"Loaded density {path} on a {grid.topology} grid of res {grid.res}")
    return GridDensity(grid, values)


# Mesures atomiques: CSV x1..xn, weight

def write_measure(measure: AtomicMeasure, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df = pd.DataFrame(measure.points, columns=[f"x{i + 1}" for i in range(measure.dim)])
    df['weight'] = measure.weights
    df.to_csv(path, index=False, float_format='%.17g')
    return path


def read_measure(path: PathLike, side: float = 1.0, metric: str = EUCLIDEAN) -> AtomicMeasure:
    try:
        df = pd.read_csv(path, float_precision='round_trip')
    except FileNotFoundError:
        raise PreconditionError(f"Measure file not found: {path}")
    coords = [c for c in df.columns if c.startswith('x')]
    if 'weight' not in df.columns or not coords:
        raise PreconditionError(f"{path} needs columns x1..xn and weight")
    df = df.apply(pd.to_numeric, errors='coerce')
    if df.isna().any().any():
        raise PreconditionError(f"{path} has non-numeric entries")
    return AtomicMeasure(df[sorted(coords)].to_numpy(), df['weight'].to_numpy(), side, metric)


# Solutions triangulaires: un répertoire par solution, manifeste {n, K, res, eta, diagnostics}
# et un champ par couche au format des densités

def write_solution(sol: TriangularSolution, directory: PathLike) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    grid = sol.grid
    layers = []
    for layer in sol.layers:
        layer_grid = Grid(dim=grid.dim - layer.s + 1, side=grid.side, res=grid.res, topology=grid.topology)
        u_file = write_field(layer.u, layer_grid, directory / f"layer_{layer.s}_u.json").name
        du_file = write_field(layer.du, layer_grid, directory / f"layer_{layer.s}_du.json").name
        layers.append({'s': layer.s, 'u': u_file, 'du': du_file, 'info': layer.info})
    manifest = {
        'n': grid.dim,
        'K': grid.side,
        'res': grid.res,
        'eta': sol.cutoffs.eta,
        'diagnostics': sol.diagnostics,
        'cutoffs': sol.cutoffs.to_dict(),
        'layers': layers,
    }
    write_json(manifest, directory / 'manifest.json')
    return directory


def read_solution(directory: PathLike) -> TriangularSolution:
    directory = Path(directory)
    manifest = read_json(directory / 'manifest.json')
    missing = [key for key in ('n', 'K', 'res', 'eta', 'layers') if key not in manifest]
    if missing:
        raise PreconditionError(f"{directory} does not hold a triangular solution (missing {missing})")
    grid = Grid(dim=int(manifest['n']), side=float(manifest['K']), res=int(manifest['res']), topology=CUBE)
    if 'cutoffs' in manifest:
        cutoffs = CutoffFamily.from_dict(manifest['cutoffs'])
    elif float(manifest['eta']) == 0.0:
        cutoffs = CutoffFamily.identity(grid.dim, grid.side)
    else:
        cutoffs = build_cutoffs(grid.dim, float(manifest['eta']), side=grid.side)
    layers = []
    for entry in manifest['layers']:
        _, u, _ = read_field(directory / entry['u'])
        _, du, _ = read_field(directory / entry['du'])
        layers.append(Layer(s=int(entry['s']), u=u, du=du, grid=grid, info=entry.get('info', {})))
    return TriangularSolution(grid=grid, cutoffs=cutoffs, layers=layers, intermediates={},
                              diagnostics=manifest.get('diagnostics', {}))


# Atlas du tore

def write_atlas(atlas: TorusAtlas, path: PathLike) -> Path:
    return write_json({'kind': 'torus_atlas', **atlas.to_dict()}, path)


def read_atlas(path: PathLike) -> TorusAtlas:
    data = read_json(path)
    if data.get('kind') != 'torus_atlas':
        raise PreconditionError(f"{path} is not an atlas file")
    return build_torus_atlas(int(data['n']), int(data['charts_per_axis']), int(data['res']),
                             float(data['chart_side']) * int(data['charts_per_axis']),
                             float(data['eta']))


# Applications globales: déplacements direct et inverse sur la grille du tore

def write_global_map(gmap: GlobalMap, directory: PathLike) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    grid = gmap.grid
    shape = grid.shape + (grid.dim,)
    extra = {'lambda': gmap.lam}
    write_field(gmap.displacement().reshape(shape), grid, directory / 'displacement.json', extra)
    write_field(gmap.inverse_displacement().reshape(shape), grid, directory / 'inverse_displacement.json', extra)
    return directory


def read_displacement(path: PathLike) -> Tuple[Grid, np.ndarray]:
    grid, values, _ = read_field(path)
    if values.shape != grid.shape + (grid.dim,):
        raise PreconditionError(f"{path} does not hold a {grid.dim}-component displacement")
    return grid, values


# Homéomorphismes échantillonnés: champ de déplacement à 2 composantes

def write_homeo(h: SampledHomeo, path: PathLike) -> Path:
    return write_field(h.disp, h.grid, path, {'claimed_area_preserving': h.claimed_area_preserving})


def read_homeo(path: PathLike, claimed_area_preserving: Optional[bool] = None) -> SampledHomeo:
    grid, disp, manifest = read_field(path)
    if disp.shape != grid.shape + (2,):
        raise PreconditionError(f"{path} is not a planar displacement field")
    claimed = manifest.get('claimed_area_preserving', True)
    if claimed_area_preserving is not None:
        claimed = claimed_area_preserving
    return SampledHomeo(grid, disp, claimed_area_preserving=bool(claimed))


def write_report(report: Dict[str, Any], path: PathLike) -> Path:
    return write_json(report, path)
