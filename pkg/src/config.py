"""
Configuration

Default parameter tables, .env handling and the validating loader for
experiment configs (JSON). Everything is built and checked at load time so
a malformed config fails before any computation starts.
"""

import copy
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
from dotenv import load_dotenv

from .convex_analysis import Potential
from .discrete_spaces import Field, Grid, get_laplacian
from .errors import ConfigError, ParamError, PotentialError, SviLabError
from .measures import DEFAULT_CHART_HEIGHT, RadonMeasure, approx_sequence, bump
from .noise import Multiplier, NoiseModel
from .spde_solver import Scheme, SolverConfig
from .svi_verifier import TestProcessKind

load_dotenv()

logger = logging.getLogger(__name__)

OUTPUT_ROOT_ENV = 'SVI_LAB_OUTPUT_ROOT'
DEFAULT_OUTPUT_ROOT = 'results'

GRID_DEFAULTS = {
    'a': 0.0,
    'b': 1.0,
    'cells': 64,
}

SOLVER_DEFAULTS = {
    'eps': 0.1,
    'dt': 0.01,
    't_end': 1.0,
    'scheme': Scheme.IMPLICIT_MONOTONE.value,
    'newton_tol': 1e-10,
    'newton_max_iter': 200,
    'paths': 1,
    'snapshot_every': None,
    'gronwall_K': None,
}

NOISE_DEFAULTS = {
    'modes': 16,
    'weights': [],
    'multiplier': Multiplier.ADDITIVE.value,
    'gain': 0.0,
    'cap': 1.0,
    'seed': 0,
}

MEASURE_DEFAULTS = {
    'density': 0.0,
    'atoms': [],
    'approx_n': 64,
    'chart_height': DEFAULT_CHART_HEIGHT,
}

SVI_DEFAULTS = {
    'C': None,
    'slack': True,
    'n_sigma': 2.0,
    'identical': False,
    'test_processes': [],
}

SOC_DEFAULTS = {
    'threshold': 1.0,
}

STABILITY_DEFAULTS = {
    'checks': ['regularity', 'eps_rate', 'gronwall'],
    'regularity_eps': [0.1, 0.05, 0.025],
    'eps_ladder': [0.2, 0.1, 0.05],
    'replicates': 3,
    'y0': {'kind': 'zero'},
}

OUTPUT_DEFAULTS = {
    'save_paths': 4,
}

INITIAL_KINDS = ('zero', 'sine', 'bump', 'measure')
STABILITY_CHECKS = ('regularity', 'eps_rate', 'gronwall')


def output_root() -> Path:
    """Output root from SVI_LAB_OUTPUT_ROOT (default results/)"""
    return Path(os.getenv(OUTPUT_ROOT_ENV, DEFAULT_OUTPUT_ROOT))


@dataclass
class TestProcessSpec:
    """Parsed test-process block"""

    __test__ = False

    kind: TestProcessKind
    z0: Field
    g: Optional[Field] = None
    inner_eps: Optional[float] = None


@dataclass
class ExperimentConfig:
    """Validated experiment: domain objects plus the merged raw record"""

    name: str
    path: Optional[Path]
    grid: Grid
    potential: Potential
    solver: SolverConfig
    x0: Field
    test_processes: List[TestProcessSpec] = field(default_factory=list)
    svi: Dict[str, Any] = field(default_factory=dict)
    soc: Dict[str, Any] = field(default_factory=dict)
    stability: Dict[str, Any] = field(default_factory=dict)
    y0: Optional[Field] = None
    output: Dict[str, Any] = field(default_factory=dict)
    record: Dict[str, Any] = field(default_factory=dict)

    @property
    def seed(self) -> int:
        return self.solver.noise.seed


def _merge(defaults: Dict[str, Any], block: Any, key: str) -> Dict[str, Any]:
    if block is None:
        block = {}
    if not isinstance(block, dict):
        raise ConfigError(f"'{key}' must be an object, got {type(block).__name__}")
    unknown = set(block) - set(defaults)
    if unknown:
        raise ConfigError(f"Unknown keys in '{key}': {', '.join(sorted(unknown))}")
    merged = copy.deepcopy(defaults)
    merged.update(block)
    return merged


def _number(block: Dict[str, Any], key: str, where: str, integer: bool = False):
    value = block[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"'{where}.{key}' must be a number, got {value!r}")
    if integer:
        if int(value) != value:
            raise ConfigError(f"'{where}.{key}' must be an integer, got {value!r}")
        return int(value)
    return float(value)


def _flag(block: Dict[str, Any], key: str, where: str) -> bool:
    value = block[key]
    if not isinstance(value, bool):
        raise ConfigError(f"'{where}.{key}' must be true or false, got {value!r}")
    return value


def _eps_list(block: Dict[str, Any], key: str, where: str) -> List[float]:
    values = block[key]
    if not isinstance(values, list) or not values:
        raise ConfigError(f"'{where}.{key}' must be a non-empty list")
    out = [_number({key: v}, key, where) for v in values]
    if min(out) <= 0:
        raise ConfigError(f"'{where}.{key}' must hold positive values")
    return out


def build_stability(block: Optional[Dict[str, Any]]) -> Dict[str, Any]:
    """Stability block: which checks run, the eps ladders, replicates and y0"""
    merged = _merge(STABILITY_DEFAULTS, block, 'stability')
    checks = merged['checks']
    if not isinstance(checks, list) or not checks or not set(checks) <= set(STABILITY_CHECKS):
        raise ConfigError(f"'stability.checks' must be a non-empty subset of {STABILITY_CHECKS}")
    merged['regularity_eps'] = _eps_list(merged, 'regularity_eps', 'stability')
    merged['eps_ladder'] = _eps_list(merged, 'eps_ladder', 'stability')
    merged['replicates'] = _number(merged, 'replicates', 'stability', integer=True)
    if merged['replicates'] < 1:
        raise ConfigError("'stability.replicates' must be >= 1")
    return merged


def build_grid(block: Optional[Dict[str, Any]]) -> Grid:
    merged = _merge(GRID_DEFAULTS, block, 'grid')
    try:
        return Grid(_number(merged, 'a', 'grid'), _number(merged, 'b', 'grid'),
                    _number(merged, 'cells', 'grid', integer=True))
    except ParamError as e:
        raise ConfigError(f"'grid': {e}") from e


def build_potential(spec: Union[str, Dict[str, Any]], base_dir: Optional[Path] = None) -> Potential:
    """
    Potential from a builtin name, an inline record or a path to a JSON record

    Raises:
        PotentialError: unknown name or malformed record
        ConfigError: unreadable record file
    """
    if isinstance(spec, dict):
        return Potential.from_record(spec)
    if not isinstance(spec, str):
        raise ConfigError(f"'potential' must be a name or a record, got {spec!r}")
    if spec.lower().endswith('.json'):
        path = Path(spec)
        if not path.is_absolute() and base_dir is not None and not path.exists():
            path = base_dir / path
        try:
            with open(path, 'r', encoding='utf-8') as f:
                return Potential.from_record(json.load(f))
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"Cannot read potential record {spec}: {e}") from e
    return Potential.builtin(spec)


def build_noise(block: Optional[Dict[str, Any]]) -> NoiseModel:
    merged = _merge(NOISE_DEFAULTS, block, 'noise')
    try:
        multiplier = Multiplier(merged['multiplier'])
    except ValueError as e:
        raise ConfigError(f"'noise.multiplier': unknown value {merged['multiplier']!r}") from e
    weights = merged['weights']
    if not isinstance(weights, list):
        raise ConfigError("'noise.weights' must be a list")
    return NoiseModel(
        modes=_number(merged, 'modes', 'noise', integer=True),
        weights=tuple(float(w) for w in weights),
        multiplier=multiplier,
        gain=_number(merged, 'gain', 'noise'),
        cap=_number(merged, 'cap', 'noise'),
        seed=_number(merged, 'seed', 'noise', integer=True),
    )


def build_solver_config(block: Optional[Dict[str, Any]], grid: Grid, potential: Potential,
                        noise: NoiseModel, threads: int = 1) -> SolverConfig:
    merged = _merge(SOLVER_DEFAULTS, block, 'solver')
    try:
        scheme = Scheme(merged['scheme'])
    except ValueError as e:
        raise ConfigError(f"'solver.scheme': unknown value {merged['scheme']!r}") from e
    snapshot_every = merged['snapshot_every']
    gronwall_K = merged['gronwall_K']
    return SolverConfig(
        eps=_number(merged, 'eps', 'solver'),
        dt=_number(merged, 'dt', 'solver'),
        t_end=_number(merged, 't_end', 'solver'),
        grid=grid,
        potential=potential,
        noise=noise,
        scheme=scheme,
        newton_tol=_number(merged, 'newton_tol', 'solver'),
        newton_max_iter=_number(merged, 'newton_max_iter', 'solver', integer=True),
        paths=_number(merged, 'paths', 'solver', integer=True),
        snapshot_every=None if snapshot_every is None else _number(
            merged, 'snapshot_every', 'solver', integer=True),
        gronwall_K=None if gronwall_K is None else _number(merged, 'gronwall_K', 'solver'),
        threads=threads,
    )


def build_initial_field(block: Optional[Dict[str, Any]], grid: Grid, key: str = 'initial') -> Field:
    """
    Field from an initial-condition block

    Kinds:
        zero
        sine: amplitude * sin(mode * pi * (x - a) / L)
        bump: amplitude * exp(-1/(1 - s^2)) with s = (x - center) / width
        measure: approx_sequence of density + atoms at level approx_n
        apply_laplacian (any kind): replace the field by its discrete Laplacian
    """
    block = dict(block or {'kind': 'zero'})
    kind = block.pop('kind', 'zero')
    apply_laplacian = bool(block.pop('apply_laplacian', False))
    x = (grid.nodes - grid.a) / grid.length

    try:
        if kind == 'zero':
            _merge({}, block, key)
            values = np.zeros(grid.n_nodes)
        elif kind == 'sine':
            merged = _merge({'amplitude': 1.0, 'mode': 1}, block, key)
            amplitude = _number(merged, 'amplitude', key)
            mode = _number(merged, 'mode', key, integer=True)
            values = amplitude * np.sin(mode * np.pi * x)
        elif kind == 'bump':
            merged = _merge({'amplitude': 1.0, 'center': 0.5, 'width': 0.25}, block, key)
            width = _number(merged, 'width', key)
            if width <= 0:
                raise ConfigError(f"'{key}.width' must be positive")
            s = (grid.nodes - _number(merged, 'center', key)) / width
            values = _number(merged, 'amplitude', key) * bump(s)
        elif kind == 'measure':
            merged = _merge(MEASURE_DEFAULTS, block, key)
            atoms = [(float(loc), float(mass)) for loc, mass in merged['atoms']]
            mu = RadonMeasure(grid, _number(merged, 'density', key), atoms)
            values = approx_sequence(mu, _number(merged, 'approx_n', key, integer=True),
                                     _number(merged, 'chart_height', key)).values
        else:
            raise ConfigError(f"'{key}.kind' must be one of {INITIAL_KINDS}, got {kind!r}")
    except (ParamError, TypeError, ValueError) as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"'{key}': {e}") from e

    if apply_laplacian:
        values = get_laplacian(grid).apply_values(np.asarray(values, dtype=float))
    return Field(grid, values)


def _build_test_processes(blocks: Any, grid: Grid) -> List[TestProcessSpec]:
    if not isinstance(blocks, list):
        raise ConfigError("'svi.test_processes' must be a list")
    specs = []
    for i, block in enumerate(blocks):
        where = f"svi.test_processes[{i}]"
        if not isinstance(block, dict):
            raise ConfigError(f"'{where}' must be an object")
        try:
            kind = TestProcessKind(block.get('kind'))
        except ValueError as e:
            raise ConfigError(f"'{where}.kind': unknown value {block.get('kind')!r}") from e
        unknown = set(block) - {'kind', 'z0', 'g', 'inner_eps'}
        if unknown:
            raise ConfigError(f"Unknown keys in '{where}': {', '.join(sorted(unknown))}")
        z0 = build_initial_field(block.get('z0'), grid, f"{where}.z0")
        g = None
        inner_eps = None
        if kind == TestProcessKind.CONSTANT_G:
            if 'g' not in block:
                raise ConfigError(f"'{where}.g' is required for constant_g")
            g = build_initial_field(block['g'], grid, f"{where}.g")
        if kind == TestProcessKind.REGULARIZED_SOLUTION:
            if 'inner_eps' not in block:
                raise ConfigError(f"'{where}.inner_eps' is required for regularized_solution")
            inner_eps = _number(block, 'inner_eps', where)
            if inner_eps <= 0:
                raise ConfigError(f"'{where}.inner_eps' must be positive")
        specs.append(TestProcessSpec(kind, z0, g, inner_eps))
    return specs


def parse_experiment(record: Dict[str, Any], path: Optional[Path] = None,
                     threads: int = 1) -> ExperimentConfig:
    """
    Validate a config record and build every domain object

    Raises:
        ConfigError: any malformed block (PotentialError for the potential)
    """
    if not isinstance(record, dict):
        raise ConfigError("Config root must be an object")
    known = {'name', 'grid', 'potential', 'solver', 'noise', 'initial', 'svi', 'soc', 'stability',
             'output'}
    unknown = set(record) - known
    if unknown:
        raise ConfigError(f"Unknown top-level keys: {', '.join(sorted(unknown))}")

    base_dir = path.parent if path is not None else None
    name = str(record.get('name') or (path.stem if path is not None else 'experiment'))
    grid = build_grid(record.get('grid'))
    potential = build_potential(record.get('potential', 'psi1'), base_dir)
    noise = build_noise(record.get('noise'))
    solver = build_solver_config(record.get('solver'), grid, potential, noise, threads)
    x0 = build_initial_field(record.get('initial'), grid)

    svi = _merge(SVI_DEFAULTS, record.get('svi'), 'svi')
    if svi['C'] is not None:
        svi['C'] = _number(svi, 'C', 'svi')
        if svi['C'] < 0:
            raise ConfigError("'svi.C' must be nonnegative")
    svi['n_sigma'] = _number(svi, 'n_sigma', 'svi')
    svi['slack'] = _flag(svi, 'slack', 'svi')
    svi['identical'] = _flag(svi, 'identical', 'svi')
    tests = _build_test_processes(svi['test_processes'], grid)

    soc = _merge(SOC_DEFAULTS, record.get('soc'), 'soc')
    soc['threshold'] = _number(soc, 'threshold', 'soc')
    stability = build_stability(record.get('stability'))
    y0 = build_initial_field(stability['y0'], grid, 'stability.y0')
    output = _merge(OUTPUT_DEFAULTS, record.get('output'), 'output')
    output['save_paths'] = _number(output, 'save_paths', 'output', integer=True)

    merged_record = {
        'name': name,
        'grid': grid.to_record(),
        'potential': potential.to_record(),
        'solver': solver.to_record(),
        'initial': record.get('initial', {'kind': 'zero'}),
        'svi': {k: v for k, v in svi.items()},
        'soc': soc,
        'stability': stability,
        'output': output,
    }
    return ExperimentConfig(name=name, path=path, grid=grid, potential=potential, solver=solver,
                            x0=x0, test_processes=tests, svi=svi, soc=soc, stability=stability,
                            y0=y0, output=output, record=merged_record)


def load_experiment_config(path: Union[str, Path], threads: int = 1) -> ExperimentConfig:
    """
    Read and validate a JSON experiment config

    Args:
        path: Config file
        threads: Worker threads for path-level parallelism (0 = auto)

    Returns:
        ExperimentConfig

    Raises:
        ConfigError: unreadable file or invalid content
    """
    path = Path(path)
    try:
        with open(path, 'r', encoding='utf-8') as f:
            record = json.load(f)
    except OSError as e:
        raise ConfigError(f"Cannot read config {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"Config {path} is not valid JSON: {e}") from e

    try:
        experiment = parse_experiment(record, path, threads)
    except PotentialError:
        raise
    except SviLabError as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(str(e)) from e
    logger.info("Loaded config '%s' from %s", experiment.name, path)
    return experiment
