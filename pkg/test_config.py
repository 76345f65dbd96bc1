"""
Config loader tests
"""

import json
from pathlib import Path

import numpy as np
import pytest

from src.config import (OUTPUT_ROOT_ENV, build_initial_field, load_experiment_config,
                        output_root, parse_experiment)
from src.discrete_spaces import Grid, get_laplacian
from src.errors import ConfigError, PotentialError
from src.noise import Multiplier
from src.spde_solver import Scheme
from src.svi_verifier import TestProcessKind

CONFIGS = Path(__file__).parent / 'configs'


def test_defaults():
    exp = parse_experiment({})
    assert exp.name == 'experiment'
    assert exp.grid == Grid(0.0, 1.0, 64)
    assert exp.potential.label == 'psi1'
    assert exp.solver.eps == 0.1
    assert exp.solver.scheme == Scheme.IMPLICIT_MONOTONE
    assert exp.solver.noise.multiplier == Multiplier.ADDITIVE
    assert exp.x0.max_abs() == 0.0
    assert exp.svi['C'] is None and exp.svi['slack'] is True
    assert exp.test_processes == []
    assert exp.output['save_paths'] == 4
    assert exp.seed == 0
    assert exp.stability['checks'] == ['regularity', 'eps_rate', 'gronwall']
    assert exp.stability['replicates'] == 3
    assert exp.y0.max_abs() == 0.0


@pytest.mark.parametrize('record', [
    {'colour': 'red'},
    {'grid': {'cells': 64, 'width': 1}},
    {'grid': {'cells': 'many'}},
    {'grid': {'cells': 2}},
    {'solver': {'eps': -1.0}},
    {'solver': {'dt': 2.0, 't_end': 1.0}},
    {'solver': {'scheme': 'explicit'}},
    {'noise': {'multiplier': 'cubic'}},
    {'noise': {'weights': 'flat'}},
    {'svi': {'C': -1.0}},
    {'svi': {'slack': 'no'}},
    {'svi': {'identical': 1}},
    {'stability': {'checks': []}},
    {'stability': {'checks': ['energy']}},
    {'stability': {'eps_ladder': [0.1, -0.05]}},
    {'stability': {'regularity_eps': 0.1}},
    {'stability': {'replicates': 0}},
    {'stability': {'y0': {'kind': 'square'}}},
    {'initial': {'kind': 'square'}},
    {'initial': {'kind': 'bump', 'width': 0.0}},
])
def test_malformed_records(record):
    with pytest.raises(ConfigError):
        parse_experiment(record)


def test_potential_errors_pass_through(tmp_path):
    with pytest.raises(PotentialError):
        parse_experiment({'potential': 'psi7'})
    path = tmp_path / 'bad.json'
    path.write_text(json.dumps({'potential': {'kind': 'custom'}}))
    with pytest.raises(PotentialError):
        load_experiment_config(path)


def test_initial_kinds():
    grid = Grid(0.0, 1.0, 32)
    sine = build_initial_field({'kind': 'sine', 'amplitude': 2.0, 'mode': 3}, grid)
    np.testing.assert_allclose(sine.values, 2.0 * np.sin(3 * np.pi * grid.nodes))

    bump = build_initial_field({'kind': 'bump', 'center': 0.25, 'width': 0.1}, grid)
    assert np.argmax(bump.values) == np.argmin(np.abs(grid.nodes - 0.25))
    assert np.all(bump.values[np.abs(grid.nodes - 0.25) >= 0.1] == 0.0)

    measure = build_initial_field({'kind': 'measure', 'atoms': [[0.5, 1.0]], 'approx_n': 16}, grid)
    assert grid.spacing * measure.values.sum() == pytest.approx(1.0, abs=1e-3)

    lap = build_initial_field({'kind': 'sine', 'apply_laplacian': True}, grid)
    expected = get_laplacian(grid).apply_values(np.sin(np.pi * grid.nodes))
    np.testing.assert_allclose(lap.values, expected)


def test_test_process_blocks():
    exp = parse_experiment({'svi': {'test_processes': [
        {'kind': 'zero'},
        {'kind': 'constant_g', 'z0': {'kind': 'sine'}, 'g': {'kind': 'bump'}},
        {'kind': 'regularized_solution', 'inner_eps': 0.3},
    ]}})
    kinds = [spec.kind for spec in exp.test_processes]
    assert kinds == list(TestProcessKind)
    assert exp.test_processes[1].g is not None
    assert exp.test_processes[2].inner_eps == 0.3

    for block in ({'kind': 'constant_g'},
                  {'kind': 'regularized_solution'},
                  {'kind': 'regularized_solution', 'inner_eps': 0.0},
                  {'kind': 'brownian'},
                  {'kind': 'zero', 'drift': 1.0}):
        with pytest.raises(ConfigError):
            parse_experiment({'svi': {'test_processes': [block]}})


def test_output_root_from_env(monkeypatch, tmp_path):
    monkeypatch.delenv(OUTPUT_ROOT_ENV, raising=False)
    assert output_root() == Path('results')
    monkeypatch.setenv(OUTPUT_ROOT_ENV, str(tmp_path))
    assert output_root() == tmp_path


def test_unreadable_files(tmp_path):
    with pytest.raises(ConfigError):
        load_experiment_config(tmp_path / 'missing.json')
    broken = tmp_path / 'broken.json'
    broken.write_text('{"grid": ')
    with pytest.raises(ConfigError):
        load_experiment_config(broken)


@pytest.mark.parametrize('path', sorted(CONFIGS.glob('*.json')), ids=lambda p: p.stem)
def test_shipped_configs_load(path):
    exp = load_experiment_config(path, threads=2)
    assert exp.name == path.stem
    assert exp.solver.threads == 2
    assert exp.record['solver']['eps'] == exp.solver.eps


def test_svi_flags_are_booleans():
    exp = parse_experiment({'svi': {'slack': False, 'identical': True}})
    assert exp.svi['slack'] is False and exp.svi['identical'] is True


def test_stability_block():
    exp = parse_experiment({'stability': {'checks': ['gronwall'], 'replicates': 2,
                                          'y0': {'kind': 'sine', 'amplitude': 0.5}}})
    assert exp.stability['checks'] == ['gronwall']
    assert exp.stability['replicates'] == 2
    np.testing.assert_allclose(exp.y0.values, 0.5 * np.sin(np.pi * exp.grid.nodes))
    assert exp.record['stability']['y0']['kind'] == 'sine'


@pytest.mark.parametrize('name', ['verify_svi', 'stability'])
def test_acceptance_configs_run_full_ensembles(name):
    exp = load_experiment_config(CONFIGS / f'{name}.json')
    assert exp.solver.paths >= 1000
    assert exp.solver.t_end == 1.0
