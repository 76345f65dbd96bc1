"""
SVI verifier tests

Margins of the variational inequality against the three test-process
kinds, the failure case with a sabotaged constant, and the stability and
subdifferential statistics.
"""

from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from src.config import load_experiment_config
from src.convex_analysis import Potential, RegularizedPotential
from src.discrete_spaces import Field, Grid
from src.errors import AlignmentError, ConfigError
from src.measures import EnergyFunctional, RadonMeasure, random_measure
from src.noise import Multiplier, NoiseModel
from src.spde_solver import SolverConfig, coupled_simulate, simulate
from src.svi_verifier import (RATIO_BAND, TestProcessKind, build_test_process,
                              calibrate_gronwall_rate, contraction_stat, eps_rate_stat,
                              gronwall_table, measure_extension_margin, regularity_ladder,
                              regularity_stat, subdiff_inequality_margin, svi_margin)

CONFIGS = Path(__file__).parent / 'configs'


def additive_config(paths=12, **kwargs):
    params = dict(eps=0.05, dt=0.01, t_end=0.3, paths=paths, snapshot_every=1)
    params.update(kwargs)
    return SolverConfig(
        grid=Grid(0.0, 1.0, 32),
        potential=Potential.builtin('psi1'),
        noise=NoiseModel(modes=8, gain=1.0, seed=21),
        **params,
    )


def sine(grid, amplitude=1.0, k=1):
    return Field.from_function(grid, lambda x: amplitude * np.sin(k * np.pi * x))


@pytest.fixture(scope='module')
def cfg():
    return additive_config()


@pytest.fixture(scope='module')
def candidate(cfg):
    return simulate(cfg, sine(cfg.grid, 2.0))


@pytest.fixture
def tv_energy():
    return EnergyFunctional(Potential.builtin('psi1'))


def test_identical_candidate_has_zero_margin():
    exp = load_experiment_config(CONFIGS / 'verify_svi_identical.json')
    spec = exp.test_processes[0]
    z = build_test_process(spec.kind, exp.solver, spec.z0, g=spec.g)
    report = svi_margin(z.ensemble, z, EnergyFunctional(exp.potential), C=0.0, slack=False)
    np.testing.assert_array_equal(report.margin, 0.0)
    assert report.passed()
    assert report.verdict == 'PASS'


@pytest.mark.parametrize('kind', list(TestProcessKind))
def test_additive_candidate_passes(cfg, candidate, tv_energy, kind):
    g = sine(cfg.grid, 1.0, 2) if kind == TestProcessKind.CONSTANT_G else None
    inner_eps = 0.2 if kind == TestProcessKind.REGULARIZED_SOLUTION else None
    z = build_test_process(kind, cfg, sine(cfg.grid, 1.5), g=g, inner_eps=inner_eps)
    report = svi_margin(candidate, z, tv_energy, C=0.0)
    assert report.passed(), report.summary()
    # additive noise cancels in X - Z, so the discrete inequality holds path by path
    assert np.all(report.margin >= -1e-8)
    assert report.n_paths == cfg.paths
    frame = report.to_frame()
    assert list(frame.columns) == ['t', 'lhs', 'rhs', 'margin', 'stderr']
    assert len(frame) == len(cfg.times)


def test_sabotaged_constant_fails():
    exp = load_experiment_config(CONFIGS / 'verify_svi_sabotaged.json')
    x_ens = simulate(exp.solver, exp.x0)
    spec = exp.test_processes[0]
    z = build_test_process(spec.kind, exp.solver, spec.z0)
    report = svi_margin(x_ens, z, EnergyFunctional(exp.potential), C=exp.svi['C'])
    assert not report.passed()
    assert report.verdict == 'FAIL'


def test_test_process_identity(cfg):
    z = build_test_process(TestProcessKind.CONSTANT_G, cfg, sine(cfg.grid), g=sine(cfg.grid, 0.5))
    assert z.identity_residual() < 1e-12
    np.testing.assert_allclose(z.drift[0, 0], 0.5 * sine(cfg.grid).values)
    with pytest.raises(ConfigError):
        build_test_process(TestProcessKind.CONSTANT_G, cfg, sine(cfg.grid))
    with pytest.raises(ConfigError):
        build_test_process(TestProcessKind.REGULARIZED_SOLUTION, cfg, sine(cfg.grid))


def test_misaligned_ensembles_are_rejected(cfg, candidate, tv_energy):
    other = additive_config(paths=cfg.paths, t_end=0.2)
    z = build_test_process(TestProcessKind.ZERO, other, Field.zeros(other.grid))
    with pytest.raises(AlignmentError):
        svi_margin(candidate, z, tv_energy, C=0.0)


def test_contraction_of_coupled_solutions():
    cfg = additive_config(paths=6)
    pair = coupled_simulate(cfg, cfg, sine(cfg.grid, 2.0), sine(cfg.grid, -1.0, 3))
    stat = contraction_stat(pair)
    assert stat.pathwise_nonincreasing
    assert stat.weighted_nonincreasing
    assert stat.ratio <= 1.0 + 1e-12
    assert stat.within_gronwall()
    assert calibrate_gronwall_rate(pair) == 0.0
    assert len(stat.to_frame()) == len(cfg.times)


def test_eps_rate_table_shape():
    ladder = []
    for eps in (0.2, 0.1):
        coarse = additive_config(paths=4, eps=eps)
        x0 = sine(coarse.grid, 2.0)
        ladder.append(coupled_simulate(coarse, coarse.with_eps(eps / 2), x0, x0))
    table = eps_rate_stat(ladder)
    assert list(table.frame['eps']) == [0.2, 0.1]
    assert list(table.frame['eps_fine']) == [0.1, 0.05]
    assert (table.frame['D'] >= 0).all()
    assert np.isnan(table.frame['ratio'].iloc[0])
    assert bool(table.frame['in_band'].iloc[0])
    assert eps_rate_stat([]).passed


def test_eps_ladder_decreases_within_band():
    ladder = []
    for eps in (0.2, 0.1, 0.05):
        coarse = additive_config(paths=8, eps=eps)
        x0 = sine(coarse.grid, 2.0)
        ladder.append(coupled_simulate(coarse, coarse.with_eps(eps / 2), x0, x0))
    table = eps_rate_stat(ladder)
    assert table.passed
    assert np.all(np.diff(table.frame['D']) < 0)
    ratios = table.frame['ratio'].dropna()
    assert len(ratios) == 2
    assert ratios.between(*RATIO_BAND).all()
    assert table.frame['in_band'].all()
    assert table.warnings == []


def test_multiplicative_noise_stays_within_gronwall_bound():
    exp = load_experiment_config(CONFIGS / 'lipschitz_pair.json')
    cfg = replace(exp.solver, paths=8, t_end=0.3)
    assert cfg.noise.multiplier == Multiplier.LIPSCHITZ_DIAGONAL
    assert cfg.K == pytest.approx(2.0)

    pair = coupled_simulate(cfg, cfg, exp.x0, Field.zeros(cfg.grid))
    stat = contraction_stat(pair)
    assert np.isfinite(stat.ratio)
    assert stat.within_gronwall()
    assert calibrate_gronwall_rate(pair) <= 1.5 * cfg.K


def test_gronwall_table_over_seeds():
    pairs = []
    for seed in (21, 22, 23):
        cfg = additive_config(paths=4)
        cfg = replace(cfg, noise=replace(cfg.noise, seed=seed))
        pairs.append(coupled_simulate(cfg, cfg, sine(cfg.grid, 2.0), Field.zeros(cfg.grid)))
    table = gronwall_table(pairs)
    assert table.frame['seed'].tolist() == [21, 22, 23]
    assert table.frame['within'].all() and table.frame['consistent'].all()
    assert (table.frame['ratio'] <= table.frame['bound'] + 1e-8).all()
    assert table.passed
    assert not gronwall_table([]).passed


def test_regularity_ladder_is_uniform_in_eps():
    ensembles = []
    for eps in (0.1, 0.05, 0.025):
        cfg = additive_config(paths=8, eps=eps)
        ensembles.append(simulate(cfg, sine(cfg.grid, 2.0)))
    table = regularity_ladder(ensembles)
    assert table.frame['eps'].tolist() == [0.1, 0.05, 0.025]
    # sup_t includes t = 0, where ||2 sin(pi x)||^2 = 2
    assert (table.frame['sup_l2_sq'] >= 2.0 - 1e-9).all()
    assert 0.0 <= table.variation < 0.5
    assert table.passed()
    assert regularity_ladder([]).variation == 0.0


def test_regularity_statistic(candidate, tv_energy):
    mean, se = regularity_stat(candidate, tv_energy)
    assert mean == pytest.approx(candidate.cum_energy[:, -1].mean())
    assert se >= 0
    quadratic = EnergyFunctional(Potential.builtin('quadratic'))
    assert regularity_stat(candidate, quadratic)[0] > 0


def test_subdifferential_inequality(cfg):
    rp = RegularizedPotential(cfg.potential, cfg.eps)
    rng = np.random.default_rng(3)
    for _ in range(20):
        y = Field(cfg.grid, rng.normal(0.0, 2.0, cfg.grid.n_nodes))
        u = Field(cfg.grid, rng.normal(0.0, 2.0, cfg.grid.n_nodes))
        assert subdiff_inequality_margin(rp, y, u) >= -1e-10


def test_measure_extension_margin():
    grid = Grid(0.0, 1.0, 256)
    rp = RegularizedPotential(Potential.builtin('psi1'), 0.05)
    rng = np.random.default_rng(4)
    y = sine(grid, 2.0)
    for _ in range(3):
        frame = measure_extension_margin(rp, y, random_measure(grid, rng))
        assert list(frame.columns) == ['n', 'energy', 'pairing', 'margin']
        assert (frame['margin'] >= -1e-8).all()
    with pytest.raises(AlignmentError):
        measure_extension_margin(rp, y, RadonMeasure.zero(Grid(0.0, 1.0, 64)))
