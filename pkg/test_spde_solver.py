"""
SPDE solver tests

Heat-equation baseline, pathwise H^-1 contraction, determinism of the
path streams, abort handling and the regularity statistics.
"""

from dataclasses import replace

import numpy as np
import pytest

from src.convex_analysis import Potential
from src.discrete_spaces import Field, Grid, eigenvalue, hminus1_norm_sq_values
from src.errors import ConfigError, ConfigMismatch, StabilityViolation
from src.noise import Multiplier, NoiseModel, path_stream, sample_increment
from src.spde_solver import (Scheme, SolverConfig, coupled_simulate, drift, energy_stats,
                             implicit_solve, simulate, step)


def make_config(cells=32, potential='psi1', eps=0.1, dt=0.01, t_end=0.2, gain=0.0, paths=1,
                multiplier=Multiplier.ADDITIVE, **kwargs):
    return SolverConfig(
        eps=eps,
        dt=dt,
        t_end=t_end,
        grid=Grid(0.0, 1.0, cells),
        potential=Potential.builtin(potential),
        noise=NoiseModel(modes=8, gain=gain, multiplier=multiplier, seed=1),
        paths=paths,
        **kwargs,
    )


def sine(grid, amplitude=1.0, k=1):
    return Field.from_function(grid, lambda x: amplitude * np.sin(k * np.pi * x))


def test_config_validation():
    with pytest.raises(ConfigError):
        make_config(eps=0.0)
    with pytest.raises(ConfigError):
        make_config(dt=0.5, t_end=0.1)
    with pytest.raises(ConfigError):
        SolverConfig(
            eps=0.1, dt=0.01, t_end=0.1, grid=Grid(0.0, 1.0, 8),
            potential=Potential.builtin('psi1'), noise=NoiseModel(modes=16))
    cfg = make_config(t_end=1.0, dt=0.01, snapshot_every=10)
    assert cfg.n_steps == 100
    np.testing.assert_allclose(cfg.times, np.linspace(0.0, 1.0, 11))


# psi1 has phi = 0 on [-1, 1], so amplitude 0.5 stays in the linear regime
@pytest.mark.parametrize('potential, amplitude', [('zero', 1.0), ('psi1', 0.5)])
def test_heat_equation_eigen_decay(potential, amplitude):
    cfg = make_config(cells=64, potential=potential, eps=0.1, dt=0.001, t_end=0.05,
                      snapshot_every=1)
    x0 = sine(cfg.grid, amplitude)
    ens = simulate(cfg, x0)
    factor = 1.0 + cfg.dt * cfg.eps * eigenvalue(cfg.grid, 1)
    steps = np.arange(len(ens.times))
    expected = x0.values[None, :] / factor ** steps[:, None]
    assert np.max(np.abs(ens.snapshots[0] - expected)) <= 1e-6


def test_zero_noise_zero_initial_stays_zero():
    cfg = make_config(paths=2)
    ens = simulate(cfg, Field.zeros(cfg.grid))
    assert not ens.any_aborted()
    assert np.all(ens.snapshots == 0.0)
    stats = energy_stats(ens)
    assert stats.sup_l2_sq[0] == 0.0
    assert stats.n_paths == 2 and stats.n_aborted == 0


def test_pathwise_contraction_without_noise():
    cfg = make_config(cells=48, eps=0.05, dt=0.01, t_end=0.5, snapshot_every=1)
    x0 = sine(cfg.grid, 3.0)
    y0 = sine(cfg.grid, -1.5, 2)
    pair = coupled_simulate(cfg, cfg, x0, y0)
    diff = pair.first.snapshots[0] - pair.second.snapshots[0]
    norms = np.sqrt(hminus1_norm_sq_values(cfg.grid, diff))
    assert np.all(np.diff(norms) <= 1e-9)
    assert norms[-1] < norms[0]


def test_implicit_solve_residual():
    cfg = make_config(cells=32, eps=0.05)
    rhs = sine(cfg.grid, 2.5).values
    y, history = implicit_solve(cfg, rhs)
    assert history[-1] <= cfg.newton_tol
    assert all(b < a for a, b in zip(history, history[1:]))
    residual = y - rhs - cfg.dt * drift(cfg, Field(cfg.grid, y)).values
    assert np.max(np.abs(residual)) < 1e-6


def test_paths_are_reproducible_and_thread_independent():
    cfg = make_config(gain=1.0, paths=4, t_end=0.1)
    x0 = sine(cfg.grid, 2.0)
    a = simulate(cfg, x0)
    b = simulate(cfg, x0)
    threaded = simulate(replace(cfg, threads=2), x0)
    np.testing.assert_array_equal(a.snapshots, b.snapshots)
    np.testing.assert_array_equal(a.snapshots, threaded.snapshots)
    assert not np.allclose(a.snapshots[0], a.snapshots[1])


def test_step_matches_ensemble_path():
    cfg = make_config(gain=0.5, t_end=0.05, snapshot_every=1)
    x0 = sine(cfg.grid, 2.0)
    ens = simulate(cfg, x0)
    stream = path_stream(cfg.noise, 0)
    x = x0
    for k in range(cfg.n_steps):
        x = step(cfg, x, k * cfg.dt, sample_increment(cfg.noise, cfg.dt, stream))
        np.testing.assert_allclose(x.values, ens.snapshots[0, k + 1], rtol=0, atol=1e-14)


def test_recorded_increments_add_up():
    cfg = make_config(gain=1.0, paths=2, t_end=0.1, snapshot_every=2)
    ens = simulate(cfg, sine(cfg.grid, 2.0), record_increments=True)
    jumps = np.diff(ens.snapshots, axis=1)
    np.testing.assert_allclose(ens.drift_increments + ens.noise_increments, jumps, atol=1e-12)


def test_multiplicative_noise_keeps_zero():
    cfg = make_config(gain=2.0, multiplier=Multiplier.LIPSCHITZ_DIAGONAL, paths=2)
    ens = simulate(cfg, Field.zeros(cfg.grid))
    assert np.all(ens.snapshots == 0.0)


def test_semi_implicit_stability_bound():
    cfg = make_config(cells=32, scheme=Scheme.SEMI_IMPLICIT, dt=0.01)
    with pytest.raises(StabilityViolation):
        simulate(cfg, sine(cfg.grid))
    ok = make_config(cells=16, eps=0.5, scheme=Scheme.SEMI_IMPLICIT, dt=0.0004, t_end=0.01)
    assert ok.dt <= ok.stability_limit()
    ens = simulate(ok, sine(ok.grid, 2.0))
    assert not ens.any_aborted()
    assert np.all(np.isfinite(ens.snapshots))


def test_newton_failure_aborts_path():
    cfg = make_config(newton_tol=1e-300, newton_max_iter=1, paths=2)
    ens = simulate(cfg, sine(cfg.grid, 3.0))
    assert ens.any_aborted()
    assert all('NewtonDivergence' in m for m in ens.messages)
    assert np.isnan(ens.snapshots[0, -1]).all()
    assert energy_stats(ens).n_aborted == 2


def test_coupling_requires_matching_configs():
    cfg = make_config()
    other = make_config(dt=0.02)
    with pytest.raises(ConfigMismatch):
        coupled_simulate(cfg, other, Field.zeros(cfg.grid), Field.zeros(cfg.grid))


def test_energy_statistics_are_finite():
    cfg = make_config(gain=1.0, paths=8, t_end=0.2)
    ens = simulate(cfg, sine(cfg.grid, 2.0))
    stats = energy_stats(ens)
    mean, se = stats.combined
    assert mean > 0 and np.isfinite(se)
    assert stats.combined[0] == pytest.approx(stats.sup_l2_sq[0] + stats.eps_int_h10_sq[0])
    record = stats.to_dict()
    assert set(record) >= {'sup_l2_sq', 'sup_l2_sq_stderr', 'n_paths', 'n_aborted'}
