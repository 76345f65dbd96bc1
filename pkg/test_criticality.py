"""
Supercritical cluster detection tests
"""

import numpy as np
import pytest

from src.convex_analysis import Potential
from src.criticality import EVENT_COLUMNS, cluster_event_log, detect_clusters, size_histogram
from src.discrete_spaces import Field, Grid
from src.noise import NoiseModel
from src.spde_solver import SolverConfig, simulate


def test_detect_clusters():
    grid = Grid(0.0, 1.0, 10)
    u = Field(grid, [0.0, 2.0, 2.0, 0.0, -3.0, 0.0, 0.0, 1.0, 1.5])
    clusters = detect_clusters(u)
    assert [(c.start, c.end) for c in clusters] == [(1, 2), (4, 4), (8, 8)]
    assert [c.size for c in clusters] == [2, 1, 1]
    np.testing.assert_allclose([c.mass for c in clusters], [0.2, 0.2, 0.05])
    assert 'size 2' in clusters[0].get_description()
    assert detect_clusters(u, threshold=5.0) == []


def small_ensemble(x0_amplitude, gain=2.0):
    cfg = SolverConfig(
        eps=0.05, dt=0.01, t_end=0.1, grid=Grid(0.0, 1.0, 32),
        potential=Potential.builtin('psi1'),
        noise=NoiseModel(modes=8, gain=gain, seed=5), paths=2, snapshot_every=2,
    )
    x0 = Field.from_function(cfg.grid, lambda x: x0_amplitude * np.sin(np.pi * x))
    return simulate(cfg, x0)


def test_zero_solution_has_no_events():
    ens = small_ensemble(0.0, gain=0.0)
    events = cluster_event_log(ens)
    assert events.empty
    assert list(events.columns) == EVENT_COLUMNS
    hist = size_histogram(events, 32)
    assert len(hist) == 31
    assert hist['count'].sum() == 0


def test_event_log_and_histogram():
    ens = small_ensemble(3.0)
    events = cluster_event_log(ens)
    initial = detect_clusters(ens.x0)
    for p in range(ens.n_paths):
        at_start = events[(events['path'] == p) & (events['time'] == 0.0)]
        assert len(at_start) == len(initial)
        assert at_start['size'].tolist() == [c.size for c in initial]

    hist = size_histogram(events, 32)
    assert hist['count'].sum() == len(events)
    assert np.all(np.diff(hist['cumulative']) >= 0)
    assert hist['cumulative'].iloc[-1] == len(events)
    assert events['mass'].min() > 0
    assert events['size'].max() <= 31


@pytest.mark.parametrize('threshold', [0.5, 1.0, 2.0])
def test_higher_threshold_gives_fewer_events(threshold):
    ens = small_ensemble(3.0)
    assert len(cluster_event_log(ens, threshold)) >= len(cluster_event_log(ens, threshold + 0.5))
