"""
Discrete space tests: Dirichlet Laplacian, norms and sine modes
"""

import logging

import numpy as np
import pytest

from src.discrete_spaces import (Field, Grid, eigenvalue, get_laplacian, h10_norm, hat_interpolate,
                                 hminus1_inner, hminus1_norm, hminus1_norm_sq_values,
                                 inv_laplacian, l2_inner, l2_norm, laplacian_apply,
                                 poincare_constant, sine_mode, sine_mode_matrix)
from src.errors import GridMismatch, ModeOutOfRange, ParamError


def sine(grid, k=1):
    return Field.from_function(grid, lambda x: np.sin(k * np.pi * x))


def test_grid_geometry():
    grid = Grid(0.0, 2.0, 8)
    assert grid.spacing == pytest.approx(0.25)
    assert grid.n_nodes == 7
    np.testing.assert_allclose(grid.nodes, 0.25 * np.arange(1, 8))
    assert len(grid.midpoints) == 8
    assert Grid.from_record(grid.to_record()) == grid
    with pytest.raises(ParamError):
        Grid(1.0, 0.0, 8)
    with pytest.raises(ParamError):
        Grid(0.0, 1.0, 2)


def test_field_is_immutable():
    grid = Grid(0.0, 1.0, 16)
    u = sine(grid)
    with pytest.raises(AttributeError):
        u.values = np.zeros(grid.n_nodes)
    with pytest.raises(ValueError):
        u.values[0] = 1.0
    with pytest.raises(GridMismatch):
        Field(grid, np.zeros(3))
    with pytest.raises(GridMismatch):
        u + Field.zeros(Grid(0.0, 1.0, 32))


def test_sine_hminus1_calibration():
    grid = Grid(0.0, 1.0, 1024)
    u = sine(grid)
    assert hminus1_norm(u) ** 2 == pytest.approx(1.0 / (2.0 * np.pi ** 2), abs=1e-4)
    assert l2_norm(u) ** 2 == pytest.approx(0.5, abs=1e-12)
    assert h10_norm(u) ** 2 == pytest.approx(np.pi ** 2 / 2, rel=1e-4)


def test_inverse_laplacian_round_trip():
    grid = Grid(0.0, 1.0, 256)
    rng = np.random.default_rng(3)
    f = Field(grid, rng.normal(size=grid.n_nodes))
    L = get_laplacian(grid)
    u = inv_laplacian(L, f)
    residual = laplacian_apply(L, u) - f
    assert residual.max_abs() <= 1e-10 * max(1.0, f.max_abs())


def test_hminus1_inner_is_symmetric_and_positive():
    grid = Grid(0.0, 1.0, 64)
    rng = np.random.default_rng(5)
    u = Field(grid, rng.normal(size=grid.n_nodes))
    v = Field(grid, rng.normal(size=grid.n_nodes))
    assert hminus1_inner(u, v) == pytest.approx(hminus1_inner(v, u), rel=1e-10)
    assert hminus1_norm(u) > 0
    batch = np.vstack([u.values, v.values])
    np.testing.assert_allclose(hminus1_norm_sq_values(grid, batch),
                               [hminus1_norm(u) ** 2, hminus1_norm(v) ** 2], rtol=1e-10)


def test_norm_chain_poincare():
    grid = Grid(0.0, 1.0, 128)
    rng = np.random.default_rng(9)
    c = poincare_constant(grid)
    for _ in range(20):
        u = Field(grid, rng.normal(size=grid.n_nodes))
        assert hminus1_norm(u) <= c * l2_norm(u) + 1e-12
        assert l2_norm(u) <= c * h10_norm(u) + 1e-12


def test_sine_modes_are_hminus1_orthonormal():
    grid = Grid(0.0, 1.0, 64)
    modes = sine_mode_matrix(grid, 8)
    gram = np.array([[hminus1_inner(Field(grid, a), Field(grid, b)) for b in modes] for a in modes])
    np.testing.assert_allclose(gram, np.eye(8), atol=1e-10)
    assert eigenvalue(grid, 1) == pytest.approx(np.pi ** 2, rel=1e-3)
    with pytest.raises(ModeOutOfRange):
        sine_mode(grid, 0)
    with pytest.raises(ModeOutOfRange):
        sine_mode(grid, grid.n_nodes + 1)


def test_laplacian_of_sine_mode():
    grid = Grid(0.0, 1.0, 32)
    u = sine(grid, 3)
    Lu = laplacian_apply(get_laplacian(grid), u)
    np.testing.assert_allclose(Lu.values, -eigenvalue(grid, 3) * u.values, atol=1e-9)


def test_hat_interpolation_reproduces_point_pairing():
    grid = Grid(0.0, 1.0, 20)
    atom = hat_interpolate(grid, [(0.33, 2.0)])
    eta = sine(grid)
    # the discrete pairing sees the linear interpolant of eta at the atom
    interp = np.interp(0.33, np.concatenate([[0.0], grid.nodes, [1.0]]),
                       np.concatenate([[0.0], eta.values, [0.0]]))
    assert l2_inner(atom, eta) == pytest.approx(2.0 * interp, rel=1e-12)


def test_factorization_is_logged(caplog):
    caplog.set_level(logging.DEBUG, logger='src.discrete_spaces')
    get_laplacian.cache_clear()
    get_laplacian(Grid(0.0, 1.0, 12))
    assert '11 interior nodes' in caplog.text
    caplog.clear()
    get_laplacian(Grid(0.0, 1.0, 12))
    assert caplog.text == ''
