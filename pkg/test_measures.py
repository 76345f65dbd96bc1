"""
Measure tests

Total variation, psi of a measure, the energy functional and the
mollify-and-shift approximation with its monotonicity properties.
"""

import numpy as np
import pytest

from src.convex_analysis import GrowthClass, Potential
from src.discrete_spaces import Field, Grid, h10_norm
from src.errors import DomainTooSmall, GrowthClassError, ParamError
from src.measures import (EnergyFunctional, RadonMeasure, ShiftMollifyParams, approx_sequence,
                          boundary_margin, bump, energy, extend_by_zero, field_pairing, mollify,
                          pairing, psi_of_measure, random_measure, shift_measure, shift_mollify,
                          shift_test_function, smoothed_test_function, sup_norm_bound, tv_norm)


@pytest.fixture
def grid():
    return Grid(0.0, 1.0, 256)


@pytest.fixture
def tv_energy():
    return EnergyFunctional(Potential.builtin('psi1'))


def sin1(x):
    return np.sin(np.pi * x)


def test_tv_norm_examples(grid):
    assert tv_norm(RadonMeasure.zero(grid)) == 0.0
    assert tv_norm(RadonMeasure(grid, 1.0)) == pytest.approx(1.0)
    assert tv_norm(RadonMeasure(grid, -1.0, [(0.5, 2.0)])) == pytest.approx(3.0)


def test_invalid_measures(grid):
    with pytest.raises(ParamError):
        RadonMeasure(grid, atoms=[(0.0, 1.0)])
    with pytest.raises(ParamError):
        RadonMeasure(grid, np.zeros(3))
    mu = RadonMeasure(grid, 0.5, [(0.3, 1.0)])
    assert RadonMeasure.from_record(mu.to_record()).atoms == mu.atoms
    with pytest.raises(AttributeError):
        mu.atoms = ()


def test_psi_of_measure(grid):
    psi1 = Potential.builtin('psi1')
    result = psi_of_measure(psi1, RadonMeasure(grid, 2.0, [(0.5, 3.0)]))
    np.testing.assert_allclose(result.density, 1.0)
    assert result.atoms[0][0] == 0.5
    assert result.atoms[0][1] == pytest.approx(3.0, abs=1e-3)
    assert tv_norm(result) == pytest.approx(4.0, abs=1e-3)
    assert psi_of_measure(psi1, RadonMeasure(grid, 0.5)).is_zero()
    with pytest.raises(GrowthClassError):
        psi_of_measure(Potential.builtin('psi2'), RadonMeasure(grid, 1.0))


def test_energy_regimes(grid, tv_energy):
    assert energy(tv_energy, RadonMeasure.zero(grid)) == 0.0
    assert energy(tv_energy, RadonMeasure(grid, atoms=[(0.5, 3.0)])) == pytest.approx(3.0, abs=1e-3)
    quadratic = EnergyFunctional(Potential.builtin('quadratic'))
    assert not quadratic.is_tv
    assert energy(quadratic, RadonMeasure(grid, 2.0)) == pytest.approx(2.0)
    assert np.isinf(energy(quadratic, RadonMeasure(grid, 2.0, [(0.5, 1.0)])))
    with pytest.raises(GrowthClassError):
        EnergyFunctional(Potential.builtin('psi1'), GrowthClass.SUPERLINEAR)


def test_boundary_margin():
    assert boundary_margin(0.1) == pytest.approx(0.05)
    assert boundary_margin(10.0) == pytest.approx(0.05)
    assert boundary_margin(1e-3) == pytest.approx(5e-4)
    with pytest.raises(DomainTooSmall):
        boundary_margin(0.1, (0.0, 0.5))
    with pytest.raises(ParamError):
        boundary_margin(0.0)


def test_shift_keeps_interior_atom(grid):
    mu = RadonMeasure(grid, atoms=[(0.5, 1.0)])
    shifted = shift_measure(mu, 0.01)
    assert shifted.atoms == ((0.5, 1.0),)
    assert shift_measure(RadonMeasure.zero(grid), 0.1).is_zero()


def test_shift_near_boundary_splits_mass(grid):
    mu = RadonMeasure(grid, atoms=[(0.02, 1.0)])
    shifted = shift_measure(mu, 0.1)
    assert shifted.total_mass() <= 1.0 + 1e-12
    assert tv_norm(shifted) <= tv_norm(mu) + 1e-10


def test_shift_duality(grid):
    rng = np.random.default_rng(1)
    eps = 8 * grid.spacing
    eta_eps = shift_test_function(grid, sin1, eps)
    for _ in range(20):
        mu = random_measure(grid, rng)
        lhs = pairing(shift_measure(mu, eps), sin1)
        rhs = pairing(mu, eta_eps)
        assert lhs == pytest.approx(rhs, abs=1e-10 * (1.0 + tv_norm(mu)))


def test_mollify_preserves_mass(grid):
    u = mollify(RadonMeasure(grid, atoms=[(0.5, 1.0)]), 0.1)
    assert grid.spacing * np.sum(u.values) == pytest.approx(1.0, abs=1e-12)
    assert np.all(u.values >= 0)
    assert np.all(u.values[np.abs(grid.nodes - 0.5) > 0.11] == 0.0)
    assert mollify(RadonMeasure.zero(grid), 0.1).max_abs() == 0.0


def test_shift_mollify_rejects_wide_kernel(grid):
    with pytest.raises(ParamError):
        ShiftMollifyParams(eps=0.1, delta=0.04, boundary_margin=0.05)
    # valid on its own, but w(0.01) on the grid is 0.005
    params = ShiftMollifyParams(eps=0.01, delta=0.02, boundary_margin=0.05)
    with pytest.raises(ParamError):
        shift_mollify(RadonMeasure(grid, 1.0), params)


def test_energy_lower_bound(grid, tv_energy):
    rng = np.random.default_rng(7)
    for _ in range(200):
        mu = random_measure(grid, rng)
        # psi1(2) = 1
        assert energy(tv_energy, mu) >= 0.5 * tv_norm(mu) - 1.0 - 1e-8


def test_mollification_contracts_energy(grid, tv_energy):
    rng = np.random.default_rng(11)
    for _ in range(60):
        mu = random_measure(grid, rng)
        target = energy(tv_energy, mu)
        for delta in (0.2, 0.1, 0.05):
            assert energy(tv_energy, mollify(mu, delta)) <= target + 1e-8


def test_extension_neutrality(grid, tv_energy):
    rng = np.random.default_rng(13)
    for _ in range(50):
        mu = random_measure(grid, rng)
        wide = extend_by_zero(mu, 16, 40)
        assert energy(tv_energy, wide) == pytest.approx(energy(tv_energy, mu), rel=1e-12, abs=1e-12)


def test_tv_monotonicity_of_construction(grid, tv_energy):
    rng = np.random.default_rng(17)
    for _ in range(60):
        mu = random_measure(grid, rng)
        target = energy(tv_energy, mu)
        for eps in (0.2, 0.1, 0.05, 0.02):
            p = ShiftMollifyParams.for_eps(eps, grid)
            assert energy(tv_energy, shift_mollify(mu, p)) <= target + 1e-8


def test_sup_norm_bound_for_densities(grid):
    rng = np.random.default_rng(19)
    for _ in range(20):
        mu = RadonMeasure(grid, random_measure(grid, rng).density)
        p = ShiftMollifyParams.for_eps(0.1, grid)
        assert shift_mollify(mu, p).max_abs() <= sup_norm_bound(mu, p.delta) + 1e-10


def test_approx_sequence_of_unit_atom(tv_energy):
    grid = Grid(0.0, 1.0, 1024)
    mu = RadonMeasure(grid, atoms=[(0.5, 1.0)])
    target = energy(tv_energy, mu)
    energies = {n: energy(tv_energy, approx_sequence(mu, n)) for n in (16, 64, 256)}
    assert abs(energies[64] - target) <= 0.05
    assert all(e <= target + 1e-8 for e in energies.values())
    assert abs(energies[256] - target) < abs(energies[16] - target)

    u = approx_sequence(mu, 256)
    assert abs(field_pairing(u, sin1) - pairing(mu, sin1)) <= 1e-2


def test_approx_sequence_of_density():
    grid = Grid(0.0, 1.0, 1024)
    mu = RadonMeasure(grid, 2.0)
    u = approx_sequence(mu, 256)
    assert abs(field_pairing(u, sin1) - pairing(mu, sin1)) <= 1e-2
    f = EnergyFunctional(Potential.builtin('psi1'))
    assert energy(f, u) == pytest.approx(1.0, abs=0.05)
    assert approx_sequence(RadonMeasure.zero(grid), 8).max_abs() == 0.0
    with pytest.raises(ParamError):
        approx_sequence(mu, 0)


def test_smoothed_test_function_converges():
    grid = Grid(0.0, 1.0, 2048)
    eps = 2.0 ** -8
    p = ShiftMollifyParams.for_eps(eps, grid)

    def eta(x):
        return bump((x - 0.5) / 0.3)

    smoothed = smoothed_test_function(grid, eta, eps, p.delta)
    target = Field(grid, eta(grid.nodes))
    assert np.max(np.abs(smoothed.values - target.values)) < 1e-2
    assert h10_norm(smoothed - target) < 0.25 * h10_norm(target)

    coarse_eps = 2.0 ** -5
    coarse = smoothed_test_function(grid, eta, coarse_eps,
                                    ShiftMollifyParams.for_eps(coarse_eps, grid).delta)
    assert h10_norm(smoothed - target) < h10_norm(coarse - target)


# one constant for every eps of the ladder
SUP_BOUND = 1.0 + 1e-3
H10_BOUND = 4.0

BOUNDED_TEST_FUNCTIONS = {
    'sin1': sin1,
    'sin3': lambda x: np.sin(3 * np.pi * x),
    'bump': lambda x: bump((x - 0.5) / 0.3),
    'skewed': lambda x: x * (1.0 - x) ** 2,
}


@pytest.mark.parametrize('k', [4, 5, 6, 7, 8])
@pytest.mark.parametrize('name', sorted(BOUNDED_TEST_FUNCTIONS))
def test_shift_and_mollify_are_bounded_on_test_functions(name, k):
    grid = Grid(0.0, 1.0, 2048)
    eta = BOUNDED_TEST_FUNCTIONS[name]
    eps = 2.0 ** -k
    p = ShiftMollifyParams.for_eps(eps, grid)
    base = Field(grid, eta(grid.nodes))
    shifted = Field(grid, shift_test_function(grid, eta, eps)(grid.nodes))
    smoothed = smoothed_test_function(grid, eta, eps, p.delta)

    for image in (shifted, smoothed):
        assert image.max_abs() <= SUP_BOUND * base.max_abs()
        assert h10_norm(image) <= H10_BOUND * h10_norm(base)


@pytest.mark.slow
def test_measure_energy_suite_full_count(grid, tv_energy):
    rng = np.random.default_rng(23)
    for _ in range(1000):
        mu = random_measure(grid, rng)
        target = energy(tv_energy, mu)
        assert target >= 0.5 * tv_norm(mu) - 1.0 - 1e-8
        assert energy(tv_energy, mollify(mu, 0.1)) <= target + 1e-8
        assert energy(tv_energy, extend_by_zero(mu, 16, 40)) == pytest.approx(
            target, rel=1e-12, abs=1e-12)
        p = ShiftMollifyParams.for_eps(0.05, grid)
        assert energy(tv_energy, shift_mollify(mu, p)) <= target + 1e-8
