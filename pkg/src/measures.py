"""
Measures Module

Signed Radon measures on an interval, stored as their Lebesgue decomposition:
a density on the grid cells plus a finite list of atoms.

Provides:
- Total variation and the convex function psi(mu) of a measure
- The energy functional (integral form for superlinear potentials,
  total-variation form for sublinear ones)
- Mollification, the partition-of-unity boundary shift and their
  composition, the smooth L2 approximation sequence of a measure
"""

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .convex_analysis import (GrowthClass, Potential, RegularizedPotential, eval_psi,
                              moreau_array, recession)
from .discrete_spaces import Field, Grid, hat_interpolate
from .errors import DomainTooSmall, GrowthClassError, ParamError

logger = logging.getLogger(__name__)

DEFAULT_CHART_HEIGHT = 0.2

# Patch index -> inward shift direction (interior patch does not move)
PATCH_SHIFTS = {0: 0.0, 1: 1.0, 2: -1.0}

Atom = Tuple[float, float]
TestFunction = Callable[[np.ndarray], np.ndarray]


class RadonMeasure:
    """
    Signed measure = density (one value per grid cell) + atoms

    The density is the absolutely continuous part, the atoms the singular
    part; the two are mutually singular by construction.
    """

    __slots__ = ('grid', 'density', 'atoms')

    def __init__(self, grid: Grid, density: Optional[Union[np.ndarray, Sequence[float]]] = None,
                 atoms: Iterable[Atom] = ()):
        if density is None:
            dens = np.zeros(grid.cells)
        else:
            dens = np.array(density, dtype=float)
            if dens.ndim == 0:
                dens = np.full(grid.cells, float(dens))
        if dens.shape != (grid.cells,):
            raise ParamError(f"Density needs {grid.cells} cell values, got {dens.shape}")
        if not np.all(np.isfinite(dens)):
            raise ParamError("Density must be finite")

        atom_list = sorted((float(x), float(m)) for x, m in atoms)
        for x, _ in atom_list:
            if not grid.a < x < grid.b:
                raise ParamError(f"Atom at {x} is not strictly inside ({grid.a}, {grid.b})")
        locations = [x for x, _ in atom_list]
        if len(set(locations)) != len(locations):
            raise ParamError("Atom locations must be pairwise distinct")

        dens.setflags(write=False)
        object.__setattr__(self, 'grid', grid)
        object.__setattr__(self, 'density', dens)
        object.__setattr__(self, 'atoms', tuple(atom_list))

    def __setattr__(self, name, value):
        raise AttributeError("RadonMeasure is immutable")

    def __repr__(self) -> str:
        return f"RadonMeasure(cells={self.grid.cells}, atoms={len(self.atoms)}, tv={tv_norm(self):.4g})"

    @classmethod
    def zero(cls, grid: Grid) -> 'RadonMeasure':
        return cls(grid)

    @classmethod
    def from_function(cls, grid: Grid, func: Callable[[np.ndarray], np.ndarray],
                      atoms: Iterable[Atom] = ()) -> 'RadonMeasure':
        return cls(grid, func(grid.midpoints), atoms)

    def total_mass(self) -> float:
        """mu(O)"""
        return float(self.grid.spacing * np.sum(self.density) + sum(m for _, m in self.atoms))

    def is_zero(self) -> bool:
        return not np.any(self.density) and all(m == 0 for _, m in self.atoms)

    def to_record(self) -> Dict:
        return {
            'grid': self.grid.to_record(),
            'density': self.density.tolist(),
            'atoms': [[x, m] for x, m in self.atoms],
        }

    @classmethod
    def from_record(cls, record: Dict) -> 'RadonMeasure':
        grid = Grid.from_record(record['grid'])
        return cls(grid, record.get('density'), [tuple(a) for a in record.get('atoms', [])])


def _merge_atoms(atoms: Iterable[Atom]) -> List[Atom]:
    merged: Dict[float, float] = {}
    for x, m in atoms:
        merged[x] = merged.get(x, 0.0) + m
    return [(x, m) for x, m in merged.items() if m != 0.0]


@dataclass(frozen=True)
class EnergyFunctional:
    """phi: integral form (superlinear psi) or total-variation form (sublinear psi)"""

    potential: Potential
    regime: Optional[GrowthClass] = None

    def __post_init__(self):
        if self.regime is None:
            object.__setattr__(self, 'regime', self.potential.growth_class)
        if self.regime != self.potential.growth_class:
            raise GrowthClassError(
                f"Regime {self.regime.value} does not match potential {self.potential.label}"
            )

    @property
    def is_tv(self) -> bool:
        return self.regime == GrowthClass.SUBLINEAR


@dataclass(frozen=True)
class ShiftMollifyParams:
    """Shift scale eps, mollifier width delta and boundary margin w(eps)"""

    eps: float
    delta: float
    boundary_margin: float

    def __post_init__(self):
        if not (self.eps > 0 and self.delta > 0 and self.boundary_margin > 0):
            raise ParamError(f"eps, delta and margin must be positive: {self}")
        if self.delta > 0.5 * self.boundary_margin * (1 + 1e-12):
            raise ParamError(
                f"delta={self.delta} exceeds w(eps)/2={0.5 * self.boundary_margin}"
            )

    @classmethod
    def for_eps(cls, eps: float, grid: Grid, delta: Optional[float] = None,
                chart_height: float = DEFAULT_CHART_HEIGHT) -> 'ShiftMollifyParams':
        """Parameters with w(eps) from the grid domain; delta defaults to w/2"""
        w = boundary_margin(eps, (grid.a, grid.b), chart_height)
        return cls(eps=eps, delta=0.5 * w if delta is None else delta, boundary_margin=w)


# ----------------------------------------------------------------------------
# Norms and energies
# ----------------------------------------------------------------------------

def tv_norm(mu: RadonMeasure) -> float:
    """|mu|(O) = int |h| dx + sum |m_i|"""
    return float(mu.grid.spacing * np.sum(np.abs(mu.density)) + sum(abs(m) for _, m in mu.atoms))


def psi_of_measure(psi: Potential, mu: RadonMeasure) -> RadonMeasure:
    """
    Convex function of a measure: psi(h) dx + psi_inf(mu^s)

    Args:
        psi: Sublinear potential
        mu: Measure

    Returns:
        Positive measure with density psi(h) and atoms (x_i, |m_i| psi_inf(1))

    Raises:
        GrowthClassError: for superlinear potentials
    """
    if psi.growth_class != GrowthClass.SUBLINEAR:
        raise GrowthClassError(f"psi(mu) needs a sublinear potential, got {psi.label}")
    slope = recession(psi, 1.0)
    atoms = [(x, abs(m) * slope) for x, m in mu.atoms if m != 0.0]
    return RadonMeasure(mu.grid, eval_psi(psi, mu.density), atoms)


def energy(f: EnergyFunctional, u: Union[RadonMeasure, Field]) -> float:
    """
    Energy functional phi(u)

    Args:
        f: Energy functional
        u: Field (nodal density) or measure

    Returns:
        phi(u), +inf for atoms under a superlinear potential
    """
    if isinstance(u, Field):
        return float(u.grid.spacing * np.sum(eval_psi(f.potential, u.values)))
    if f.is_tv:
        return tv_norm(psi_of_measure(f.potential, u))
    if any(m != 0.0 for _, m in u.atoms):
        return float('inf')
    return float(u.grid.spacing * np.sum(eval_psi(f.potential, u.density)))


def energy_eps(rp: RegularizedPotential, u: Field) -> float:
    """Regularized energy phi^eps(u) = int psi^eps(u) dx"""
    return float(u.grid.spacing * np.sum(moreau_array(rp, u.values)))


def pairing(mu: RadonMeasure, eta: TestFunction) -> float:
    """<mu, eta> with midpoint quadrature for the density"""
    grid = mu.grid
    value = grid.spacing * float(np.dot(mu.density, eta(grid.midpoints)))
    if mu.atoms:
        xs = np.array([x for x, _ in mu.atoms])
        ms = np.array([m for _, m in mu.atoms])
        value += float(np.dot(ms, eta(xs)))
    return value


def field_pairing(u: Field, eta: TestFunction) -> float:
    return float(u.grid.spacing * np.dot(u.values, eta(u.grid.nodes)))


def measure_to_field(mu: RadonMeasure) -> Field:
    """Nodal representative: averaged density plus hat-interpolated atoms"""
    nodal = _cells_to_nodes(mu.density)
    return Field(mu.grid, nodal) + hat_interpolate(mu.grid, mu.atoms)


def extend_by_zero(mu: RadonMeasure, extra_left: int, extra_right: int) -> RadonMeasure:
    """The same measure on a larger interval with the same spacing"""
    h = mu.grid.spacing
    grid = Grid(mu.grid.a - extra_left * h, mu.grid.b + extra_right * h,
                mu.grid.cells + extra_left + extra_right)
    density = np.concatenate([np.zeros(extra_left), mu.density, np.zeros(extra_right)])
    return RadonMeasure(grid, density, mu.atoms)


def random_measure(grid: Grid, rng: np.random.Generator, max_atoms: int = 3,
                   scale: float = 3.0) -> RadonMeasure:
    """Random density-plus-atoms measure for property checks"""
    modes = rng.normal(0.0, scale, 4)
    x = (grid.midpoints - grid.a) / grid.length
    density = sum(c * np.sin((k + 1) * np.pi * x) for k, c in enumerate(modes))
    density = density + rng.normal(0.0, 0.5 * scale, grid.cells)
    n_atoms = int(rng.integers(0, max_atoms + 1))
    locations = rng.uniform(grid.a + 0.01 * grid.length, grid.b - 0.01 * grid.length, n_atoms)
    masses = rng.normal(0.0, scale, n_atoms)
    return RadonMeasure(grid, density, zip(locations, masses))


# ----------------------------------------------------------------------------
# Boundary covering
# ----------------------------------------------------------------------------

def smooth_step(t: np.ndarray) -> np.ndarray:
    """C-infinity step: 0 for t <= 0, 1 for t >= 1"""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    with np.errstate(divide='ignore', over='ignore'):
        f0 = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
        f1 = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
    return f0 / (f0 + f1)


@dataclass(frozen=True)
class BoundaryCover:
    """
    Three-patch cover of (a, b)

    Patch 1 sits at the left end (shift +1), patch 2 at the right end
    (shift -1), patch 0 is the interior (no shift). zeta^1 equals 1 on
    (a, a + h*/2] and vanishes from a + 3h*/2 on; zeta^2 is its mirror.
    """

    a: float
    b: float
    chart_height: float = DEFAULT_CHART_HEIGHT

    def __post_init__(self):
        if self.chart_height <= 0:
            raise DomainTooSmall(f"Chart height must be positive, got {self.chart_height}")
        if self.b - self.a < 4.0 * self.chart_height:
            raise DomainTooSmall(
                f"Interval of length {self.b - self.a} is shorter than 4*h*={4 * self.chart_height}"
            )

    @property
    def interior_distance(self) -> float:
        """dist(U^0, complement of O)"""
        return 0.5 * self.chart_height

    def weights(self, x: np.ndarray) -> Dict[int, np.ndarray]:
        """Partition of unity {patch: zeta^patch(x)}"""
        x = np.asarray(x, dtype=float)
        m = 0.5 * self.chart_height
        left = 1.0 - smooth_step((x - self.a - m) / self.chart_height)
        right = 1.0 - smooth_step((self.b - x - m) / self.chart_height)
        return {0: 1.0 - left - right, 1: left, 2: right}

    def margin(self, eps: float) -> float:
        return min(self.interior_distance, 0.5 * eps, 0.25 * self.chart_height)


def boundary_margin(eps: float, domain: Tuple[float, float] = (0.0, 1.0),
                    chart_height: float = DEFAULT_CHART_HEIGHT) -> float:
    """
    w(eps) = min{dist(U^0, O^c), eps/2, h*/4}

    Args:
        eps: Shift scale
        domain: Interval (a, b)
        chart_height: Height h* of the boundary patches

    Returns:
        w(eps) > 0

    Raises:
        DomainTooSmall: if the interval is shorter than 4*h*
    """
    if not eps > 0:
        raise ParamError(f"eps must be positive, got {eps}")
    return BoundaryCover(domain[0], domain[1], chart_height).margin(eps)


def _translate(values: np.ndarray, k: int) -> np.ndarray:
    """out[c + k] = values[c]; entries leaving the array are dropped"""
    n = len(values)
    out = np.zeros_like(values)
    if abs(k) >= n:
        return out
    if k >= 0:
        out[k:] = values[:n - k]
    else:
        out[:n + k] = values[-k:]
    return out


def _cell_shift(grid: Grid, eps: float, direction: float) -> Tuple[int, float]:
    """Split the displacement -eps*direction into whole cells k and fraction r"""
    s = -direction * eps / grid.spacing
    nearest = round(s)
    if abs(s - nearest) < 1e-9:
        return int(nearest), 0.0
    k = int(np.floor(s))
    return k, s - k


def shift_measure(mu: RadonMeasure, eps: float,
                  chart_height: float = DEFAULT_CHART_HEIGHT) -> RadonMeasure:
    """
    mu_eps, defined through <mu_eps, eta> = <mu, eta_eps>

    Each patch piece zeta^j mu is translated by -eps*e^j; mass that leaves
    the interval is dropped. Cell densities move by conservative overlap
    (whole-cell shifts are exact).

    Args:
        mu: Measure
        eps: Shift scale

    Returns:
        Shifted measure
    """
    if not eps > 0:
        raise ParamError(f"eps must be positive, got {eps}")
    grid = mu.grid
    cover = BoundaryCover(grid.a, grid.b, chart_height)
    zeta_cells = cover.weights(grid.midpoints)

    density = np.zeros(grid.cells)
    for patch, direction in PATCH_SHIFTS.items():
        k, r = _cell_shift(grid, eps, direction)
        piece = zeta_cells[patch] * mu.density
        density += _translate((1.0 - r) * piece, k)
        if r > 0:
            density += _translate(r * piece, k + 1)

    atoms: List[Atom] = []
    for x, m in mu.atoms:
        zeta = cover.weights(np.array([x]))
        for patch, direction in PATCH_SHIFTS.items():
            weight = float(zeta[patch][0])
            target = x - eps * direction
            if weight > 0 and grid.a < target < grid.b:
                atoms.append((target, weight * m))
    return RadonMeasure(grid, density, _merge_atoms(atoms))


def shift_test_function(grid: Grid, eta: TestFunction, eps: float,
                        chart_height: float = DEFAULT_CHART_HEIGHT) -> TestFunction:
    """eta_eps(x) = sum_j zeta^j(x) * eta_bar(x - eps*e^j), eta_bar = eta extended by zero"""
    cover = BoundaryCover(grid.a, grid.b, chart_height)

    def shifted(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        zeta = cover.weights(x)
        total = np.zeros_like(x)
        for patch, direction in PATCH_SHIFTS.items():
            y = x - eps * direction
            inside = (y > grid.a) & (y < grid.b)
            values = np.where(inside, eta(np.where(inside, y, grid.a + 0.5 * grid.length)), 0.0)
            total = total + zeta[patch] * values
        return total

    return shifted


# ----------------------------------------------------------------------------
# Mollification
# ----------------------------------------------------------------------------

def bump(t: np.ndarray) -> np.ndarray:
    """Unnormalized kernel exp(-1/(1-t^2)) on |t| < 1"""
    t = np.asarray(t, dtype=float)
    inside = np.abs(t) < 1.0
    safe = np.where(inside, t, 0.0)
    return np.where(inside, np.exp(-1.0 / (1.0 - safe * safe)), 0.0)


@lru_cache(maxsize=64)
def discrete_kernel(spacing: float, delta: float) -> np.ndarray:
    """Symmetric cell weights of rho_delta, summing to 1 over the lattice"""
    if not delta > 0:
        raise ParamError(f"delta must be positive, got {delta}")
    reach = int(np.ceil(delta / spacing))
    offsets = np.arange(-reach, reach + 1)
    weights = bump(offsets * spacing / delta)
    weights = weights / weights.sum()
    weights.setflags(write=False)
    return weights


def _convolve_cells(values: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    reach = len(kernel) // 2
    return np.convolve(values, kernel, mode='full')[reach:reach + len(values)]


def _deposit_atom(grid: Grid, x: float, mass: float, delta: float) -> np.ndarray:
    """Cell densities of mass * rho_delta(. - x); lattice-normalized"""
    h = grid.spacing
    reach = int(np.ceil(delta / h)) + 1
    center = int(np.floor((x - grid.a) / h))
    cells = np.arange(center - reach, center + reach + 1)
    weights = bump((grid.a + (cells + 0.5) * h - x) / delta)
    out = np.zeros(grid.cells)
    total = weights.sum()
    if total <= 0:
        out[min(max(center, 0), grid.cells - 1)] = mass / h
        return out
    keep = (cells >= 0) & (cells < grid.cells)
    out[cells[keep]] = mass * weights[keep] / (total * h)
    return out


def _cells_to_nodes(cells: np.ndarray) -> np.ndarray:
    return 0.5 * (cells[:-1] + cells[1:])


def mollify_cells(mu: RadonMeasure, delta: float) -> np.ndarray:
    """Cell densities of rho_delta * mu_bar restricted to O"""
    kernel = discrete_kernel(mu.grid.spacing, delta)
    cells = _convolve_cells(np.asarray(mu.density), kernel)
    for x, m in mu.atoms:
        cells = cells + _deposit_atom(mu.grid, x, m, delta)
    return cells


def mollify(mu: RadonMeasure, delta: float) -> Field:
    """
    Grid sampling of rho_delta * mu_bar (zero extension, then convolution)

    Args:
        mu: Measure
        delta: Kernel radius

    Returns:
        Field on the interior nodes
    """
    return Field(mu.grid, _cells_to_nodes(mollify_cells(mu, delta)))


def mollify_test_function(grid: Grid, eta: TestFunction, delta: float) -> Field:
    """rho_delta * eta_bar sampled on the nodes (dual of mollify)"""
    kernel = discrete_kernel(grid.spacing, delta)
    cells = _convolve_cells(np.asarray(eta(grid.midpoints), dtype=float), kernel)
    return Field(grid, _cells_to_nodes(cells))


def smoothed_test_function(grid: Grid, eta: TestFunction, eps: float, delta: float,
                           chart_height: float = DEFAULT_CHART_HEIGHT) -> Field:
    """rho_delta * eta_eps on the nodes"""
    return mollify_test_function(grid, shift_test_function(grid, eta, eps, chart_height), delta)


def shift_mollify(mu: RadonMeasure, p: ShiftMollifyParams,
                  chart_height: float = DEFAULT_CHART_HEIGHT) -> Field:
    """
    Density of mu_{eps,delta} = ((rho_delta * mu_bar)|_O dx)_eps

    Args:
        mu: Measure
        p: Parameters with delta <= w(eps)/2

    Returns:
        Field on the interior nodes

    Raises:
        ParamError: if delta > w(eps)/2
    """
    w = boundary_margin(p.eps, (mu.grid.a, mu.grid.b), chart_height)
    if p.delta > 0.5 * w * (1 + 1e-12):
        raise ParamError(f"delta={p.delta} exceeds w(eps)/2={0.5 * w}")
    smooth = RadonMeasure(mu.grid, mollify_cells(mu, p.delta))
    shifted = shift_measure(smooth, p.eps, chart_height)
    return Field(mu.grid, _cells_to_nodes(shifted.density))


def approx_sequence(mu: RadonMeasure, n: int,
                    chart_height: float = DEFAULT_CHART_HEIGHT) -> Field:
    """
    n-th smooth approximation u_n = mu_{1/n, w(1/n)/2}

    Args:
        mu: Measure
        n: Level, n >= 1

    Returns:
        Field
    """
    if int(n) != n or n < 1:
        raise ParamError(f"n must be a positive integer, got {n}")
    params = ShiftMollifyParams.for_eps(1.0 / n, mu.grid, chart_height=chart_height)
    logger.debug("approx_sequence n=%d eps=%.4g delta=%.4g", n, params.eps, params.delta)
    return shift_mollify(mu, params, chart_height)


def sup_norm_bound(mu: RadonMeasure, delta: float) -> float:
    """Patch count * sup|rho_delta| * tv_norm(mu) on the grid"""
    kernel = discrete_kernel(mu.grid.spacing, delta)
    return len(PATCH_SHIFTS) * float(kernel.max()) / mu.grid.spacing * tv_norm(mu)


if __name__ == "__main__":
    grid = Grid(0.0, 1.0, 1024)
    psi1 = Potential.builtin('psi1')
    f = EnergyFunctional(psi1)
    mu = RadonMeasure(grid, atoms=[(0.5, 1.0)])
    for n in (16, 64, 256):
        u = approx_sequence(mu, n)
        print(f"n={n:4d}  energy(u_n)={energy(f, u):.6f}  target={energy(f, mu):.6f}")
