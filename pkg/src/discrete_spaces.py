"""
Discrete Spaces Module

Uniform 1D grids with homogeneous Dirichlet boundary and the function
spaces built on them:
- Field: values at the interior nodes (boundary values are zero)
- DirichletLaplacian: second-difference operator with a cached banded
  Cholesky factorization of -L
- L2, H1_0 and H^-1 norms and pairings, discrete sine modes
"""

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Dict, Iterable, Tuple, Union

import numpy as np
from scipy.linalg import cho_solve_banded, cholesky_banded

from .errors import GridMismatch, ModeOutOfRange, ParamError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Grid:
    """Uniform grid on (a, b) with N cells and N-1 interior nodes"""

    a: float = 0.0
    b: float = 1.0
    cells: int = 1024

    def __post_init__(self):
        if not self.b > self.a:
            raise ParamError(f"Grid needs a < b, got ({self.a}, {self.b})")
        if int(self.cells) != self.cells or self.cells < 4:
            raise ParamError(f"Grid needs at least 4 cells, got {self.cells}")

    @property
    def length(self) -> float:
        return self.b - self.a

    @property
    def spacing(self) -> float:
        return (self.b - self.a) / self.cells

    @property
    def n_nodes(self) -> int:
        return self.cells - 1

    @property
    def nodes(self) -> np.ndarray:
        """Interior nodes x_i = a + i*h, i = 1..N-1"""
        return self.a + self.spacing * np.arange(1, self.cells)

    @property
    def midpoints(self) -> np.ndarray:
        """Cell midpoints, one per cell"""
        return self.a + self.spacing * (np.arange(self.cells) + 0.5)

    def to_record(self) -> Dict:
        return {'a': self.a, 'b': self.b, 'cells': self.cells}

    @classmethod
    def from_record(cls, record: Dict) -> 'Grid':
        return cls(a=float(record.get('a', 0.0)), b=float(record.get('b', 1.0)),
                   cells=int(record.get('cells', 1024)))


class Field:
    """Grid function with zero Dirichlet boundary"""

    __slots__ = ('grid', 'values')

    def __init__(self, grid: Grid, values: Union[np.ndarray, Iterable[float]]):
        arr = np.array(values, dtype=float)
        if arr.shape != (grid.n_nodes,):
            raise GridMismatch(
                f"Field needs {grid.n_nodes} interior values, got shape {arr.shape}"
            )
        arr.setflags(write=False)
        object.__setattr__(self, 'grid', grid)
        object.__setattr__(self, 'values', arr)

    def __setattr__(self, name, value):
        raise AttributeError("Field is immutable")

    @classmethod
    def zeros(cls, grid: Grid) -> 'Field':
        return cls(grid, np.zeros(grid.n_nodes))

    @classmethod
    def from_function(cls, grid: Grid, func: Callable[[np.ndarray], np.ndarray]) -> 'Field':
        return cls(grid, func(grid.nodes))

    def _check(self, other: 'Field') -> None:
        if self.grid != other.grid:
            raise GridMismatch(f"Grid {self.grid} does not match {other.grid}")

    def __add__(self, other: 'Field') -> 'Field':
        self._check(other)
        return Field(self.grid, self.values + other.values)

    def __sub__(self, other: 'Field') -> 'Field':
        self._check(other)
        return Field(self.grid, self.values - other.values)

    def __mul__(self, scalar: float) -> 'Field':
        return Field(self.grid, self.values * float(scalar))

    __rmul__ = __mul__

    def __truediv__(self, scalar: float) -> 'Field':
        return Field(self.grid, self.values / float(scalar))

    def __neg__(self) -> 'Field':
        return Field(self.grid, -self.values)

    def __repr__(self) -> str:
        return f"Field(cells={self.grid.cells}, max|u|={np.max(np.abs(self.values)):.4g})"

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))

    def to_record(self) -> Dict:
        return {'grid': self.grid.to_record(), 'values': self.values.tolist()}

    @classmethod
    def from_record(cls, record: Dict) -> 'Field':
        return cls(Grid.from_record(record['grid']), record['values'])


class DirichletLaplacian:
    """
    Discrete Laplacian L with zero boundary values

    Stores the banded Cholesky factor of A = -L (tridiagonal, entries
    2/h^2 on the diagonal and -1/h^2 off it).
    """

    def __init__(self, grid: Grid):
        self.grid = grid
        n = grid.n_nodes
        h2 = grid.spacing ** 2
        banded = np.empty((2, n))
        banded[0, 0] = 0.0
        banded[0, 1:] = -1.0 / h2
        banded[1, :] = 2.0 / h2
        self.banded = banded
        self.factor = cholesky_banded(banded, lower=False)
        self.banded.setflags(write=False)
        self.factor.setflags(write=False)

    def apply_values(self, u: np.ndarray) -> np.ndarray:
        """L u for raw value arrays (last axis = nodes)"""
        h2 = self.grid.spacing ** 2
        out = -2.0 * u
        out[..., 1:] += u[..., :-1]
        out[..., :-1] += u[..., 1:]
        return out / h2

    def solve_negative(self, f: np.ndarray) -> np.ndarray:
        """(-L)^-1 f for a value array (or columns of a 2D array)"""
        return cho_solve_banded((self.factor, False), f)

    def _check(self, u: Field) -> None:
        if u.grid != self.grid:
            raise GridMismatch(f"Laplacian on {self.grid} applied to field on {u.grid}")


@lru_cache(maxsize=32)
def get_laplacian(grid: Grid) -> DirichletLaplacian:
    """Shared, factorized Laplacian for a grid"""
    logger.debug("Factorizing Dirichlet Laplacian on %d interior nodes", grid.n_nodes)
    return DirichletLaplacian(grid)


def laplacian_apply(L: DirichletLaplacian, u: Field) -> Field:
    L._check(u)
    return Field(u.grid, L.apply_values(u.values))


def inv_laplacian(L: DirichletLaplacian, f: Field) -> Field:
    """Solve L u = f with zero boundary values"""
    L._check(f)
    return Field(f.grid, -L.solve_negative(f.values))


def _same_grid(u: Field, v: Field) -> None:
    if u.grid != v.grid:
        raise GridMismatch(f"Grid {u.grid} does not match {v.grid}")


def l2_inner(u: Field, v: Field) -> float:
    _same_grid(u, v)
    return float(u.grid.spacing * np.dot(u.values, v.values))


def l2_norm(u: Field) -> float:
    return float(np.sqrt(u.grid.spacing * np.dot(u.values, u.values)))


def h10_norm(u: Field) -> float:
    """Forward-difference gradient norm with zero padding at both ends"""
    padded = np.concatenate([[0.0], u.values, [0.0]])
    grad = np.diff(padded) / u.grid.spacing
    return float(np.sqrt(u.grid.spacing * np.dot(grad, grad)))


def hminus1_inner(u: Field, v: Field) -> float:
    """
    H^-1 inner product h * sum_i u_i ((-L)^-1 v)_i

    Args:
        u: First field
        v: Second field

    Returns:
        <u, v>_{H^-1}
    """
    _same_grid(u, v)
    L = get_laplacian(u.grid)
    return float(u.grid.spacing * np.dot(u.values, L.solve_negative(v.values)))


def hminus1_norm(u: Field) -> float:
    return float(np.sqrt(max(hminus1_inner(u, u), 0.0)))


def hminus1_norm_sq_values(grid: Grid, values: np.ndarray) -> np.ndarray:
    """Squared H^-1 norms of the rows of a (paths, nodes) array"""
    L = get_laplacian(grid)
    values = np.atleast_2d(values)
    solved = L.solve_negative(values.T).T
    return grid.spacing * np.einsum('ij,ij->i', values, solved)


def eigenvalue(grid: Grid, k: int) -> float:
    """k-th eigenvalue of -L: (4/h^2) sin^2(k*pi*h / (2*length))"""
    h = grid.spacing
    return float(4.0 / h ** 2 * np.sin(k * np.pi * h / (2.0 * grid.length)) ** 2)


def poincare_constant(grid: Grid) -> float:
    return float(1.0 / np.sqrt(eigenvalue(grid, 1)))


def sine_mode(grid: Grid, k: int) -> Field:
    """
    k-th discrete sine mode normalized to unit H^-1 norm

    Args:
        grid: Grid
        k: Mode index, 1 <= k <= N-1

    Returns:
        Field

    Raises:
        ModeOutOfRange: if k is outside 1..N-1
    """
    if not 1 <= k <= grid.n_nodes:
        raise ModeOutOfRange(f"Mode {k} not in 1..{grid.n_nodes}")
    shape = np.sin(k * np.pi * (grid.nodes - grid.a) / grid.length)
    # ||shape||^2_{L2} = length / 2 exactly on the grid
    scale = np.sqrt(2.0 * eigenvalue(grid, k) / grid.length)
    return Field(grid, scale * shape)


@lru_cache(maxsize=32)
def sine_mode_matrix(grid: Grid, modes: int) -> np.ndarray:
    """Rows are sine_mode(grid, 1..modes) values"""
    matrix = np.vstack([sine_mode(grid, k).values for k in range(1, modes + 1)])
    matrix.setflags(write=False)
    return matrix


def hat_weights(grid: Grid, x: float) -> Tuple[np.ndarray, np.ndarray]:
    """Node indices and linear-hat weights of a point (boundary hats dropped)"""
    s = (x - grid.a) / grid.spacing
    left = int(np.floor(s))
    frac = s - left
    indices, weights = [], []
    for node, w in ((left, 1.0 - frac), (left + 1, frac)):
        if 1 <= node <= grid.n_nodes and w > 0:
            indices.append(node - 1)
            weights.append(w)
    return np.array(indices, dtype=int), np.array(weights)


def hat_interpolate(grid: Grid, atoms: Iterable[Tuple[float, float]]) -> Field:
    """Riesz representative of sum_j m_j delta_{x_j} under the discrete L2 pairing"""
    values = np.zeros(grid.n_nodes)
    for x, m in atoms:
        idx, w = hat_weights(grid, x)
        values[idx] += m * w / grid.spacing
    return Field(grid, values)


if __name__ == "__main__":
    grid = Grid(0.0, 1.0, 1024)
    u = Field.from_function(grid, lambda x: np.sin(np.pi * x))
    print(f"||sin||^2_H-1 = {hminus1_norm(u) ** 2:.6f} (1/(2 pi^2) = {1 / (2 * np.pi ** 2):.6f})")
    print(f"||sin||^2_H10 = {h10_norm(u) ** 2:.6f} (pi^2/2 = {np.pi ** 2 / 2:.6f})")
    print(f"Poincare constant = {poincare_constant(grid):.6f}")
