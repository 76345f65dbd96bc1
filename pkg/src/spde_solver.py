"""
SPDE Solver Module

Time stepping for the regularized stochastic porous-medium equation

    dX = eps*Lap(X) dt + Lap(phi^eps(X)) dt + B(X) dW

on a Dirichlet grid, producing Monte-Carlo path ensembles together with
the running statistics E sup ||X||^2_{L2}, eps*E int ||X||^2_{H1_0} and
E int phi^eps(X) dr.

Two schemes:
- IMPLICIT_MONOTONE: implicit in the whole drift, noise at the left
  endpoint. The step solves a strongly monotone equation by damped
  semismooth Newton with a fixed-point fallback.
- SEMI_IMPLICIT: implicit viscosity, explicit phi^eps (needs dt <= eps*h^2/4).
"""

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import lru_cache
from typing import Callable, List, Optional, Tuple

import numpy as np
from scipy.linalg import cho_solve_banded, cholesky_banded, solve_banded
from tqdm import tqdm

from .convex_analysis import (Potential, RegularizedPotential, eval_psi, moreau_array,
                              yosida_array, yosida_derivative_array)
from .discrete_spaces import Field, Grid, get_laplacian
from .errors import ConfigError, ConfigMismatch, NewtonDivergence, SolverError, StabilityViolation
from .noise import NoiseModel, WienerIncrement, noise_values, path_stream, sample_increment
from .utils import batch_means

logger = logging.getLogger(__name__)

MAX_SNAPSHOTS = 256
MAX_BACKTRACKS = 40


class Scheme(str, Enum):
    IMPLICIT_MONOTONE = 'implicit_monotone'
    SEMI_IMPLICIT = 'semi_implicit'


@dataclass(frozen=True)
class SolverConfig:
    """Regularization, time stepping and Monte-Carlo controls"""

    eps: float
    dt: float
    t_end: float
    grid: Grid
    potential: Potential
    noise: NoiseModel = field(default_factory=NoiseModel)
    scheme: Scheme = Scheme.IMPLICIT_MONOTONE
    newton_tol: float = 1e-10
    newton_max_iter: int = 200
    paths: int = 1
    snapshot_every: Optional[int] = None
    gronwall_K: Optional[float] = None
    threads: int = field(default=1, compare=False)

    def __post_init__(self):
        if not self.eps > 0:
            raise ConfigError(f"eps must be positive, got {self.eps}")
        if not self.dt > 0 or not self.t_end > 0:
            raise ConfigError(f"dt and t_end must be positive, got {self.dt}, {self.t_end}")
        if self.dt > self.t_end:
            raise ConfigError(f"dt={self.dt} exceeds t_end={self.t_end}")
        if self.paths < 1:
            raise ConfigError(f"paths must be >= 1, got {self.paths}")
        if self.newton_tol <= 0 or self.newton_max_iter < 1:
            raise ConfigError("newton_tol must be positive and newton_max_iter >= 1")
        if self.noise.modes > self.grid.n_nodes:
            raise ConfigError(
                f"noise.modes={self.noise.modes} exceeds the {self.grid.n_nodes} grid modes"
            )
        if self.snapshot_every is not None and self.snapshot_every < 1:
            raise ConfigError("snapshot_every must be >= 1")
        if self.threads < 0:
            raise ConfigError("threads must be >= 0 (0 = auto)")

    @property
    def regularized(self) -> RegularizedPotential:
        return RegularizedPotential(self.potential, self.eps)

    @property
    def n_steps(self) -> int:
        return max(1, int(np.ceil(self.t_end / self.dt - 1e-9)))

    @property
    def cadence(self) -> int:
        if self.snapshot_every is not None:
            return self.snapshot_every
        return max(1, self.n_steps // MAX_SNAPSHOTS)

    @property
    def snapshot_steps(self) -> np.ndarray:
        steps = list(range(0, self.n_steps + 1, self.cadence))
        if steps[-1] != self.n_steps:
            steps.append(self.n_steps)
        return np.array(steps)

    @property
    def times(self) -> np.ndarray:
        return self.snapshot_steps * self.dt

    @property
    def K(self) -> float:
        """Weight rate in e^{-Kt}; default twice the squared noise Lipschitz constant"""
        if self.gronwall_K is not None:
            return self.gronwall_K
        return 2.0 * self.noise.lipschitz_constant ** 2

    def stability_limit(self) -> float:
        return self.eps * self.grid.spacing ** 2 / 4.0

    def validate(self) -> None:
        """Raise StabilityViolation when the semi-implicit bound is broken"""
        if self.scheme == Scheme.SEMI_IMPLICIT and self.dt > self.stability_limit():
            raise StabilityViolation(
                f"SEMI_IMPLICIT needs dt <= eps*h^2/4 = {self.stability_limit():.3e}, got dt={self.dt}"
            )

    def with_eps(self, eps: float) -> 'SolverConfig':
        return replace(self, eps=eps)

    def to_record(self) -> dict:
        return {
            'eps': self.eps,
            'dt': self.dt,
            't_end': self.t_end,
            'grid': self.grid.to_record(),
            'potential': self.potential.to_record(),
            'noise': self.noise.to_record(),
            'scheme': self.scheme.value,
            'newton_tol': self.newton_tol,
            'newton_max_iter': self.newton_max_iter,
            'paths': self.paths,
            'snapshot_every': self.cadence,
            'gronwall_K': self.K,
        }


@dataclass
class PathEnsemble:
    """
    Monte-Carlo trajectory bundle

    Arrays are indexed (path, snapshot, node). Aborted paths keep NaN
    entries from the failing step on and are excluded from statistics.
    """

    config: SolverConfig
    x0: Field
    times: np.ndarray
    snapshots: np.ndarray
    sup_l2_sq: np.ndarray
    int_h10_sq: np.ndarray
    int_energy_eps: np.ndarray
    cum_energy: np.ndarray
    aborted: np.ndarray
    messages: List[str]
    drift_increments: Optional[np.ndarray] = None
    noise_increments: Optional[np.ndarray] = None

    @property
    def n_paths(self) -> int:
        return self.snapshots.shape[0]

    @property
    def valid(self) -> np.ndarray:
        return ~self.aborted

    @property
    def grid(self) -> Grid:
        return self.config.grid

    def snapshot_field(self, path: int, k: int) -> Field:
        return Field(self.grid, self.snapshots[path, k])

    def any_aborted(self) -> bool:
        return bool(np.any(self.aborted))


@dataclass
class PairedEnsemble:
    """Two ensembles driven by identical increments path by path"""

    first: PathEnsemble
    second: PathEnsemble


@dataclass
class EnergyStats:
    """Monte-Carlo estimates (mean, standard error) of the regularity statistics"""

    sup_l2_sq: Tuple[float, float]
    eps_int_h10_sq: Tuple[float, float]
    int_energy_eps: Tuple[float, float]
    combined: Tuple[float, float]
    n_paths: int
    n_aborted: int

    def to_dict(self) -> dict:
        out = {'n_paths': self.n_paths, 'n_aborted': self.n_aborted}
        for name in ('sup_l2_sq', 'eps_int_h10_sq', 'int_energy_eps', 'combined'):
            mean, se = getattr(self, name)
            out[name] = mean
            out[f"{name}_stderr"] = se
        return out


# ----------------------------------------------------------------------------
# Single step
# ----------------------------------------------------------------------------

def _hminus1_norm_values(grid: Grid, r: np.ndarray) -> float:
    L = get_laplacian(grid)
    return float(np.sqrt(max(grid.spacing * np.dot(r, L.solve_negative(r)), 0.0)))


def _neg_lap(grid: Grid, u: np.ndarray) -> np.ndarray:
    return -get_laplacian(grid).apply_values(u)


def drift_values(cfg: SolverConfig, y: np.ndarray) -> np.ndarray:
    """eps*Lap(y) + Lap(phi^eps(y)) on raw values"""
    return -_neg_lap(cfg.grid, cfg.eps * y + yosida_array(cfg.regularized, y))


def drift(cfg: SolverConfig, y: Field) -> Field:
    """Drift G = eps*Lap(Y) + Lap(phi^eps(Y))"""
    return Field(y.grid, drift_values(cfg, y.values))


def _jacobian_banded(cfg: SolverConfig, slope: np.ndarray) -> np.ndarray:
    """Banded form of I + dt * (-L) * diag(slope)"""
    h2 = cfg.grid.spacing ** 2
    n = len(slope)
    ab = np.zeros((3, n))
    ab[0, 1:] = -cfg.dt / h2 * slope[1:]
    ab[1, :] = 1.0 + 2.0 * cfg.dt / h2 * slope
    ab[2, :-1] = -cfg.dt / h2 * slope[:-1]
    return ab


@lru_cache(maxsize=32)
def _viscous_factor(grid: Grid, coefficient: float) -> np.ndarray:
    """Cholesky factor of I + coefficient * (-L)"""
    h2 = grid.spacing ** 2
    n = grid.n_nodes
    banded = np.empty((2, n))
    banded[0, 0] = 0.0
    banded[0, 1:] = -coefficient / h2
    banded[1, :] = 1.0 + 2.0 * coefficient / h2
    return cholesky_banded(banded, lower=False)


def implicit_solve(cfg: SolverConfig, rhs: np.ndarray,
                   guess: Optional[np.ndarray] = None) -> Tuple[np.ndarray, List[float]]:
    """
    Solve y + dt*(-L)(eps*y + phi^eps(y)) = rhs

    Damped semismooth Newton; each accepted iterate strictly lowers the
    H^-1 residual. When no Newton step decreases it, a step preconditioned
    by (I + dt*(eps + 1/eps)(-L))^-1 is tried before giving up.

    Args:
        cfg: Solver configuration
        rhs: Right-hand side values
        guess: Starting iterate (default rhs)

    Returns:
        (solution, residual history in H^-1 norm)

    Raises:
        NewtonDivergence: if the tolerance is not reached
    """
    grid = cfg.grid
    rp = cfg.regularized
    y = np.array(rhs if guess is None else guess, dtype=float)

    def residual(v: np.ndarray) -> np.ndarray:
        return v - rhs + cfg.dt * _neg_lap(grid, cfg.eps * v + yosida_array(rp, v))

    F = residual(y)
    norm = _hminus1_norm_values(grid, F)
    history = [norm]
    precond = None

    for _ in range(cfg.newton_max_iter):
        if norm <= cfg.newton_tol:
            return y, history

        slope = cfg.eps + np.asarray(yosida_derivative_array(rp, y))
        direction = solve_banded((1, 1), _jacobian_banded(cfg, slope), -F)
        accepted = _backtrack(grid, residual, y, direction, norm)
        if accepted is None:
            if precond is None:
                precond = _viscous_factor(grid, cfg.dt * (cfg.eps + 1.0 / cfg.eps))
            direction = -cho_solve_banded((precond, False), F)
            accepted = _backtrack(grid, residual, y, direction, norm)
        if accepted is None:
            raise NewtonDivergence(
                f"No descent step at residual {norm:.3e} (tol {cfg.newton_tol:.1e})", history
            )
        y, F, norm = accepted
        history.append(norm)

    if norm <= cfg.newton_tol:
        return y, history
    raise NewtonDivergence(
        f"Residual {norm:.3e} above tol {cfg.newton_tol:.1e} after {cfg.newton_max_iter} iterations",
        history,
    )


def _backtrack(grid: Grid, residual: Callable[[np.ndarray], np.ndarray], y: np.ndarray,
               direction: np.ndarray, norm: float):
    step = 1.0
    for _ in range(MAX_BACKTRACKS):
        candidate = y + step * direction
        F = residual(candidate)
        new_norm = _hminus1_norm_values(grid, F)
        if new_norm < norm:
            return candidate, F, new_norm
        step *= 0.5
    return None


def _advance(cfg: SolverConfig, x: np.ndarray, gaussians: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """One step on raw values; returns (new state, noise increment)"""
    noise = noise_values(cfg.noise, cfg.grid, x, gaussians)
    if cfg.scheme == Scheme.SEMI_IMPLICIT:
        rhs = x - cfg.dt * _neg_lap(cfg.grid, yosida_array(cfg.regularized, x)) + noise
        factor = _viscous_factor(cfg.grid, cfg.dt * cfg.eps)
        return cho_solve_banded((factor, False), rhs), noise
    y, _ = implicit_solve(cfg, x + noise)
    return y, noise


def step(cfg: SolverConfig, x: Field, t: float, dw: WienerIncrement) -> Field:
    """
    Advance one time step

    Args:
        cfg: Solver configuration
        x: State at time t
        t: Current time
        dw: Wiener increment over [t, t + dt]

    Returns:
        State at t + dt

    Raises:
        StabilityViolation: semi-implicit bound broken
        NewtonDivergence: implicit solve failed
    """
    cfg.validate()
    if x.grid != cfg.grid:
        raise ConfigError("Field grid does not match the solver grid")
    y, _ = _advance(cfg, x.values, np.asarray(dw.gaussians))
    return Field(cfg.grid, y)


# ----------------------------------------------------------------------------
# Path loop
# ----------------------------------------------------------------------------

Advance = Callable[[np.ndarray, np.ndarray], Tuple[np.ndarray, np.ndarray]]


@dataclass
class _PathRecord:
    snapshots: np.ndarray
    sup_l2_sq: float
    int_h10_sq: float
    int_energy_eps: float
    cum_energy: np.ndarray
    aborted: bool = False
    message: str = ''
    drift_increments: Optional[np.ndarray] = None
    noise_increments: Optional[np.ndarray] = None


def _run_path(cfg: SolverConfig, x0: np.ndarray, path: int, advance: Advance,
              record_increments: bool) -> _PathRecord:
    grid = cfg.grid
    h = grid.spacing
    rp = cfg.regularized
    snap_steps = cfg.snapshot_steps
    n_snap = len(snap_steps)
    n = grid.n_nodes

    snapshots = np.full((n_snap, n), np.nan)
    cum_energy = np.full(n_snap, np.nan)
    drift_inc = np.zeros((n_snap - 1, n)) if record_increments else None
    noise_inc = np.zeros((n_snap - 1, n)) if record_increments else None

    x = np.array(x0, dtype=float)
    snapshots[0] = x
    cum_energy[0] = 0.0
    sup_l2 = h * float(np.dot(x, x))
    int_h10 = 0.0
    int_energy_eps = 0.0
    int_energy = 0.0
    stream = path_stream(cfg.noise, path)
    next_snap = 1

    try:
        for k in range(cfg.n_steps):
            grad = np.diff(np.concatenate([[0.0], x, [0.0]])) / h
            int_h10 += cfg.dt * h * float(np.dot(grad, grad))
            int_energy_eps += cfg.dt * h * float(np.sum(moreau_array(rp, x)))

            gaussians = sample_increment(cfg.noise, cfg.dt, stream).gaussians
            y, noise = advance(x, gaussians)
            if not np.all(np.isfinite(y)):
                raise SolverError(f"Non-finite state at step {k + 1}")
            if record_increments:
                drift_inc[next_snap - 1] += y - x - noise
                noise_inc[next_snap - 1] += noise
            x = y
            sup_l2 = max(sup_l2, h * float(np.dot(x, x)))
            # right endpoint: the implicit drift is evaluated at the new state
            int_energy += cfg.dt * h * float(np.sum(eval_psi(cfg.potential, x)))

            if k + 1 == snap_steps[next_snap]:
                snapshots[next_snap] = x
                cum_energy[next_snap] = int_energy
                next_snap += 1
    except SolverError as e:
        logger.warning("Path %d aborted: %s", path, e)
        return _PathRecord(snapshots, np.nan, np.nan, np.nan, cum_energy, aborted=True,
                           message=f"{type(e).__name__}: {e}",
                           drift_increments=drift_inc, noise_increments=noise_inc)

    return _PathRecord(snapshots, sup_l2, int_h10, int_energy_eps, cum_energy,
                       drift_increments=drift_inc, noise_increments=noise_inc)


def _implicit_advance(cfg: SolverConfig) -> Advance:
    return lambda x, gaussians: _advance(cfg, x, gaussians)


def prescribed_advance(cfg: SolverConfig, g: np.ndarray) -> Advance:
    """Z_{n+1} = Z_n + dt*G + B(Z_n) dW_n with a fixed drift G"""
    g = np.asarray(g, dtype=float)

    def advance(x: np.ndarray, gaussians: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        noise = noise_values(cfg.noise, cfg.grid, x, gaussians)
        return x + cfg.dt * g + noise, noise

    return advance


def run_ensemble(cfg: SolverConfig, x0: Field, advance: Advance,
                 record_increments: bool = False, progress: bool = False) -> PathEnsemble:
    """Run cfg.paths paths of an arbitrary one-step map"""
    if x0.grid != cfg.grid:
        raise ConfigError("Initial field grid does not match the solver grid")
    workers = cfg.threads or os.cpu_count() or 1
    x0_values = np.asarray(x0.values)

    def job(path: int) -> _PathRecord:
        return _run_path(cfg, x0_values, path, advance, record_increments)

    logger.info("Running %d paths (%d steps, eps=%g, scheme=%s, workers=%d)",
                cfg.paths, cfg.n_steps, cfg.eps, cfg.scheme.value, workers)
    with tqdm(total=cfg.paths, desc="paths", disable=not progress) as bar:
        if workers == 1:
            records = []
            for path in range(cfg.paths):
                records.append(job(path))
                bar.update(1)
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                records = []
                for record in pool.map(job, range(cfg.paths)):
                    records.append(record)
                    bar.update(1)

    ens = PathEnsemble(
        config=cfg,
        x0=x0,
        times=cfg.times,
        snapshots=np.stack([r.snapshots for r in records]),
        sup_l2_sq=np.array([r.sup_l2_sq for r in records]),
        int_h10_sq=np.array([r.int_h10_sq for r in records]),
        int_energy_eps=np.array([r.int_energy_eps for r in records]),
        cum_energy=np.stack([r.cum_energy for r in records]),
        aborted=np.array([r.aborted for r in records]),
        messages=[r.message for r in records],
        drift_increments=(np.stack([r.drift_increments for r in records])
                          if record_increments else None),
        noise_increments=(np.stack([r.noise_increments for r in records])
                          if record_increments else None),
    )
    if ens.any_aborted():
        logger.warning("%d of %d paths aborted", int(ens.aborted.sum()), ens.n_paths)
    return ens


def simulate(cfg: SolverConfig, x0: Field, record_increments: bool = False,
             progress: bool = False) -> PathEnsemble:
    """
    Run cfg.paths independent paths of the regularized equation from x0

    Args:
        cfg: Solver configuration (validated first)
        x0: Initial state
        record_increments: Keep per-interval drift and noise integrals
        progress: Show a tqdm bar over paths

    Returns:
        PathEnsemble; failing paths are flagged, not raised
    """
    cfg.validate()
    return run_ensemble(cfg, x0, _implicit_advance(cfg), record_increments, progress)


def _check_coupling(cfg_a: SolverConfig, cfg_b: SolverConfig) -> None:
    for name in ('grid', 'dt', 't_end', 'noise', 'paths'):
        if getattr(cfg_a, name) != getattr(cfg_b, name):
            raise ConfigMismatch(f"Coupled runs differ in {name}")
    if cfg_a.cadence != cfg_b.cadence:
        raise ConfigMismatch("Coupled runs differ in snapshot cadence")


def coupled_simulate(cfg_a: SolverConfig, cfg_b: SolverConfig, x0_a: Field, x0_b: Field,
                     progress: bool = False) -> PairedEnsemble:
    """
    Two systems driven by the same Wiener increments path by path

    Args:
        cfg_a, cfg_b: Configurations; only eps, scheme and Newton controls may differ
        x0_a, x0_b: Initial states

    Returns:
        PairedEnsemble

    Raises:
        ConfigMismatch: grids, time steps, noise or path counts differ
    """
    _check_coupling(cfg_a, cfg_b)
    return PairedEnsemble(simulate(cfg_a, x0_a, progress=progress),
                          simulate(cfg_b, x0_b, progress=progress))


def energy_stats(ens: PathEnsemble) -> EnergyStats:
    """
    Regularity statistics with batch-means standard errors

    Returns:
        EnergyStats with E sup ||X||^2_{L2}, eps*E int ||X||^2_{H1_0},
        E int phi^eps(X) dr and the sum of the first two
    """
    valid = ens.valid
    eps = ens.config.eps
    sup = ens.sup_l2_sq[valid]
    h10 = eps * ens.int_h10_sq[valid]
    phi = ens.int_energy_eps[valid]

    def stat(values: np.ndarray) -> Tuple[float, float]:
        mean, se = batch_means(values)
        return float(mean), float(se)

    return EnergyStats(
        sup_l2_sq=stat(sup),
        eps_int_h10_sq=stat(h10),
        int_energy_eps=stat(phi),
        combined=stat(sup + h10),
        n_paths=int(valid.sum()),
        n_aborted=int((~valid).sum()),
    )
