"""
SVI Verifier Module

Monte-Carlo estimates of the stochastic variational inequality

    E||X_t - Z_t||^2 + 2E int_0^t phi(X_r) dr
        <= E||x_0 - Z_0||^2 + 2E int_0^t phi(Z_r) dr
           - 2E int_0^t <G_r, X_r - Z_r> dr + C E int_0^t ||X_r - Z_r||^2 dr

(all norms and pairings in H^-1) against admissible test processes
dZ = G dt + B(Z) dW, plus the stability and eps-convergence statistics
that the uniqueness argument predicts.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from sklearn.linear_model import LinearRegression

from .convex_analysis import RegularizedPotential, eval_psi, yosida_array
from .discrete_spaces import (Field, get_laplacian, hminus1_inner, hminus1_norm_sq_values,
                              l2_norm)
from .errors import AlignmentError, ConfigError, SolverError
from .measures import EnergyFunctional, RadonMeasure, approx_sequence, energy, energy_eps
from .spde_solver import (PairedEnsemble, PathEnsemble, SolverConfig, energy_stats,
                          prescribed_advance, run_ensemble, simulate)
from .utils import batch_means, format_report, safe_divide, weighted_cumulative

logger = logging.getLogger(__name__)

MARGIN_ATOL = 1e-9
CONTRACTION_ATOL = 1e-8
RATIO_BAND = (0.3, 0.8)
MEASURE_LEVELS = (16, 64, 256)
REGULARITY_VARIATION = 0.5
GRONWALL_CONSISTENCY = 1.5
REGULARITY_COLUMNS = ['eps', 'combined', 'combined_stderr', 'sup_l2_sq', 'eps_int_h10_sq',
                      'n_paths']


class TestProcessKind(str, Enum):
    __test__ = False

    ZERO = 'zero'
    CONSTANT_G = 'constant_g'
    REGULARIZED_SOLUTION = 'regularized_solution'


@dataclass
class TestProcess:
    """
    Admissible test pair (Z, G)

    drift[p, k] is the mean drift over the k-th snapshot interval, so that
    Z_{k+1} - Z_k = dt_k * drift[p, k] + noise increment.
    """

    __test__ = False

    kind: TestProcessKind
    z0: Field
    ensemble: PathEnsemble
    drift: np.ndarray
    g_field: Optional[Field] = None
    inner_eps: Optional[float] = None

    @property
    def config(self) -> SolverConfig:
        return self.ensemble.config

    def identity_residual(self) -> float:
        """Largest |Z_{k+1} - Z_k - int G - int B dW| over valid paths and intervals"""
        ens = self.ensemble
        if ens.noise_increments is None:
            raise ConfigError("Test process was built without recorded increments")
        valid = ens.valid
        dts = np.diff(ens.times)[None, :, None]
        jumps = np.diff(ens.snapshots[valid], axis=1)
        residual = jumps - dts * self.drift[valid] - ens.noise_increments[valid]
        return float(np.max(np.abs(residual))) if residual.size else 0.0


@dataclass
class SviReport:
    """Both sides of the inequality per snapshot time"""

    t_grid: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    margin: np.ndarray
    stderr: np.ndarray
    slack: np.ndarray
    constant_used: float
    kind: TestProcessKind
    n_paths: int
    eps: float

    def passed(self, n_sigma: float = 2.0) -> bool:
        return bool(np.all(self.margin >= -n_sigma * self.stderr - MARGIN_ATOL))

    @property
    def verdict(self) -> str:
        return 'PASS' if self.passed() else 'FAIL'

    @property
    def worst_index(self) -> int:
        scale = np.where(self.stderr > 0, self.stderr, 1.0)
        return int(np.argmin(self.margin / scale))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            't': self.t_grid,
            'lhs': self.lhs,
            'rhs': self.rhs,
            'margin': self.margin,
            'stderr': self.stderr,
        })

    def summary(self) -> str:
        k = self.worst_index
        return format_report(f"SVI MARGIN: {self.kind.value.upper()}", [
            ('Candidate eps', self.eps),
            ('Paths used', self.n_paths),
            ('Constant C', self.constant_used),
            ('Final finite-eps slack', float(self.slack[-1])),
            ('Worst time', float(self.t_grid[k])),
            ('Worst margin', float(self.margin[k])),
            ('Stderr at worst time', float(self.stderr[k])),
            ('Verdict (margin >= -2 stderr)', self.verdict),
        ])


@dataclass
class ContractionStat:
    """E||X_t - Y_t||^2_{H^-1} over time for a coupled pair"""

    times: np.ndarray
    mean_sq: np.ndarray
    stderr: np.ndarray
    initial: float
    sup: float
    ratio: float
    K: float
    weighted_nonincreasing: bool
    pathwise_nonincreasing: bool

    def within_gronwall(self, K: Optional[float] = None) -> bool:
        """ratio <= exp(K T)"""
        rate = self.K if K is None else K
        return self.ratio <= np.exp(rate * self.times[-1]) * (1 + 1e-8) + 1e-12

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({'t': self.times, 'mean_sq': self.mean_sq, 'stderr': self.stderr})


@dataclass
class EpsRateTable:
    """Paired statistic D(eps) along an eps ladder"""

    frame: pd.DataFrame
    monotone: bool
    warnings: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.monotone


@dataclass
class RegularityTable:
    """Regularity statistic at each eps of a ladder"""

    frame: pd.DataFrame
    variation: float

    def passed(self, max_variation: float = REGULARITY_VARIATION) -> bool:
        return bool(self.variation < max_variation)


@dataclass
class GronwallTable:
    """Contraction ratio against e^{KT}, one row per seed replicate"""

    frame: pd.DataFrame

    @property
    def passed(self) -> bool:
        if self.frame.empty:
            return False
        return bool(self.frame['within'].all() and self.frame['consistent'].all())


# ----------------------------------------------------------------------------
# Test processes
# ----------------------------------------------------------------------------

def build_test_process(kind: TestProcessKind, cfg: SolverConfig, z0: Field,
                       g: Optional[Field] = None, inner_eps: Optional[float] = None,
                       progress: bool = False) -> TestProcess:
    """
    Simulate an admissible test process with recorded drift

    Args:
        kind: ZERO, CONSTANT_G or REGULARIZED_SOLUTION
        cfg: Solver configuration shared with the candidate (grid, dt, noise, paths)
        z0: Initial value Z_0
        g: Constant drift field (CONSTANT_G)
        inner_eps: Regularization of Z (REGULARIZED_SOLUTION)
        progress: Show a tqdm bar

    Returns:
        TestProcess
    """
    kind = TestProcessKind(kind)
    g_field = None

    if kind == TestProcessKind.REGULARIZED_SOLUTION:
        if inner_eps is None:
            raise ConfigError("REGULARIZED_SOLUTION needs inner_eps")
        ens = simulate(cfg.with_eps(inner_eps), z0, record_increments=True, progress=progress)
    else:
        if kind == TestProcessKind.CONSTANT_G:
            if g is None:
                raise ConfigError("CONSTANT_G needs a drift field g")
            g_field = g
        else:
            g_field = Field.zeros(cfg.grid)
        ens = run_ensemble(cfg, z0, prescribed_advance(cfg, g_field.values),
                           record_increments=True, progress=progress)

    dts = np.diff(ens.times)[None, :, None]
    drift = ens.drift_increments / dts
    logger.info("Built %s test process (%d paths)", kind.value, ens.n_paths)
    return TestProcess(kind=kind, z0=z0, ensemble=ens, drift=drift,
                       g_field=g_field, inner_eps=inner_eps)


# ----------------------------------------------------------------------------
# Variational inequality
# ----------------------------------------------------------------------------

def _check_alignment(x_ens: PathEnsemble, z_ens: PathEnsemble) -> None:
    if x_ens.grid != z_ens.grid:
        raise AlignmentError(f"Grids differ: {x_ens.grid} vs {z_ens.grid}")
    if x_ens.times.shape != z_ens.times.shape or not np.allclose(x_ens.times, z_ens.times,
                                                                 rtol=0, atol=1e-12):
        raise AlignmentError("Snapshot times differ")
    if x_ens.n_paths != z_ens.n_paths:
        raise AlignmentError(f"Path counts differ: {x_ens.n_paths} vs {z_ens.n_paths}")
    if x_ens.config.noise != z_ens.config.noise or x_ens.config.dt != z_ens.config.dt:
        raise AlignmentError("Candidate and test process are not driven by the same noise")


def _cumulative_phi(ens: PathEnsemble, f: EnergyFunctional, valid: np.ndarray,
                    dts: np.ndarray) -> np.ndarray:
    """int_0^t phi(X_r) dr per path and snapshot time"""
    if ens.config.potential == f.potential:
        return ens.cum_energy[valid]
    h = ens.grid.spacing
    values = h * np.sum(eval_psi(f.potential, ens.snapshots[valid]), axis=-1)
    return weighted_cumulative(values, dts, right=True)


def _hminus1_sq(ens_grid, values: np.ndarray) -> np.ndarray:
    paths, n_snap, n = values.shape
    return hminus1_norm_sq_values(ens_grid, values.reshape(-1, n)).reshape(paths, n_snap)


def svi_margin(x_ens: PathEnsemble, z: TestProcess, f: EnergyFunctional, C: float,
               slack: bool = True) -> SviReport:
    """
    Estimate rhs - lhs of the variational inequality at every snapshot time

    Drift-side integrals (phi(X), phi(Z), <G, X - Z>) use the right endpoint
    of each interval, matching the implicit drift; the C-term uses the left
    endpoint. With slack=True the rhs also carries the finite-eps terms
    2 eps int <X, Z - X>_{L2} + 2 C_psi eps int (1 + ||X||^2_{L2}).

    Args:
        x_ens: Candidate ensemble
        z: Test process on the same grid, times and noise
        f: Energy functional phi
        C: Constant of the inequality
        slack: Include the finite-eps slack of the candidate

    Returns:
        SviReport

    Raises:
        AlignmentError: grids, times, paths or noise differ
    """
    z_ens = z.ensemble
    _check_alignment(x_ens, z_ens)
    valid = x_ens.valid & z_ens.valid
    if not np.any(valid):
        raise SolverError("No complete path pairs to compare")

    grid = x_ens.grid
    h = grid.spacing
    times = x_ens.times
    dts = np.diff(times)
    X = x_ens.snapshots[valid]
    Z = z_ens.snapshots[valid]
    D = X - Z
    n = grid.n_nodes

    diff_sq = _hminus1_sq(grid, D)
    phi_x = _cumulative_phi(x_ens, f, valid, dts)
    phi_z = _cumulative_phi(z_ens, f, valid, dts)

    # <G_k, D_{k+1}>_{H^-1}
    solved = get_laplacian(grid).solve_negative(D.reshape(-1, n).T).T.reshape(D.shape)
    cross = h * np.einsum('pkn,pkn->pk', z.drift[valid], solved[:, 1:])
    cross_int = np.concatenate([np.zeros((cross.shape[0], 1)),
                                np.cumsum(cross * dts, axis=1)], axis=1)

    lhs = diff_sq + 2.0 * phi_x
    rhs = (diff_sq[:, :1] + 2.0 * phi_z - 2.0 * cross_int
           + C * weighted_cumulative(diff_sq, dts))

    eps = x_ens.config.eps
    extra = np.zeros_like(rhs)
    if slack:
        viscous = 2.0 * eps * h * np.einsum('pkn,pkn->pk', X, Z - X)
        l2_sq = h * np.einsum('pkn,pkn->pk', X, X)
        c_psi = f.potential.growth_constant * max(1.0, grid.length)
        extra = weighted_cumulative(viscous + 2.0 * c_psi * eps * (1.0 + l2_sq), dts, right=True)
        rhs = rhs + extra

    lhs_mean, _ = batch_means(lhs)
    rhs_mean, _ = batch_means(rhs)
    margin, stderr = batch_means(rhs - lhs)
    slack_mean, _ = batch_means(extra)

    report = SviReport(t_grid=times, lhs=lhs_mean, rhs=rhs_mean, margin=margin, stderr=stderr,
                       slack=slack_mean, constant_used=float(C), kind=z.kind,
                       n_paths=int(valid.sum()), eps=eps)
    logger.info("SVI margin vs %s: worst %.3e (stderr %.3e) -> %s", z.kind.value,
                margin[report.worst_index], stderr[report.worst_index], report.verdict)
    return report


# ----------------------------------------------------------------------------
# Stability and convergence statistics
# ----------------------------------------------------------------------------

def _pair_diff_sq(pair: PairedEnsemble) -> Tuple[np.ndarray, np.ndarray]:
    a, b = pair.first, pair.second
    _check_alignment(a, b)
    valid = a.valid & b.valid
    return _hminus1_sq(a.grid, a.snapshots[valid] - b.snapshots[valid]), a.times


def contraction_stat(pair: PairedEnsemble, K: Optional[float] = None) -> ContractionStat:
    """
    Stability of two coupled solutions

    Args:
        pair: Coupled ensembles (same eps, shared noise)
        K: Weight rate for the e^{-Kt} monotonicity check (default config K)

    Returns:
        ContractionStat with sup_t E||X_t - Y_t||^2 and its ratio to the initial value
    """
    diff_sq, times = _pair_diff_sq(pair)
    mean, stderr = batch_means(diff_sq)
    rate = pair.first.config.K if K is None else K
    initial = float(mean[0])
    sup = float(np.max(mean))
    ratio = 0.0 if sup == 0.0 else safe_divide(sup, initial, default=float('inf'))

    # solves are accurate to ~newton_tol in H^-1, so compare norms with an absolute floor
    weighted = np.exp(-rate * times) * mean
    tol = 2.0 * np.exp(-rate * times) * stderr + CONTRACTION_ATOL * np.sqrt(weighted)
    weighted_ok = bool(np.all(np.diff(weighted) <= tol[:-1] + 1e-14))
    norms = np.sqrt(diff_sq)
    pathwise_ok = bool(np.all(np.diff(norms, axis=1) <= CONTRACTION_ATOL))

    return ContractionStat(times=times, mean_sq=mean, stderr=stderr, initial=initial, sup=sup,
                           ratio=ratio, K=rate, weighted_nonincreasing=weighted_ok,
                           pathwise_nonincreasing=pathwise_ok)


def calibrate_gronwall_rate(pair: PairedEnsemble, floor: float = 1e-300) -> float:
    """
    Least-squares exponential growth rate of E||X_t - Y_t||^2

    Returns:
        max(slope of log E||X_t - Y_t||^2 against t, 0)
    """
    diff_sq, times = _pair_diff_sq(pair)
    mean = diff_sq.mean(axis=0)
    mask = mean > floor
    if mask.sum() < 2:
        return 0.0
    model = LinearRegression()
    model.fit(times[mask].reshape(-1, 1), np.log(mean[mask]))
    rate = max(float(model.coef_[0]), 0.0)
    logger.info("Calibrated Gronwall rate K = %.4g", rate)
    return rate


def eps_rate_stat(ladder: Sequence[PairedEnsemble], K: Optional[float] = None) -> EpsRateTable:
    """
    D(eps) = E sup_t e^{-Kt} ||X^eps_t - X^{eps/2}_t||^2 along a ladder

    Args:
        ladder: Coupled pairs (eps, eps/2), coarsest first
        K: Weight rate (default from the first rung's config)

    Returns:
        EpsRateTable; a ratio outside [0.3, 0.8] is a warning, non-monotone D fails
    """
    rows = []
    warnings_list: List[str] = []
    for pair in ladder:
        diff_sq, times = _pair_diff_sq(pair)
        rate = pair.first.config.K if K is None else K
        sup = np.max(np.exp(-rate * times)[None, :] * diff_sq, axis=1)
        mean, se = batch_means(sup)
        rows.append({'eps': pair.first.config.eps, 'eps_fine': pair.second.config.eps,
                     'D': float(mean), 'D_stderr': float(se)})

    frame = pd.DataFrame(rows)
    if frame.empty:
        return EpsRateTable(frame, True)
    frame['ratio'] = frame['D'] / frame['D'].shift(1)
    frame['in_band'] = frame['ratio'].between(*RATIO_BAND) | frame['ratio'].isna()
    monotone = bool(np.all(np.diff(frame['D'].values) < 0))

    for _, row in frame[~frame['in_band']].iterrows():
        msg = f"eps={row['eps']:g}: ratio {row['ratio']:.3f} outside {RATIO_BAND}"
        logger.warning(msg)
        warnings_list.append(msg)
    if not monotone:
        logger.warning("D(eps) is not strictly decreasing along the ladder")
    return EpsRateTable(frame, monotone, warnings_list)


def regularity_ladder(ensembles: Sequence[PathEnsemble]) -> RegularityTable:
    """
    E sup_t ||X||^2_L2 + eps E int ||X||^2_H10 at each eps

    Args:
        ensembles: Runs that differ only in eps

    Returns:
        RegularityTable; variation is (max - min) / max of the combined statistic
    """
    rows = []
    for ens in ensembles:
        stats = energy_stats(ens)
        rows.append({
            'eps': ens.config.eps,
            'combined': stats.combined[0],
            'combined_stderr': stats.combined[1],
            'sup_l2_sq': stats.sup_l2_sq[0],
            'eps_int_h10_sq': stats.eps_int_h10_sq[0],
            'n_paths': stats.n_paths,
        })
    frame = pd.DataFrame(rows, columns=REGULARITY_COLUMNS)
    if frame.empty:
        return RegularityTable(frame, 0.0)

    top = float(frame['combined'].max())
    variation = safe_divide(top - float(frame['combined'].min()), top)
    if not variation < REGULARITY_VARIATION:
        logger.warning("Regularity statistic varies by %.1f%% across eps", 100 * variation)
    return RegularityTable(frame, float(variation))


def gronwall_table(pairs: Sequence[PairedEnsemble]) -> GronwallTable:
    """
    Gronwall bound sup_t E||X_t - Y_t||^2 <= e^{KT} E||x - y||^2 per replicate

    Each pair is also checked for a calibrated rate at most 1.5 K.
    """
    rows = []
    for pair in pairs:
        stat = contraction_stat(pair)
        rate = calibrate_gronwall_rate(pair)
        rows.append({
            'seed': pair.first.config.noise.seed,
            'ratio': stat.ratio,
            'K': stat.K,
            'bound': float(np.exp(stat.K * stat.times[-1])),
            'K_calibrated': rate,
            'within': stat.within_gronwall(),
            'consistent': rate <= GRONWALL_CONSISTENCY * stat.K + 1e-12,
        })
    table = GronwallTable(pd.DataFrame(rows))
    if rows and not table.passed:
        logger.warning("Gronwall bound violated for %d of %d replicates",
                       int((~(table.frame['within'] & table.frame['consistent'])).sum()),
                       len(rows))
    return table


def regularity_stat(ens: PathEnsemble, f: EnergyFunctional) -> Tuple[float, float]:
    """E int_0^T phi(X_r) dr with batch-means standard error"""
    valid = ens.valid
    totals = _cumulative_phi(ens, f, valid, np.diff(ens.times))[:, -1]
    mean, se = batch_means(totals)
    return float(mean), float(se)


# ----------------------------------------------------------------------------
# Pointwise subdifferential inequalities
# ----------------------------------------------------------------------------

def _neg_lap_yosida(rp: RegularizedPotential, y: Field) -> Field:
    L = get_laplacian(y.grid)
    return Field(y.grid, -L.apply_values(np.asarray(yosida_array(rp, y.values))))


def subdiff_inequality_margin(rp: RegularizedPotential, y: Field, u: Field) -> float:
    """
    phi^eps(u) - phi^eps(y) - <-Lap phi^eps(y), u - y>_{H^-1}

    Nonnegative up to rounding, since -Lap phi^eps(y) is a subgradient of
    phi^eps at y in H^-1.
    """
    return energy_eps(rp, u) - energy_eps(rp, y) - hminus1_inner(_neg_lap_yosida(rp, y), u - y)


def measure_extension_margin(rp: RegularizedPotential, y: Field, mu: RadonMeasure,
                             n_values: Sequence[int] = MEASURE_LEVELS,
                             C: Optional[float] = None) -> pd.DataFrame:
    """
    The subdifferential inequality with phi in place of phi^eps, tested at
    smooth approximations u_n of a measure

        margin_n = phi(u_n) + C eps (1 + ||y||^2) - phi(y) - <-Lap phi^eps(y), u_n - y>

    Args:
        rp: Regularized potential
        y: Field (typically a solver snapshot)
        mu: Measure on y's grid
        n_values: Approximation levels
        C: Slack constant (default growth constant times max(1, length))

    Returns:
        DataFrame with columns n, energy, pairing, margin
    """
    if mu.grid != y.grid:
        raise AlignmentError("Measure and field live on different grids")
    f = EnergyFunctional(rp.base)
    if C is None:
        C = rp.base.growth_constant * max(1.0, y.grid.length)
    subgradient = _neg_lap_yosida(rp, y)
    phi_y = energy(f, y)
    slack = C * rp.epsilon * (1.0 + l2_norm(y) ** 2)

    rows: List[Dict] = []
    for n in n_values:
        u = approx_sequence(mu, n)
        pair = hminus1_inner(subgradient, u - y)
        e_u = energy(f, u)
        rows.append({'n': n, 'energy': e_u, 'pairing': pair,
                     'margin': e_u + slack - phi_y - pair})
    return pd.DataFrame(rows)
