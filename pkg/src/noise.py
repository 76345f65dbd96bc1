"""
Noise Module

Truncated cylindrical Wiener noise W = sum_i b_i w_i e_i on the first n
discrete sine modes (unit H^-1 norm) and the diffusion operator

    B(x) dW = sigma(x) * sum_i b_i e_i dw_i

with sigma = gain (additive) or sigma(x) = gain * min(|x|, cap)
(Lipschitz diagonal multiplier, sigma(0) = 0).
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .discrete_spaces import (Field, Grid, get_laplacian, hminus1_norm, l2_norm,
                              poincare_constant, sine_mode_matrix)
from .errors import ConfigError, GridMismatch

logger = logging.getLogger(__name__)


class Multiplier(str, Enum):
    ADDITIVE = 'additive'
    LIPSCHITZ_DIAGONAL = 'lipschitz_diagonal'


@dataclass(frozen=True)
class NoiseModel:
    """Mode truncation, weights b_i, multiplier kind and seed"""

    modes: int = 16
    weights: Tuple[float, ...] = ()
    multiplier: Multiplier = Multiplier.ADDITIVE
    gain: float = 1.0
    cap: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if int(self.modes) != self.modes or self.modes < 1:
            raise ConfigError(f"noise.modes must be a positive integer, got {self.modes}")
        if not self.weights:
            object.__setattr__(self, 'weights',
                               tuple(1.0 / i for i in range(1, self.modes + 1)))
        if len(self.weights) != self.modes:
            raise ConfigError(f"noise.weights needs {self.modes} entries, got {len(self.weights)}")
        if any(w <= 0 for w in self.weights):
            raise ConfigError("noise.weights must be positive")
        if self.gain < 0:
            raise ConfigError(f"noise.gain must be nonnegative, got {self.gain}")
        if self.cap <= 0:
            raise ConfigError(f"noise.cap must be positive, got {self.cap}")

    @property
    def weight_array(self) -> np.ndarray:
        return np.asarray(self.weights, dtype=float)

    @property
    def lipschitz_constant(self) -> float:
        """Declared Lipschitz constant of sigma"""
        return self.gain if self.multiplier == Multiplier.LIPSCHITZ_DIAGONAL else 0.0

    @property
    def is_zero(self) -> bool:
        return self.gain == 0.0

    def weight_norm_sq(self) -> float:
        """sum_i b_i^2"""
        return float(np.sum(self.weight_array ** 2))

    def sigma(self, x: np.ndarray) -> np.ndarray:
        if self.multiplier == Multiplier.ADDITIVE:
            return np.full(np.shape(x), self.gain)
        return self.gain * np.minimum(np.abs(x), self.cap)

    def to_record(self) -> Dict:
        return {
            'modes': self.modes,
            'weights': list(self.weights),
            'multiplier': self.multiplier.value,
            'gain': self.gain,
            'cap': self.cap,
            'seed': self.seed,
        }


@dataclass(frozen=True, eq=False)
class WienerIncrement:
    """n independent N(0, dt) draws"""

    dt: float
    gaussians: np.ndarray = field(repr=False)


@dataclass
class NoiseReport:
    """Measured quotients against the declared constants"""

    lipschitz_quotient: float
    lipschitz_bound: float
    growth_quotient: float
    growth_bound: float
    b_zero_norm: float
    hs_constant: float
    violations: List[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def get_summary(self) -> str:
        lines = [
            f"Lipschitz quotient: {self.lipschitz_quotient:.6g} (bound {self.lipschitz_bound:.6g})",
            f"Growth quotient:    {self.growth_quotient:.6g} (bound {self.growth_bound:.6g})",
            f"||B(0)||_HS:        {self.b_zero_norm:.6g}",
            f"HS constant:        {self.hs_constant:.6g}",
        ]
        lines += [f"VIOLATION: {v}" for v in self.violations]
        return "\n".join(lines)


def path_stream(nm: NoiseModel, path: int) -> np.random.Generator:
    """Counter-based generator keyed by (seed, path)"""
    logger.debug("Noise stream for seed %d, path %d", nm.seed, path)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([nm.seed, path])))


def sample_increment(nm: NoiseModel, dt: float, stream: np.random.Generator) -> WienerIncrement:
    """
    Draw one Wiener increment

    Args:
        nm: Noise model
        dt: Time step (> 0)
        stream: Per-path generator

    Returns:
        WienerIncrement with n N(0, dt) draws
    """
    if not dt > 0:
        raise ConfigError(f"dt must be positive, got {dt}")
    return WienerIncrement(dt, stream.normal(0.0, np.sqrt(dt), nm.modes))


def noise_values(nm: NoiseModel, grid: Grid, x: np.ndarray, gaussians: np.ndarray) -> np.ndarray:
    """B(x) dw on raw value arrays"""
    if nm.is_zero:
        return np.zeros_like(x)
    modes = sine_mode_matrix(grid, nm.modes)
    return nm.sigma(x) * ((nm.weight_array * gaussians) @ modes)


def apply_B(nm: NoiseModel, t: float, x: Field, dw: WienerIncrement) -> Field:
    """
    Diffusion applied to one increment: sigma(x) sum_i b_i e_i dw_i

    Args:
        nm: Noise model
        t: Time (B is time-homogeneous)
        x: Current state
        dw: Increment

    Returns:
        Field
    """
    if len(dw.gaussians) != nm.modes:
        raise GridMismatch(f"Increment has {len(dw.gaussians)} modes, model has {nm.modes}")
    return Field(x.grid, noise_values(nm, x.grid, x.values, np.asarray(dw.gaussians)))


def hs_norm(nm: NoiseModel, x: Field) -> float:
    """||B(x)||_{HS(U, H^-1)}"""
    modes = sine_mode_matrix(x.grid, nm.modes)
    sig = nm.sigma(x.values)
    L = get_laplacian(x.grid)
    columns = (sig * modes * nm.weight_array[:, None]).T
    solved = L.solve_negative(columns)
    return float(np.sqrt(max(x.grid.spacing * np.sum(columns * solved), 0.0)))


def _diff_hs_norm(nm: NoiseModel, v: Field, w: Field) -> float:
    modes = sine_mode_matrix(v.grid, nm.modes)
    dsig = nm.sigma(v.values) - nm.sigma(w.values)
    L = get_laplacian(v.grid)
    columns = (dsig * modes * nm.weight_array[:, None]).T
    return float(np.sqrt(max(v.grid.spacing * np.sum(columns * L.solve_negative(columns)), 0.0)))


def lipschitz_bound(nm: NoiseModel, grid: Grid) -> float:
    """Lip(sigma) * C_P * sqrt(sum_i b_i^2 ||e_i||_inf^2)"""
    sup_modes = np.max(np.abs(sine_mode_matrix(grid, nm.modes)), axis=1)
    return float(nm.lipschitz_constant * poincare_constant(grid)
                 * np.sqrt(np.sum((nm.weight_array * sup_modes) ** 2)))


def check_noise_conditions(nm: NoiseModel, sample_fields: Sequence[Field]) -> NoiseReport:
    """
    Measure the Lipschitz, growth and B(0) quotients over sampled fields

    The Lipschitz quotient is ||B(v)-B(w)||_{HS(U,H^-1)} / ||v-w||_{L2}.

    Args:
        nm: Noise model
        sample_fields: At least one field; pairs are taken consecutively

    Returns:
        NoiseReport
    """
    if not sample_fields:
        raise ConfigError("check_noise_conditions needs at least one field")
    grid = sample_fields[0].grid
    zero = Field.zeros(grid)
    b_zero = hs_norm(nm, zero)
    lip_bound = lipschitz_bound(nm, grid)
    additive_norm = nm.gain * np.sqrt(nm.weight_norm_sq())
    growth_bound = max(additive_norm if nm.multiplier == Multiplier.ADDITIVE else 0.0, lip_bound)

    lip_q = 0.0
    for v, w in zip(sample_fields, list(sample_fields[1:]) + [zero]):
        dist = l2_norm(v - w)
        if dist > 0:
            lip_q = max(lip_q, _diff_hs_norm(nm, v, w) / dist)

    growth_q = max(hs_norm(nm, v) / (1.0 + l2_norm(v)) for v in sample_fields)

    report = NoiseReport(
        lipschitz_quotient=lip_q,
        lipschitz_bound=lip_bound,
        growth_quotient=growth_q,
        growth_bound=growth_bound,
        b_zero_norm=b_zero,
        hs_constant=float(additive_norm),
    )
    if lip_q > lip_bound + 1e-6:
        report.violations.append(f"Lipschitz quotient {lip_q:.6g} exceeds {lip_bound:.6g}")
    if growth_q > growth_bound + 1e-6:
        report.violations.append(f"growth quotient {growth_q:.6g} exceeds {growth_bound:.6g}")
    return report


def ito_isometry_stat(nm: NoiseModel, grid: Grid, t_end: float, dt: float,
                      paths: int) -> Tuple[float, float, float]:
    """
    Ensemble check of E||int_0^T B dW||^2_{H^-1} for constant B

    Returns:
        (sample mean, standard error, expected T * gain^2 * sum b_i^2)
    """
    if nm.multiplier != Multiplier.ADDITIVE:
        raise ConfigError("Ito isometry check needs an additive noise model")
    steps = int(round(t_end / dt))
    x = Field.zeros(grid)
    values = np.empty(paths)
    for path in range(paths):
        stream = path_stream(nm, path)
        total = np.zeros(nm.modes)
        for _ in range(steps):
            total += sample_increment(nm, dt, stream).gaussians
        values[path] = hminus1_norm(apply_B(nm, 0.0, x, WienerIncrement(t_end, total))) ** 2
    expected = steps * dt * nm.gain ** 2 * nm.weight_norm_sq()
    return float(values.mean()), float(values.std(ddof=1) / np.sqrt(paths)), float(expected)
