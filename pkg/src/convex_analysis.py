"""
Convex Analysis Module

Scalar convex potentials and the objects built on top of them:
- Potential psi with its multivalued subdifferential phi
- Resolvent (I + eps*phi)^-1, Yosida approximation phi^eps and Moreau envelope psi^eps
- Convex conjugate psi*, recession function psi_inf and its conjugate
- Sampled checks for the difference-quotient, conjugate-bound and
  Fenchel-Young inequalities

Potentials are even and piecewise polynomial in |x| (degree <= 2 per piece),
which keeps one-sided derivatives at kinks exact.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import bisect, minimize_scalar

from .errors import ConvergenceFailure, GrowthClassError, ParamError, PotentialError

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

RESOLVENT_XTOL = 1e-12
RESOLVENT_MAXITER = 200
CONJUGATE_Y_MAX = 1e6
CONJUGATE_INFINITY = 1e12
RECESSION_POINTS = (1e6, 1e7)
RECESSION_REL_GROWTH = 1e-3
RECESSION_TOL = 1e-9


class PotentialKind(str, Enum):
    PSI1 = 'psi1'
    PSI2 = 'psi2'
    QUADRATIC = 'quadratic'
    CUSTOM = 'custom'


class GrowthClass(str, Enum):
    SUBLINEAR = 'sublinear'
    SUPERLINEAR = 'superlinear'


# Built-in potentials as records (coefficients are polynomials in |x|)
BUILTIN_POTENTIALS: Dict[str, Dict] = {
    'psi1': {
        'kind': 'psi1',
        'breakpoints': [0.0, 1.0],
        'coefficients': [[0.0], [-1.0, 1.0]],
        'growth_class': 'sublinear',
        'witness_y': 2.0,
        'growth_constant': 1.0,
        'description': 'max(|x|-1, 0); phi = sgn outside (-1,1)',
    },
    'psi2': {
        'kind': 'psi2',
        'breakpoints': [0.0, 1.0],
        'coefficients': [[0.0], [-0.5, 0.0, 0.5]],
        'growth_class': 'superlinear',
        'growth_constant': 1.0,
        'exponent_m': 2.0,
        'description': '(x^2-1)/2 outside (-1,1); phi = x outside (-1,1)',
    },
    'quadratic': {
        'kind': 'quadratic',
        'breakpoints': [0.0],
        'coefficients': [[0.0, 0.0, 0.5]],
        'growth_class': 'superlinear',
        'growth_constant': 1.0,
        'exponent_m': 2.0,
        'description': 'x^2/2; the linear heat nonlinearity',
    },
    'zero': {
        'kind': 'custom',
        'name': 'zero',
        'breakpoints': [0.0],
        'coefficients': [[0.0]],
        'growth_class': 'sublinear',
        'witness_y': None,
        'growth_constant': 1.0,
        'description': 'psi = 0; reduces every scheme to the heat equation',
    },
}


@dataclass(frozen=True)
class SubdiffInterval:
    """Closed interval [lower, upper] = phi(r)"""

    lower: float
    upper: float

    def __post_init__(self):
        if self.lower > self.upper:
            raise PotentialError(f"Empty subdifferential [{self.lower}, {self.upper}]")

    def contains(self, value: float, tol: float = 0.0) -> bool:
        return self.lower - tol <= value <= self.upper + tol

    def min_abs(self) -> float:
        """Smallest |eta| over eta in the interval"""
        if self.lower <= 0.0 <= self.upper:
            return 0.0
        return min(abs(self.lower), abs(self.upper))

    def midpoint(self) -> float:
        return 0.5 * (self.lower + self.upper)

    def is_point(self) -> bool:
        return self.lower == self.upper

    def get_description(self) -> str:
        if self.is_point():
            return f"{self.lower:.12g}"
        return f"[{self.lower:.12g}, {self.upper:.12g}]"


@dataclass(frozen=True)
class Potential:
    """Even convex potential, piecewise polynomial in |x|"""

    kind: PotentialKind
    breakpoints: Tuple[float, ...]
    coefficients: Tuple[Tuple[float, ...], ...]
    growth_class: GrowthClass
    witness_y: Optional[float] = None
    growth_constant: float = 1.0
    exponent_m: Optional[float] = None
    name: str = field(default='', compare=False)

    def __post_init__(self):
        bps = self.breakpoints
        if len(bps) == 0 or len(bps) != len(self.coefficients):
            raise PotentialError("Need one coefficient tuple per breakpoint")
        if bps[0] != 0.0:
            raise PotentialError(f"First breakpoint must be 0, got {bps[0]}")
        if any(b1 <= b0 for b0, b1 in zip(bps, bps[1:])):
            raise PotentialError(f"Breakpoints must increase strictly: {bps}")
        for i, coef in enumerate(self.coefficients):
            if not 1 <= len(coef) <= 3:
                raise PotentialError(f"Piece {i}: degree must be <= 2")
            if len(coef) == 3 and coef[2] < 0:
                raise PotentialError(f"Piece {i}: negative curvature {coef[2]}")

        C = _pad(self.coefficients)
        if abs(C[0, 0]) > 1e-12:
            raise PotentialError(f"psi(0) must be 0, got {C[0, 0]}")
        if C[0, 1] < 0:
            raise PotentialError("psi must be nondecreasing in |x| at 0")
        for i in range(1, len(bps)):
            b = bps[i]
            left = C[i - 1] @ (1.0, b, b * b)
            right = C[i] @ (1.0, b, b * b)
            if abs(left - right) > 1e-10 * (1.0 + abs(left)):
                raise PotentialError(f"psi is discontinuous at breakpoint {b}")
            if C[i - 1, 1] + 2 * C[i - 1, 2] * b > C[i, 1] + 2 * C[i, 2] * b + 1e-12:
                raise PotentialError(f"psi is not convex at breakpoint {b}")

        superlinear = C[-1, 2] > 0
        if superlinear != (self.growth_class == GrowthClass.SUPERLINEAR):
            raise PotentialError(
                f"Declared growth class {self.growth_class.value} does not match the last piece"
            )
        if self.growth_class == GrowthClass.SUBLINEAR and self.witness_y is not None:
            if self.witness_y <= 0 or eval_psi(self, self.witness_y) <= 0:
                raise PotentialError(f"Witness y={self.witness_y} must satisfy psi(y) > 0")
        if self.kind == PotentialKind.CUSTOM and superlinear and self.exponent_m is None:
            raise PotentialError("CUSTOM superlinear potentials must declare exponent_m")
        if self.growth_constant <= 0:
            raise PotentialError("growth_constant must be positive")

    @property
    def label(self) -> str:
        return self.name or self.kind.value

    def is_sublinear(self) -> bool:
        return self.growth_class == GrowthClass.SUBLINEAR

    def to_record(self) -> Dict:
        """Structured record (JSON-ready)"""
        return {
            'kind': self.kind.value,
            'name': self.label,
            'breakpoints': list(self.breakpoints),
            'coefficients': [list(c) for c in self.coefficients],
            'growth_class': self.growth_class.value,
            'witness_y': self.witness_y,
            'growth_constant': self.growth_constant,
            'exponent_m': self.exponent_m,
        }

    @classmethod
    def from_record(cls, record: Dict) -> 'Potential':
        try:
            kind = PotentialKind(record['kind'])
            growth = GrowthClass(record['growth_class'])
            breakpoints = tuple(float(b) for b in record['breakpoints'])
            coefficients = tuple(tuple(float(c) for c in piece)
                                 for piece in record['coefficients'])
        except (KeyError, TypeError, ValueError) as e:
            raise PotentialError(f"Malformed potential record: {e}") from e

        if kind == PotentialKind.CUSTOM and 'growth_constant' not in record:
            raise PotentialError("CUSTOM potentials must declare growth_constant")

        witness = record.get('witness_y')
        exponent = record.get('exponent_m')
        return cls(
            kind=kind,
            breakpoints=breakpoints,
            coefficients=coefficients,
            growth_class=growth,
            witness_y=None if witness is None else float(witness),
            growth_constant=float(record.get('growth_constant', 1.0)),
            exponent_m=None if exponent is None else float(exponent),
            name=str(record.get('name', '')),
        )

    @classmethod
    def builtin(cls, name: str) -> 'Potential':
        key = name.lower()
        if key not in BUILTIN_POTENTIALS:
            raise PotentialError(
                f"Unknown potential '{name}'. Available: {', '.join(BUILTIN_POTENTIALS)}"
            )
        record = dict(BUILTIN_POTENTIALS[key])
        record.setdefault('name', key)
        return cls.from_record(record)


@dataclass(frozen=True)
class RegularizedPotential:
    """Potential together with a Yosida/Moreau parameter eps"""

    base: Potential
    epsilon: float

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ParamError(f"epsilon must be positive, got {self.epsilon}")


def _pad(coefficients: Sequence[Sequence[float]]) -> np.ndarray:
    C = np.zeros((len(coefficients), 3))
    for i, coef in enumerate(coefficients):
        C[i, :len(coef)] = coef
    return C


@lru_cache(maxsize=64)
def _piece_table(p: Potential) -> Tuple[np.ndarray, np.ndarray]:
    """(breakpoints, padded coefficient matrix)"""
    table = (np.asarray(p.breakpoints, dtype=float), _pad(p.coefficients))
    for arr in table:
        arr.setflags(write=False)
    return table


def _restore_shape(x: ArrayLike, values: np.ndarray) -> ArrayLike:
    if np.ndim(x) == 0:
        return float(values.reshape(-1)[0])
    return values


def eval_psi(p: Potential, x: ArrayLike) -> ArrayLike:
    """
    Evaluate psi(x)

    Args:
        p: Potential
        x: Scalar or array

    Returns:
        psi(x), same shape as x
    """
    bps, C = _piece_table(p)
    r = np.abs(np.asarray(x, dtype=float))
    idx = np.searchsorted(bps, r, side='right') - 1
    c = C[idx]
    values = c[..., 0] + r * (c[..., 1] + r * c[..., 2])
    return _restore_shape(x, values)


def _slope(C: np.ndarray, i: int, r: float) -> float:
    return float(C[i, 1] + 2.0 * C[i, 2] * r)


def eval_phi(p: Potential, x: float) -> SubdiffInterval:
    """
    Subdifferential phi(x) = [phi^-(x), phi^+(x)] from one-sided derivatives

    Args:
        p: Potential
        x: Point

    Returns:
        SubdiffInterval
    """
    bps, C = _piece_table(p)
    r = abs(float(x))
    if r == 0.0:
        d = _slope(C, 0, 0.0)
        return SubdiffInterval(-d, d)

    i = int(np.searchsorted(bps, r, side='right') - 1)
    upper = _slope(C, i, r)
    lower = _slope(C, i - 1, r) if bps[i] == r else upper
    if x < 0:
        return SubdiffInterval(-upper, -lower)
    return SubdiffInterval(lower, upper)


def resolvent(rp: RegularizedPotential, x: float) -> float:
    """
    Resolvent (I + eps*phi)^-1 at x by monotone bisection

    Args:
        rp: Regularized potential
        x: Point

    Returns:
        The unique y with x - y in eps*phi(y)

    Raises:
        ConvergenceFailure: if the bracket does not shrink to tolerance
    """
    x = float(x)
    if x < 0:
        return -resolvent(rp, -x)

    eps = rp.epsilon
    p = rp.base

    def residual(y: float) -> float:
        return y + eps * eval_phi(p, y).midpoint() - x

    lo = x - eps * eval_phi(p, x).upper
    hi = x
    if lo >= hi:
        return x
    # the root sits on a kink when x - b lies in eps*phi(b)
    for b in p.breakpoints:
        if b > 0 and lo <= b <= hi and eval_phi(p, b).contains((x - b) / eps):
            return float(b)
    f_lo, f_hi = residual(lo), residual(hi)
    if f_lo == 0.0:
        return lo
    if f_hi == 0.0:
        return hi
    try:
        root, info = bisect(residual, lo, hi, xtol=RESOLVENT_XTOL,
                            maxiter=RESOLVENT_MAXITER, full_output=True, disp=False)
    except (ValueError, RuntimeError) as e:
        raise ConvergenceFailure(f"Resolvent bracket [{lo}, {hi}] failed at x={x}: {e}") from e
    if not info.converged:
        raise ConvergenceFailure(
            f"Resolvent bisection did not converge at x={x} after {info.iterations} iterations"
        )
    return float(root)


def yosida_phi_eps(rp: RegularizedPotential, x: float) -> float:
    """Yosida approximation phi^eps(x) = (x - J_eps(x)) / eps"""
    return (float(x) - resolvent(rp, x)) / rp.epsilon


def moreau_psi_eps(rp: RegularizedPotential, x: float) -> float:
    """Moreau envelope psi^eps(x) = min_y psi(y) + (x-y)^2 / (2 eps)"""
    y = resolvent(rp, x)
    return eval_psi(rp.base, y) + (float(x) - y) ** 2 / (2.0 * rp.epsilon)


# ----------------------------------------------------------------------------
# Vectorized closed forms (used by the solver)
# ----------------------------------------------------------------------------

@lru_cache(maxsize=128)
def _resolvent_knots(rp: RegularizedPotential) -> Tuple[np.ndarray, np.ndarray]:
    """
    Knots of the resolvent in |x|-space

    Piece i of psi covers start[i] <= |x| <= end[i]; between end[i] and
    start[i+1] the resolvent sits on the kink breakpoints[i+1].
    """
    bps, C = _piece_table(rp.base)
    eps = rp.epsilon
    k = len(bps)
    start = np.array([bps[i] + eps * _slope(C, i, bps[i]) for i in range(k)])
    end = np.full(k, np.inf)
    for i in range(k - 1):
        end[i] = bps[i + 1] + eps * _slope(C, i, bps[i + 1])
    return start, end


def _resolvent_parts(rp: RegularizedPotential, x: ArrayLike):
    bps, C = _piece_table(rp.base)
    start, end = _resolvent_knots(rp)
    eps = rp.epsilon

    xa = np.asarray(x, dtype=float)
    r = np.abs(xa)
    idx = np.searchsorted(start, r, side='right') - 1
    safe = np.maximum(idx, 0)
    c = C[safe]
    denom = 1.0 + 2.0 * eps * c[..., 2]
    on_piece = (idx >= 0) & (r <= end[safe])

    kink_index = np.minimum(safe + 1, len(bps) - 1)
    y = np.where(on_piece, (r - eps * c[..., 1]) / denom,
                 np.where(idx < 0, 0.0, bps[kink_index]))
    slope = np.where(on_piece, 1.0 / denom, 0.0)
    return xa, np.sign(xa) * y, slope


def resolvent_array(rp: RegularizedPotential, x: ArrayLike) -> ArrayLike:
    """Exact resolvent for arrays (matches the bisection oracle)"""
    _, y, _ = _resolvent_parts(rp, x)
    return _restore_shape(x, y)


def yosida_array(rp: RegularizedPotential, x: ArrayLike) -> ArrayLike:
    xa, y, _ = _resolvent_parts(rp, x)
    return _restore_shape(x, (xa - y) / rp.epsilon)


def yosida_derivative_array(rp: RegularizedPotential, x: ArrayLike) -> ArrayLike:
    """d/dx phi^eps(x); equals 1/eps on kink ranges"""
    _, _, slope = _resolvent_parts(rp, x)
    return _restore_shape(x, (1.0 - slope) / rp.epsilon)


def moreau_array(rp: RegularizedPotential, x: ArrayLike) -> ArrayLike:
    xa, y, _ = _resolvent_parts(rp, x)
    values = eval_psi(rp.base, y) + (xa - y) ** 2 / (2.0 * rp.epsilon)
    return _restore_shape(x, np.asarray(values))


# ----------------------------------------------------------------------------
# Conjugate and recession
# ----------------------------------------------------------------------------

def _conjugate_objective(p: Potential, v: float, y: np.ndarray) -> np.ndarray:
    return v * y - np.asarray(eval_psi(p, y))


def conjugate(p: Potential, x: float) -> float:
    """
    Convex conjugate psi*(x) = sup_y (x*y - psi(y))

    The supremum is taken over a geometric grid up to |y| = 1e6, the
    breakpoints and the per-piece stationary points, then refined locally.

    Args:
        p: Potential
        x: Dual point

    Returns:
        psi*(x), possibly +inf
    """
    v = abs(float(x))
    if v == 0.0:
        return 0.0

    bps, C = _piece_table(p)
    far = _conjugate_objective(p, v, np.array(RECESSION_POINTS))
    if far[1] > far[0] + 1e-6 * (1.0 + abs(far[0])):
        return float('inf')

    grid = np.concatenate([[0.0], np.geomspace(1e-6, CONJUGATE_Y_MAX, 400), bps])
    stationary = []
    for i in range(len(bps)):
        if C[i, 2] > 0:
            y_star = (v - C[i, 1]) / (2.0 * C[i, 2])
            right = bps[i + 1] if i + 1 < len(bps) else np.inf
            if bps[i] <= y_star <= min(right, CONJUGATE_Y_MAX):
                stationary.append(y_star)
    candidates = np.unique(np.concatenate([grid, stationary]))
    values = _conjugate_objective(p, v, candidates)
    best = int(np.argmax(values))
    best_value = float(values[best])

    lo = candidates[max(best - 1, 0)]
    hi = candidates[min(best + 1, len(candidates) - 1)]
    if hi > lo:
        refined = minimize_scalar(lambda y: -float(_conjugate_objective(p, v, np.array(y))),
                                  bounds=(lo, hi), method='bounded',
                                  options={'xatol': 1e-12})
        if refined.success:
            best_value = max(best_value, -float(refined.fun))

    if best_value > CONJUGATE_INFINITY:
        return float('inf')
    return best_value


@lru_cache(maxsize=256)
def _recession_unit(p: Potential) -> float:
    t6, t7 = RECESSION_POINTS
    q6 = float(eval_psi(p, t6)) / t6
    q7 = float(eval_psi(p, t7)) / t7
    if q7 - q6 > RECESSION_REL_GROWTH * max(abs(q6), 1e-300):
        return float('inf')
    # quotient is a + b/t at large t for piecewise-linear tails
    richardson = (10.0 * q7 - q6) / 9.0
    return max(q7, richardson)


def recession(p: Potential, x: float) -> float:
    """
    Recession function psi_inf(x) = lim_{t->inf} psi(t x) / t

    Args:
        p: Potential
        x: Direction

    Returns:
        psi_inf(x), +inf for superlinear potentials
    """
    if x == 0:
        return 0.0
    return abs(float(x)) * _recession_unit(p)


def recession_conjugate(p: Potential, x: float) -> float:
    """Indicator of [-psi_inf(1), psi_inf(1)] (0 inside, +inf outside)"""
    if p.growth_class == GrowthClass.SUPERLINEAR:
        raise GrowthClassError(
            f"Recession conjugate is only defined for sublinear potentials ({p.label})"
        )
    return 0.0 if abs(float(x)) <= recession(p, 1.0) + RECESSION_TOL else float('inf')


def conjugate_domain_threshold(p: Potential, v_max: float = 1e3,
                               iterations: int = 60) -> float:
    """Numerically detected sup{v >= 0: psi*(v) < inf}"""
    if np.isfinite(conjugate(p, v_max)):
        return float('inf')
    lo, hi = 0.0, v_max
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        if np.isfinite(conjugate(p, mid)):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# ----------------------------------------------------------------------------
# Sampled checks
# ----------------------------------------------------------------------------

def check_potential(p: Potential, rng: Optional[np.random.Generator] = None,
                    samples: int = 2000) -> List[str]:
    """
    Sample the structural invariants of a potential

    Args:
        p: Potential to check
        rng: Random generator (default seeded)
        samples: Number of random sample points

    Returns:
        List of violation messages (empty if none)
    """
    rng = rng or np.random.default_rng(0)
    violations = []
    x = rng.uniform(-10, 10, samples)
    y = rng.uniform(-10, 10, samples)
    lam = rng.uniform(0, 1, samples)

    if eval_psi(p, 0.0) != 0.0:
        violations.append("psi(0) != 0")
    psi_x = eval_psi(p, x)
    if np.any(np.abs(psi_x - eval_psi(p, -x)) > 1e-12 * (1 + np.abs(psi_x))):
        violations.append("psi is not symmetric")
    if np.any(psi_x < 0):
        violations.append("psi takes negative values")
    mix = eval_psi(p, lam * x + (1 - lam) * y)
    chord = lam * psi_x + (1 - lam) * eval_psi(p, y)
    if np.any(mix > chord + 1e-10 * (1 + np.abs(chord))):
        violations.append("psi is not convex on sampled triples")

    t = np.geomspace(1.0, 1e6, 61)
    quotient = eval_psi(p, t) / t
    unbounded = quotient[-1] > 10.0 * max(quotient[30], 1e-12)
    if unbounded != (p.growth_class == GrowthClass.SUPERLINEAR):
        violations.append("growth class inconsistent with the sample grid")
    if p.growth_class == GrowthClass.SUBLINEAR:
        bound = np.max(eval_psi(p, t) / (1 + t))
        if not np.isfinite(bound):
            violations.append("sublinear potential is not linearly bounded")
        if p.witness_y is None or eval_psi(p, p.witness_y) <= 0:
            violations.append("sublinear potential lacks a witness y with psi(y) > 0")

    for xi in x[:200]:
        if eval_phi(p, xi).min_abs() ** 2 > p.growth_constant * (1 + xi * xi) + 1e-12:
            violations.append(f"growth bound |phi|^2 <= C(1+x^2) fails at x={xi:.4g}")
            break

    for eps in (1.0, 0.1, 0.01):
        rp = RegularizedPotential(p, eps)
        gap = np.asarray(eval_psi(p, x)) - np.asarray(moreau_array(rp, x))
        if np.any(gap < -1e-10) or np.any(gap > p.growth_constant * eps * (1 + x * x) + 1e-10):
            violations.append(f"Moreau envelope bound fails at eps={eps}")

    if violations:
        logger.debug("Potential %s: %d violations", p.label, len(violations))
    return violations


def difference_quotient_violations(p: Potential, xs: np.ndarray, ys: np.ndarray,
                                   tol: float = 1e-12) -> int:
    """Count pairs with x < y (both nonzero) where psi(x)/x > psi(y)/y + tol"""
    a = np.minimum(xs, ys)
    b = np.maximum(xs, ys)
    keep = (a != 0) & (b != 0) & (a < b)
    qa = eval_psi(p, a[keep]) / a[keep]
    qb = eval_psi(p, b[keep]) / b[keep]
    return int(np.sum(qa > qb + tol * (1 + np.abs(qb))))


def conjugate_bound_violations(p: Potential, ys: Sequence[float], points_per_y: int = 10,
                               tol: float = 1e-8) -> int:
    """Count grid points x in [0, psi(y)/y] with psi*(x) > psi(y) + tol"""
    count = 0
    for y in ys:
        if y <= 0:
            continue
        psi_y = eval_psi(p, y)
        if psi_y <= 0:
            continue
        for v in np.linspace(0.0, psi_y / y, points_per_y):
            if conjugate(p, v) > psi_y + tol:
                count += 1
    return count


def domain_threshold_gap(p: Potential) -> float:
    """Relative gap between the conjugate domain threshold and psi_inf(1)"""
    threshold = conjugate_domain_threshold(p)
    rec = recession(p, 1.0)
    if np.isinf(threshold) and np.isinf(rec):
        return 0.0
    if np.isinf(threshold) or np.isinf(rec):
        return float('inf')
    return abs(threshold - rec) / max(1.0, abs(rec))


def recession_lower_bound_violations(p: Potential, ys: Sequence[float],
                                     tol: float = 1e-12) -> int:
    """Count y > 0 with psi_inf(1) < psi(y)/y"""
    rec = recession(p, 1.0)
    return sum(1 for y in ys if y > 0 and rec + tol < eval_psi(p, y) / y)


def fenchel_young_violations(p: Potential, xs: Sequence[float], vs: Sequence[float],
                             tol: float = 1e-8, eq_tol: float = 1e-6) -> int:
    """
    Count Fenchel-Young failures

    For each pair (x, v) checks x*v <= psi(x) + psi*(v); additionally checks
    equality for v taken inside phi(x).
    """
    count = 0
    for x, v in zip(xs, vs):
        if x * v > eval_psi(p, x) + conjugate(p, v) + tol:
            count += 1
        sub = eval_phi(p, x)
        w = sub.lower + 0.5 * (sub.upper - sub.lower)
        if abs(x * w - eval_psi(p, x) - conjugate(p, w)) > eq_tol:
            count += 1
    return count


def yosida_consistency_violations(p: Potential, xs: Sequence[float],
                                  eps_values: Sequence[float] = (1.0, 0.1, 0.01),
                                  tol: float = 1e-8) -> int:
    """Count x where phi^eps(x) is not in phi(J_eps x) or exceeds min|phi(x)|"""
    count = 0
    for eps in eps_values:
        rp = RegularizedPotential(p, eps)
        for x in xs:
            y = resolvent(rp, x)
            value = (x - y) / eps
            if not eval_phi(p, y).contains(value, tol):
                count += 1
            if abs(value) > eval_phi(p, x).min_abs() + tol:
                count += 1
    return count


def moreau_link_violations(p: Potential, xs: np.ndarray, eps: float,
                           h: float = 1e-6, tol: float = 1e-4) -> int:
    """Count x where the central difference of psi^eps misses phi^eps(x)"""
    rp = RegularizedPotential(p, eps)
    xs = np.asarray(xs, dtype=float)
    fd = (moreau_array(rp, xs + h) - moreau_array(rp, xs - h)) / (2 * h)
    return int(np.sum(np.abs(fd - yosida_array(rp, xs)) > tol))


if __name__ == "__main__":
    psi1 = Potential.builtin('psi1')
    rp = RegularizedPotential(psi1, 0.5)
    for x in (0.7, 1.25, 3.0):
        print(f"x={x}: J={resolvent(rp, x):.6f}  phi^eps={yosida_phi_eps(rp, x):.6f}  "
              f"psi^eps={moreau_psi_eps(rp, x):.6f}")
    print(f"psi1*(0.5) = {conjugate(psi1, 0.5)}, psi1*(1.5) = {conjugate(psi1, 1.5)}")
    print(f"psi1_inf(1) = {recession(psi1, 1.0)}")
    print(f"violations: {check_potential(psi1)}")
