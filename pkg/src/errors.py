"""
Error Types

Exception hierarchy shared by every layer of SVI Lab. Leaves also derive
from the closest builtin so callers catching ValueError/ArithmeticError
keep working.
"""

from typing import List, Optional


class SviLabError(Exception):
    """Base class for all SVI Lab errors"""


class PotentialError(SviLabError, ValueError):
    """Malformed potential record or piece data"""


class ConvergenceFailure(SviLabError, ArithmeticError):
    """Monotone root bracket did not shrink below tolerance"""


class GrowthClassError(SviLabError, ValueError):
    """Operation undefined for the potential's growth class"""


class GridMismatch(SviLabError, ValueError):
    """Fields or operators live on different grids"""


class ModeOutOfRange(SviLabError, ValueError):
    """Requested sine mode is not representable on the grid"""


class DomainTooSmall(SviLabError, ValueError):
    """Boundary covering does not fit into the interval"""


class ParamError(SviLabError, ValueError):
    """Invalid approximation parameters or measure data"""


class ConfigError(SviLabError, ValueError):
    """Invalid experiment or solver configuration"""


class ConfigMismatch(ConfigError):
    """Coupled runs do not share grid, time step or noise"""


class AlignmentError(SviLabError, ValueError):
    """Ensembles cannot be compared time-point by time-point"""


class SolverError(SviLabError, ArithmeticError):
    """Base class for time-stepping failures"""


class StabilityViolation(SolverError):
    """Semi-implicit time step exceeds eps * h^2 / 4"""


class NewtonDivergence(SolverError):
    """Implicit step failed to reach the residual tolerance"""

    def __init__(self, message: str, residual_history: Optional[List[float]] = None):
        super().__init__(message)
        self.residual_history = list(residual_history or [])

    def to_dict(self) -> dict:
        """Diagnostics payload for run reports"""
        return {
            'error': type(self).__name__,
            'message': str(self),
            'residual_history': self.residual_history,
        }
