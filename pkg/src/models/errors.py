"""
Error hierarchy
Every failure the toolkit raises on purpose derives from HMonotoneError
"""
from typing import Any, Dict, List, Optional


class HMonotoneError(Exception):
    """Base class for toolkit errors"""


class ConfigError(HMonotoneError):
    """Run configuration or input file is invalid"""


class InvalidCostError(HMonotoneError):
    """Cost violates the standing assumptions (p >= 2, positive Hessian on the sphere, ...)"""


class DimensionMismatchError(HMonotoneError):
    """Vectors or matrices do not share the expected dimension"""


class DomainError(HMonotoneError):
    """An argument lies outside the admissible window of an operation"""


class QuadratureError(HMonotoneError):
    """Tensor quadrature did not reach the requested tolerance"""


class DegenerateMatrixError(HMonotoneError):
    """Averaged Hessian is numerically singular"""


class AssignmentError(HMonotoneError):
    """Assignment instance is malformed or too large"""


class NotMonotoneError(HMonotoneError):
    """A set claimed c-monotone fails the pairwise check"""

    def __init__(self, message: str, report: Any = None):
        super().__init__(message)
        self.report = report


class SingularBaseError(HMonotoneError):
    """Mixed Hessian is singular at the chart base point"""


class EpsilonTooLargeError(HMonotoneError):
    """Neighbourhood too large: eps * ||A0^-1|| is not below the threshold"""

    def __init__(self, message: str, epsilon: float, radius: float):
        super().__init__(message)
        self.epsilon = epsilon
        self.radius = radius


class UnderResolvedError(HMonotoneError):
    """Refined epsilon grid disagrees with the reported epsilon"""


class LipschitzViolationError(HMonotoneError):
    """Chart pairs break the certified Lipschitz bound (input was not c-monotone)"""

    def __init__(self, message: str, witnesses: Optional[List[Dict[str, Any]]] = None):
        super().__init__(message)
        self.witnesses = witnesses or []
