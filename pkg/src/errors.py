"""
errors.py - Exception hierarchy for the detection library

Every exception carries the exit code the command line reports for it:
1 for configuration and usage problems, 2 for runtime detection problems,
3 for file input/output.
"""

from typing import Any, Optional


class AnomalyError(Exception):
    """Base exception class for library errors"""

    def __init__(self, message: str, code: int = 1, details: Optional[str] = None):
        self.message = message
        self.code = code
        self.details = details
        super().__init__(self.message)

    def __str__(self):
        result = self.message
        if self.details:
            result += f" Details: {self.details}"
        return result


class ConfigError(AnomalyError):
    """Exception for invalid configuration documents or flags"""

    def __init__(self, message: str, field: Optional[str] = None, code: int = 1):
        self.field = field
        details = f"Field: {field}" if field else None
        super().__init__(message, code, details)


class DimensionError(AnomalyError):
    """Exception for inconsistent or invalid dimensions"""

    def __init__(self, message: str, code: int = 1):
        super().__init__(message, code)


class DomainError(AnomalyError):
    """Exception for parameters outside their mathematical domain"""

    def __init__(self, message: str, code: int = 1):
        super().__init__(message, code)


class ModelMismatch(AnomalyError):
    """Exception for a generator called with the wrong signal model"""

    def __init__(self, message: str, expected: Optional[str] = None, code: int = 1):
        details = f"Expected model: {expected}" if expected else None
        super().__init__(message, code, details)


class IoError(AnomalyError):
    """Exception for unreadable or unwritable files"""

    def __init__(self, message: str, path: Optional[str] = None, code: int = 3):
        self.path = path
        details = f"Path: {path}" if path else None
        super().__init__(message, code, details)


class DetectionError(AnomalyError):
    """Base exception for runtime detection problems"""

    def __init__(self, message: str, details: Optional[str] = None, code: int = 2):
        super().__init__(message, code, details)


class NonConvergence(DetectionError):
    """Raised when the LASSO solver exhausts its iteration budget.

    ``solution`` holds the best iterate found so far.
    """

    def __init__(self, message: str, solution: Any = None):
        self.solution = solution
        details = None
        if solution is not None:
            details = f"KKT residual: {solution.kkt_residual!r}"
        super().__init__(message, details)


class AllZeroSolution(DetectionError):
    """Raised when lambda is large enough to force the LASSO estimate to zero"""


class DegenerateColumn(DetectionError):
    """Raised when zero-norm sensing columns leave too few candidate indices"""


class DegenerateScores(DetectionError):
    """Raised when all scores are equal and no drop exists"""


class RankDeficient(DetectionError):
    """Raised when a rank-deficient factorization must be reported as an error"""
