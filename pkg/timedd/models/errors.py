"""
Error models and solver exceptions.
"""
from pydantic import BaseModel
from typing import Optional, Dict, Any


class ErrorDetail(BaseModel):
    """Error detail model."""

    code: str
    message: str
    details: Optional[Dict[str, Any]] = None


class ErrorResponse(BaseModel):
    """Error record emitted by the command-line runner."""

    success: bool = False
    error: ErrorDetail


# Common error codes
class ErrorCode:
    """Error code constants."""

    SINGULAR_MATRIX = "SINGULAR_MATRIX"
    ZERO_PIVOT = "ZERO_PIVOT"
    BREAKDOWN = "BREAKDOWN"
    DIMENSION_MISMATCH = "DIMENSION_MISMATCH"
    INVALID_GRID = "INVALID_GRID"
    INDIVISIBLE_GRID = "INDIVISIBLE_GRID"
    OVERLAP_TOO_LARGE = "OVERLAP_TOO_LARGE"
    SUBDOMAIN_SOLVE_FAILED = "SUBDOMAIN_SOLVE_FAILED"
    COARSE_SOLVE_FAILED = "COARSE_SOLVE_FAILED"
    MAX_ITERS_EXCEEDED = "MAX_ITERS_EXCEEDED"
    REQUIRES_TWO_SUBDOMAINS = "REQUIRES_TWO_SUBDOMAINS"
    INVALID_CONFIG = "INVALID_CONFIG"


# =============================================================================
# Exceptions
# =============================================================================

class TimeDDError(Exception):
    """Base class for all solver errors."""

    code: str = ErrorCode.INVALID_CONFIG

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.details = details or {}

    def to_detail(self) -> ErrorDetail:
        """Render as an ErrorDetail model."""
        return ErrorDetail(code=self.code, message=self.message, details=self.details or None)


class SingularMatrix(TimeDDError):
    code = ErrorCode.SINGULAR_MATRIX


class ZeroPivot(TimeDDError):
    code = ErrorCode.ZERO_PIVOT

    def __init__(self, row: int):
        super().__init__(f"zero pivot in row {row}", {"row": row})
        self.row = row


class DimensionMismatch(TimeDDError):
    code = ErrorCode.DIMENSION_MISMATCH


class InvalidGrid(TimeDDError):
    code = ErrorCode.INVALID_GRID


class IndivisibleGrid(TimeDDError):
    code = ErrorCode.INDIVISIBLE_GRID


class OverlapTooLarge(TimeDDError):
    code = ErrorCode.OVERLAP_TOO_LARGE


class RequiresTwoSubdomains(TimeDDError):
    code = ErrorCode.REQUIRES_TWO_SUBDOMAINS


class _WithReport(TimeDDError):
    """Error that carries the iteration report and the best iterate."""

    def __init__(self, message: str, report: Any = None, solution: Any = None,
                 details: Optional[Dict[str, Any]] = None):
        super().__init__(message, details)
        self.report = report
        self.solution = solution


class Breakdown(_WithReport):
    code = ErrorCode.BREAKDOWN


class MaxItersExceeded(_WithReport):
    code = ErrorCode.MAX_ITERS_EXCEEDED


class SubdomainSolveFailed(TimeDDError):
    code = ErrorCode.SUBDOMAIN_SOLVE_FAILED

    def __init__(self, subdomain_id: int, reason: str = ""):
        super().__init__(
            f"solve failed on subdomain {subdomain_id}" + (f": {reason}" if reason else ""),
            {"subdomain": subdomain_id},
        )
        self.subdomain_id = subdomain_id


class CoarseSolveFailed(TimeDDError):
    code = ErrorCode.COARSE_SOLVE_FAILED
