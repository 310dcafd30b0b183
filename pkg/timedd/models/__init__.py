"""Models package."""

from .configs import *
from .reports import *
from .errors import *

__all__ = [
    # Configs
    "KrylovConfig",
    "SchwarzConfig",
    "ExperimentConfig",
    # Reports
    "IterationReport",
    "SummaryRow",
    "ProbeRecord",
    "RefinementRow",
    "ExperimentResult",
    # Errors
    "ErrorDetail",
    "ErrorResponse",
    "ErrorCode",
    "TimeDDError",
    "SingularMatrix",
    "ZeroPivot",
    "Breakdown",
    "DimensionMismatch",
    "InvalidGrid",
    "IndivisibleGrid",
    "OverlapTooLarge",
    "SubdomainSolveFailed",
    "CoarseSolveFailed",
    "MaxItersExceeded",
    "RequiresTwoSubdomains",
]
