"""
Result models: iteration reports, summary rows and probe diagnostics.
"""
from pydantic import BaseModel, Field
from typing import List, Literal, Optional

from timedd.models.errors import ErrorDetail


class IterationReport(BaseModel):
    """Residual history and termination status of one iterative solve."""

    history: List[float] = Field(..., min_length=1, description="Relative residual norms, history[0] = initial guess")
    iterations: int = Field(..., ge=0)
    status: Literal["converged", "max_iters"]
    wall_seconds: float = 0.0
    initial_residual: float = Field(1.0, ge=0, description="Absolute residual of the initial guess")
    seed: Optional[int] = None
    solver: str = ""

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    @property
    def final_residual(self) -> float:
        return self.history[-1]

    @property
    def abs_history(self) -> List[float]:
        return [r * self.initial_residual for r in self.history]


class SummaryRow(BaseModel):
    """One row of the experiment summary CSV."""

    problem: str
    variant: str
    levels: int
    K: int
    M: int
    N: int
    gamma: float
    mode: str
    iters: Optional[int] = None
    status: str
    wall_seconds: float
    err_y: Optional[float] = None
    err_p: Optional[float] = None


class ProbeRecord(BaseModel):
    """Interface error quantities of one two-subdomain iterate."""

    iteration: int
    e1_sq: float = Field(..., description="Squared state error of subdomain 1 at the interface")
    w2_sq: float = Field(..., description="Squared adjoint error of subdomain 2 at the interface")
    m_asn: float
    m_msn: float


class RefinementRow(BaseModel):
    """One mesh of a direct-solve refinement study."""

    M: int
    N: int
    h: float
    err_y: float
    err_p: float
    ratio_y: Optional[float] = None
    ratio_p: Optional[float] = None


class ExperimentResult(BaseModel):
    """Rows and files produced by one CLI command."""

    rows: List[SummaryRow] = Field(default_factory=list)
    files: List[str] = Field(default_factory=list)
    errors: List[ErrorDetail] = Field(default_factory=list)
    exit_status: int = 0

    @property
    def ok(self) -> bool:
        return self.exit_status == 0
