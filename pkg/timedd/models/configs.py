"""
Run configuration models.

Defaults are taken from the application settings so that an ``.env`` file
or environment variables can retune every solver without code changes.
"""
from pydantic import BaseModel, BeforeValidator, Field, field_validator, model_validator
from typing import Annotated, List, Literal, Optional

from timedd.config import settings


def _upper_variant(v):
    return v.upper() if isinstance(v, str) else v


Variant = Annotated[Literal["MSN", "ASN", "MSO", "ASO"], BeforeValidator(_upper_variant)]
SolverKind = Literal["direct", "ilu_bicgstab"]


# =============================================================================
# Krylov solvers
# =============================================================================

class KrylovConfig(BaseModel):
    """Stopping rule and restart policy for GMRES / BiCGStab."""

    rel_tol: float = Field(default_factory=lambda: settings.STOP_RTOL, gt=0)
    max_iters: int = Field(default_factory=lambda: settings.GMRES_MAX_ITERS, ge=1)
    restart: Optional[int] = Field(None, ge=1, description="None means never restart")

    @field_validator("restart", mode="before")
    @classmethod
    def parse_restart(cls, v):
        """Accept the string "none" for an unrestarted run."""
        if isinstance(v, str) and v.lower() == "none":
            return None
        return v

    @classmethod
    def coarse(cls) -> "KrylovConfig":
        """Settings used for the coarse-grid BiCGStab solve."""
        return cls(rel_tol=settings.COARSE_RTOL, max_iters=settings.COARSE_MAX_ITERS)

    @classmethod
    def subdomain(cls) -> "KrylovConfig":
        """Settings used for iterative subdomain solves."""
        return cls(rel_tol=settings.SUBDOMAIN_RTOL, max_iters=settings.SUBDOMAIN_MAX_ITERS)


# =============================================================================
# Schwarz iterations
# =============================================================================

class SchwarzConfig(BaseModel):
    """One Schwarz method: variant, levels and the stopping rule."""

    variant: Variant = "ASN"
    levels: Literal[1, 2] = 1
    K: int = Field(2, ge=1)
    overlap_steps: Optional[int] = Field(None, ge=0)
    rel_tol: float = Field(default_factory=lambda: settings.STOP_RTOL, gt=0)
    max_iters: int = Field(default_factory=lambda: settings.SCHWARZ_MAX_ITERS, ge=1)
    seed: int = 0
    subdomain_solver: SolverKind = "direct"
    coarse_solver: SolverKind = "direct"
    two_color: bool = False
    threads: int = Field(default_factory=lambda: settings.TIMEDD_THREADS, ge=1)

    @model_validator(mode="after")
    def check_overlap(self) -> "SchwarzConfig":
        """Overlapping variants need overlap >= 1, the others none."""
        if self.overlap_steps is None:
            self.overlap_steps = 1 if self.overlapping else 0
        if self.overlapping and self.overlap_steps < 1:
            raise ValueError(f"{self.variant} requires overlap_steps >= 1")
        if not self.overlapping and self.overlap_steps != 0:
            raise ValueError(f"{self.variant} requires overlap_steps = 0")
        return self

    @property
    def additive(self) -> bool:
        return self.variant.startswith("A")

    @property
    def overlapping(self) -> bool:
        return self.variant.endswith("O")


# =============================================================================
# Experiments
# =============================================================================

class ExperimentConfig(BaseModel):
    """One CLI experiment: a problem, a method and a list of K."""

    problem: Literal["example1", "example2"] = "example1"
    M: int = Field(16, ge=3, description="Spatial subdivisions per axis (h = 1/M)")
    N: Optional[int] = Field(None, ge=5, description="Time steps; default aligns tau with h")
    gamma: Optional[float] = Field(None, gt=0)
    variant: Variant = "ASN"
    levels: Literal[1, 2] = 1
    K: List[int] = Field(default_factory=lambda: [2], min_length=1)
    overlap_steps: Optional[int] = Field(None, ge=0)
    mode: Literal["stationary", "gmres", "direct"] = "stationary"
    precond: Literal["none", "schwarz"] = "schwarz"
    rel_tol: float = Field(default_factory=lambda: settings.STOP_RTOL, gt=0)
    max_iters: Optional[int] = Field(None, ge=1)
    seed: int = Field(0, ge=0)
    subdomain_solver: Optional[SolverKind] = None
    coarse_solver: Optional[SolverKind] = None
    two_color: bool = False
    dump: bool = False
    out: str = Field(default_factory=lambda: settings.OUTPUT_DIR)

    @field_validator("K")
    @classmethod
    def validate_k(cls, v: List[int]) -> List[int]:
        """Subdomain counts must be positive."""
        if any(k < 1 for k in v):
            raise ValueError("every K must be >= 1")
        return v

    @property
    def dim(self) -> int:
        return 1 if self.problem == "example1" else 2

    def schwarz_config(self, K: int) -> SchwarzConfig:
        """Schwarz settings for one entry of the K list."""
        default_solver = "direct" if self.dim == 1 else "ilu_bicgstab"
        extra = {} if self.max_iters is None else {"max_iters": self.max_iters}
        return SchwarzConfig(
            variant=self.variant,
            levels=self.levels,
            K=K,
            overlap_steps=self.overlap_steps,
            rel_tol=self.rel_tol,
            seed=self.seed,
            subdomain_solver=self.subdomain_solver or default_solver,
            coarse_solver=self.coarse_solver or default_solver,
            two_color=self.two_color,
            **extra,
        )

    def krylov_config(self) -> KrylovConfig:
        """Outer GMRES settings."""
        extra = {} if self.max_iters is None else {"max_iters": self.max_iters}
        return KrylovConfig(rel_tol=self.rel_tol, **extra)
