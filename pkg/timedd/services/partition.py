"""
Time-domain decomposition and the algebraic coarse space.

Interior time steps 1..N-1 are split into K equal strips. With overlap o,
strip [a, b] is widened to [a - 2o, b + o] (clipped to 1..N-1). The coarse
space interpolates linearly in time between selected coarse levels and is
replicated over spatial nodes and over both fields.
"""
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
from pydantic import BaseModel, ConfigDict, Field

from timedd.logging_config import logger
from timedd.models.configs import KrylovConfig
from timedd.models.errors import (
    Breakdown,
    CoarseSolveFailed,
    DimensionMismatch,
    IndivisibleGrid,
    OverlapTooLarge,
    SingularMatrix,
    ZeroPivot,
)
from timedd.services.discretize import BlockSystem
from timedd.services.linalg import SparseMatrix, bicgstab, ilu0, lu_factor

Range = Tuple[int, int]


class TimePartition(BaseModel):
    """Strips of interior time steps; ranges are inclusive."""

    model_config = ConfigDict(frozen=True)

    N: int
    K: int = Field(..., ge=1)
    overlap_steps: int = Field(0, ge=0)
    owned: List[Range]
    extended: List[Range]

    @property
    def subdomain_size(self) -> int:
        return (self.N - 1) // self.K

    @property
    def virtual_left(self) -> List[Optional[int]]:
        return [lo - 1 if lo > 1 else None for lo, _ in self.extended]

    @property
    def virtual_right(self) -> List[Optional[int]]:
        return [hi + 1 if hi < self.N - 1 else None for _, hi in self.extended]

    def owner_of(self, n: int) -> int:
        """Index of the strip that owns time step n."""
        return (n - 1) // self.subdomain_size


def partition_time(N: int, K: int, overlap_steps: int = 0) -> TimePartition:
    """
    Split steps 1..N-1 into K strips.

    Raises:
        IndivisibleGrid: if (N-1) is not a multiple of K
        OverlapTooLarge: if a strip is not longer than 2 * overlap_steps
    """
    if K < 1 or overlap_steps < 0:
        raise ValueError(f"need K >= 1 and overlap_steps >= 0, got K={K}, overlap_steps={overlap_steps}")
    nt = N - 1
    if nt % K:
        raise IndivisibleGrid(f"N-1={nt} is not divisible by K={K}", {"N": N, "K": K})
    size = nt // K
    if K > 1 and size <= 2 * overlap_steps:
        raise OverlapTooLarge(
            f"strip of {size} steps cannot hold overlap {overlap_steps}",
            {"size": size, "overlap_steps": overlap_steps},
        )

    owned = [(i * size + 1, (i + 1) * size) for i in range(K)]
    o = overlap_steps
    extended = [(max(1, a - 2 * o), min(nt, b + o)) for a, b in owned]
    return TimePartition(N=N, K=K, overlap_steps=overlap_steps, owned=owned, extended=extended)


# =============================================================================
# Coarse nodes and temporal extension
# =============================================================================

def select_coarse_nodes(part: TimePartition) -> List[int]:
    """End levels t_1, t_{N-1} plus two levels per interface (or overlap region)."""
    nodes = {1, part.N - 1}
    for i in range(part.K - 1):
        if part.overlap_steps == 0:
            _, b = part.owned[i]
            nodes.update((b, b + 1))
        else:
            lo, hi = part.extended[i + 1][0], part.extended[i][1]
            c = lo + (hi - lo + 1 - 2) // 2
            nodes.update((c, c + 1))
    return sorted(nodes)


def build_extension(coarse_nodes: Sequence[int], N: int) -> SparseMatrix:
    """
    Temporal linear interpolation from coarse levels to steps 1..N-1.

    Steps outside the hull of the coarse nodes copy the nearest one.
    """
    c = np.asarray(coarse_nodes, dtype=np.int64)
    if c.size == 0 or np.any(np.diff(c) <= 0) or c[0] < 1 or c[-1] > N - 1:
        raise ValueError("coarse nodes must be strictly increasing within 1..N-1")

    n = np.arange(1, N)
    j = np.clip(np.searchsorted(c, n, side="right") - 1, 0, c.size - 1)
    inside = (n > c[0]) & (n < c[-1]) & (c[j] != n)

    # weight on the left (or nearest) coarse node
    rows = [n - 1]
    cols = [j]
    vals = [np.ones(n.size)]

    if np.any(inside):
        ni, ji = n[inside], j[inside]
        w_right = (ni - c[ji]) / (c[ji + 1] - c[ji])
        vals[0][inside] = 1.0 - w_right
        rows.append(ni - 1)
        cols.append(ji + 1)
        vals.append(w_right)

    E = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(N - 1, c.size),
    )
    return sp.csr_matrix(E)


# =============================================================================
# Coarse space
# =============================================================================

class CoarseSpace:
    """E, R = Diag(rowsums(E^T))^{-1} E^T and Lc = R L E with a coarse solver."""

    def __init__(
        self,
        coarse_nodes: List[int],
        E: SparseMatrix,
        R: SparseMatrix,
        Lc: SparseMatrix,
        solver: str = "direct",
        cfg: Optional[KrylovConfig] = None,
    ):
        self.coarse_nodes = coarse_nodes
        self.E = E
        self.R = R
        self.Lc = Lc
        self.solver = solver
        self.cfg = cfg or KrylovConfig.coarse()
        try:
            if solver == "direct":
                self._factor = lu_factor(Lc)
                self._ilu = None
            else:
                self._factor = None
                self._ilu = ilu0(Lc)
        except (SingularMatrix, ZeroPivot) as e:
            raise CoarseSolveFailed(f"coarse operator setup failed: {e}", {"solver": solver}) from e

    @property
    def size(self) -> int:
        return self.Lc.shape[0]

    def solve(self, rc: np.ndarray) -> np.ndarray:
        """
        Approximate Lc^{-1} rc.

        Raises:
            CoarseSolveFailed: if BiCGStab breaks down
        """
        if self._factor is not None:
            return self._factor.solve(rc)
        try:
            z, report = bicgstab(self.Lc, self._ilu, rc, self.cfg)
        except Breakdown as e:
            raise CoarseSolveFailed(f"coarse BiCGStab breakdown: {e}", {"solver": self.solver}) from e
        if not report.converged:
            logger.warning("coarse solve stopped at %d iterations (rel=%.2e)", report.iterations, report.final_residual)
        return z


def build_coarse_space(
    part: TimePartition,
    sys: BlockSystem,
    coarse_solver: str = "direct",
    cfg: Optional[KrylovConfig] = None,
) -> CoarseSpace:
    """
    Build the Galerkin coarse space for a partition of ``sys``.

    Raises:
        DimensionMismatch: if part and sys come from different grids
        CoarseSolveFailed: if the coarse operator cannot be factorized
    """
    if part.N != sys.grid.N:
        raise DimensionMismatch(f"partition has N={part.N}, system has N={sys.grid.N}")

    nodes = select_coarse_nodes(part)
    E_t = build_extension(nodes, part.N)
    S = sys.grid.n_space
    E = sp.csr_matrix(sp.kron(sp.identity(2), sp.kron(E_t, sp.identity(S))))

    col_sums = np.asarray(E.sum(axis=0)).ravel()
    R = sp.csr_matrix(sp.diags(1.0 / col_sums) @ E.T)
    Lc = sp.csr_matrix(R @ sys.L @ E)
    Lc.sort_indices()

    logger.debug("coarse space: %d levels, size %d, nnz %d", len(nodes), Lc.shape[0], Lc.nnz)
    return CoarseSpace(nodes, E, R, Lc, solver=coarse_solver, cfg=cfg)


def coarse_correct(
    sys: BlockSystem, cs: CoarseSpace, w1: np.ndarray, rhs: Optional[np.ndarray] = None
) -> np.ndarray:
    """Return w1 + E z with Lc z = R (rhs - L w1); rhs defaults to b."""
    w1 = np.asarray(w1, dtype=float)
    rhs = sys.b if rhs is None else rhs
    rc = cs.R @ (rhs - sys.L @ w1)
    if not np.any(rc):
        return w1.copy()
    return w1 + cs.E @ cs.solve(rc)
