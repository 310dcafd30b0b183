"""
Schwarz iterations in time: MSN, ASN, MSO, ASO and their two-level forms.

Every subdomain holds the rows of L for its extended time range (both
fields), closed at its inner ends by one-sided differences. Entries of
those rows whose columns fall outside the range are kept apart as
couplings and moved to the local right-hand side each sweep. After a
sweep each global unknown takes the value computed by the subdomain that
owns it.
"""
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from timedd.logging_config import logger
from timedd.models.configs import KrylovConfig, SchwarzConfig
from timedd.models.errors import (
    Breakdown,
    CoarseSolveFailed,
    DimensionMismatch,
    MaxItersExceeded,
    RequiresTwoSubdomains,
    SingularMatrix,
    SubdomainSolveFailed,
    ZeroPivot,
)
from timedd.models.reports import IterationReport, ProbeRecord
from timedd.services.discretize import BlockSystem
from timedd.services.linalg import SparseMatrix, bicgstab, gmres, ilu0, lu_factor
from timedd.services.partition import CoarseSpace, TimePartition, coarse_correct
from timedd.services.problems import ManufacturedCase

IterateCallback = Callable[[int, np.ndarray], None]

# interface energies are followed well past the run tolerance
INTERFACE_REL_TOL = 1e-12


# =============================================================================
# Subdomain systems
# =============================================================================

def closure_delta(n_space: int, extended: Tuple[int, int], N: int, tau: float) -> SparseMatrix:
    """
    Change to the local time stencil that closes a strip at its inner ends.

    The state row at the right end gets the one-sided BDF2 difference the
    global system uses at t_{N-1}, the adjoint row at the left end the one
    used at t_1. Strips of two levels fall back to BDF1, single levels
    stay open. Rows are ordered like SubdomainSystem.local_idx.
    """
    lo, hi = extended
    n_t = hi - lo + 1
    c = 1.0 / (2.0 * tau)
    rows, cols, vals = [], [], []

    def add(row_t, col_ts, coefs, field_offset):
        for t, coef in zip(col_ts, coefs):
            rows.append(field_offset + (row_t - lo) * n_space + np.arange(n_space))
            cols.append(field_offset + (t - lo) * n_space + np.arange(n_space))
            vals.append(np.full(n_space, coef))

    if hi < N - 1 and n_t >= 3:
        add(hi, (hi - 2, hi - 1, hi), (-c, 3.0 * c, -3.0 * c), 0)
    elif hi < N - 1 and n_t == 2:
        add(hi, (hi - 1, hi), (c, -2.0 * c), 0)

    adjoint = n_t * n_space
    if lo > 1 and n_t >= 3:
        add(lo, (lo, lo + 1, lo + 2), (-3.0 * c, 3.0 * c, -c), adjoint)
    elif lo > 1 and n_t == 2:
        add(lo, (lo, lo + 1), (-2.0 * c, c), adjoint)

    size = 2 * n_t * n_space
    if not rows:
        return sp.csr_matrix((size, size))
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(size, size)
    )


class SubdomainSystem:
    """
    Local matrix, couplings and solver of one time strip.

    The local matrix is the strip's rows of L plus ``defect``, the closure
    from closure_delta. Solves add ``defect`` applied to the current
    iterate back to the right-hand side, so the global solution stays a
    fixed point while stale neighbour values enter only through a
    difference of the previous iterate across the strip end.
    """

    def __init__(
        self,
        subdomain_id: int,
        sys: BlockSystem,
        owned: Tuple[int, int],
        extended: Tuple[int, int],
        solver: str = "direct",
        solver_cfg: Optional[KrylovConfig] = None,
    ):
        self.id = subdomain_id
        self.owned = owned
        self.extended = extended
        self.solver = solver
        self.solver_cfg = solver_cfg or KrylovConfig.subdomain()

        imap = sys.index_map
        self._n_space = imap.n_space
        self._block_size = imap.block_size
        self.local_idx = imap.time_range_indices(*extended)
        self.owned_global = imap.time_range_indices(*owned)
        self.owned_positions = np.searchsorted(self.local_idx, self.owned_global)
        self.b_local = sys.b[self.local_idx]

        n_local, n = self.local_idx.size, sys.size
        pos = np.full(n, -1, dtype=np.int64)
        pos[self.local_idx] = np.arange(n_local)

        rows = sys.L[self.local_idx].tocoo()
        local_cols = pos[rows.col]
        inside = local_cols >= 0
        self.defect: SparseMatrix = closure_delta(imap.n_space, extended, sys.grid.N, sys.grid.tau)
        self.matrix: SparseMatrix = sp.csr_matrix(
            (rows.data[inside], (rows.row[inside], local_cols[inside])), shape=(n_local, n_local)
        ) + self.defect
        self.coupling: SparseMatrix = sp.csr_matrix(
            (rows.data[~inside], (rows.row[~inside], rows.col[~inside])), shape=(n_local, n)
        )

        try:
            if solver == "direct":
                self._factor = lu_factor(self.matrix)
                self._ilu = None
            else:
                self._factor = None
                self._ilu = ilu0(self.matrix)
        except (SingularMatrix, ZeroPivot) as e:
            raise SubdomainSolveFailed(subdomain_id, str(e)) from e

    @property
    def coupling_entries(self) -> List[Tuple[int, int, float]]:
        """(local row, global column, value) of every coupling."""
        coo = self.coupling.tocoo()
        return [(int(r), int(c), float(v)) for r, c, v in zip(coo.row, coo.col, coo.data)]

    @property
    def coupled_times(self) -> List[int]:
        """Time steps referenced by the couplings."""
        cols = np.unique(self.coupling.indices)
        return sorted({int(t) for t in (cols % self._block_size) // self._n_space + 1})

    def solve(self, w: np.ndarray, rhs: Optional[np.ndarray] = None) -> np.ndarray:
        """Local solution with neighbor values read from w."""
        local_rhs = (self.b_local if rhs is None else rhs[self.local_idx]) - self.coupling @ w
        local_rhs += self.defect @ w[self.local_idx]
        if self._factor is not None:
            return self._factor.solve(local_rhs)
        try:
            x, report = bicgstab(self.matrix, self._ilu, local_rhs, self.solver_cfg)
        except Breakdown as e:
            raise SubdomainSolveFailed(self.id, str(e)) from e
        if not report.converged:
            logger.debug("subdomain %d: BiCGStab stopped at rel=%.2e", self.id, report.final_residual)
        return x


def build_subdomains(sys: BlockSystem, part: TimePartition, cfg: SchwarzConfig) -> List[SubdomainSystem]:
    """One SubdomainSystem per strip of ``part``."""
    if part.N != sys.grid.N:
        raise DimensionMismatch(f"partition has N={part.N}, system has N={sys.grid.N}")
    start = time.perf_counter()
    subdomains = [
        SubdomainSystem(i, sys, part.owned[i], part.extended[i], solver=cfg.subdomain_solver)
        for i in range(part.K)
    ]
    logger.debug("built %d subdomains (%s) in %.3fs", part.K, cfg.subdomain_solver, time.perf_counter() - start)
    return subdomains


# =============================================================================
# Sweeps
# =============================================================================

def _solve_all(subdomains: Sequence[SubdomainSystem], w: np.ndarray, rhs, threads: int) -> List[np.ndarray]:
    if threads > 1 and len(subdomains) > 1:
        with ThreadPoolExecutor(max_workers=min(threads, len(subdomains))) as pool:
            return list(pool.map(lambda sd: sd.solve(w, rhs), subdomains))
    return [sd.solve(w, rhs) for sd in subdomains]


def sweep_additive(
    subdomains: Sequence[SubdomainSystem],
    w: np.ndarray,
    rhs: Optional[np.ndarray] = None,
    threads: int = 1,
) -> np.ndarray:
    """All subdomains read neighbor values from the same input w."""
    w = np.asarray(w, dtype=float)
    out = w.copy()
    for sd, x in zip(subdomains, _solve_all(subdomains, w, rhs, threads)):
        out[sd.owned_global] = x[sd.owned_positions]
    return out


def sweep_multiplicative(
    subdomains: Sequence[SubdomainSystem],
    w: np.ndarray,
    rhs: Optional[np.ndarray] = None,
    two_color: bool = False,
    threads: int = 1,
) -> np.ndarray:
    """
    Solve left to right, each subdomain reading the latest neighbor values.

    With ``two_color`` the even-indexed strips are solved together first,
    then the odd-indexed ones.
    """
    out = np.array(w, dtype=float)
    if two_color:
        groups = [list(subdomains[0::2]), list(subdomains[1::2])]
    else:
        groups = [[sd] for sd in subdomains]
    for group in groups:
        if not group:
            continue
        solutions = _solve_all(group, out, rhs, threads)
        for sd, x in zip(group, solutions):
            out[sd.owned_global] = x[sd.owned_positions]
    return out


def sweep(subdomains: Sequence[SubdomainSystem], w: np.ndarray, cfg: SchwarzConfig,
          rhs: Optional[np.ndarray] = None) -> np.ndarray:
    """One one-level sweep of the configured variant."""
    if cfg.additive:
        return sweep_additive(subdomains, w, rhs, threads=cfg.threads)
    return sweep_multiplicative(subdomains, w, rhs, two_color=cfg.two_color, threads=cfg.threads)


# =============================================================================
# Stand-alone iteration
# =============================================================================

def _method_name(cfg: SchwarzConfig) -> str:
    return f"{cfg.variant}-{cfg.levels}L"


def random_guess(n: int, seed: int) -> np.ndarray:
    """Uniform [0, 1) start vector from a seeded generator."""
    return np.random.default_rng(seed).random(n)


def solve_stationary(
    sys: BlockSystem,
    part: TimePartition,
    cs: Optional[CoarseSpace],
    cfg: SchwarzConfig,
    subdomains: Optional[List[SubdomainSystem]] = None,
    x0: Optional[np.ndarray] = None,
    callback: Optional[IterateCallback] = None,
) -> Tuple[np.ndarray, IterationReport]:
    """
    Run the Schwarz iteration until |r_k| / |r_0| < rel_tol.

    Args:
        sys: Assembled system
        part: Time partition
        cs: Coarse space, required when cfg.levels == 2
        cfg: Method and stopping rule
        subdomains: Prebuilt subdomain systems (built from part if omitted)
        x0: Initial guess (default: seeded uniform random)
        callback: Called as callback(k, w) after every iteration

    Returns:
        Tuple of (solution, report)

    Raises:
        MaxItersExceeded: carries the report and the last iterate
    """
    if cfg.levels == 2 and cs is None:
        raise ValueError("two-level iteration needs a coarse space")
    subdomains = subdomains if subdomains is not None else build_subdomains(sys, part, cfg)

    start = time.perf_counter()
    w = random_guess(sys.size, cfg.seed) if x0 is None else np.array(x0, dtype=float)
    r0 = float(np.linalg.norm(sys.b - sys.L @ w))
    name = _method_name(cfg)
    if r0 == 0.0:
        return w, IterationReport(history=[0.0], iterations=0, status="converged",
                                  initial_residual=0.0, seed=cfg.seed, solver=name)

    history = [1.0]
    for k in range(1, cfg.max_iters + 1):
        w = sweep(subdomains, w, cfg)
        if cfg.levels == 2:
            try:
                w = coarse_correct(sys, cs, w)
            except CoarseSolveFailed as e:
                logger.warning("iteration %d: %s; keeping one-level iterate", k, e)
        rel = float(np.linalg.norm(sys.b - sys.L @ w)) / r0
        history.append(rel)
        logger.debug("%s K=%d iter %d: rel=%.3e", name, part.K, k, rel)
        if callback is not None:
            callback(k, w)
        if rel < cfg.rel_tol:
            report = IterationReport(
                history=history, iterations=k, status="converged",
                wall_seconds=time.perf_counter() - start, initial_residual=r0, seed=cfg.seed, solver=name,
            )
            logger.info("%s K=%d converged in %d iterations (%.2fs)", name, part.K, k, report.wall_seconds)
            return w, report

    report = IterationReport(
        history=history, iterations=cfg.max_iters, status="max_iters",
        wall_seconds=time.perf_counter() - start, initial_residual=r0, seed=cfg.seed, solver=name,
    )
    logger.warning("%s K=%d stopped after %d iterations (rel=%.2e)", name, part.K, cfg.max_iters, history[-1])
    raise MaxItersExceeded(f"{name} did not converge in {cfg.max_iters} iterations", report, w)


# =============================================================================
# Preconditioner
# =============================================================================

class SchwarzPreconditioner:
    """z = one Schwarz iteration for L z = r started from z = 0."""

    def __init__(
        self,
        sys: BlockSystem,
        part: TimePartition,
        cs: Optional[CoarseSpace],
        cfg: SchwarzConfig,
        subdomains: Optional[List[SubdomainSystem]] = None,
    ):
        if cfg.levels == 2 and cs is None:
            raise ValueError("two-level preconditioner needs a coarse space")
        self.sys = sys
        self.cs = cs
        self.cfg = cfg
        self.subdomains = subdomains if subdomains is not None else build_subdomains(sys, part, cfg)

    def apply(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if r.shape != (self.sys.size,):
            raise DimensionMismatch(f"vector has shape {r.shape}, system has size {self.sys.size}")
        z = sweep(self.subdomains, np.zeros_like(r), self.cfg, rhs=r)
        if self.cfg.levels == 2:
            try:
                z = coarse_correct(self.sys, self.cs, z, rhs=r)
            except CoarseSolveFailed as e:
                logger.warning("preconditioner: %s; skipping coarse correction", e)
        return z

    __call__ = apply


def apply_preconditioner(
    sys: BlockSystem,
    part: TimePartition,
    cs: Optional[CoarseSpace],
    cfg: SchwarzConfig,
    r: np.ndarray,
    subdomains: Optional[List[SubdomainSystem]] = None,
) -> np.ndarray:
    return SchwarzPreconditioner(sys, part, cs, cfg, subdomains).apply(r)


def solve_gmres(
    sys: BlockSystem,
    part: Optional[TimePartition],
    cs: Optional[CoarseSpace],
    cfg: SchwarzConfig,
    krylov: Optional[KrylovConfig] = None,
    precondition: bool = True,
    subdomains: Optional[List[SubdomainSystem]] = None,
) -> Tuple[np.ndarray, IterationReport]:
    """
    GMRES on L w = b from the seeded random start, optionally
    right-preconditioned by one Schwarz iteration.
    """
    krylov = krylov or KrylovConfig(rel_tol=cfg.rel_tol)
    M = SchwarzPreconditioner(sys, part, cs, cfg, subdomains) if precondition else None
    x0 = random_guess(sys.size, cfg.seed)
    x, report = gmres(sys.L, M, sys.b, x0=x0, cfg=krylov)
    name = f"gmres+{_method_name(cfg)}" if precondition else "gmres"
    report = report.model_copy(update={"seed": cfg.seed, "solver": name})
    logger.info("%s finished: %s in %d iterations (%.2fs)", name, report.status, report.iterations, report.wall_seconds)
    return x, report


# =============================================================================
# Interface diagnostics
# =============================================================================

def monotonicity_probe(
    sys: BlockSystem,
    part: TimePartition,
    case: ManufacturedCase,
    cfg: SchwarzConfig,
    subdomains: Optional[List[SubdomainSystem]] = None,
) -> List[ProbeRecord]:
    """
    Interface error energies of a two-strip nonoverlapping iteration.

    e1 is the state error of the first strip at its last level m, w2 the
    adjoint error of the second strip at level m + 1, both measured
    against the direct solution with weight h^dim. Records start at k = 1
    and run to a relative residual of at most INTERFACE_REL_TOL.

    Raises:
        RequiresTwoSubdomains: unless K = 2 without overlap
    """
    if part.K != 2 or part.overlap_steps != 0 or cfg.overlapping:
        raise RequiresTwoSubdomains(
            "monotonicity probe needs K = 2 nonoverlapping strips",
            {"K": part.K, "overlap_steps": part.overlap_steps},
        )
    cfg = cfg.model_copy(update={"levels": 1, "rel_tol": min(cfg.rel_tol, INTERFACE_REL_TOL)})
    reference = lu_factor(sys.L).solve(sys.b)
    imap = sys.index_map
    m = part.owned[0][1]
    y_slice = imap.time_slice("state", m, m)
    p_slice = imap.time_slice("adjoint", m + 1, m + 1)
    weight = sys.grid.h**sys.grid.dim

    records: List[ProbeRecord] = []

    def record(k: int, w: np.ndarray) -> None:
        e1_sq = weight * float(np.sum((w[y_slice] - reference[y_slice]) ** 2))
        w2_sq = weight * float(np.sum((w[p_slice] - reference[p_slice]) ** 2))
        records.append(ProbeRecord(
            iteration=k, e1_sq=e1_sq, w2_sq=w2_sq,
            m_asn=case.gamma * e1_sq + w2_sq, m_msn=w2_sq,
        ))

    try:
        solve_stationary(sys, part, None, cfg, subdomains=subdomains, callback=record)
    except MaxItersExceeded as e:
        logger.warning("interface records stop at %d iterations: %s", len(records), e)
    return records
