"""
Sparse linear algebra kernels.

Matrices are ``scipy.sparse`` CSR matrices assembled through a triplet
buffer. The module provides a pivoting sparse LU, right-preconditioned
GMRES, ILU(0) and preconditioned BiCGStab. All kernels are reentrant;
matrices and factorizations are never mutated after construction.
"""
import time
from typing import Callable, List, Optional, Tuple, Union

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from timedd.config import settings
from timedd.logging_config import logger
from timedd.models.configs import KrylovConfig
from timedd.models.errors import Breakdown, DimensionMismatch, SingularMatrix, ZeroPivot
from timedd.models.reports import IterationReport

SparseMatrix = sp.csr_matrix
Operator = Union[Callable[[np.ndarray], np.ndarray], sp.spmatrix]


def as_operator(A: Optional[Operator]) -> Callable[[np.ndarray], np.ndarray]:
    """Wrap a matrix (or None for the identity) as a matvec callable."""
    if A is None:
        return lambda x: np.array(x, copy=True)
    if sp.issparse(A) or isinstance(A, np.ndarray):
        return lambda x: A @ x
    if hasattr(A, "apply"):
        return A.apply
    return A


# =============================================================================
# Assembly
# =============================================================================

class TripletBuffer:
    """Accumulates (row, col, value) triplets before conversion to CSR."""

    def __init__(self, shape: Tuple[int, int]):
        self.shape = shape
        self._rows: List[np.ndarray] = []
        self._cols: List[np.ndarray] = []
        self._vals: List[np.ndarray] = []

    def add(self, rows, cols, vals) -> None:
        """Append triplets; scalars broadcast against the index arrays."""
        rows = np.atleast_1d(np.asarray(rows, dtype=np.int64))
        cols = np.atleast_1d(np.asarray(cols, dtype=np.int64))
        vals = np.broadcast_to(np.asarray(vals, dtype=float), rows.shape)
        self._rows.append(rows)
        self._cols.append(cols)
        self._vals.append(np.array(vals))

    def add_matrix(self, block: sp.spmatrix, row_offset: int, col_offset: int, scale: float = 1.0) -> None:
        """Append every stored entry of ``block`` shifted by the given offsets."""
        coo = sp.coo_matrix(block)
        self.add(coo.row + row_offset, coo.col + col_offset, scale * coo.data)

    def to_csr(self) -> SparseMatrix:
        """Sum duplicates and return a canonical CSR matrix."""
        if not self._rows:
            return sp.csr_matrix(self.shape)
        rows = np.concatenate(self._rows)
        cols = np.concatenate(self._cols)
        vals = np.concatenate(self._vals)
        nrows, ncols = self.shape
        if rows.size and (rows.min() < 0 or rows.max() >= nrows or cols.min() < 0 or cols.max() >= ncols):
            raise DimensionMismatch("triplet index out of bounds", {"shape": list(self.shape)})
        if not np.all(np.isfinite(vals)):
            raise ValueError("non-finite matrix entry")
        A = sp.coo_matrix((vals, (rows, cols)), shape=self.shape).tocsr()
        A.sum_duplicates()
        A.eliminate_zeros()
        A.sort_indices()
        return A


def check_matrix(A: sp.spmatrix) -> SparseMatrix:
    """Return ``A`` as canonical CSR, validating finiteness."""
    A = sp.csr_matrix(A, dtype=float)
    A.sum_duplicates()
    A.sort_indices()
    if not np.all(np.isfinite(A.data)):
        raise ValueError("non-finite matrix entry")
    return A


# =============================================================================
# Sparse direct solver
# =============================================================================

class Factorization:
    """Sparse LU factors with partial pivoting (SuperLU)."""

    def __init__(self, lu: spla.SuperLU, shape: Tuple[int, int]):
        self._lu = lu
        self.shape = shape

    def solve(self, b: np.ndarray) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        if b.shape[0] != self.shape[0]:
            raise DimensionMismatch(f"rhs has length {b.shape[0]}, expected {self.shape[0]}")
        return self._lu.solve(b)

    apply = solve


def lu_factor(A: sp.spmatrix, pivot_threshold: Optional[float] = None) -> Factorization:
    """
    Factorize a square sparse matrix.

    Args:
        A: Square sparse matrix
        pivot_threshold: Relative pivot threshold (default from settings)

    Returns:
        Factorization whose ``solve`` applies A^{-1}

    Raises:
        SingularMatrix: if a pivot underflows the threshold
    """
    A = check_matrix(A)
    n, m = A.shape
    if n != m:
        raise DimensionMismatch(f"matrix is {n}x{m}, expected square")
    threshold = settings.PIVOT_THRESHOLD if pivot_threshold is None else pivot_threshold
    scale = np.abs(A.data).max() if A.nnz else 0.0
    if scale == 0.0:
        raise SingularMatrix("matrix is zero")

    start = time.perf_counter()
    try:
        lu = spla.splu(A.tocsc(), permc_spec="COLAMD", diag_pivot_thresh=1.0)
    except RuntimeError as e:
        raise SingularMatrix(f"factorization failed: {e}")

    pivots = np.abs(lu.U.diagonal())
    if pivots.size < n or pivots.min() <= threshold * scale:
        raise SingularMatrix(
            "pivot below threshold",
            {"min_pivot": float(pivots.min()) if pivots.size else 0.0, "threshold": threshold * scale},
        )
    logger.debug("lu_factor n=%d nnz=%d in %.3fs", n, A.nnz, time.perf_counter() - start)
    return Factorization(lu, A.shape)


# =============================================================================
# Right-preconditioned GMRES
# =============================================================================

def gmres(
    apply_A: Operator,
    apply_M: Optional[Operator],
    b: np.ndarray,
    x0: Optional[np.ndarray] = None,
    cfg: Optional[KrylovConfig] = None,
) -> Tuple[np.ndarray, IterationReport]:
    """
    Right-preconditioned GMRES with modified Gram-Schmidt Arnoldi.

    Solves A M^{-1} (M x) = b, so the minimized residual is the true
    residual b - A x. One iteration is one Arnoldi step.

    Args:
        apply_A: Matrix or matvec callable
        apply_M: Preconditioner callable (None for no preconditioning)
        b: Right-hand side
        x0: Initial guess (default zero)
        cfg: Stopping rule and restart length

    Returns:
        Tuple of (solution, report); status is "max_iters" when the cap is hit

    Raises:
        Breakdown: if the Krylov space becomes invariant without convergence
    """
    cfg = cfg or KrylovConfig()
    A = as_operator(apply_A)
    M = as_operator(apply_M)
    flexible = apply_M is not None
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    if x.shape[0] != n:
        raise DimensionMismatch(f"x0 has length {x.shape[0]}, expected {n}")

    start = time.perf_counter()
    r = b - A(x)
    beta0 = float(np.linalg.norm(r))
    history = [1.0]
    if beta0 == 0.0:
        return x, IterationReport(history=[0.0], iterations=0, status="converged",
                                  initial_residual=0.0, solver="gmres")

    restart = cfg.restart or cfg.max_iters
    iters = 0
    beta = beta0
    status = "max_iters"

    while iters < cfg.max_iters:
        m = min(restart, cfg.max_iters - iters)
        V = [r / beta]
        Z = []
        H = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = beta
        lucky = False
        j = -1

        for j in range(m):
            z = M(V[j]) if flexible else V[j]
            w = np.array(A(z), dtype=float)
            if flexible:
                Z.append(z)
            w_norm = np.linalg.norm(w)
            for i in range(j + 1):
                H[i, j] = np.dot(V[i], w)
                w -= H[i, j] * V[i]
            H[j + 1, j] = np.linalg.norm(w)

            # Givens rotations
            for i in range(j):
                tmp = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
                H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
                H[i, j] = tmp
            denom = np.hypot(H[j, j], H[j + 1, j])
            if denom == 0.0:
                raise Breakdown("GMRES: singular Hessenberg column", _report(history, iters, "max_iters", start, beta0), x)
            cs[j] = H[j, j] / denom
            sn[j] = H[j + 1, j] / denom
            H[j, j] = denom
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]
            H[j + 1, j] = 0.0

            iters += 1
            history.append(abs(g[j + 1]) / beta0)
            logger.debug("gmres it=%d rel=%.3e", iters, history[-1])

            if history[-1] < cfg.rel_tol:
                break
            if denom > 0 and abs(sn[j]) * denom <= 1e-14 * max(w_norm, 1e-300):
                lucky = True
                break
            V.append(w / (sn[j] * denom))

        k = j + 1
        y = _back_substitute(H[:k, :k], g[:k])
        basis = Z[:k] if flexible else V[:k]
        x = x + np.column_stack(basis) @ y

        r = b - A(x)
        beta = float(np.linalg.norm(r))
        history[-1] = beta / beta0
        if history[-1] < cfg.rel_tol:
            status = "converged"
            break
        if lucky:
            raise Breakdown(
                "GMRES: Krylov space became invariant before convergence",
                _report(history, iters, "max_iters", start, beta0), x,
            )

    report = _report(history, iters, status, start, beta0)
    logger.debug("gmres finished: %s after %d iterations", status, iters)
    return x, report


def _back_substitute(R: np.ndarray, g: np.ndarray) -> np.ndarray:
    k = R.shape[0]
    y = np.zeros(k)
    for i in range(k - 1, -1, -1):
        y[i] = (g[i] - R[i, i + 1:] @ y[i + 1:]) / R[i, i]
    return y


def _report(history, iters, status, start, beta0, solver="gmres") -> IterationReport:
    return IterationReport(
        history=list(history),
        iterations=iters,
        status=status,
        wall_seconds=time.perf_counter() - start,
        initial_residual=beta0,
        solver=solver,
    )


# =============================================================================
# ILU(0)
# =============================================================================

class ILU0Preconditioner:
    """Incomplete LU factors on the sparsity pattern of A."""

    def __init__(self, L: SparseMatrix, U: SparseMatrix):
        self.L = L
        self.U = U
        self.shape = L.shape

    def apply(self, r: np.ndarray) -> np.ndarray:
        """Return U^{-1} L^{-1} r."""
        t = spla.spsolve_triangular(self.L, r, lower=True, unit_diagonal=True)
        return spla.spsolve_triangular(self.U, t, lower=False)

    __call__ = apply


def ilu0(A: sp.spmatrix) -> ILU0Preconditioner:
    """
    Zero fill-in incomplete LU factorization (IKJ variant).

    Raises:
        ZeroPivot: if a diagonal entry is missing or a pivot vanishes
    """
    A = check_matrix(A)
    n = A.shape[0]
    if A.shape[1] != n:
        raise DimensionMismatch(f"matrix is {A.shape[0]}x{A.shape[1]}, expected square")

    indptr = A.indptr
    indices = A.indices
    data = A.data.copy()

    diag = np.full(n, -1, dtype=np.int64)
    rows = np.repeat(np.arange(n), np.diff(indptr))
    on_diag = np.flatnonzero(rows == indices)
    diag[rows[on_diag]] = on_diag
    missing = np.flatnonzero(diag < 0)
    if missing.size:
        raise ZeroPivot(int(missing[0]))

    row_scale = np.maximum.reduceat(np.abs(A.data), indptr[:-1]) if A.nnz else np.zeros(n)
    tiny = settings.PIVOT_THRESHOLD

    pos = np.full(n, -1, dtype=np.int64)
    start = time.perf_counter()
    for i in range(n):
        lo, hi = indptr[i], indptr[i + 1]
        pos[indices[lo:hi]] = np.arange(lo, hi)
        for p in range(lo, diag[i]):
            k = indices[p]
            data[p] /= data[diag[k]]
            ks, ke = diag[k] + 1, indptr[k + 1]
            if ks == ke:
                continue
            targets = pos[indices[ks:ke]]
            hit = targets >= 0
            data[targets[hit]] -= data[p] * data[ks:ke][hit]
        if not abs(data[diag[i]]) > tiny * row_scale[i]:
            raise ZeroPivot(i)
        pos[indices[lo:hi]] = -1

    factors = sp.csr_matrix((data, indices.copy(), indptr.copy()), shape=A.shape)
    L = sp.tril(factors, k=-1, format="csr")
    U = sp.triu(factors, k=0, format="csr")
    logger.debug("ilu0 n=%d nnz=%d in %.3fs", n, A.nnz, time.perf_counter() - start)
    return ILU0Preconditioner(L, U)


# =============================================================================
# Preconditioned BiCGStab
# =============================================================================

def bicgstab(
    apply_A: Operator,
    precond: Optional[Operator],
    b: np.ndarray,
    cfg: Optional[KrylovConfig] = None,
    x0: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, IterationReport]:
    """
    Right-preconditioned Bi-CGSTAB.

    One iteration is one full step (two operator and two preconditioner
    applications). Convergence may also be detected at the half step.

    Raises:
        Breakdown: rho or omega vanished; carries the best iterate
    """
    cfg = cfg or KrylovConfig.coarse()
    A = as_operator(apply_A)
    P = as_operator(precond)
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)

    start = time.perf_counter()
    r = b - A(x) if x0 is not None else b.copy()
    r_hat = r.copy()
    norm0 = float(np.linalg.norm(r))
    if norm0 == 0.0:
        return x, IterationReport(history=[0.0], iterations=0, status="converged",
                                  initial_residual=0.0, solver="bicgstab")

    history = [1.0]
    best_x, best_res = x.copy(), 1.0
    rho = alpha = omega = 1.0
    p = np.zeros(n)
    v = np.zeros(n)
    tiny = np.finfo(float).eps ** 2

    for it in range(1, cfg.max_iters + 1):
        rho_next = np.dot(r_hat, r)
        if abs(rho_next) <= tiny * norm0 ** 2:
            raise Breakdown("BiCGStab: rho vanished", _report(history, it - 1, "max_iters", start, norm0, "bicgstab"), best_x)
        beta = (rho_next / rho) * (alpha / omega)
        rho = rho_next
        p = r + beta * (p - omega * v)

        q = P(p)
        v = A(q)
        alpha = rho / np.dot(r_hat, v)
        s = r - alpha * v
        s_norm = np.linalg.norm(s) / norm0
        if s_norm < cfg.rel_tol:
            x = x + alpha * q
            history.append(s_norm)
            return x, _report(history, it, "converged", start, norm0, "bicgstab")

        z = P(s)
        t = A(z)
        tt = np.dot(t, t)
        if tt == 0.0:
            raise Breakdown("BiCGStab: omega vanished", _report(history, it - 1, "max_iters", start, norm0, "bicgstab"), best_x)
        omega = np.dot(t, s) / tt
        x = x + alpha * q + omega * z
        r = s - omega * t
        res = np.linalg.norm(r) / norm0
        history.append(res)
        if res < best_res:
            best_x, best_res = x.copy(), res
        if res < cfg.rel_tol:
            return x, _report(history, it, "converged", start, norm0, "bicgstab")
        if abs(omega) <= tiny:
            raise Breakdown("BiCGStab: omega vanished", _report(history, it, "max_iters", start, norm0, "bicgstab"), best_x)

    logger.debug("bicgstab hit max_iters=%d (rel=%.3e)", cfg.max_iters, best_res)
    return best_x, _report(history, cfg.max_iters, "max_iters", start, norm0, "bicgstab")
