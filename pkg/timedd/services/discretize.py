"""
Space-time grid and assembly of the discrete optimality system.

The state y marches forward from y0 and the adjoint p backward from
p(T) = 0. Both are discretized by the leapfrog scheme in time, closed by
one-sided BDF2 rows at the last state level and the first adjoint level,
and by the central-difference Laplacian in space. Unknowns are ordered
state block first, then adjoint block; inside each block time-major
(all interior spatial nodes of t_1, then t_2, ...).
"""
from pathlib import Path
from typing import Callable, Literal, Optional, Tuple, Union

import numpy as np
import orjson
import scipy.sparse as sp
from pydantic import BaseModel, ConfigDict, Field

from timedd.logging_config import logger
from timedd.models.errors import DimensionMismatch, InvalidGrid
from timedd.services.linalg import SparseMatrix, TripletBuffer

Field_ = Literal["state", "adjoint"]
FIELDS: Tuple[str, str] = ("state", "adjoint")

# f(x, t) with x of shape (npts, dim), returning shape (npts,)
SpaceTimeFunction = Callable[[np.ndarray, float], np.ndarray]
SpaceFunction = Callable[[np.ndarray], np.ndarray]


# =============================================================================
# Grid
# =============================================================================

class Grid(BaseModel):
    """Uniform space-time grid: h = 1/M in space, tau = T/N in time."""

    model_config = ConfigDict(frozen=True)

    dim: int = Field(..., ge=1, le=3)
    M: int
    N: int
    T: float = Field(..., gt=0)

    @classmethod
    def uniform(cls, dim: int, M: int, T: float, N: Optional[int] = None) -> "Grid":
        """Grid with tau = h unless N is given."""
        if N is None:
            N = int(round(T * M))
        grid = cls(dim=dim, M=M, N=N, T=T)
        grid.check()
        return grid

    def check(self) -> None:
        """Raise InvalidGrid unless the BDF2 closures and the stencil fit."""
        if self.M < 3 or self.N < 5:
            raise InvalidGrid(
                f"grid needs M >= 3 and N >= 5, got M={self.M}, N={self.N}",
                {"M": self.M, "N": self.N},
            )

    @property
    def h(self) -> float:
        return 1.0 / self.M

    @property
    def tau(self) -> float:
        return self.T / self.N

    @property
    def n_space(self) -> int:
        """Interior spatial node count S."""
        return (self.M - 1) ** self.dim

    @property
    def n_time(self) -> int:
        """Interior time levels t_1..t_{N-1}."""
        return self.N - 1

    @property
    def size(self) -> int:
        return 2 * self.n_time * self.n_space


def spatial_nodes(grid: Grid) -> np.ndarray:
    """Interior node coordinates, shape (S, dim), x_1 varying fastest."""
    x = np.arange(1, grid.M) * grid.h
    mesh = np.meshgrid(*([x] * grid.dim), indexing="ij")
    # reversed so that the first axis varies fastest in C order
    return np.stack([m.ravel() for m in reversed(mesh)], axis=1)


def time_levels(grid: Grid) -> np.ndarray:
    """Interior time levels t_1..t_{N-1}."""
    return np.arange(1, grid.N) * grid.tau


# =============================================================================
# Index map
# =============================================================================

class IndexMap(BaseModel):
    """Maps (field, time step n in 1..N-1, spatial node) to a global index."""

    model_config = ConfigDict(frozen=True)

    n_time: int
    n_space: int

    @property
    def block_size(self) -> int:
        return self.n_time * self.n_space

    def offset(self, field: Field_) -> int:
        return 0 if field == "state" else self.block_size

    def index(self, field: Field_, n, node):
        """Global index; n and node may be arrays."""
        return self.offset(field) + (np.asarray(n) - 1) * self.n_space + np.asarray(node)

    def field_slice(self, field: Field_) -> slice:
        start = self.offset(field)
        return slice(start, start + self.block_size)

    def time_slice(self, field: Field_, n_lo: int, n_hi: int) -> slice:
        """Contiguous global indices of time steps n_lo..n_hi (inclusive)."""
        start = self.index(field, n_lo, 0)
        return slice(int(start), int(start) + (n_hi - n_lo + 1) * self.n_space)

    def time_range_indices(self, n_lo: int, n_hi: int) -> np.ndarray:
        """Global indices of both fields over time steps n_lo..n_hi."""
        parts = [self.time_slice(f, n_lo, n_hi) for f in FIELDS]
        return np.concatenate([np.arange(s.start, s.stop) for s in parts])

    def time_of(self, global_index) -> np.ndarray:
        """Time step n of each global index."""
        local = np.asarray(global_index) % self.block_size
        return local // self.n_space + 1


# =============================================================================
# Problem data and operators
# =============================================================================

class ProblemSpec(BaseModel):
    """Continuous problem data of the optimality system."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    dim: int = Field(..., ge=1, le=3)
    T: float = Field(..., gt=0)
    gamma: float = Field(..., gt=0)
    f: SpaceTimeFunction
    g: SpaceTimeFunction
    y0: SpaceFunction
    exact_y: Optional[SpaceTimeFunction] = None
    exact_p: Optional[SpaceTimeFunction] = None


class DiscreteLaplacian(BaseModel):
    """Central-difference Laplacian on interior nodes, Dirichlet rows eliminated."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    dim: int
    M: int
    matrix: SparseMatrix


def discrete_laplacian(dim: int, M: int) -> DiscreteLaplacian:
    """(1, -2, 1)/h^2 in 1D, the 5-point stencil in 2D, 7-point in 3D."""
    h = 1.0 / M
    m = M - 1
    L1 = sp.diags([1.0, -2.0, 1.0], [-1, 0, 1], shape=(m, m)) / h**2
    I1 = sp.identity(m)
    matrix = sp.csr_matrix((m**dim, m**dim))
    for axis in range(dim):
        ops = [I1] * dim
        ops[dim - 1 - axis] = L1
        term = ops[0]
        for op in ops[1:]:
            term = sp.kron(term, op)
        matrix = matrix + term
    return DiscreteLaplacian(dim=dim, M=M, matrix=sp.csr_matrix(matrix))


class BlockSystem(BaseModel):
    """The assembled system L w = b with its grid and index map."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    grid: Grid
    gamma: float
    L: SparseMatrix
    b: np.ndarray
    index_map: IndexMap

    @property
    def size(self) -> int:
        return self.b.shape[0]


# =============================================================================
# Assembly
# =============================================================================

def _state_time_operator(nt: int, tau: float) -> sp.csr_matrix:
    """-(Y^{n+1} - Y^{n-1})/2tau with the BDF2 closure in the last row."""
    c = 1.0 / (2.0 * tau)
    C = sp.lil_matrix(sp.diags([c, -c], [-1, 1], shape=(nt, nt)))
    C[nt - 1, :] = 0.0
    C[nt - 1, nt - 3] = -c
    C[nt - 1, nt - 2] = 4.0 * c
    C[nt - 1, nt - 1] = -3.0 * c
    return C.tocsr()


def _adjoint_time_operator(nt: int, tau: float) -> sp.csr_matrix:
    """(P^{n+1} - P^{n-1})/2tau with the BDF2 closure in the first row."""
    c = 1.0 / (2.0 * tau)
    C = sp.lil_matrix(sp.diags([-c, c], [-1, 1], shape=(nt, nt)))
    C[0, :] = 0.0
    C[0, 0] = -3.0 * c
    C[0, 1] = 4.0 * c
    C[0, 2] = -c
    return C.tocsr()


def sample_space_time(func: SpaceTimeFunction, grid: Grid) -> np.ndarray:
    """Evaluate func at all interior grid points, time-major."""
    x = spatial_nodes(grid)
    return np.concatenate([np.asarray(func(x, t), dtype=float).ravel() for t in time_levels(grid)])


def assemble_system(spec: ProblemSpec, grid: Grid) -> BlockSystem:
    """
    Assemble L_h w_h = b_h.

    Args:
        spec: Problem data (f, g, y0, gamma)
        grid: Space-time grid

    Returns:
        BlockSystem with L = [A_h, -I/gamma; I, D_h]

    Raises:
        InvalidGrid: if N < 5 or M < 3
    """
    grid.check()
    if spec.dim != grid.dim:
        raise DimensionMismatch(f"problem is {spec.dim}D but grid is {grid.dim}D")

    S, nt, tau = grid.n_space, grid.n_time, grid.tau
    lap = discrete_laplacian(grid.dim, grid.M).matrix
    I_S = sp.identity(S, format="csr")
    I_t = sp.identity(nt, format="csr")

    A_h = sp.kron(_state_time_operator(nt, tau), I_S) + sp.kron(I_t, lap)
    D_h = sp.kron(_adjoint_time_operator(nt, tau), I_S) + sp.kron(I_t, lap)
    block = nt * S
    I_block = sp.identity(block, format="csr")

    buf = TripletBuffer((2 * block, 2 * block))
    buf.add_matrix(A_h, 0, 0)
    buf.add_matrix(I_block, 0, block, scale=-1.0 / spec.gamma)
    buf.add_matrix(I_block, block, 0)
    buf.add_matrix(D_h, block, block)
    L = buf.to_csr()

    f_h = sample_space_time(spec.f, grid)
    g_h = sample_space_time(spec.g, grid)
    # y(., 0) = y0 moves to the first state row; p(., T) = 0 contributes nothing
    y0 = np.asarray(spec.y0(spatial_nodes(grid)), dtype=float).ravel()
    f_h[:S] -= y0 / (2.0 * tau)
    b = np.concatenate([f_h, g_h])

    logger.debug("assembled %dD system M=%d N=%d: size=%d nnz=%d", grid.dim, grid.M, grid.N, L.shape[0], L.nnz)
    return BlockSystem(grid=grid, gamma=spec.gamma, L=L, b=b, index_map=IndexMap(n_time=nt, n_space=S))


def residual(sys: BlockSystem, w: np.ndarray) -> np.ndarray:
    """Return b - L w."""
    w = np.asarray(w, dtype=float)
    if w.shape != sys.b.shape:
        raise DimensionMismatch(f"vector has shape {w.shape}, system has size {sys.size}")
    return sys.b - sys.L @ w


def extract_control(sys: BlockSystem, w: np.ndarray) -> np.ndarray:
    """Optimal control u = p / gamma over all adjoint unknowns."""
    w = np.asarray(w, dtype=float)
    if w.shape != sys.b.shape:
        raise DimensionMismatch(f"vector has shape {w.shape}, system has size {sys.size}")
    return w[sys.index_map.field_slice("adjoint")] / sys.gamma


def dump_system(sys: BlockSystem, stem: Union[str, Path]) -> Tuple[Path, Path]:
    """
    Write the matrix as "row col value" triplets plus a JSON header.

    Returns:
        Tuple of (header path, triplet path)
    """
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    grid = sys.grid
    header = {
        "dim": grid.dim,
        "M": grid.M,
        "N": grid.N,
        "T": grid.T,
        "gamma": sys.gamma,
        "size": sys.size,
        "nnz": int(sys.L.nnz),
    }
    header_path = stem.with_name(stem.name + ".header.json")
    header_path.write_bytes(orjson.dumps(header, option=orjson.OPT_INDENT_2))

    coo = sys.L.tocoo()
    triplet_path = stem.with_name(stem.name + ".triplets.txt")
    np.savetxt(triplet_path, np.column_stack([coo.row, coo.col, coo.data]), fmt=["%d", "%d", "%.17g"])
    return header_path, triplet_path
