import numpy as np
import pytest
import scipy.sparse as sp
from numpy.testing import assert_allclose

from timedd.models.configs import KrylovConfig
from timedd.models.errors import DimensionMismatch, SingularMatrix, ZeroPivot
from timedd.services.discretize import discrete_laplacian
from timedd.services.linalg import TripletBuffer, bicgstab, gmres, ilu0, lu_factor


def convection_diffusion(n, peclet=0.5):
    """Nonsymmetric tridiagonal test matrix."""
    return sp.diags([-1 - peclet, 2.5, -1 + peclet], [-1, 0, 1], shape=(n, n), format="csr")


def test_triplet_buffer_sums_duplicates():
    buf = TripletBuffer((2, 2))
    buf.add([0, 0, 1], [0, 0, 1], [1.0, 2.0, 5.0])
    buf.add(1, 0, -1.0)
    A = buf.to_csr()
    assert_allclose(A.toarray(), [[3.0, 0.0], [-1.0, 5.0]])
    assert A.has_sorted_indices


def test_triplet_buffer_rejects_out_of_bounds():
    buf = TripletBuffer((2, 2))
    buf.add(2, 0, 1.0)
    with pytest.raises(DimensionMismatch):
        buf.to_csr()


def test_triplet_buffer_add_matrix_offsets():
    buf = TripletBuffer((4, 4))
    buf.add_matrix(sp.identity(2), 2, 0, scale=-3.0)
    assert_allclose(buf.to_csr().toarray()[2:, :2], -3.0 * np.eye(2))


def test_lu_factor_solves(rng):
    A = convection_diffusion(50) + sp.random(50, 50, density=0.05, random_state=3)
    x = rng.standard_normal(50)
    lu = lu_factor(A)
    assert_allclose(lu.solve(A @ x), x, rtol=1e-10)


def test_lu_factor_pivots_on_zero_diagonal():
    A = sp.csr_matrix([[0.0, 1.0], [1.0, 0.0]])
    assert_allclose(lu_factor(A).solve(np.array([2.0, 3.0])), [3.0, 2.0])


@pytest.mark.parametrize("dense", [
    [[1.0, 1.0], [1.0, 1.0]],
    [[1.0, 2.0, 3.0], [2.0, 4.0, 6.0], [0.0, 0.0, 1.0]],
])
def test_lu_factor_singular(dense):
    with pytest.raises(SingularMatrix):
        lu_factor(sp.csr_matrix(dense))


def test_lu_factor_rhs_mismatch():
    lu = lu_factor(sp.identity(3, format="csr"))
    with pytest.raises(DimensionMismatch):
        lu.solve(np.ones(4))


def test_gmres_unpreconditioned(rng):
    A = convection_diffusion(80)
    b = rng.standard_normal(80)
    x, report = gmres(A, None, b, cfg=KrylovConfig(rel_tol=1e-10, max_iters=200))
    assert report.converged
    assert report.history[0] == 1.0
    assert report.final_residual < 1e-10
    assert np.linalg.norm(b - A @ x) / np.linalg.norm(b) == pytest.approx(report.final_residual, rel=1e-6)


def test_gmres_exact_preconditioner_converges_in_one_step(rng):
    A = convection_diffusion(40)
    lu = lu_factor(A)
    b = rng.standard_normal(40)
    x, report = gmres(A, lu.solve, b, cfg=KrylovConfig(rel_tol=1e-10))
    assert report.iterations == 1
    assert_allclose(A @ x, b, atol=1e-9)


def test_gmres_with_initial_guess_and_restart(rng):
    A = convection_diffusion(60)
    b = rng.standard_normal(60)
    x0 = rng.random(60)
    x, report = gmres(A, None, b, x0=x0, cfg=KrylovConfig(rel_tol=1e-9, max_iters=400, restart=10))
    assert report.converged
    assert report.initial_residual == pytest.approx(np.linalg.norm(b - A @ x0))
    assert np.linalg.norm(b - A @ x) <= 1e-9 * report.initial_residual * (1 + 1e-6)


def test_gmres_reports_max_iters(rng):
    A = convection_diffusion(100)
    b = rng.standard_normal(100)
    _, report = gmres(A, None, b, cfg=KrylovConfig(rel_tol=1e-12, max_iters=3))
    assert report.status == "max_iters"
    assert report.iterations == 3
    assert len(report.history) == 4


def test_gmres_zero_rhs():
    x, report = gmres(sp.identity(5, format="csr"), None, np.zeros(5))
    assert report.converged and report.iterations == 0
    assert not np.any(x)


def test_gmres_history_is_nonincreasing(rng):
    A = convection_diffusion(50)
    _, report = gmres(A, None, rng.standard_normal(50), cfg=KrylovConfig(rel_tol=1e-10))
    assert np.all(np.diff(report.history) <= 1e-12)


def test_ilu0_is_exact_for_tridiagonal(rng):
    A = convection_diffusion(30)
    M = ilu0(A)
    r = rng.standard_normal(30)
    assert_allclose(A @ M.apply(r), r, atol=1e-10)


def test_ilu0_keeps_sparsity_pattern(small_sys):
    M = ilu0(small_sys.L)
    pattern = set(zip(*small_sys.L.nonzero()))
    for factor in (M.L, M.U):
        assert set(zip(*factor.nonzero())) <= pattern


def test_ilu0_missing_diagonal():
    A = sp.csr_matrix([[1.0, 2.0], [3.0, 0.0]])
    A.eliminate_zeros()
    with pytest.raises(ZeroPivot):
        ilu0(A)


def test_bicgstab_with_ilu0(small_sys, small_solution):
    x, report = bicgstab(small_sys.L, ilu0(small_sys.L), small_sys.b, KrylovConfig(rel_tol=1e-10, max_iters=500))
    assert report.converged
    assert_allclose(x, small_solution, rtol=1e-6, atol=1e-8)


def test_bicgstab_returns_best_iterate_at_cap(small_sys):
    x, report = bicgstab(small_sys.L, None, small_sys.b, KrylovConfig(rel_tol=1e-14, max_iters=2))
    assert report.status == "max_iters"
    assert x.shape == small_sys.b.shape


def test_gmres_on_diagonal_matrix():
    A = sp.diags(np.arange(1.0, 11.0), format="csr")
    x, report = gmres(A, None, np.ones(10), cfg=KrylovConfig(rel_tol=1e-12, max_iters=20))
    assert report.converged
    assert report.iterations <= 10
    assert_allclose(x, 1.0 / np.arange(1.0, 11.0), rtol=1e-10)


def test_bicgstab_on_identity_takes_one_step(rng):
    b = rng.standard_normal(12)
    x, report = bicgstab(sp.identity(12, format="csr"), None, b, KrylovConfig(rel_tol=1e-12))
    assert report.converged
    assert report.iterations == 1
    assert_allclose(x, b, rtol=1e-14)


def test_bicgstab_history_matches_true_residual(rng):
    A = convection_diffusion(60)
    b = rng.standard_normal(60)
    x, report = bicgstab(A, None, b, KrylovConfig(rel_tol=1e-10, max_iters=300))
    assert report.converged
    true_rel = np.linalg.norm(b - A @ x) / np.linalg.norm(b)
    assert true_rel == pytest.approx(report.final_residual, abs=1e-12)


def test_ilu0_of_diagonal_is_exact(rng):
    d = np.linspace(1.0, 4.0, 8)
    M = ilu0(sp.diags(d, format="csr"))
    assert M.L.nnz == 0  # unit diagonal is implicit
    assert_allclose(M.U.toarray(), np.diag(d))
    r = rng.standard_normal(8)
    assert_allclose(M.apply(r), r / d, rtol=1e-14)


def test_lu_factor_inverts_dirichlet_laplacian():
    lap = discrete_laplacian(1, 5).matrix
    lu = lu_factor(lap)
    inverse = np.column_stack([lu.solve(e) for e in np.eye(4)])
    assert_allclose(inverse, np.linalg.inv(lap.toarray()), rtol=1e-12, atol=1e-14)
