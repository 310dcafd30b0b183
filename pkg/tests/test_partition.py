import numpy as np
import pytest
from numpy.testing import assert_allclose

from timedd.models.errors import DimensionMismatch, IndivisibleGrid, OverlapTooLarge
from timedd.services.linalg import lu_factor
from timedd.services.partition import (
    build_coarse_space,
    build_extension,
    coarse_correct,
    partition_time,
    select_coarse_nodes,
)


def test_nonoverlapping_partition():
    part = partition_time(17, 4, 0)
    assert part.owned == [(1, 4), (5, 8), (9, 12), (13, 16)]
    assert part.extended == part.owned
    assert part.virtual_left[1] == 4 and part.virtual_right[1] == 9
    assert part.virtual_left[0] is None and part.virtual_right[3] is None


def test_owned_ranges_tile_interior_steps():
    part = partition_time(65, 8, 0)
    steps = [n for lo, hi in part.owned for n in range(lo, hi + 1)]
    assert steps == list(range(1, 65))
    assert all(part.owner_of(n) == i for i, (lo, hi) in enumerate(part.owned) for n in range(lo, hi + 1))


def test_overlapping_partition():
    part = partition_time(17, 4, 1)
    assert part.extended == [(1, 5), (3, 9), (7, 13), (11, 16)]
    assert part.owned == [(1, 4), (5, 8), (9, 12), (13, 16)]


@pytest.mark.parametrize("overlap", [1, 2])
def test_adjacent_extended_ranges_share_three_overlaps(overlap):
    part = partition_time(49, 4, overlap)
    for (_, hi), (lo, _) in zip(part.extended[:-1], part.extended[1:]):
        assert hi - lo + 1 == 3 * overlap


@pytest.mark.parametrize("overlap", [0, 1, 3])
def test_single_subdomain(overlap):
    part = partition_time(17, 1, overlap)
    assert part.owned == part.extended == [(1, 16)]
    assert part.virtual_left == [None] and part.virtual_right == [None]


def test_indivisible_grid():
    with pytest.raises(IndivisibleGrid):
        partition_time(18, 4, 0)


def test_overlap_too_large():
    with pytest.raises(OverlapTooLarge):
        partition_time(17, 8, 1)


@pytest.mark.parametrize("overlap,expected", [
    (0, [1, 4, 5, 8, 9, 12, 13, 16]),
    (1, [1, 3, 4, 7, 8, 11, 12, 16]),
])
def test_coarse_nodes(overlap, expected):
    assert select_coarse_nodes(partition_time(17, 4, overlap)) == expected


def test_coarse_nodes_single_subdomain():
    assert select_coarse_nodes(partition_time(17, 1, 0)) == [1, 16]


def test_extension_rows():
    E = build_extension([1, 4, 5, 8, 9, 12, 13, 16], 17).toarray()
    assert_allclose(E[1, :2], [2 / 3, 1 / 3])
    assert_allclose(E[2, :2], [1 / 3, 2 / 3])
    for j, n in enumerate([1, 4, 5, 8, 9, 12, 13, 16]):
        assert_allclose(E[n - 1], np.eye(8)[j])
    assert_allclose(E.sum(axis=1), 1.0, atol=1e-14)


def test_extension_reproduces_linear_functions():
    nodes = [1, 3, 4, 7, 8, 11, 12, 16]
    E = build_extension(nodes, 17)
    t = np.arange(1, 17, dtype=float)
    f = 0.3 * t - 2.0
    assert_allclose(E @ f[np.array(nodes) - 1], f, atol=1e-13)


def test_extension_extrapolates_constant_outside_hull():
    E = build_extension([3, 10], 17).toarray()
    assert_allclose(E[0], [1.0, 0.0])
    assert_allclose(E[1], [1.0, 0.0])
    assert_allclose(E[15], [0.0, 1.0])
    assert_allclose(E.sum(axis=1), 1.0)


def test_extension_rejects_unsorted_nodes():
    with pytest.raises(ValueError):
        build_extension([4, 1], 17)


def test_restriction_is_half_transpose(small_sys):
    part = partition_time(17, 4, 0)
    cs = build_coarse_space(part, small_sys)
    assert_allclose(cs.R.toarray(), 0.5 * cs.E.T.toarray())
    assert cs.Lc.shape == (2 * 8 * small_sys.grid.n_space,) * 2


def test_galerkin_operator_matches_dense_product(tiny_sys):
    part = partition_time(9, 2, 0)
    cs = build_coarse_space(part, tiny_sys)
    E, R, L = cs.E.toarray(), cs.R.toarray(), tiny_sys.L.toarray()
    assert_allclose(cs.Lc.toarray(), R @ L @ E, atol=1e-13 * np.abs(L).max())


@pytest.mark.parametrize("overlap", [0, 1])
def test_restriction_row_normalization(small_sys, overlap):
    cs = build_coarse_space(partition_time(17, 4, overlap), small_sys)
    assert_allclose(np.asarray(cs.R.sum(axis=1)).ravel(), 1.0)
    assert_allclose(cs.R.toarray() * np.asarray(cs.E.sum(axis=0)).ravel()[:, None], cs.E.T.toarray())


def test_partition_and_system_must_match(small_sys):
    with pytest.raises(DimensionMismatch):
        build_coarse_space(partition_time(9, 2, 0), small_sys)


def test_coarse_correction_of_exact_solution(small_sys, small_solution):
    cs = build_coarse_space(partition_time(17, 4, 0), small_sys)
    assert_allclose(coarse_correct(small_sys, cs, small_solution), small_solution, rtol=1e-10, atol=1e-10)


def test_coarse_correction_matches_dense_oracle(tiny_sys, rng):
    cs = build_coarse_space(partition_time(9, 2, 0), tiny_sys)
    w1 = rng.random(tiny_sys.size)
    E, R, L = cs.E.toarray(), cs.R.toarray(), tiny_sys.L.toarray()
    expected = w1 + E @ np.linalg.solve(R @ L @ E, R @ (tiny_sys.b - L @ w1))
    assert_allclose(coarse_correct(tiny_sys, cs, w1), expected, rtol=1e-12, atol=1e-12)


def test_corrected_residual_is_restriction_orthogonal(small_sys, rng):
    cs = build_coarse_space(partition_time(17, 4, 1), small_sys)
    w1 = rng.random(small_sys.size)
    r1 = small_sys.b - small_sys.L @ w1
    w2 = coarse_correct(small_sys, cs, w1)
    r2 = small_sys.b - small_sys.L @ w2
    assert np.linalg.norm(cs.R @ r2) <= 1e-10 * np.linalg.norm(cs.R @ r1)


def test_iterative_coarse_solver(small_sys, rng):
    part = partition_time(17, 4, 0)
    direct = build_coarse_space(part, small_sys, "direct")
    iterative = build_coarse_space(part, small_sys, "ilu_bicgstab")
    w1 = rng.random(small_sys.size)
    rc = direct.R @ (small_sys.b - small_sys.L @ w1)
    for cs in (direct, iterative):
        w2 = coarse_correct(small_sys, cs, w1)
        assert np.linalg.norm(cs.R @ (small_sys.b - small_sys.L @ w2)) <= 1e-3 * np.linalg.norm(rc)


def test_coarse_correction_with_consistent_rhs_is_noop(small_sys):
    cs = build_coarse_space(partition_time(17, 2, 0), small_sys)
    w = lu_factor(small_sys.L).solve(small_sys.b)
    assert_allclose(coarse_correct(small_sys, cs, w, rhs=small_sys.L @ w), w, atol=1e-10)
