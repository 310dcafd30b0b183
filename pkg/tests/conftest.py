"""Shared fixtures: small manufactured systems and their direct solutions."""
import numpy as np
import pytest

from timedd.middleware.cache import get_cache
from timedd.services.discretize import Grid, assemble_system
from timedd.services.linalg import lu_factor
from timedd.services.problems import example1, example2, to_problem_spec


def build(case, M, N):
    grid = Grid.uniform(case.dim, M, case.T, N=N)
    return assemble_system(to_problem_spec(case), grid)


@pytest.fixture(scope="session")
def case1():
    return example1()


@pytest.fixture(scope="session")
def case2():
    return example2()


@pytest.fixture(scope="session")
def tiny_sys(case1):
    """1D, M = 4, N = 9: small enough for dense oracles."""
    return build(case1, 4, 9)


@pytest.fixture(scope="session")
def small_sys(case1):
    """1D, M = 8, N = 17: N - 1 = 16 allows K in 1, 2, 4, 8."""
    return build(case1, 8, 17)


@pytest.fixture(scope="session")
def small_sys_2d(case2):
    """2D, M = 4, N = 9."""
    return build(case2, 4, 9)


@pytest.fixture(scope="session")
def small_solution(small_sys):
    return lu_factor(small_sys.L).solve(small_sys.b)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(autouse=True)
def clear_system_cache():
    get_cache().clear()
    yield
