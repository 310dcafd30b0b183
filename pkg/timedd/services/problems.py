"""
Manufactured test problems with closed-form solutions.

Both cases use y = cos(pi t) s(x), p = sin(pi t) s(x) with
s(x) = prod_i sin(pi x_i), so that y, p vanish on the boundary,
y(., 0) = s and p(., T) = 0 for T = 4. Since Laplace(s) = -dim pi^2 s, the
right-hand sides follow by substitution into

    -y_t + Laplace(y) - p / gamma = f
     p_t + Laplace(p) + y         = g
"""
from typing import Callable, Dict, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from timedd.logging_config import logger
from timedd.models.errors import DimensionMismatch
from timedd.services.discretize import Grid, ProblemSpec, SpaceFunction, SpaceTimeFunction, sample_space_time

DEFAULT_GAMMA = 1e-2
DEFAULT_T = 4.0


class ManufacturedCase(BaseModel):
    """A problem together with its exact state and adjoint."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    name: str
    dim: int = Field(..., ge=1, le=3)
    T: float = Field(..., gt=0)
    gamma: float = Field(..., gt=0)
    exact_y: SpaceTimeFunction
    exact_p: SpaceTimeFunction
    derived_f: SpaceTimeFunction
    derived_g: SpaceTimeFunction
    y0: SpaceFunction


def _spatial_mode(x: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    return np.prod(np.sin(np.pi * x), axis=1)


def _sine_case(name: str, dim: int, gamma: float, T: float = DEFAULT_T) -> ManufacturedCase:
    lam = dim * np.pi**2
    pi = np.pi

    def exact_y(x, t):
        return np.cos(pi * t) * _spatial_mode(x)

    def exact_p(x, t):
        return np.sin(pi * t) * _spatial_mode(x)

    def derived_f(x, t):
        s = _spatial_mode(x)
        return pi * np.sin(pi * t) * s - lam * np.cos(pi * t) * s - np.sin(pi * t) * s / gamma

    def derived_g(x, t):
        s = _spatial_mode(x)
        return pi * np.cos(pi * t) * s - lam * np.sin(pi * t) * s + np.cos(pi * t) * s

    return ManufacturedCase(
        name=name,
        dim=dim,
        T=T,
        gamma=gamma,
        exact_y=exact_y,
        exact_p=exact_p,
        derived_f=derived_f,
        derived_g=derived_g,
        y0=_spatial_mode,
    )


def example1(gamma: float = DEFAULT_GAMMA) -> ManufacturedCase:
    """Omega = (0,1), T = 4."""
    return _sine_case("example1", 1, gamma)


def example2(gamma: float = DEFAULT_GAMMA) -> ManufacturedCase:
    """Omega = (0,1)^2, T = 4."""
    return _sine_case("example2", 2, gamma)


CASES: Dict[str, Callable[..., ManufacturedCase]] = {
    "example1": example1,
    "example2": example2,
}


def get_case(name: str, gamma: Optional[float] = None) -> ManufacturedCase:
    """Look up a case by name, optionally overriding gamma."""
    try:
        factory = CASES[name]
    except KeyError:
        raise ValueError(f"unknown problem '{name}', expected one of {sorted(CASES)}") from None
    return factory() if gamma is None else factory(gamma)


def to_problem_spec(case: ManufacturedCase) -> ProblemSpec:
    return ProblemSpec(
        dim=case.dim,
        T=case.T,
        gamma=case.gamma,
        f=case.derived_f,
        g=case.derived_g,
        y0=case.y0,
        exact_y=case.exact_y,
        exact_p=case.exact_p,
    )


def exact_vector(case: ManufacturedCase, grid: Grid) -> np.ndarray:
    """Exact (y, p) sampled at the unknowns, in system ordering."""
    return np.concatenate([sample_space_time(case.exact_y, grid), sample_space_time(case.exact_p, grid)])


def _split(grid: Grid, w: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    w = np.asarray(w, dtype=float)
    if w.shape != (grid.size,):
        raise DimensionMismatch(
            f"vector has shape {w.shape}, grid has {grid.size} unknowns",
            {"expected": grid.size, "got": list(w.shape)},
        )
    half = grid.size // 2
    return w[:half], w[half:]


def error_norms(case: ManufacturedCase, grid: Grid, w: np.ndarray) -> Tuple[float, float]:
    """
    Discrete max-norm errors of y and p at the grid points.

    Raises:
        DimensionMismatch: if w does not match the grid
    """
    Y, P = _split(grid, w)
    err_y = float(np.max(np.abs(Y - sample_space_time(case.exact_y, grid))))
    err_p = float(np.max(np.abs(P - sample_space_time(case.exact_p, grid))))
    logger.debug("%s M=%d N=%d: err_y=%.3e err_p=%.3e", case.name, grid.M, grid.N, err_y, err_p)
    return err_y, err_p


def cost_functional(case: ManufacturedCase, grid: Grid, w: np.ndarray) -> float:
    """J(y, u) = 1/2 |y - g|^2 + gamma/2 |u|^2 with u = p / gamma, rectangle rule."""
    Y, P = _split(grid, w)
    G = sample_space_time(case.derived_g, grid)
    U = P / case.gamma
    weight = grid.tau * grid.h**grid.dim
    return float(weight * (0.5 * np.sum((Y - G) ** 2) + 0.5 * case.gamma * np.sum(U**2)))
