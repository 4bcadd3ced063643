"""Numerical laboratory for the penalized singular infinity-Laplacian problem

    Δ∞u = B_ε(u) u^(-γ)

on uniform 1D/2D grids, with closed-form oracles and empirical checks of the
free-boundary estimates (growth exponent 4/(3+γ), non-degeneracy, density).
"""

from siflab.model import (
    ParameterError,
    ProblemParams,
    derive_params,
    max_admissible_delta,
    penalty_base,
    penalty_eps,
    rhs,
)

__all__ = [
    "ParameterError",
    "ProblemParams",
    "derive_params",
    "max_admissible_delta",
    "penalty_base",
    "penalty_eps",
    "rhs",
]

__version__ = "0.1.0"
