"""Scalar conservation-law solvers, learned finite-volume fluxes and calibration tools."""

from __future__ import annotations

__version__ = "0.1.0"

from conslaw.exact import LaxHopf, PiecewiseConstantIC, exact_grid, riemann_solution
from conslaw.flux import FluxModel, load_model
from conslaw.grid import BoundaryTrace, Discretization, SolutionGrid

__all__ = [
    "BoundaryTrace",
    "Discretization",
    "FluxModel",
    "LaxHopf",
    "PiecewiseConstantIC",
    "SolutionGrid",
    "exact_grid",
    "load_model",
    "riemann_solution",
]
