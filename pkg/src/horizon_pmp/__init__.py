"""Numerical verification of Pontryagin-type conditions on the half line."""

from .adjoint import BorelMeasureExt, AdjointSolution, adjoint_free_endpoint, solve_adjoint
from .errors import *  # noqa: F401,F403
from .problem import (
    BoxControlSet,
    ControlPath,
    ControlProblem,
    ConvergentFunction,
    FiniteControlSet,
    Process,
    SemiInfiniteGrid,
    StateConstraint,
    make_grid,
)
from .report import ConditionEntry, VerificationReport
from .scenarios import run_scenario, scenario_names

__version__ = "0.1.0"
