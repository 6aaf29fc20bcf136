"""Minimum-cost resource reservation with incremental SAT and greedy search."""

from .model import (
    FixedAlternative,
    FlexibleAlternative,
    InvalidProblem,
    Mode,
    Problem,
    Request,
    dumps_problem,
    load_problem,
    loads_problem,
)
from .opt_greedy import solve_greedy
from .opt_sat import Solution, SolutionStream, Status, solve_lemma1, solve_naive
from .flexible import Schedule, discretize, optimize_flexible, solve_flexible
from .race import RaceMode, race
from .ledger import ClaimState, Ledger, Permission

__version__ = "0.1.0"

__all__ = [
    "FixedAlternative",
    "FlexibleAlternative",
    "InvalidProblem",
    "Mode",
    "Problem",
    "Request",
    "dumps_problem",
    "load_problem",
    "loads_problem",
    "solve_greedy",
    "Solution",
    "SolutionStream",
    "Status",
    "solve_lemma1",
    "solve_naive",
    "Schedule",
    "discretize",
    "optimize_flexible",
    "solve_flexible",
    "RaceMode",
    "race",
    "ClaimState",
    "Ledger",
    "Permission",
]
