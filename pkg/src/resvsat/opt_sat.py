"""Cost optimization by repeated SAT calls.

Both optimizers keep one incremental solver and only add clauses. After every
model they block it; the cheaper-alternative variant also requires that the
next model pick, for at least one request, an alternative strictly cheaper than
the one currently chosen. Once that requirement is empty or unsatisfiable the
best solution is optimal.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, Optional, Sequence

from .cnf import VarMap, encode_fixed
from .model import InvalidProblem, Mode, Problem
from .satcore import CDCLSolver, IncrementalSolver, SolveInterrupted


class Status(str, Enum):
    OPTIMAL = "optimal"
    FEASIBLE = "feasible"
    INFEASIBLE = "infeasible"
    BUDGET_EXHAUSTED = "budget_exhausted"


@dataclass(frozen=True)
class Solution:
    chosen: tuple[int, ...]
    total_cost: float
    optimal: bool = False

    @classmethod
    def of(cls, problem: Problem, chosen: Sequence[int], optimal: bool = False) -> Solution:
        return cls(tuple(chosen), problem.cost_of(chosen), optimal)

    def to_dict(self) -> dict:
        return {"chosen": list(self.chosen), "cost": self.total_cost, "optimal": self.optimal}


@dataclass
class RunStats:
    solve_calls: int = 0
    conflicts: int = 0
    decisions: int = 0
    emitted: int = 0
    wall_ms: float = 0.0
    ttfs_ms: Optional[float] = None
    nodes_expanded: int = 0
    max_queue: int = 0
    learned_clauses: int = 0


class Deadline:
    """Wall-clock budget plus an optional shared stop flag."""

    def __init__(self, budget: float | None = None, stop: threading.Event | None = None):
        self.start = time.perf_counter()
        self.until = None if budget is None else self.start + budget
        self.stop = stop

    def expired(self) -> bool:
        if self.stop is not None and self.stop.is_set():
            return True
        return self.until is not None and time.perf_counter() >= self.until

    def elapsed_ms(self) -> float:
        return (time.perf_counter() - self.start) * 1000.0


class SolutionStream:
    """Anytime stream of strictly improving solutions.

    Iterate to drive the optimizer; ``terminal`` is set once iteration ends.
    ``close()`` abandons the run and records ``BUDGET_EXHAUSTED``.
    """

    def __init__(self, gen_factory, stats: RunStats):
        self.solutions: list[Solution] = []
        self.terminal: Optional[Status] = None
        self.stats = stats
        self._gen = gen_factory(self)

    def __iter__(self) -> Iterator[Solution]:
        return self

    def __next__(self) -> Solution:
        return next(self._gen)

    def _emit(self, solution: Solution) -> Solution:
        if self.solutions:
            assert solution.total_cost < self.solutions[-1].total_cost
        self.solutions.append(solution)
        self.stats.emitted += 1
        return solution

    def _finish(self, status: Status) -> None:
        assert self.terminal is None
        self.terminal = status
        if status is Status.OPTIMAL and self.solutions:
            last = self.solutions[-1]
            self.solutions[-1] = Solution(last.chosen, last.total_cost, True)

    @property
    def best(self) -> Optional[Solution]:
        return self.solutions[-1] if self.solutions else None

    def run(self) -> SolutionStream:
        for _ in self:
            pass
        return self

    def close(self) -> None:
        self._gen.close()
        if self.terminal is None:
            self.terminal = Status.BUDGET_EXHAUSTED


def negation_clause(solution: Solution, varmap: VarMap) -> list[int]:
    return [-varmap.var(i, j) for i, j in enumerate(solution.chosen)]


def lemma1_clause(solution: Solution, problem: Problem, varmap: VarMap) -> Optional[list[int]]:
    """Disjunction of every strictly cheaper alternative; None when there is none."""
    lits = []
    for i, j in enumerate(solution.chosen):
        costs = problem.requests[i].costs
        current = costs[j]
        lits.extend(varmap.var(i, k) for k, c in enumerate(costs) if c < current)
    return lits or None


def _decode(result, varmap: VarMap, n: int) -> tuple[int, ...]:
    chosen = varmap.decode(result.model, n)
    assert -1 not in chosen
    return chosen


def _optimize(
    problem: Problem,
    budget: float | None,
    stop: threading.Event | None,
    use_lemma: bool,
    solver: IncrementalSolver | None,
) -> SolutionStream:
    if problem.mode is not Mode.FIXED:
        raise InvalidProblem("SAT cost optimizers require a fixed-mode problem")
    formula, varmap = encode_fixed(problem)
    stats = RunStats()
    solver = solver if solver is not None else CDCLSolver()

    def gen(stream: SolutionStream):
        deadline = Deadline(budget, stop)
        solver.add_formula(formula)
        best_cost = float("inf")
        n = len(problem.requests)
        try:
            while True:
                if deadline.expired():
                    stream._finish(Status.BUDGET_EXHAUSTED)
                    return
                try:
                    result = solver.solve(should_stop=deadline.expired)
                except SolveInterrupted:
                    stream._finish(Status.BUDGET_EXHAUSTED)
                    return
                finally:
                    stats.solve_calls += 1
                if not result:
                    stream._finish(Status.OPTIMAL if stream.solutions else Status.INFEASIBLE)
                    return
                chosen = _decode(result, varmap, n)
                sol = Solution.of(problem, chosen)
                block = negation_clause(sol, varmap)
                if sol.total_cost < best_cost:
                    best_cost = sol.total_cost
                    if stats.ttfs_ms is None:
                        stats.ttfs_ms = deadline.elapsed_ms()
                    yield stream._emit(sol)
                    if use_lemma:
                        cheaper = lemma1_clause(sol, problem, varmap)
                        if cheaper is None:
                            stream._finish(Status.OPTIMAL)
                            return
                        solver.add_clause(cheaper)
                solver.add_clause(block)
        finally:
            stats.wall_ms = deadline.elapsed_ms()
            s = solver.stats
            stats.conflicts, stats.decisions, stats.learned_clauses = s.conflicts, s.decisions, s.learned

    return SolutionStream(gen, stats)


def solve_naive(
    problem: Problem,
    budget: float | None = None,
    stop: threading.Event | None = None,
    solver: IncrementalSolver | None = None,
) -> SolutionStream:
    """Enumerate models, blocking each, until the solver reports UNSAT."""
    return _optimize(problem, budget, stop, use_lemma=False, solver=solver)


def solve_lemma1(
    problem: Problem,
    budget: float | None = None,
    stop: threading.Event | None = None,
    solver: IncrementalSolver | None = None,
) -> SolutionStream:
    """Repeated SAT with cheaper-alternative clauses; stops at the first proven optimum."""
    return _optimize(problem, budget, stop, use_lemma=True, solver=solver)
