"""Start-time windows encoded as strict total orders per resource.

Order variable ``X[a, b]`` means alternative ``a`` starts after ``b``. The
clauses only force the chosen alternatives on each resource into a total
order; durations are checked afterwards by packing each resource in that order
and learning a clause whenever an alternative is pushed past its latest start.
"""

from __future__ import annotations

import graphlib
import itertools
import json
import math
import threading
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Optional, Sequence

from .cnf import Clause, Formula, VarMap, alternative_vars, exactly_one
from .model import (
    FixedAlternative,
    FlexibleAlternative,
    InvalidProblem,
    Mode,
    Problem,
    Request,
    cannot_coexist_flexible,
)
from .opt_sat import Deadline, RunStats, Solution, Status, lemma1_clause
from .satcore import CDCLSolver, IncrementalSolver, SatResult, SolveInterrupted

Pick = tuple[int, int]


class ScheduleError(AssertionError):
    """The order variables of a model do not form a strict total order."""


@dataclass
class OrderVarMap:
    forward: dict[tuple[Pick, Pick], int] = field(default_factory=dict)
    reverse: dict[int, tuple[Pick, Pick]] = field(default_factory=dict)
    groups: dict[str, list[Pick]] = field(default_factory=dict)
    known: set[tuple[Pick, Pick]] = field(default_factory=set)
    counts: dict[str, int] = field(default_factory=dict)

    def after(self, a: Pick, b: Pick) -> int:
        """Variable for 'a starts after b'."""
        return self.forward[(a, b)]

    def structure_clauses(self) -> int:
        c = self.counts
        return c["anti_symmetry"] + c["transitivity"] + c["connectedness"]


def known_after_false(a: FlexibleAlternative, b: FlexibleAlternative) -> bool:
    """Whether 'a after b' is ruled out before search."""
    if b.duration is None:
        return True  # nothing may follow an indefinite reservation
    return a.latest_start < b.earliest_end and a.earliest_end > b.earliest_start


def encode_flexible(problem: Problem) -> tuple[Formula, VarMap, OrderVarMap]:
    if problem.mode is not Mode.FLEXIBLE:
        raise InvalidProblem("encode_flexible requires a flexible-mode problem")
    problem.require_nonempty()
    formula = Formula()
    varmap = alternative_vars(problem, formula)
    orders = OrderVarMap()
    counts = dict.fromkeys(
        ("exactly_one", "exclusion", "anti_symmetry", "transitivity", "connectedness", "known"), 0
    )
    for req in problem.requests:
        before = len(formula)
        exactly_one(formula, [varmap.var(req.id, j) for j in range(len(req.alternatives))])
        counts["exactly_one"] += len(formula) - before

    for req in problem.requests:
        for j, alt in enumerate(req.alternatives):
            orders.groups.setdefault(alt.resource, []).append((req.id, j))
    for picks in orders.groups.values():
        for a, b in itertools.permutations(picks, 2):
            var = formula.new_var()
            orders.forward[(a, b)] = var
            orders.reverse[var] = (a, b)

    x = varmap.forward
    X = orders.forward
    for picks in orders.groups.values():
        alts = {p: problem.alt(*p) for p in picks}
        for a, b in itertools.combinations(picks, 2):
            if a[0] != b[0] and cannot_coexist_flexible(alts[a], alts[b]):
                formula.add((-x[a], -x[b]))
                counts["exclusion"] += 1
            formula.add((-x[a], -x[b], -X[(a, b)], -X[(b, a)]))
            formula.add((-x[a], -x[b], X[(a, b)], X[(b, a)]))
            counts["anti_symmetry"] += 1
            counts["connectedness"] += 1
        for a, b, c in itertools.permutations(picks, 3):
            formula.add((-X[(a, b)], -X[(b, c)], X[(a, c)]))
            counts["transitivity"] += 1
        for a, b in itertools.permutations(picks, 2):
            if known_after_false(alts[a], alts[b]):
                formula.add((-X[(a, b)],))
                orders.known.add((a, b))
                counts["known"] += 1
    orders.counts = counts
    return formula, varmap, orders


# ---------------------------------------------------------------------------
# Schedules


@dataclass(frozen=True)
class ScheduleEntry:
    request: int
    alternative: int
    start: int
    end: Optional[int]  # None: held until released
    alt: FlexibleAlternative = field(compare=False, repr=False)

    @property
    def end_time(self) -> float:
        return math.inf if self.end is None else self.end


def _entry(pick: Pick, alt: FlexibleAlternative, start: int) -> ScheduleEntry:
    end = None if alt.duration is None else start + alt.duration
    return ScheduleEntry(pick[0], pick[1], start, end, alt)


@dataclass
class Schedule:
    resources: dict[str, list[ScheduleEntry]] = field(default_factory=dict)

    def entries(self) -> Iterator[ScheduleEntry]:
        for name in sorted(self.resources):
            yield from self.resources[name]

    def chosen(self, num_requests: int) -> tuple[int, ...]:
        out = [-1] * num_requests
        for e in self.entries():
            out[e.request] = e.alternative
        return tuple(out)

    def violations(self) -> list[str]:
        """Window and non-overlap violations; empty for a valid schedule."""
        out = []
        for name, entries in self.resources.items():
            prev = None
            for e in entries:
                if not e.alt.earliest_start <= e.start <= e.alt.latest_start:
                    out.append(f"{name}: request {e.request} starts at {e.start} outside its window")
                if prev is not None and e.start < prev.end_time:
                    out.append(f"{name}: request {e.request} overlaps request {prev.request}")
                prev = e
        return out

    def to_dict(self) -> dict:
        return {
            "resources": {
                name: [
                    {"request": e.request, "alternative": e.alternative, "start_ms": e.start, "end_ms": e.end}
                    for e in self.resources[name]
                ]
                for name in sorted(self.resources)
            }
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def compact_schedule(schedule: Schedule) -> Schedule:
    """Move each entry as early as its window and its predecessor allow, keeping the order."""
    out = Schedule()
    for name, entries in schedule.resources.items():
        packed = []
        prev_end = -math.inf
        for e in sorted(entries, key=lambda e: (e.start, e.request)):
            start = int(max(e.alt.earliest_start, prev_end))
            packed.append(_entry((e.request, e.alternative), e.alt, start))
            prev_end = packed[-1].end_time
        out.resources[name] = packed
    return out


# ---------------------------------------------------------------------------
# Validation and clause learning


def _resource_order(picks: list[Pick], model: SatResult, orders: OrderVarMap) -> list[Pick]:
    sorter = graphlib.TopologicalSorter({p: () for p in picks})
    for a, b in itertools.combinations(picks, 2):
        ab = model.value(orders.after(a, b))
        ba = model.value(orders.after(b, a))
        if ab == ba:
            raise ScheduleError(f"order between {a} and {b} is not decided exactly once")
        if ab:
            sorter.add(a, b)
        else:
            sorter.add(b, a)
    try:
        return list(sorter.static_order())
    except graphlib.CycleError as exc:
        raise ScheduleError(f"cyclic order among chosen alternatives: {exc.args[1]}") from None


def learn_clauses(
    model: SatResult,
    problem: Problem,
    varmap: VarMap,
    orders: OrderVarMap,
    include_order: bool = True,
) -> tuple[Optional[Schedule], list[Clause]]:
    """Pack each resource in the model's order; learn a clause per missed latest start.

    A learned clause negates the late alternative, its predecessor and the run
    of back-to-back predecessors before it. With ``include_order`` it also
    negates the order literals linking them, which keeps the clause valid for
    other orderings of the same alternatives.
    """
    chosen = varmap.decode(model.model, len(problem.requests))
    by_res: dict[str, list[Pick]] = {}
    for i, j in enumerate(chosen):
        by_res.setdefault(problem.alt(i, j).resource, []).append((i, j))

    schedule = Schedule()
    banned: list[Clause] = []
    x = varmap.forward
    for name in sorted(by_res):
        order = _resource_order(by_res[name], model, orders)
        placed: list[ScheduleEntry] = []
        for pick in order:
            alt = problem.alt(*pick)
            last_end = placed[-1].end_time if placed else -math.inf
            if alt.earliest_start >= last_end:
                placed.append(_entry(pick, alt, alt.earliest_start))
            elif alt.latest_start >= last_end:
                placed.append(_entry(pick, alt, int(last_end)))
            else:
                chain = [placed[-1]]
                j = len(placed) - 1
                while j >= 1 and placed[j].start == placed[j - 1].end_time:
                    chain.append(placed[j - 1])
                    j -= 1
                picks = [(e.request, e.alternative) for e in reversed(chain)] + [pick]
                clause = [-x[p] for p in picks]
                if include_order:
                    clause += [-orders.after(later, earlier) for earlier, later in zip(picks, picks[1:])]
                banned.append(tuple(clause))
        schedule.resources[name] = placed
    return (None if banned else schedule), banned


# ---------------------------------------------------------------------------
# Solve loops


@dataclass
class FlexibleResult:
    status: Status
    schedule: Optional[Schedule]
    solution: Optional[Solution]
    stats: RunStats
    banned: int = 0
    iterations: int = 0


class _FlexibleSearch:
    def __init__(self, problem, solver, include_order):
        self.problem = problem
        self.formula, self.varmap, self.orders = encode_flexible(problem)
        self.solver = solver if solver is not None else CDCLSolver()
        self.solver.add_formula(self.formula)
        self.include_order = include_order
        self.banned = 0
        self.iterations = 0
        self.solve_calls = 0

    def next_schedule(self, deadline: Deadline) -> Optional[Schedule]:
        """Next valid schedule consistent with all clauses so far; None when UNSAT."""
        while True:
            if deadline.expired():
                raise SolveInterrupted()
            self.solve_calls += 1
            result = self.solver.solve(should_stop=deadline.expired)
            if not result:
                return None
            self.iterations += 1
            schedule, clauses = learn_clauses(
                result, self.problem, self.varmap, self.orders, self.include_order
            )
            if schedule is not None:
                return schedule
            self.banned += len(clauses)
            self.solver.add_clauses(clauses)

    def fill(self, stats: RunStats, deadline: Deadline) -> None:
        stats.wall_ms = deadline.elapsed_ms()
        stats.solve_calls = self.solve_calls
        s = self.solver.stats
        stats.conflicts, stats.decisions, stats.learned_clauses = s.conflicts, s.decisions, s.learned


def solve_flexible(
    problem: Problem,
    budget: float | None = None,
    stop: threading.Event | None = None,
    include_order: bool = True,
    solver: IncrementalSolver | None = None,
) -> FlexibleResult:
    """First valid schedule (not cost-optimized), or proof that none exists."""
    search = _FlexibleSearch(problem, solver, include_order)
    deadline = Deadline(budget, stop)
    stats = RunStats()
    try:
        schedule = search.next_schedule(deadline)
    except SolveInterrupted:
        status, schedule = Status.BUDGET_EXHAUSTED, None
    else:
        status = Status.FEASIBLE if schedule is not None else Status.INFEASIBLE
    search.fill(stats, deadline)
    solution = None
    if schedule is not None:
        stats.ttfs_ms = stats.wall_ms
        stats.emitted = 1
        solution = Solution.of(problem, schedule.chosen(len(problem.requests)))
    return FlexibleResult(status, schedule, solution, stats, search.banned, search.iterations)


def optimize_flexible(
    problem: Problem,
    budget: float | None = None,
    stop: threading.Event | None = None,
    include_order: bool = True,
    solver: IncrementalSolver | None = None,
) -> FlexibleResult:
    """Minimum-cost valid schedule using cheaper-alternative clauses over the x variables.

    Costs do not depend on start times, so blocking a chosen alternative set
    excludes every ordering of it at once.
    """
    search = _FlexibleSearch(problem, solver, include_order)
    deadline = Deadline(budget, stop)
    stats = RunStats()
    best: Optional[tuple[Solution, Schedule]] = None
    n = len(problem.requests)
    status = Status.BUDGET_EXHAUSTED
    try:
        while True:
            schedule = search.next_schedule(deadline)
            if schedule is None:
                status = Status.OPTIMAL if best else Status.INFEASIBLE
                break
            sol = Solution.of(problem, schedule.chosen(n))
            if best is None or sol.total_cost < best[0].total_cost:
                if best is None:
                    stats.ttfs_ms = deadline.elapsed_ms()
                best = (sol, schedule)
                stats.emitted += 1
                cheaper = lemma1_clause(sol, problem, search.varmap)
                if cheaper is None:
                    status = Status.OPTIMAL
                    break
                search.solver.add_clause(cheaper)
            search.solver.add_clause([-search.varmap.var(i, j) for i, j in enumerate(sol.chosen)])
    except SolveInterrupted:
        status = Status.BUDGET_EXHAUSTED
    search.fill(stats, deadline)
    if best is None:
        return FlexibleResult(status, None, None, stats, search.banned, search.iterations)
    sol, schedule = best
    if status is Status.OPTIMAL:
        sol = Solution(sol.chosen, sol.total_cost, True)
    return FlexibleResult(status, schedule, sol, stats, search.banned, search.iterations)


# ---------------------------------------------------------------------------
# Discretization baseline


class Discretization(NamedTuple):
    problem: Problem
    parent: list[list[int]]  # parent[i][k]: flexible alternative behind fixed alternative k
    source: Problem


def discretize(problem: Problem, step: int) -> Discretization:
    """Replace every window by fixed starts at s, s+step, ..., up to l."""
    if step <= 0:
        raise ValueError("step must be positive")
    if problem.mode is not Mode.FLEXIBLE:
        raise InvalidProblem("discretize requires a flexible-mode problem")
    requests = []
    parents = []
    for req in problem.requests:
        alts = []
        parent = []
        for j, a in enumerate(req.alternatives):
            for k in range((a.latest_start - a.earliest_start) // step + 1):
                alts.append(FixedAlternative(a.earliest_start + k * step, a.duration, a.resource, a.cost))
                parent.append(j)
        requests.append(Request(req.id, tuple(alts)))
        parents.append(parent)
    return Discretization(Problem(tuple(requests), Mode.FIXED), parents, problem)


def schedule_from_fixed(disc: Discretization, chosen: Sequence[int]) -> Schedule:
    """Schedule for the flexible source problem from a discretized fixed solution."""
    schedule = Schedule()
    for i, k in enumerate(chosen):
        fixed = disc.problem.alt(i, k)
        j = disc.parent[i][k]
        entry = _entry((i, j), disc.source.alt(i, j), fixed.start)
        schedule.resources.setdefault(fixed.resource, []).append(entry)
    for entries in schedule.resources.values():
        entries.sort(key=lambda e: (e.start, e.request))
    return schedule
