"""Greedy conflict-driven best-first search over ban sets.

Each node assigns every request its cheapest alternative not yet banned. That
cost is a lower bound for every solution respecting the bans, so popping nodes
cheapest-first makes the first conflict-free node optimal. A conflict between
two picks splits the node three ways: ban the first, ban the second, ban both.
"""

from __future__ import annotations

import heapq
import itertools
import threading
from dataclasses import dataclass, field
from typing import Optional

from .model import InvalidProblem, Mode, Problem, conflicts_fixed
from .opt_sat import Deadline, RunStats, Solution, Status

BanSet = frozenset  # of (request, alternative) pairs
Pick = tuple[int, int]


@dataclass(frozen=True)
class SearchNode:
    assignment: tuple[int, ...]
    bans: BanSet
    cost: float


@dataclass
class GreedyResult:
    status: Status
    solution: Optional[Solution]
    stats: RunStats
    pop_costs: list[float] = field(default_factory=list)


def _ranked(problem: Problem) -> list[list[int]]:
    # alternatives per request ordered by (cost, index)
    return [
        sorted(range(len(r.alternatives)), key=lambda j, c=r.costs: (c[j], j))
        for r in problem.requests
    ]


def lowest_cost_assignment(
    problem: Problem, bans: BanSet = frozenset(), _ranked_alts: list[list[int]] | None = None
) -> Optional[SearchNode]:
    """Cheapest unbanned alternative per request (ties to the lowest index), or None."""
    ranked = _ranked_alts if _ranked_alts is not None else _ranked(problem)
    chosen = []
    cost = 0.0
    for i, order in enumerate(ranked):
        for j in order:
            if (i, j) not in bans:
                chosen.append(j)
                cost += problem.requests[i].alternatives[j].cost
                break
        else:
            return None
    return SearchNode(tuple(chosen), frozenset(bans), cost)


def find_conflicts(node: SearchNode, problem: Problem) -> list[tuple[Pick, Pick]]:
    picks = [problem.requests[i].alternatives[j] for i, j in enumerate(node.assignment)]
    out = []
    for i, k in itertools.combinations(range(len(picks)), 2):
        if conflicts_fixed(picks[i], picks[k]):
            out.append(((i, node.assignment[i]), (k, node.assignment[k])))
    return out


def solve_greedy(
    problem: Problem,
    budget: float | None = None,
    stop: threading.Event | None = None,
    branch_all: bool = False,
    trace: bool = False,
) -> GreedyResult:
    """Best-first search; ``branch_all`` branches on every conflict of a node, not only the first."""
    if problem.mode is not Mode.FIXED:
        raise InvalidProblem("greedy search requires a fixed-mode problem")
    problem.require_nonempty()
    deadline = Deadline(budget, stop)
    stats = RunStats()
    pops: list[float] = []
    ranked = _ranked(problem)
    counter = itertools.count()

    root = lowest_cost_assignment(problem, frozenset(), ranked)
    heap: list[tuple[float, int, SearchNode]] = []
    seen: set[BanSet] = set()
    if root is not None:
        heap.append((root.cost, next(counter), root))
        seen.add(root.bans)

    def finish(status: Status, solution: Optional[Solution]) -> GreedyResult:
        stats.wall_ms = deadline.elapsed_ms()
        if solution is not None:
            stats.ttfs_ms = stats.wall_ms
            stats.emitted = 1
        return GreedyResult(status, solution, stats, pops)

    while heap:
        if deadline.expired():
            return finish(Status.BUDGET_EXHAUSTED, None)
        cost, _, node = heapq.heappop(heap)
        stats.nodes_expanded += 1
        if trace:
            pops.append(cost)
        conflicts = find_conflicts(node, problem)
        if not conflicts:
            return finish(Status.OPTIMAL, Solution(node.assignment, node.cost, True))
        for a, b in conflicts if branch_all else conflicts[:1]:
            for extra in ((a,), (b,), (a, b)):
                bans = node.bans.union(extra)
                if bans in seen:
                    continue
                seen.add(bans)
                child = lowest_cost_assignment(problem, bans, ranked)
                if child is not None:
                    heapq.heappush(heap, (child.cost, next(counter), child))
        stats.max_queue = max(stats.max_queue, len(heap))
    return finish(Status.INFEASIBLE, None)
