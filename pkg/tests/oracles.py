"""Independent reference implementations used only by tests.

None of these touch the SAT encodings or the solvers under test.
"""

from __future__ import annotations

import itertools
import math
from functools import lru_cache

from resvsat.model import FixedAlternative, FlexibleAlternative, Problem


@lru_cache(maxsize=None)
def _columns(n: int) -> tuple[int, tuple[int, ...]]:
    """Truth-table columns as bitsets: bit a of column v is variable v under assignment a."""
    size = 1 << n
    full = (1 << size) - 1
    cols = []
    for v in range(n):
        period = 1 << v
        pattern = ((1 << period) - 1) << period  # period zeros then period ones
        block = 2 * period
        while block < size:
            pattern |= pattern << block
            block *= 2
        cols.append(pattern & full)
    return full, tuple(cols)


def truth_table_sat(num_vars: int, clauses) -> tuple[bool, int]:
    """(satisfiable, number of models) by full enumeration over 2**num_vars assignments."""
    full, cols = _columns(num_vars)
    alive = full
    for clause in clauses:
        acc = 0
        for lit in clause:
            col = cols[abs(lit) - 1]
            acc |= col if lit > 0 else full ^ col
        alive &= acc
        if not alive:
            return False, 0
    return True, bin(alive).count("1")


def intervals_intersect(s1, e1, s2, e2) -> bool:
    return max(s1, s2) < min(e1, e2)


def fixed_overlap(a: FixedAlternative, b: FixedAlternative) -> bool:
    end_a = math.inf if a.duration is None else a.start + a.duration
    end_b = math.inf if b.duration is None else b.start + b.duration
    return a.resource == b.resource and intervals_intersect(a.start, end_a, b.start, end_b)


def feasible_fixed(problem: Problem, chosen) -> bool:
    alts = [problem.requests[i].alternatives[j] for i, j in enumerate(chosen)]
    for a, b in itertools.combinations(alts, 2):
        if fixed_overlap(a, b):
            return False
    return True


def brute_force_fixed(problem: Problem):
    """(min cost, number of feasible assignments) by enumerating every combination."""
    best = math.inf
    count = 0
    ranges = [range(len(r.alternatives)) for r in problem.requests]
    for chosen in itertools.product(*ranges):
        if feasible_fixed(problem, chosen):
            count += 1
            best = min(best, sum(problem.requests[i].alternatives[j].cost for i, j in enumerate(chosen)))
    return best, count


def pack_in_order(alts: list[FlexibleAlternative]):
    """Earliest-start packing of alternatives in the given order, or None if a window is missed."""
    t = -math.inf
    starts = []
    for a in alts:
        start = max(a.earliest_start, t)
        if start > a.latest_start:
            return None
        starts.append(start)
        t = math.inf if a.duration is None else start + a.duration
    return starts


def flexible_set_schedulable(alts: list[FlexibleAlternative]) -> bool:
    """Some ordering of alternatives on one resource packs within all windows."""
    return any(pack_in_order(list(p)) is not None for p in itertools.permutations(alts))


def brute_force_flexible(problem: Problem):
    """(feasible, min cost) by enumerating alternatives and all per-resource orders."""
    best = math.inf
    ranges = [range(len(r.alternatives)) for r in problem.requests]
    for chosen in itertools.product(*ranges):
        by_res: dict[str, list] = {}
        for i, j in enumerate(chosen):
            a = problem.requests[i].alternatives[j]
            by_res.setdefault(a.resource, []).append(a)
        if all(flexible_set_schedulable(v) for v in by_res.values()):
            best = min(best, sum(problem.requests[i].alternatives[j].cost for i, j in enumerate(chosen)))
    return best < math.inf, best


def random_cnf(rng, max_vars: int = 20, max_clauses: int = 90, max_width: int = 4):
    """(num_vars, clauses) near the 3-SAT threshold so both verdicts are common."""
    n = rng.randint(1, max_vars)
    m = rng.randint(0, min(max_clauses, int(4.6 * n) + 2))
    clauses = []
    for _ in range(m):
        width = rng.randint(1, min(max_width, n))
        vs = rng.sample(range(1, n + 1), width)
        clauses.append(tuple(v if rng.random() < 0.5 else -v for v in vs))
    return n, clauses
