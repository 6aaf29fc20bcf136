"""Scenario generators and a sequential timing harness.

Every generator is a pure function of its parameters and seed. Times are
quantized to whole minutes; costs are distinct values on [1, 1000] unless the
family needs a particular cost structure.
"""

from __future__ import annotations

import csv
import functools
import io
import random
import statistics
import time
import traceback
from dataclasses import asdict, dataclass, replace
from enum import Enum
from typing import Callable, Iterable, Optional, Sequence

from .flexible import discretize, solve_flexible
from .model import FixedAlternative, FlexibleAlternative, Mode, Problem, conflicts_fixed
from .opt_greedy import solve_greedy
from .opt_sat import Status, solve_lemma1, solve_naive
from .race import RaceMode, race

MINUTE = 60_000
HOUR = 60 * MINUTE


class Family(str, Enum):
    MANY_FEASIBLE = "many-feasible"
    CONFLICT_COUNT = "conflict-count"
    FIXED_CONFLICT_VARY_REQUESTS = "fixed-conflict-vary-requests"
    SAT_DEVIL = "sat-devil"
    GREEDY_DEVIL = "greedy-devil"
    INFEASIBLE = "infeasible"
    FLEXIBLE_WINDOW = "flexible-window"
    RANDOM_FIXED = "random-fixed"
    RANDOM_FLEXIBLE = "random-flexible"


# (n_requests, n_alternatives, n_conflicts, window_ms, step_ms)
_DEFAULTS = {
    Family.MANY_FEASIBLE: (10, None, 0, 0, 0),
    Family.CONFLICT_COUNT: (10, 5, 4, 0, 0),
    Family.FIXED_CONFLICT_VARY_REQUESTS: (10, 10, 4, 0, 0),
    Family.SAT_DEVIL: (10, 10, 0, 0, 0),
    Family.GREEDY_DEVIL: (10, 10, 0, 0, 0),
    Family.INFEASIBLE: (3, 1, 0, 0, 0),
    Family.FLEXIBLE_WINDOW: (5, 5, 0, HOUR, 10 * MINUTE),
    Family.RANDOM_FIXED: (6, 4, 0, 0, 0),
    Family.RANDOM_FLEXIBLE: (4, 3, 0, 30 * MINUTE, 10 * MINUTE),
}


@dataclass(frozen=True)
class Scenario:
    family: Family
    n_requests: int
    n_alternatives: int
    n_conflicts: int = 0
    window_ms: int = 0
    step_ms: int = 0
    seed: int = 0

    @classmethod
    def make(cls, family: Family | str, seed: int = 0, **params) -> Scenario:
        family = Family(family)
        n, a, k, w, s = _DEFAULTS[family]
        n = params.pop("n_requests", n)
        a = params.pop("n_alternatives", a)
        if a is None:
            a = n
        scenario = cls(
            family,
            n,
            a,
            params.pop("n_conflicts", k),
            params.pop("window_ms", w),
            params.pop("step_ms", s),
            seed,
        )
        if params:
            raise ValueError(f"unknown scenario parameters: {sorted(params)}")
        return scenario

    def descriptor(self) -> dict:
        d = asdict(self)
        d["family"] = self.family.value
        return d


def _costs(rng: random.Random, count: int, lo: float = 1.0, hi: float = 1000.0) -> list[float]:
    # distinct, two decimals
    picks = rng.sample(range(int(lo * 100), int(hi * 100) + 1), count)
    return [p / 100 for p in picks]


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ValueError(msg)


def gen_many_feasible(n: int, alternatives: int, seed: int) -> Problem:
    """Each request owns a resource, so no two requests ever conflict."""
    _require(n >= 1 and alternatives >= 1, "many-feasible needs n >= 1 and alternatives >= 1")
    rng = random.Random(seed)
    costs = _costs(rng, n * alternatives)
    rows = []
    for i in range(n):
        rows.append(
            [
                FixedAlternative(j * 15 * MINUTE, 10 * MINUTE, f"r{i}", costs[i * alternatives + j])
                for j in range(alternatives)
            ]
        )
    return Problem.build(rows, Mode.FIXED)


@functools.lru_cache(maxsize=None)
def _components(n: int, k: int) -> Optional[tuple[tuple[str, int], ...]]:
    """Split n requests into cliques and chains with exactly k overlapping pairs.

    Among all splits, prefer those whose conflict graph needs the most requests
    to move (largest minimum vertex cover), then the fewest components.
    """

    def edges(kind: str, size: int) -> int:
        return size * (size - 1) // 2 if kind == "clique" else size - 1

    def cover(kind: str, size: int) -> int:
        return size - 1 if kind == "clique" else size // 2

    @functools.lru_cache(maxsize=None)
    def best(rem_n: int, rem_k: int, bound: tuple[int, str]):
        if rem_k == 0:
            return (0, 0, ())
        found = None
        for size in range(min(bound[0], rem_n), 1, -1):
            for kind in ("clique", "chain"):
                if (size, kind) > bound:
                    continue
                e = edges(kind, size)
                if e > rem_k or (kind == "chain" and size == 2):
                    continue
                rest = best(rem_n - size, rem_k - e, (size, kind))
                if rest is None:
                    continue
                cand = (rest[0] + cover(kind, size), rest[1] - 1, ((kind, size),) + rest[2])
                if found is None or cand[:2] > found[:2]:
                    found = cand
        return found

    result = best(n, k, (n, "clique"))
    if result is None:
        return None
    parts = result[2]
    used = sum(size for _, size in parts)
    return parts + (("clique", 1),) * (n - used)


def gen_conflict_count(n: int, alternatives: int, k: int, seed: int) -> Problem:
    """Cheapest picks overlap in exactly k pairs; every other pick is a trap or an escape.

    The cheapest picks form disjoint groups on one shared resource (cliques
    whose intervals share an instant, or chains overlapping only neighbours).
    Each request also has a private, expensive escape slot, and its remaining
    alternatives are cheap decoys spanning the whole timeline, so they clash
    with every other request and never appear in a feasible schedule.
    """
    _require(alternatives >= 2, "conflict families need at least 2 alternatives per request")
    parts = _components(n, k)
    _require(parts is not None, f"cannot arrange {n} requests with exactly {k} conflicting pairs")
    rng = random.Random(seed)
    unit = 10 * MINUTE
    parts = list(parts)
    rng.shuffle(parts)
    order = list(range(n))
    rng.shuffle(order)
    cheapest: dict[int, tuple[int, int]] = {}
    t = 0
    members = iter(order)
    for kind, size in parts:
        if kind == "clique":
            for _ in range(size):
                cheapest[next(members)] = (t + rng.randint(0, 1) * unit, rng.randint(2, 3) * unit)
            t += 5 * unit
        else:
            for j in range(size):
                cheapest[next(members)] = (t + 2 * j * unit, 3 * unit)
            t += (2 * size + 3) * unit
    horizon = t
    span = horizon + n * unit
    rows = []
    for i in range(n):
        start, length = cheapest[i]
        decoys = rng.sample(range(101, 201), alternatives - 2)
        kinds = ["cheap", "escape"] + ["decoy"] * (alternatives - 2)
        rng.shuffle(kinds)
        row = []
        for kind in kinds:
            if kind == "cheap":
                row.append(FixedAlternative(start, length, "hub", rng.randint(1, 100)))
            elif kind == "escape":
                row.append(FixedAlternative(horizon + i * unit, unit, "hub", rng.randint(900, 1000)))
            else:
                row.append(FixedAlternative(0, span, "hub", decoys.pop()))
        rows.append(row)
    return Problem.build(rows, Mode.FIXED)


def gen_sat_devil(n: int, alternatives: int, seed: int) -> Problem:
    """Conflict-free cost ladder, cheapest first in input order; greedy's first node is optimal."""
    _require(n >= 1 and alternatives >= 1, "sat-devil needs n, alternatives >= 1")
    rng = random.Random(seed)
    costs = sorted(_costs(rng, n * alternatives))
    rows = []
    for i in range(n):
        # rung j of every request costs more than rung j-1 of any request
        rows.append(
            [
                FixedAlternative(j * HOUR, 30 * MINUTE, f"r{i}", costs[j * n + i])
                for j in range(alternatives)
            ]
        )
    return Problem.build(rows, Mode.FIXED)


def gen_greedy_devil(n: int, alternatives: int, seed: int) -> Problem:
    """Cheap alternatives all collide on one resource; the last alternative is a costly escape."""
    _require(n >= 2 and alternatives >= 2, "greedy-devil needs n >= 2 and alternatives >= 2")
    rng = random.Random(seed)
    cheap = _costs(rng, n * (alternatives - 1), 1, 100)
    escape = _costs(rng, n, 900, 1000)
    rows = []
    for i in range(n):
        row = [
            FixedAlternative(j * 5 * MINUTE, HOUR, "hot", cheap[i * (alternatives - 1) + j])
            for j in range(alternatives - 1)
        ]
        row.append(FixedAlternative(0, HOUR, f"escape{i}", escape[i]))
        rows.append(row)
    return Problem.build(rows, Mode.FIXED)


def gen_infeasible(n: int, alternatives: int, seed: int) -> Problem:
    """Every alternative of every request overlaps on one resource."""
    _require(n >= 2 and alternatives >= 1, "infeasible needs n >= 2")
    rng = random.Random(seed)
    costs = _costs(rng, n * alternatives)
    rows = [
        [
            FixedAlternative(j * MINUTE, HOUR, "r0", costs[i * alternatives + j])
            for j in range(alternatives)
        ]
        for i in range(n)
    ]
    return Problem.build(rows, Mode.FIXED)


def gen_flexible_window(n: int, alternatives: int, window: int, step: int, seed: int) -> Problem:
    """Windows of equal width; starts and durations on the step grid."""
    _require(window >= 0 and step > 0 and window % step == 0, "window must be a multiple of step")
    rng = random.Random(seed)
    costs = _costs(rng, n * alternatives)
    resources = [f"r{k}" for k in range(3)]
    rows = []
    for i in range(n):
        row = []
        for j in range(alternatives):
            s = rng.randrange(0, 4) * step
            d = rng.randrange(1, 4) * step
            row.append(FlexibleAlternative(s, s + window, d, rng.choice(resources), costs[i * alternatives + j]))
        rows.append(row)
    return Problem.build(rows, Mode.FLEXIBLE)


def gen_random_fixed(
    max_requests: int, max_alternatives: int, seed: int, max_resources: int = 3, min_requests: int = 1
) -> Problem:
    """Small random instances for oracle checks: sizes, resources, times and costs all drawn."""
    rng = random.Random(seed)
    m = rng.randint(min(min_requests, max_requests), max_requests)
    resources = [f"r{k}" for k in range(rng.randint(1, max_resources))]
    rows = []
    for _ in range(m):
        row = []
        for _ in range(rng.randint(1, max_alternatives)):
            duration = None if rng.random() < 0.05 else rng.randrange(5, 60, 5) * MINUTE
            row.append(
                FixedAlternative(
                    rng.randrange(0, 120, 5) * MINUTE,
                    duration,
                    rng.choice(resources),
                    float(rng.randint(1, 30)),
                )
            )
        rows.append(row)
    return Problem.build(rows, Mode.FIXED)


def gen_random_flexible(
    max_requests: int, max_alternatives: int, seed: int, max_resources: int = 2, step: int = 10 * MINUTE
) -> Problem:
    """Small random windowed instances with every time on the step grid."""
    rng = random.Random(seed)
    m = rng.randint(1, max_requests)
    resources = [f"r{k}" for k in range(rng.randint(1, max_resources))]
    rows = []
    for _ in range(m):
        row = []
        for _ in range(rng.randint(1, max_alternatives)):
            s = rng.randrange(0, 7) * step
            w = rng.randrange(0, 5) * step
            d = rng.randrange(1, 5) * step
            row.append(FlexibleAlternative(s, s + w, d, rng.choice(resources), float(rng.randint(1, 20))))
        rows.append(row)
    return Problem.build(rows, Mode.FLEXIBLE)


def gen(scenario: Scenario) -> Problem:
    f, n, a, k, seed = scenario.family, scenario.n_requests, scenario.n_alternatives, scenario.n_conflicts, scenario.seed
    if f is Family.MANY_FEASIBLE:
        return gen_many_feasible(n, a, seed)
    if f in (Family.CONFLICT_COUNT, Family.FIXED_CONFLICT_VARY_REQUESTS):
        return gen_conflict_count(n, a, k, seed)
    if f is Family.SAT_DEVIL:
        return gen_sat_devil(n, a, seed)
    if f is Family.GREEDY_DEVIL:
        return gen_greedy_devil(n, a, seed)
    if f is Family.INFEASIBLE:
        return gen_infeasible(n, a, seed)
    if f is Family.FLEXIBLE_WINDOW:
        return gen_flexible_window(n, a, scenario.window_ms, scenario.step_ms, seed)
    if f is Family.RANDOM_FIXED:
        return gen_random_fixed(n, a, seed)
    if f is Family.RANDOM_FLEXIBLE:
        return gen_random_flexible(n, a, seed, step=scenario.step_ms or 10 * MINUTE)
    raise ValueError(f"unknown family {f}")


def lowest_cost_conflicts(problem: Problem) -> int:
    """Conflicting pairs among each request's cheapest alternative."""
    picks = [min(r.alternatives, key=lambda a: a.cost) for r in problem.requests]
    return sum(
        conflicts_fixed(picks[a], picks[b]) for a in range(len(picks)) for b in range(a + 1, len(picks))
    )


# ---------------------------------------------------------------------------
# Harness

CSV_COLUMNS = [
    "family",
    "n_requests",
    "n_alternatives",
    "n_conflicts",
    "window_ms",
    "step_ms",
    "seed",
    "solver",
    "outcome",
    "wall_ms",
    "ttfs_ms",
    "solve_calls",
    "nodes_expanded",
    "best_cost",
]


@dataclass
class BenchRecord:
    scenario: Scenario
    solver: str
    outcome: str
    wall_ms: float
    ttfs_ms: Optional[float] = None
    solve_calls: int = 0
    nodes_expanded: int = 0
    best_cost: Optional[float] = None
    error: Optional[str] = None

    def row(self) -> dict:
        s = self.scenario
        return {
            "family": s.family.value,
            "n_requests": s.n_requests,
            "n_alternatives": s.n_alternatives,
            "n_conflicts": s.n_conflicts,
            "window_ms": s.window_ms,
            "step_ms": s.step_ms,
            "seed": s.seed,
            "solver": self.solver,
            "outcome": self.outcome,
            "wall_ms": f"{self.wall_ms:.3f}",
            "ttfs_ms": "" if self.ttfs_ms is None else f"{self.ttfs_ms:.3f}",
            "solve_calls": self.solve_calls,
            "nodes_expanded": self.nodes_expanded,
            "best_cost": "" if self.best_cost is None else repr(self.best_cost),
        }


def _run_stream(stream):
    stream.run()
    best = stream.best
    return stream.terminal.value, stream.stats.ttfs_ms, stream.stats.solve_calls, 0, best and best.total_cost


def _naive(problem, budget):
    return _run_stream(solve_naive(problem, budget))


def _lemma1(problem, budget):
    return _run_stream(solve_lemma1(problem, budget))


def _greedy(problem, budget):
    res = solve_greedy(problem, budget)
    cost = res.solution.total_cost if res.solution else None
    return res.status.value, res.stats.ttfs_ms, 0, res.stats.nodes_expanded, cost


def _race(problem, budget, mode=RaceMode.OPTIMAL):
    out = race(problem, budget, mode)
    sat = out.stats.get("sat")
    greedy = out.stats.get("greedy")
    first = out.contestants["sat"].get("first_ms")
    cost = out.solution.total_cost if out.solution else None
    outcome = out.status.value if out.winner is None else f"{out.status.value}:{out.winner}"
    return (
        outcome,
        first,
        sat.solve_calls if sat else 0,
        greedy.nodes_expanded if greedy else 0,
        cost,
    )


def _flexible(problem, budget):
    res = solve_flexible(problem, budget)
    cost = res.solution.total_cost if res.solution else None
    return res.status.value, res.stats.ttfs_ms, res.stats.solve_calls, 0, cost


def _discretize(problem, budget, step=10 * MINUTE):
    t0 = time.perf_counter()
    disc = discretize(problem, step)
    stream = solve_lemma1(disc.problem, budget)
    first = next(stream, None)
    if first is None:
        outcome, ttfs, cost = stream.terminal.value, None, None
    else:
        ttfs = (time.perf_counter() - t0) * 1000
        stream.close()
        outcome, cost = Status.FEASIBLE.value, first.total_cost
    return outcome, ttfs, stream.stats.solve_calls, 0, cost


SOLVERS: dict[str, Callable] = {
    "naive": _naive,
    "lemma1": _lemma1,
    "greedy": _greedy,
    "race": _race,
    "race-first": lambda p, b: _race(p, b, RaceMode.FIRST_FEASIBLE),
    "flexible": _flexible,
    "discretize": _discretize,
}


def run_one(scenario: Scenario, solver: str, budget: float | None, problem: Problem | None = None) -> BenchRecord:
    t0 = time.perf_counter()
    try:
        problem = problem if problem is not None else gen(scenario)
        fn = SOLVERS[solver]
        if solver == "discretize" and scenario.step_ms:
            outcome, ttfs, calls, nodes, cost = _discretize(problem, budget, scenario.step_ms)
        else:
            outcome, ttfs, calls, nodes, cost = fn(problem, budget)
    except Exception as exc:
        return BenchRecord(
            scenario, solver, "error", (time.perf_counter() - t0) * 1000,
            error="".join(traceback.format_exception_only(type(exc), exc)).strip(),
        )
    return BenchRecord(scenario, solver, outcome, (time.perf_counter() - t0) * 1000, ttfs, calls, nodes, cost)


def run_suite(
    scenarios: Iterable[Scenario], solvers: Sequence[str], budget: float | None = None
) -> list[BenchRecord]:
    """One row per (scenario, solver), run sequentially in input order."""
    records = []
    for scenario in scenarios:
        try:
            problem = gen(scenario)
        except Exception:
            problem = None  # run_one regenerates and records the failure per solver
        for solver in solvers:
            records.append(run_one(scenario, solver, budget, problem))
    return records


def write_csv(records: Iterable[BenchRecord], fh) -> None:
    writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for r in records:
        writer.writerow(r.row())


def to_csv(records: Iterable[BenchRecord]) -> str:
    buf = io.StringIO()
    write_csv(records, buf)
    return buf.getvalue()


@dataclass(frozen=True)
class BoxStats:
    count: int
    minimum: float
    q1: float
    median: float
    q3: float
    maximum: float


def box_stats(values: Sequence[float]) -> BoxStats:
    data = sorted(values)
    if not data:
        raise ValueError("no data")
    if len(data) == 1:
        v = data[0]
        return BoxStats(1, v, v, v, v, v)
    q1, med, q3 = statistics.quantiles(data, n=4, method="inclusive")
    return BoxStats(len(data), data[0], q1, med, q3, data[-1])


def summarize(records: Iterable[BenchRecord], metric: str = "wall_ms") -> dict[tuple, BoxStats]:
    """Box-plot statistics per (scenario without seed, solver)."""
    groups: dict[tuple, list[float]] = {}
    for r in records:
        value = getattr(r, metric)
        if value is None or r.outcome == "error":
            continue
        key = (replace(r.scenario, seed=0), r.solver)
        groups.setdefault(key, []).append(value)
    return {key: box_stats(vals) for key, vals in groups.items()}


def summary_csv(summary: dict[tuple, BoxStats]) -> str:
    buf = io.StringIO()
    cols = CSV_COLUMNS[:6] + ["solver", "count", "min", "q1", "median", "q3", "max"]
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(cols)
    for (scenario, solver), b in summary.items():
        d = scenario.descriptor()
        writer.writerow(
            [d[c] for c in CSV_COLUMNS[:6]]
            + [solver, b.count]
            + [f"{v:.3f}" for v in (b.minimum, b.q1, b.median, b.q3, b.maximum)]
        )
    return buf.getvalue()


_PARAM_KEYS = ("n_requests", "n_alternatives", "n_conflicts", "window_ms", "step_ms")


def parse_suite(data: dict) -> tuple[list[tuple[Scenario, list[str]]], float | None]:
    """Read a suite description.

    ``{"budget_ms": 2000, "solvers": [...], "scenarios": [{"family": ...,
    "seeds": 20 | [0, 1, ...], "solvers": [...], <scenario params>}]}``;
    per-scenario ``solvers`` override the top-level list.
    """
    if not isinstance(data, dict) or not isinstance(data.get("scenarios"), list):
        raise ValueError("suite: expected an object with a 'scenarios' list")
    default_solvers = data.get("solvers", ["lemma1", "greedy"])
    budget_ms = data.get("budget_ms")
    plan = []
    for n, entry in enumerate(data["scenarios"]):
        where = f"suite.scenarios[{n}]"
        if not isinstance(entry, dict) or "family" not in entry:
            raise ValueError(f"{where}: expected an object with a 'family'")
        unknown = set(entry) - {"family", "seeds", "solvers", *_PARAM_KEYS}
        if unknown:
            raise ValueError(f"{where}: unknown keys {sorted(unknown)}")
        seeds = entry.get("seeds", 1)
        seeds = list(range(seeds)) if isinstance(seeds, int) else list(seeds)
        solvers = entry.get("solvers", default_solvers)
        bad = [s for s in solvers if s not in SOLVERS]
        if bad:
            raise ValueError(f"{where}: unknown solvers {bad}")
        params = {k: entry[k] for k in _PARAM_KEYS if k in entry}
        try:
            family = Family(entry["family"])
        except ValueError:
            raise ValueError(f"{where}.family: unknown family {entry['family']!r}") from None
        for seed in seeds:
            plan.append((Scenario.make(family, seed=seed, **params), list(solvers)))
    return plan, None if budget_ms is None else budget_ms / 1000.0
