"""Acceptance checks, one test per criterion; each prints a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v``; the lines are
repeated in the "acceptance" section of the terminal summary.
"""

from __future__ import annotations

import random
import statistics
import sys
import threading
import time
from functools import lru_cache
from pathlib import Path

import numpy as np
import pytest

from oracles import brute_force_fixed, feasible_fixed, random_cnf, truth_table_sat
from resvsat import flexible
from resvsat.bench import (
    HOUR,
    MINUTE,
    Family,
    Scenario,
    gen,
    gen_infeasible,
    gen_random_fixed,
    gen_random_flexible,
)
from resvsat.cnf import Formula, encode_fixed
from resvsat.flexible import discretize, encode_flexible, solve_flexible
from resvsat.ledger import simulate
from resvsat.model import FlexibleAlternative, Problem
from resvsat.opt_greedy import solve_greedy
from resvsat.opt_sat import Status, solve_lemma1, solve_naive
from resvsat.race import GREEDY, SAT, RaceMode, race
from resvsat.satcore import CDCLSolver, ExternalSolver, find_external_solver

CORPUS_SIZE = 500
SEEDS = 20
MARGIN = 2.0


def r_squared(x, y, degree: int) -> float:
    coeffs = np.polyfit(x, y, degree)
    fit = np.polyval(coeffs, x)
    ss_res = float(np.sum((np.asarray(y) - fit) ** 2))
    ss_tot = float(np.sum((np.asarray(y) - np.mean(y)) ** 2))
    return 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot


def median(values) -> float:
    return statistics.median(values)


def timed(fn, *args, **kwargs):
    t0 = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, (time.perf_counter() - t0) * 1000.0


# ---------------------------------------------------------------------------
# 1-2: oracle corpus


@lru_cache(maxsize=1)
def fixed_corpus():
    """Per instance: oracle (cost, count), and each solver's (status, cost, calls, costs stream)."""
    rows = []
    t0 = time.perf_counter()
    for seed in range(CORPUS_SIZE):
        # half the corpus at 4-6 requests so most combinations are non-trivial
        p = gen_random_fixed(6, 4, seed, max_resources=3, min_requests=1 if seed % 2 else 4)
        best, count = brute_force_fixed(p)
        runs = {}
        for name, solver in (("lemma1", solve_lemma1), ("naive", solve_naive)):
            stream = solver(p).run()
            runs[name] = (
                stream.terminal,
                stream.best.total_cost if stream.best else None,
                stream.stats.solve_calls,
                [s for s in stream.solutions],
            )
        g = solve_greedy(p)
        runs["greedy"] = (g.status, g.solution.total_cost if g.solution else None, g.stats.nodes_expanded, [])
        rows.append((p, best, count, runs))
    return rows, time.perf_counter() - t0


def test_criterion_1_oracle_optimality(verdict):
    rows, elapsed = fixed_corpus()
    mismatches = []
    for seed, (p, best, count, runs) in enumerate(rows):
        assert len(p.requests) <= 6 and all(len(r.alternatives) <= 4 for r in p.requests)
        assert len({a.resource for r in p.requests for a in r.alternatives}) <= 3
        for name, (status, cost, _, _) in runs.items():
            if count == 0:
                ok = status is Status.INFEASIBLE and cost is None
            else:
                ok = status is Status.OPTIMAL and cost == best
            if not ok:
                mismatches.append((seed, name, status, cost, best))
    infeasible = sum(count == 0 for _, _, count, _ in rows)
    ok = not mismatches and elapsed < 60
    verdict(
        1,
        ok,
        f"{len(rows)} instances ({infeasible} infeasible), 3 solvers, "
        f"{len(mismatches)} mismatches, {elapsed:.1f}s (limit 60s)",
    )
    assert ok, mismatches[:5]


def test_criterion_2_lemma1_pruning(verdict):
    rows, _ = fixed_corpus()
    eligible = fewer = worse = 0
    for p, best, count, runs in rows:
        if count < 2:
            continue
        eligible += 1
        a, b = runs["lemma1"][2], runs["naive"][2]
        worse += a > b
        fewer += a < b
    share = fewer / eligible
    ok = eligible > 0 and worse == 0 and share >= 0.5
    verdict(2, ok, f"{eligible} instances with >=2 feasible: {worse} with more calls, {share:.0%} strictly fewer (need >=50%)")
    assert ok


# ---------------------------------------------------------------------------
# 3: infeasible fast path


def test_criterion_3_unsat_fast_path(verdict):
    bad = []
    multi = 0
    for n in (2, 3, 4):
        for a in (1, 2, 3):
            for seed in range(5):
                p = gen_infeasible(n, a, seed)
                stream = solve_lemma1(p).run()
                if stream.terminal is not Status.INFEASIBLE or stream.stats.solve_calls != 1:
                    bad.append(("lemma1", n, a, seed, stream.stats.solve_calls))
                g = solve_greedy(p)
                if g.status is not Status.INFEASIBLE:
                    bad.append(("greedy", n, a, seed, g.status))
                if a > 1:
                    multi += 1
                    if g.stats.nodes_expanded <= 1:
                        bad.append(("greedy-nodes", n, a, seed, g.stats.nodes_expanded))
    ok = not bad
    verdict(3, ok, f"45 infeasible instances: lemma1 one call each, greedy exhausts ({multi} multi-alternative); {len(bad)} failures")
    assert ok, bad[:5]


# ---------------------------------------------------------------------------
# 4: descent and anytime


def interrupt_instances():
    yield from (gen_random_fixed(6, 4, s, min_requests=4) for s in range(0, CORPUS_SIZE, 10))
    for seed in range(3):
        yield gen(Scenario.make(Family.GREEDY_DEVIL, seed=seed))
        yield gen(Scenario.make(Family.CONFLICT_COUNT, seed=seed, n_conflicts=8))
        yield gen(Scenario.make(Family.SAT_DEVIL, seed=seed, n_requests=5, n_alternatives=5))


def test_criterion_4_descent_and_anytime(verdict):
    rows, _ = fixed_corpus()
    bad = []
    streams = 0
    for p, _, _, runs in rows:
        for name in ("lemma1", "naive"):
            costs = [s.total_cost for s in runs[name][3]]
            streams += 1
            if any(a <= b for a, b in zip(costs, costs[1:])):
                bad.append(("descent", name, costs))

    interrupts = 0
    for p in interrupt_instances():
        full = solve_lemma1(p).run()
        # stop after the k-th emitted solution, for every k
        for k in range(1, len(full.solutions) + 1):
            stream = solve_lemma1(p)
            for _ in range(k):
                next(stream)
            stream.close()
            interrupts += 1
            best = stream.best
            if stream.terminal is not Status.BUDGET_EXHAUSTED or not feasible_fixed(p, best.chosen):
                bad.append(("close", k, stream.terminal))
        # stop from another thread mid-solve
        for delay in (0.0, 0.001, 0.005):
            stop = threading.Event()
            timer = threading.Timer(delay, stop.set)
            timer.start()
            stream = solve_lemma1(p, stop=stop).run()
            timer.cancel()
            interrupts += 1
            if stream.best is not None and not feasible_fixed(p, stream.best.chosen):
                bad.append(("stop", delay))
            costs = [s.total_cost for s in stream.solutions]
            if any(a <= b for a, b in zip(costs, costs[1:])):
                bad.append(("descent-stop", costs))
    ok = not bad
    verdict(4, ok, f"{streams} streams strictly decreasing, {interrupts} interruptions all feasible; {len(bad)} failures")
    assert ok, bad[:5]


# ---------------------------------------------------------------------------
# 5: flexible correctness


def test_criterion_5_flexible_correctness(verdict, monkeypatch):
    learned: list[tuple] = []
    original = flexible.learn_clauses

    def recording(model, *args, **kwargs):
        schedule, banned = original(model, *args, **kwargs)
        learned.append((model, banned))
        return schedule, banned

    monkeypatch.setattr(flexible, "learn_clauses", recording)
    bad = []
    feasible = 0
    step = 10 * MINUTE
    for seed in range(200):
        p = gen_random_flexible(4, 3, seed, max_resources=2, step=step)
        assert len(p.requests) <= 4 and all(len(r.alternatives) <= 3 for r in p.requests)
        res = solve_flexible(p)
        first = next(solve_lemma1(discretize(p, step).problem), None)
        if (res.status is Status.FEASIBLE) != (first is not None):
            bad.append(("feasibility", seed, res.status))
        if res.schedule is not None:
            feasible += 1
            if res.schedule.violations():
                bad.append(("schedule", seed, res.schedule.violations()))
    clauses = 0
    for model, banned in learned:
        for clause in banned:
            clauses += 1
            if any(model.value(lit) for lit in clause):
                bad.append(("banned-not-violated", clause))
    ok = not bad
    verdict(
        5,
        ok,
        f"200 instances ({feasible} feasible) agree with 10-min discretization; "
        f"{clauses} banned clauses each violated by its model; {len(bad)} failures",
    )
    assert ok, bad[:5]


# ---------------------------------------------------------------------------
# 6: encoding growth


def test_criterion_6_encoding_growth(verdict):
    widths = [1, 2, 3, 4, 5]
    step = 10 * MINUTE
    disc_counts, flex_formulas = [], []
    for w in widths:
        p = gen(Scenario.make(Family.FLEXIBLE_WINDOW, seed=0, window_ms=w * HOUR, step_ms=step))
        formula, _ = encode_fixed(discretize(p, step).problem)
        disc_counts.append(len(formula))
        flex_formulas.append(encode_flexible(p)[0])
    r2_disc = r_squared(widths, disc_counts, 2)
    identical = all(f.num_vars == flex_formulas[0].num_vars and f.clauses == flex_formulas[0].clauses for f in flex_formulas)

    sizes = [2, 3, 4, 5, 6, 7, 8]
    structure = []
    for n in sizes:
        p = Problem.build([[FlexibleAlternative(0, 10 * HOUR, 10 * MINUTE, "r", 1.0)] for _ in range(n)])
        structure.append(encode_flexible(p)[2].structure_clauses())
    r2_cubic = r_squared(sizes, structure, 3)
    ok = r2_disc > 0.99 and identical and r2_cubic > 0.99
    verdict(
        6,
        ok,
        f"discretized clauses {disc_counts} over 1-5h: quadratic R^2={r2_disc:.5f}; "
        f"flexible formula identical={identical} ({len(flex_formulas[0])} clauses); "
        f"order structure {structure} cubic R^2={r2_cubic:.5f}",
    )
    assert ok


# ---------------------------------------------------------------------------
# 7: trends


def lemma1_ms(p, budget):
    stream, ms = timed(lambda: solve_lemma1(p, budget).run())
    # a budget-limited run is a lower bound on the true time
    return min(ms, budget * 1000.0), stream.terminal


def trend_a():
    budget = 0.25
    sat, greedy, censored = [], [], 0
    for seed in range(SEEDS):
        p = gen(Scenario.make(Family.MANY_FEASIBLE, seed=seed, n_requests=20))
        ms, terminal = lemma1_ms(p, budget)
        censored += terminal is Status.BUDGET_EXHAUSTED
        sat.append(ms)
        greedy.append(timed(solve_greedy, p)[1])
    ok = median(greedy) * MARGIN < median(sat)
    return ok, f"(a) many-feasible n=20: greedy {median(greedy):.2f}ms vs SAT >= {median(sat):.1f}ms ({censored} SAT runs cut at {budget * 1000:.0f}ms)"


def trend_b():
    parts, ok = [], True
    for k in (8, 12):
        sat, greedy = [], []
        for seed in range(SEEDS):
            p = gen(Scenario.make(Family.CONFLICT_COUNT, seed=seed, n_conflicts=k))
            sat.append(timed(lambda: solve_lemma1(p).run())[1])
            greedy.append(timed(solve_greedy, p)[1])
        ok &= median(sat) * MARGIN < median(greedy)
        parts.append(f"k={k}: SAT {median(sat):.1f}ms vs greedy {median(greedy):.1f}ms")
    return ok, "(b) conflict-count " + ", ".join(parts)


def trend_c():
    step = 10 * MINUTE
    flex, disc = {}, {}
    for hours in (1, 12):
        flex[hours], disc[hours] = [], []
        for seed in range(SEEDS):
            p = gen(Scenario.make(Family.FLEXIBLE_WINDOW, seed=seed, window_ms=hours * HOUR, step_ms=step))
            res, ms = timed(solve_flexible, p)
            flex[hours].append(ms)

            def first_discrete():
                d = discretize(p, step)
                stream = solve_lemma1(d.problem)
                sol = next(stream, None)
                stream.close()
                return sol

            sol, ms_d = timed(first_discrete)
            disc[hours].append(ms_d)
            assert (sol is None) == (res.schedule is None)
    f1, f12 = median(flex[1]), median(flex[12])
    d1, d12 = median(disc[1]), median(disc[12])
    flat = max(f1, f12) / min(f1, f12) < 3.0
    # superlinear: growth beyond the 12x width ratio, with the margin on top
    steep = d12 / d1 > 12 * MARGIN
    return flat and steep, (
        f"(c) flexible {f1:.1f}->{f12:.1f}ms (x{f12 / f1:.2f}, need <3), "
        f"discretize {d1:.1f}->{d12:.1f}ms (x{d12 / d1:.0f}, need >{12 * MARGIN:.0f})"
    )


def race_check():
    wins = {Family.SAT_DEVIL: 0, Family.GREEDY_DEVIL: 0}
    expect = {Family.SAT_DEVIL: GREEDY, Family.GREEDY_DEVIL: SAT}
    for family in wins:
        for seed in range(SEEDS):
            out = race(gen(Scenario.make(family, seed=seed)), budget=30.0, mode=RaceMode.OPTIMAL)
            assert out.status is Status.OPTIMAL and not out.workers_alive
            wins[family] += out.winner == expect[family]
    need = 0.9 * SEEDS
    ok = all(v >= need for v in wins.values())
    return ok, (
        f"race: greedy wins sat-devil {wins[Family.SAT_DEVIL]}/{SEEDS}, "
        f"SAT wins greedy-devil {wins[Family.GREEDY_DEVIL]}/{SEEDS} (need >=90%)"
    )


def test_criterion_7_trends(verdict):
    results = [trend_a(), trend_b(), trend_c(), race_check()]
    ok = all(r[0] for r in results)
    verdict(7, ok, "; ".join(r[1] for r in results))
    assert ok


# ---------------------------------------------------------------------------
# 8: ledger


def test_criterion_8_ledger(verdict):
    t0 = time.perf_counter()
    reports = [simulate(agents=a, cycles=10_000, seed=a) for a in (2, 3)]
    elapsed = time.perf_counter() - t0
    ok = all(r.ok for r in reports) and elapsed < 60
    detail = ", ".join(
        f"{r.agents} agents: {r.completed} cycles, {r.deadlocks} deadlocks, {len(r.violations)} violations"
        for r in reports
    )
    verdict(8, ok, f"{detail}; {elapsed:.1f}s (limit 60s)")
    assert ok


# ---------------------------------------------------------------------------
# 9: SAT core


def external_command():
    cmd = find_external_solver()
    if cmd:
        return cmd
    try:
        import pysat  # noqa: F401
    except ImportError:
        return None
    return [sys.executable, str(Path(__file__).parent / "helpers" / "pysat_solve.py")]


def test_criterion_9_sat_core(verdict):
    rng = random.Random(20240901)
    corpus = [random_cnf(rng, 20, 90) for _ in range(10_000)]
    disagree, sat_count = [], 0
    for n, clauses in corpus:
        expected = truth_table_sat(n, clauses)[0]
        solver = CDCLSolver(n)
        solver.add_clauses(clauses)
        res = solver.solve()
        if bool(res) != expected or (res and not Formula(n, clauses).satisfied_by(res.model)):
            disagree.append((n, clauses))
        sat_count += expected

    differential = "external solver unavailable"
    ext_bad = 0
    cmd = external_command()
    if cmd is not None:
        try:
            from pysat.solvers import Solver
        except ImportError:
            Solver = None
        checked = 0
        if Solver is not None:
            for n, clauses in corpus:
                with Solver(name="cadical153", bootstrap_with=[list(c) for c in clauses if c]) as s:
                    ext = s.solve() and all(clauses)
                ext_bad += ext != truth_table_sat(n, clauses)[0]
                checked += 1
        # DIMACS round trip through a separate process on a sample
        sample = corpus[::50]
        for n, clauses in sample:
            ext = ExternalSolver(cmd, n, timeout=60)
            ext.add_clauses(clauses)
            ext_bad += bool(ext.solve()) != truth_table_sat(n, clauses)[0]
        differential = f"differential: {checked} in-process + {len(sample)} via DIMACS process, {ext_bad} disagreements"
    ok = not disagree and ext_bad == 0
    verdict(9, ok, f"{len(corpus)} formulas <=20 vars ({sat_count} SAT): {len(disagree)} disagreements with truth table; {differential}")
    assert ok
