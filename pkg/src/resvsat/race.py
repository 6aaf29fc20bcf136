"""Race the cheaper-alternative SAT optimizer against greedy search.

Each contestant runs in its own thread and reports through a queue; the
coordinator decides, sets the shared stop flag, and joins both workers
before returning. The contestants check the flag between iterations, and the
SAT backend also checks it inside long solve calls.
"""

from __future__ import annotations

import queue
import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from .model import InvalidProblem, Mode, Problem
from .opt_greedy import solve_greedy
from .opt_sat import RunStats, Solution, Status, solve_lemma1

SAT = "sat"
GREEDY = "greedy"
TIE = "tie"

POLL_INTERVAL = 0.002


class RaceMode(str, Enum):
    FIRST_FEASIBLE = "first_feasible"
    OPTIMAL = "optimal"


@dataclass
class RaceOutcome:
    status: Status
    winner: Optional[str]
    solution: Optional[Solution]
    wall_ms: float
    contestants: dict[str, dict] = field(default_factory=dict)
    stats: dict[str, RunStats] = field(default_factory=dict)
    workers_alive: bool = False


def _sat_worker(problem, stop, out: queue.Queue):
    stream = solve_lemma1(problem, stop=stop)
    try:
        for sol in stream:
            out.put((SAT, "solution", sol, time.perf_counter()))
    except Exception as exc:  # report, never hang the coordinator
        out.put((SAT, "error", exc, time.perf_counter()))
        return
    out.put((SAT, "done", (stream.terminal, stream.best, stream.stats), time.perf_counter()))


def _greedy_worker(problem, stop, out: queue.Queue):
    try:
        res = solve_greedy(problem, stop=stop)
    except Exception as exc:
        out.put((GREEDY, "error", exc, time.perf_counter()))
        return
    if res.solution is not None:
        out.put((GREEDY, "solution", res.solution, time.perf_counter()))
    out.put((GREEDY, "done", (res.status, res.solution, res.stats), time.perf_counter()))


def race(problem: Problem, budget: float | None = None, mode: RaceMode = RaceMode.OPTIMAL) -> RaceOutcome:
    if problem.mode is not Mode.FIXED:
        raise InvalidProblem("race requires a fixed-mode problem")
    problem.require_nonempty()
    mode = RaceMode(mode)
    stop = threading.Event()
    out: queue.Queue = queue.Queue()
    start = time.perf_counter()
    deadline = None if budget is None else start + budget
    workers = [
        threading.Thread(target=_sat_worker, args=(problem, stop, out), name="race-sat", daemon=True),
        threading.Thread(target=_greedy_worker, args=(problem, stop, out), name="race-greedy", daemon=True),
    ]
    for w in workers:
        w.start()

    best: Optional[Solution] = None
    info: dict[str, dict] = {SAT: {}, GREEDY: {}}
    stats: dict[str, RunStats] = {}
    finished: set[str] = set()

    def decisive(who: str, kind: str, payload, at: float) -> Optional[Status]:
        nonlocal best
        if kind == "solution":
            info[who].setdefault("first_ms", (at - start) * 1000)
            if best is None or payload.total_cost < best.total_cost:
                best = payload
            if payload.optimal:
                return Status.OPTIMAL
            return Status.FEASIBLE if mode is RaceMode.FIRST_FEASIBLE else None
        if kind == "error":
            info[who]["error"] = repr(payload)
            finished.add(who)
            return None
        status, sol, run_stats = payload
        finished.add(who)
        stats[who] = run_stats
        info[who]["status"] = status.value
        info[who]["done_ms"] = (at - start) * 1000
        if status is Status.OPTIMAL:
            if sol is not None and (best is None or sol.total_cost <= best.total_cost):
                best = sol
            return Status.OPTIMAL
        if status is Status.INFEASIBLE:
            return Status.INFEASIBLE
        return None

    status: Optional[Status] = None
    winners: list[str] = []
    while status is None:
        timeout = POLL_INTERVAL
        if deadline is not None:
            remaining = deadline - time.perf_counter()
            if remaining <= 0:
                break
            timeout = min(timeout, remaining)
        try:
            who, kind, payload, at = out.get(timeout=timeout)
        except queue.Empty:
            if len(finished) == 2:
                break
            continue
        status = decisive(who, kind, payload, at)
        if status is not None:
            winners.append(who)
            # anything else already queued counts as the same poll interval
            while True:
                try:
                    who2, kind2, payload2, at2 = out.get_nowait()
                except queue.Empty:
                    break
                if decisive(who2, kind2, payload2, at2) is not None and who2 not in winners:
                    winners.append(who2)
        elif len(finished) == 2:
            break

    stop.set()
    for w in workers:
        w.join(timeout=5.0)
    # drain late stats so the outcome reports both contestants where possible
    while True:
        try:
            who, kind, payload, _ = out.get_nowait()
        except queue.Empty:
            break
        if kind == "done":
            stats.setdefault(who, payload[2])
    if status is None:
        status = Status.BUDGET_EXHAUSTED
    if status is Status.OPTIMAL and best is not None:
        best = Solution(best.chosen, best.total_cost, True)
    winner = None
    if winners:
        winner = TIE if len(set(winners)) > 1 else winners[0]
    return RaceOutcome(
        status=status,
        winner=winner,
        solution=best if status is not Status.INFEASIBLE else None,
        wall_ms=(time.perf_counter() - start) * 1000,
        contestants=info,
        stats=stats,
        workers_alive=any(w.is_alive() for w in workers),
    )
