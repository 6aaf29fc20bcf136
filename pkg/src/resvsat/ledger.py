"""Reservation ledger: the claim lifecycle on top of the solvers.

Claims move Requested -> Assigned -> Claimed -> Active -> Released, or
Requested -> Rejected when no schedule can accommodate them. Every submit
re-plans all claims that are not yet committed (Requested or Assigned);
claims that are Claimed or Active keep their slot, and re-planned claims are
clipped to start after the committed ones on the same resource. Permission to
use a resource goes only to the head of its queue, which is ordered by
scheduled start.

All state changes go through one lock. Solver runs happen outside it and post
their result back tagged with the generation they were planned against; a
stale result is discarded and the plan recomputed.
"""

from __future__ import annotations

import json
import math
import random
import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, Optional, Sequence, TextIO

from .flexible import optimize_flexible, solve_flexible
from .model import (
    Alternative,
    FixedAlternative,
    FlexibleAlternative,
    Mode,
    Problem,
    Request,
)
from .opt_sat import Status, solve_lemma1
from .race import RaceMode, race


class ClaimState(str, Enum):
    REQUESTED = "requested"
    ASSIGNED = "assigned"
    CLAIMED = "claimed"
    ACTIVE = "active"
    RELEASED = "released"
    REJECTED = "rejected"


_ALLOWED = {
    ClaimState.REQUESTED: {ClaimState.ASSIGNED, ClaimState.REJECTED},
    ClaimState.ASSIGNED: {ClaimState.CLAIMED},
    ClaimState.CLAIMED: {ClaimState.ACTIVE},
    ClaimState.ACTIVE: {ClaimState.RELEASED},
    ClaimState.RELEASED: set(),
    ClaimState.REJECTED: set(),
}

PENDING = (ClaimState.REQUESTED, ClaimState.ASSIGNED)
COMMITTED = (ClaimState.CLAIMED, ClaimState.ACTIVE)
QUEUED = (ClaimState.ASSIGNED, ClaimState.CLAIMED, ClaimState.ACTIVE)


class Permission(str, Enum):
    GRANTED = "granted"
    WAIT = "wait"


class LedgerError(Exception):
    """Unknown claim id or an operation not allowed in the claim's state."""


@dataclass(frozen=True)
class Slot:
    alternative: int
    resource: str
    start: int
    end: Optional[int]  # None: held until released

    @property
    def end_time(self) -> float:
        return math.inf if self.end is None else self.end


@dataclass
class Claim:
    id: int
    alternatives: tuple[Alternative, ...]
    state: ClaimState = ClaimState.REQUESTED
    slot: Optional[Slot] = None
    history: list[tuple[ClaimState, float]] = field(default_factory=list)
    reason: Optional[str] = None

    @property
    def resource(self) -> Optional[str]:
        return self.slot.resource if self.slot else None

    @property
    def cost(self) -> Optional[float]:
        return self.alternatives[self.slot.alternative].cost if self.slot else None


@dataclass(frozen=True)
class Event:
    t: float
    claim: int
    transition: str
    resource: Optional[str] = None

    def to_json(self) -> str:
        return json.dumps({"t": self.t, "claim": self.claim, "transition": self.transition, "resource": self.resource})

    @classmethod
    def from_json(cls, line: str) -> Event:
        d = json.loads(line)
        return cls(d["t"], d["claim"], d["transition"], d.get("resource"))


@dataclass
class _Snapshot:
    generation: int
    pending: list[Claim]
    frontier: dict[str, float]


@dataclass
class _Plan:
    slots: dict[int, Slot]
    rejected: list[int]
    problem: Optional[Problem] = None
    index: Optional[list[tuple[int, list[int]]]] = None  # (claim id, original alternative per problem alternative)
    fallback: bool = False


def _clip(alt: Alternative, frontier: float) -> Optional[Alternative]:
    """The part of alt that starts at or after frontier, or None."""
    if isinstance(alt, FixedAlternative):
        return alt if alt.start >= frontier else None
    if frontier == math.inf or frontier > alt.latest_start:
        return None
    if frontier <= alt.earliest_start:
        return alt
    return FlexibleAlternative(int(frontier), alt.latest_start, alt.duration, alt.resource, alt.cost)


def _slot_end(start: int, duration: Optional[int]) -> Optional[int]:
    return None if duration is None else start + duration


class Ledger:
    """Serialized claim state machine.

    ``budget`` bounds each first-feasible solve in seconds. With ``upgrade``
    a background thread then searches for the optimal plan and swaps it in if
    nothing changed meanwhile.
    """

    def __init__(
        self,
        mode: Mode = Mode.FLEXIBLE,
        budget: float = 1.0,
        upgrade: bool = False,
        clock: Callable[[], float] | None = None,
    ):
        self.mode = Mode(mode)
        self.budget = budget
        self.upgrade = upgrade
        t0 = time.perf_counter()
        self._clock = clock or (lambda: round((time.perf_counter() - t0) * 1000.0, 3))
        self._lock = threading.RLock()
        self._claims: dict[int, Claim] = {}
        self._live: dict[int, Claim] = {}  # neither released nor rejected
        self._next_id = 0
        self._generation = 0
        self._upgrades: list[threading.Thread] = []
        self.events: list[Event] = []
        self.listeners: list[Callable[[Event], None]] = []
        self.upgrades_applied = 0

    # -- queries -----------------------------------------------------------

    def get(self, claim_id: int) -> Claim:
        with self._lock:
            try:
                return self._claims[claim_id]
            except KeyError:
                raise LedgerError(f"unknown claim {claim_id}") from None

    def state(self, claim_id: int) -> ClaimState:
        return self.get(claim_id).state

    @property
    def claims(self) -> list[Claim]:
        with self._lock:
            return list(self._claims.values())

    def queue(self, resource: str) -> list[int]:
        """Queued claims on resource in permission order."""
        with self._lock:
            return [c.id for c in self._queue(resource)]

    def _queue(self, resource: str) -> list[Claim]:
        queued = [c for c in self._live.values() if c.state in QUEUED and c.resource == resource]
        # a granted claim always leads, then scheduled start
        queued.sort(key=lambda c: (c.state is not ClaimState.ACTIVE, c.slot.start, c.id))
        return queued

    # -- transitions -------------------------------------------------------

    def _log(self, claim: Claim, transition: str) -> None:
        t = self._clock()
        ev = Event(t, claim.id, transition, claim.resource)
        self.events.append(ev)
        for fn in self.listeners:
            fn(ev)

    def _move(self, claim: Claim, new: ClaimState) -> None:
        if new not in _ALLOWED[claim.state]:
            raise LedgerError(f"claim {claim.id}: cannot go from {claim.state.value} to {new.value}")
        claim.state = new
        if new in (ClaimState.RELEASED, ClaimState.REJECTED):
            self._live.pop(claim.id, None)
        claim.history.append((new, self._clock()))
        self._log(claim, new.value)

    def submit(self, alternatives: Sequence[Alternative]) -> int:
        """Register a request and re-plan; returns the claim id (Assigned or Rejected)."""
        with self._lock:
            cid = self._next_id
            self._next_id += 1
            claim = Claim(cid, tuple(alternatives))
            claim.history.append((ClaimState.REQUESTED, self._clock()))
            self._claims[cid] = claim
            self._live[cid] = claim
            self._log(claim, ClaimState.REQUESTED.value)
            problem_error = self._check(claim)
            if problem_error:
                claim.reason = problem_error
                self._move(claim, ClaimState.REJECTED)
                return cid
            self._generation += 1
        self._replan(cid)
        return cid

    def _check(self, claim: Claim) -> Optional[str]:
        if not claim.alternatives:
            return "request has no alternatives"
        want = FixedAlternative if self.mode is Mode.FIXED else FlexibleAlternative
        if not all(isinstance(a, want) for a in claim.alternatives):
            return f"{self.mode.value} ledger expects {want.__name__} alternatives"
        return None

    def claim(self, claim_id: int) -> Permission:
        """Ask to use the assigned slot; granted only at the head of the resource queue."""
        with self._lock:
            c = self.get(claim_id)
            if c.state is ClaimState.ASSIGNED:
                self._move(c, ClaimState.CLAIMED)
                self._generation += 1
            elif c.state is not ClaimState.CLAIMED:
                raise LedgerError(f"claim {claim_id} is {c.state.value}; only assigned claims can be claimed")
            head = self._queue(c.resource)[0]
            if head.id == c.id:
                self._move(c, ClaimState.ACTIVE)
                return Permission.GRANTED
            return Permission.WAIT

    def release(self, claim_id: int) -> Optional[int]:
        """Release an active claim; returns the claim now at the head of the queue, if any."""
        with self._lock:
            c = self.get(claim_id)
            if c.state is not ClaimState.ACTIVE:
                raise LedgerError(f"claim {claim_id} is {c.state.value}; only active claims can be released")
            self._move(c, ClaimState.RELEASED)
            rest = self._queue(c.resource)
            if not rest:
                return None
            self._log(rest[0], "notified")
            return rest[0].id

    # -- planning ----------------------------------------------------------

    def _snapshot(self) -> _Snapshot:
        frontier: dict[str, float] = {}
        for c in self._live.values():
            if c.state in COMMITTED:
                frontier[c.resource] = max(frontier.get(c.resource, -math.inf), c.slot.end_time)
        pending = sorted((c for c in self._live.values() if c.state in PENDING), key=lambda c: c.id)
        return _Snapshot(self._generation, pending, frontier)

    def _replan(self, cid: int) -> None:
        while True:
            with self._lock:
                if self._claims[cid].state is not ClaimState.REQUESTED:
                    return  # a concurrent re-plan already covered it
                snap = self._snapshot()
            plan = self._plan(snap)
            with self._lock:
                if snap.generation != self._generation:
                    continue
                self._apply(plan)
                self._generation += 1
                if self.upgrade and plan.problem is not None and not plan.fallback:
                    self._start_upgrade(self._generation, plan)
                return

    def _build(
        self, claims: list[Claim], frontier: dict[str, float]
    ) -> tuple[Optional[Problem], list[tuple[int, list[int]]], list[int]]:
        rows, index, empty = [], [], []
        for c in claims:
            alts, origin = [], []
            for j, a in enumerate(c.alternatives):
                clipped = _clip(a, frontier.get(a.resource, -math.inf))
                if clipped is not None:
                    alts.append(clipped)
                    origin.append(j)
            if not alts:
                empty.append(c.id)
                continue
            rows.append(Request(len(rows), tuple(alts)))
            index.append((c.id, origin))
        problem = Problem(tuple(rows), self.mode) if rows else None
        return problem, index, empty

    def _solve(self, problem: Problem, index: list[tuple[int, list[int]]]) -> Optional[dict[int, Slot]]:
        if self.mode is Mode.FLEXIBLE:
            res = solve_flexible(problem, self.budget)
            if res.schedule is None:
                return None
            return self._slots_from_schedule(res.schedule, problem, index)
        out = race(problem, self.budget, RaceMode.FIRST_FEASIBLE)
        if out.solution is None:
            return None
        return self._slots_from_choice(out.solution.chosen, problem, index)

    def _slots_from_schedule(self, schedule, problem, index) -> dict[int, Slot]:
        slots = {}
        for e in schedule.entries():
            cid, origin = index[e.request]
            alt = problem.alt(e.request, e.alternative)
            slots[cid] = Slot(origin[e.alternative], alt.resource, e.start, e.end)
        return slots

    def _slots_from_choice(self, chosen, problem, index) -> dict[int, Slot]:
        slots = {}
        for i, j in enumerate(chosen):
            cid, origin = index[i]
            alt = problem.alt(i, j)
            slots[cid] = Slot(origin[j], alt.resource, alt.start, _slot_end(alt.start, alt.duration))
        return slots

    def _plan(self, snap: _Snapshot) -> _Plan:
        # joint re-plan of everything not yet committed
        problem, index, empty = self._build(snap.pending, snap.frontier)
        if not empty and problem is not None:
            slots = self._solve(problem, index)
            if slots is not None:
                return _Plan(slots, [], problem, index)
        # otherwise keep existing assignments and fit only the new requests after them
        frontier = dict(snap.frontier)
        for c in snap.pending:
            if c.state is ClaimState.ASSIGNED:
                frontier[c.resource] = max(frontier.get(c.resource, -math.inf), c.slot.end_time)
        new = [c for c in snap.pending if c.state is ClaimState.REQUESTED]
        problem, index, empty = self._build(new, frontier)
        if not empty and problem is not None:
            slots = self._solve(problem, index)
            if slots is not None:
                return _Plan(slots, [], problem, index, fallback=True)
        return _Plan({}, [c.id for c in new], fallback=True)

    def _apply(self, plan: _Plan) -> None:
        for cid, slot in plan.slots.items():
            c = self._claims[cid]
            if c.state is ClaimState.REQUESTED:
                c.slot = slot
                self._move(c, ClaimState.ASSIGNED)
            elif c.slot != slot:
                c.slot = slot
                self._log(c, "reassigned")
        for cid in plan.rejected:
            c = self._claims[cid]
            c.reason = "no feasible slot"
            self._move(c, ClaimState.REJECTED)

    def _start_upgrade(self, generation: int, plan: _Plan) -> None:
        problem, index = plan.problem, plan.index

        def work():
            if self.mode is Mode.FLEXIBLE:
                res = optimize_flexible(problem, self.budget)
                if res.status is not Status.OPTIMAL:
                    return
                slots = self._slots_from_schedule(res.schedule, problem, index)
            else:
                stream = solve_lemma1(problem, self.budget).run()
                if stream.terminal is not Status.OPTIMAL:
                    return
                slots = self._slots_from_choice(stream.best.chosen, problem, index)
            with self._lock:
                if generation != self._generation:
                    return  # something changed since this plan was made
                if any(self._claims[cid].state is not ClaimState.ASSIGNED for cid in slots):
                    return
                self._apply(_Plan(slots, []))
                self.upgrades_applied += 1

        t = threading.Thread(target=work, name="ledger-upgrade", daemon=True)
        self._upgrades.append(t)
        t.start()

    def wait_upgrades(self, timeout: float | None = None) -> None:
        for t in list(self._upgrades):
            t.join(timeout)
        self._upgrades = [t for t in self._upgrades if t.is_alive()]

    # -- log ---------------------------------------------------------------

    def write_log(self, fh: TextIO) -> None:
        for ev in self.events:
            fh.write(ev.to_json() + "\n")


def read_log(lines: Iterable[str]) -> list[Event]:
    return [Event.from_json(line) for line in lines if line.strip()]


def check_log(events: Iterable[Event]) -> list[str]:
    """Replay an event log; report overlapping Active claims and illegal transitions."""
    problems = []
    active: dict[str, int] = {}
    states: dict[int, ClaimState] = {}
    last_t = -math.inf
    for n, ev in enumerate(events):
        if ev.t < last_t:
            problems.append(f"event {n}: time goes backwards")
        last_t = ev.t
        if ev.transition in ("notified", "reassigned"):
            continue
        new = ClaimState(ev.transition)
        old = states.get(ev.claim)
        if old is None:
            if new is not ClaimState.REQUESTED:
                problems.append(f"event {n}: claim {ev.claim} starts in {new.value}")
        elif new not in _ALLOWED[old]:
            problems.append(f"event {n}: claim {ev.claim} moves {old.value} -> {new.value}")
        states[ev.claim] = new
        if new is ClaimState.ACTIVE:
            holder = active.get(ev.resource)
            if holder is not None:
                problems.append(f"event {n}: claim {ev.claim} active on {ev.resource} while claim {holder} is")
            active[ev.resource] = ev.claim
        elif new is ClaimState.RELEASED and active.get(ev.resource) == ev.claim:
            del active[ev.resource]
    return problems


# ---------------------------------------------------------------------------
# Simulation


@dataclass
class SimReport:
    agents: int
    cycles: int
    completed: int
    rejected: int
    waits: int
    deadlocks: int
    violations: list[str]
    wall_ms: float
    events: list[Event] = field(repr=False, default_factory=list)

    @property
    def ok(self) -> bool:
        return self.deadlocks == 0 and not self.violations and self.completed == self.cycles

    def to_dict(self) -> dict:
        return {
            "agents": self.agents,
            "cycles": self.cycles,
            "completed": self.completed,
            "rejected": self.rejected,
            "waits": self.waits,
            "deadlocks": self.deadlocks,
            "violations": self.violations,
            "wall_ms": round(self.wall_ms, 3),
        }


class _Agent:
    IDLE, WAITING, ACTIVE = range(3)

    def __init__(self, name: int):
        self.name = name
        self.phase = _Agent.IDLE
        self.claim: Optional[int] = None


def simulate(
    agents: int = 2,
    cycles: int = 10_000,
    seed: int = 0,
    resources: Sequence[str] = ("dock",),
    mode: Mode = Mode.FLEXIBLE,
    budget: float = 1.0,
) -> SimReport:
    """Agents repeatedly request, claim and release shared resources.

    Agent steps are interleaved in a seeded random order on a logical clock.
    A deadlock is declared when every agent is waiting for permission and a
    full round of retries grants nothing; the simulation stops there.
    """
    if agents < 1 or cycles < 0:
        raise ValueError("need at least one agent and a non-negative cycle count")
    rng = random.Random(seed)
    now = [0]
    ledger = Ledger(mode=mode, budget=budget, clock=lambda: now[0])
    crew = [_Agent(a) for a in range(agents)]
    completed = rejected = waits = deadlocks = 0
    minute = 60_000
    start = time.perf_counter()

    def request() -> list[Alternative]:
        alts = []
        for res in rng.sample(list(resources), min(len(resources), rng.randint(1, 2))):
            duration = rng.randint(1, 10) * minute
            cost = float(rng.randint(1, 100))
            if mode is Mode.FLEXIBLE:
                alts.append(FlexibleAlternative(now[0], now[0] + 24 * 60 * minute, duration, res, cost))
            else:
                alts.append(FixedAlternative(now[0] + rng.randint(0, 60) * minute, duration, res, cost))
        return alts

    while completed < cycles:
        now[0] += rng.randint(1, 5) * 1000
        agent = rng.choice(crew)
        if agent.phase == _Agent.IDLE:
            cid = ledger.submit(request())
            if ledger.state(cid) is ClaimState.REJECTED:
                rejected += 1
                continue
            agent.claim, agent.phase = cid, _Agent.WAITING
        if agent.phase == _Agent.WAITING:
            if ledger.claim(agent.claim) is Permission.GRANTED:
                agent.phase = _Agent.ACTIVE
            else:
                waits += 1
                if all(a.phase == _Agent.WAITING for a in crew):
                    # everyone waits: one more round of retries must grant someone
                    granted = False
                    for a in crew:
                        if ledger.claim(a.claim) is Permission.GRANTED:
                            a.phase = _Agent.ACTIVE
                            granted = True
                            break
                    if not granted:
                        deadlocks += 1
                        break
        elif agent.phase == _Agent.ACTIVE:
            ledger.release(agent.claim)
            agent.phase, agent.claim = _Agent.IDLE, None
            completed += 1

    return SimReport(
        agents=agents,
        cycles=cycles,
        completed=completed,
        rejected=rejected,
        waits=waits,
        deadlocks=deadlocks,
        violations=check_log(ledger.events),
        wall_ms=(time.perf_counter() - start) * 1000,
        events=ledger.events,
    )


__all__ = [
    "ClaimState",
    "Permission",
    "LedgerError",
    "Slot",
    "Claim",
    "Event",
    "Ledger",
    "read_log",
    "check_log",
    "SimReport",
    "simulate",
]
