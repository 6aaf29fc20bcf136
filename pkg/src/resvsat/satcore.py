"""Incremental SAT solving.

``CDCLSolver`` is the built-in backend: two-watched-literal propagation,
first-UIP learning, no restarts, and a fixed decision order (lowest unassigned
variable, assigned false first), so runs are reproducible given the order in
which clauses were added. ``ExternalSolver`` speaks DIMACS to a solver process
and exists for differential testing.

Clauses only ever grow. Learned clauses are implied by the database, so they
stay valid across solve calls.
"""

from __future__ import annotations

import os
import shutil
import subprocess
import tempfile
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence

from .cnf import Formula, export_dimacs


class SolveInterrupted(Exception):
    """A solve call was abandoned because its stop callback fired."""


@dataclass
class SatResult:
    sat: bool
    model: Optional[list[bool]] = None  # model[v] for v in 1..n; index 0 unused

    def __bool__(self) -> bool:
        return self.sat

    def value(self, lit: int) -> bool:
        assert self.model is not None
        return self.model[lit] if lit > 0 else not self.model[-lit]

    def true_literals(self) -> list[int]:
        assert self.model is not None
        return [v if self.model[v] else -v for v in range(1, len(self.model))]


UNSAT = SatResult(False)


@dataclass
class SolverStats:
    solve_calls: int = 0
    decisions: int = 0
    conflicts: int = 0
    propagations: int = 0
    learned: int = 0


StopFn = Optional[Callable[[], bool]]


class IncrementalSolver:
    """Interface shared by every backend."""

    stats: SolverStats

    @property
    def num_vars(self) -> int:
        raise NotImplementedError

    def new_var(self) -> int:
        raise NotImplementedError

    def add_clause(self, clause: Iterable[int]) -> None:
        raise NotImplementedError

    def solve(self, should_stop: StopFn = None) -> SatResult:
        raise NotImplementedError

    def add_clauses(self, clauses: Iterable[Iterable[int]]) -> None:
        for c in clauses:
            self.add_clause(c)

    def reserve(self, num_vars: int) -> None:
        while self.num_vars < num_vars:
            self.new_var()

    def add_formula(self, formula: Formula) -> None:
        self.reserve(formula.num_vars)
        self.add_clauses(formula.clauses)


def _code(lit: int) -> int:
    return (lit << 1) if lit > 0 else ((-lit) << 1) | 1


def _lit(code: int) -> int:
    return -(code >> 1) if code & 1 else code >> 1


class CDCLSolver(IncrementalSolver):
    # Internal literal codes: 2v is v, 2v+1 is -v; negation is code ^ 1.

    STOP_CHECK_INTERVAL = 512

    def __init__(self, num_vars: int = 0) -> None:
        self.stats = SolverStats()
        self._n = 0
        self._val: list[int] = [0, 0]  # per code: 1 true, -1 false, 0 unassigned
        self._level: list[int] = [0]
        self._reason: list[Optional[list[int]]] = [None]
        self._seen: list[bool] = [False]
        self._watches: list[list[list[int]]] = [[], []]
        # binary clauses: _bins[c] holds (implied code, reason) for when c becomes false
        self._bins: list[list[tuple[int, list[int]]]] = [[], []]
        self._trail: list[int] = []
        self._trail_lim: list[int] = []
        self._qhead = 0
        self._next = 1
        self._ok = True
        self._num_clauses = 0
        self.reserve(num_vars)

    @property
    def num_vars(self) -> int:
        return self._n

    @property
    def num_clauses(self) -> int:
        return self._num_clauses

    @property
    def ok(self) -> bool:
        return self._ok

    def new_var(self) -> int:
        self._n += 1
        self._val += (0, 0)
        self._level.append(0)
        self._reason.append(None)
        self._seen.append(False)
        self._watches += ([], [])
        self._bins += ([], [])
        return self._n

    def reserve(self, num_vars: int) -> None:
        grow = num_vars - self._n
        if grow <= 0:
            return
        self._n = num_vars
        self._val += [0] * (2 * grow)
        self._level += [0] * grow
        self._reason += [None] * grow
        self._seen += [False] * grow
        self._watches += [[] for _ in range(2 * grow)]
        self._bins += [[] for _ in range(2 * grow)]

    # -- clause database ---------------------------------------------------

    def add_clause(self, clause: Iterable[int]) -> None:
        n = self._n
        codes: list[int] = []
        for lit in clause:
            if type(lit) is not int or lit == 0 or lit > n or -lit > n:
                if isinstance(lit, int) and not isinstance(lit, bool) and 0 < abs(lit) <= n:
                    lit = int(lit)
                else:
                    raise ValueError(f"literal {lit!r} references an undeclared variable (have {n})")
            codes.append(lit << 1 if lit > 0 else (-lit << 1) | 1)
        self._num_clauses += 1
        if not self._ok:
            return
        if self._trail_lim:
            self._backtrack(0)
        val = self._val
        if len(codes) == 2:
            a, b = codes
            if a == b:
                codes = [a]
            elif a ^ 1 == b or val[a] == 1 or val[b] == 1:
                return
            elif val[a] == 0 and val[b] == 0:
                self._attach(codes)
                return
        kept: list[int] = []
        present = set()
        for c in codes:
            if c in present:
                continue
            if c ^ 1 in present:
                return  # tautology
            v = val[c]
            if v == 1:
                return  # satisfied at level 0
            if v == -1:
                continue  # permanently false
            present.add(c)
            kept.append(c)
        if not kept:
            self._ok = False
        elif len(kept) == 1:
            self._enqueue(kept[0], None)
            if self._propagate() is not None:
                self._ok = False
        else:
            self._attach(kept)

    def _attach(self, clause: list[int]) -> None:
        if len(clause) == 2:
            a, b = clause
            # reasons keep the implied literal first
            self._bins[a].append((b, [b, a]))
            self._bins[b].append((a, clause))
        else:
            self._watches[clause[0]].append(clause)
            self._watches[clause[1]].append(clause)

    # -- search ------------------------------------------------------------

    def _enqueue(self, code: int, reason: Optional[list[int]]) -> None:
        self._val[code] = 1
        self._val[code ^ 1] = -1
        v = code >> 1
        self._level[v] = len(self._trail_lim)
        self._reason[v] = reason
        self._trail.append(code)

    def _propagate(self) -> Optional[list[int]]:
        val = self._val
        watches = self._watches
        bins = self._bins
        trail = self._trail
        level = self._level
        reason = self._reason
        dl = len(self._trail_lim)
        qhead = self._qhead
        props = 0
        conflict = None
        while qhead < len(trail):
            false_code = trail[qhead] ^ 1
            qhead += 1
            props += 1
            for other, c in bins[false_code]:
                v_other = val[other]
                if v_other == 1:
                    continue
                if v_other == -1:
                    conflict = c
                    break
                val[other] = 1
                val[other ^ 1] = -1
                v = other >> 1
                level[v] = dl
                reason[v] = c
                trail.append(other)
            if conflict is not None:
                break
            ws = watches[false_code]
            keep = []
            n_ws = len(ws)
            idx = 0
            while idx < n_ws:
                c = ws[idx]
                idx += 1
                if c[0] == false_code:
                    c[0] = c[1]
                    c[1] = false_code
                first = c[0]
                if val[first] == 1:
                    keep.append(c)
                    continue
                for k in range(2, len(c)):
                    ck = c[k]
                    if val[ck] != -1:
                        c[1] = ck
                        c[k] = false_code
                        watches[ck].append(c)
                        break
                else:
                    keep.append(c)
                    if val[first] == -1:
                        conflict = c
                        keep.extend(ws[idx:])
                        break
                    val[first] = 1
                    val[first ^ 1] = -1
                    v = first >> 1
                    level[v] = dl
                    reason[v] = c
                    trail.append(first)
            watches[false_code] = keep
            if conflict is not None:
                break
        self._qhead = len(trail) if conflict is None else qhead
        self.stats.propagations += props
        return conflict

    def _analyze(self, confl: list[int]) -> tuple[list[int], int]:
        seen = self._seen
        level = self._level
        reason = self._reason
        trail = self._trail
        cur = len(self._trail_lim)
        learnt = [0]
        path = 0
        idx = len(trail) - 1
        p = -1
        clause: Sequence[int] = confl
        start = 0
        while True:
            for k in range(start, len(clause)):
                q = clause[k]
                v = q >> 1
                if not seen[v] and level[v] > 0:
                    seen[v] = True
                    if level[v] >= cur:
                        path += 1
                    else:
                        learnt.append(q)
            while not seen[trail[idx] >> 1]:
                idx -= 1
            p = trail[idx]
            idx -= 1
            seen[p >> 1] = False
            path -= 1
            if path == 0:
                break
            clause = reason[p >> 1]
            start = 1
        learnt[0] = p ^ 1
        bt = 0
        if len(learnt) > 1:
            best = 1
            for k in range(1, len(learnt)):
                seen[learnt[k] >> 1] = False
                if level[learnt[k] >> 1] > level[learnt[best] >> 1]:
                    best = k
            learnt[1], learnt[best] = learnt[best], learnt[1]
            bt = level[learnt[1] >> 1]
        return learnt, bt

    def _backtrack(self, lvl: int) -> None:
        if len(self._trail_lim) <= lvl:
            return
        lim = self._trail_lim[lvl]
        val = self._val
        reason = self._reason
        nxt = self._next
        for code in self._trail[lim:]:
            val[code] = 0
            val[code ^ 1] = 0
            v = code >> 1
            reason[v] = None
            if v < nxt:
                nxt = v
        self._next = nxt
        del self._trail[lim:]
        del self._trail_lim[lvl:]
        self._qhead = lim

    def _pick(self) -> int:
        val = self._val
        v = self._next
        n = self._n
        while v <= n and val[v << 1] != 0:
            v += 1
        self._next = v
        return v if v <= n else 0

    def solve(self, should_stop: StopFn = None) -> SatResult:
        stats = self.stats
        stats.solve_calls += 1
        if not self._ok:
            return UNSAT
        self._backtrack(0)
        if self._propagate() is not None:
            self._ok = False
            return UNSAT
        ticks = 0
        interval = self.STOP_CHECK_INTERVAL
        while True:
            confl = self._propagate()
            if confl is not None:
                stats.conflicts += 1
                if not self._trail_lim:
                    self._ok = False
                    return UNSAT
                learnt, bt = self._analyze(confl)
                self._backtrack(bt)
                if len(learnt) == 1:
                    self._enqueue(learnt[0], None)
                else:
                    self._attach(learnt)
                    stats.learned += 1
                    self._enqueue(learnt[0], learnt)
            else:
                v = self._pick()
                if v == 0:
                    val = self._val
                    model = [False] + [val[u << 1] == 1 for u in range(1, self._n + 1)]
                    self._backtrack(0)
                    return SatResult(True, model)
                stats.decisions += 1
                self._trail_lim.append(len(self._trail))
                self._enqueue((v << 1) | 1, None)
            ticks += 1
            if should_stop is not None and ticks % interval == 0 and should_stop():
                self._backtrack(0)
                raise SolveInterrupted()


# ---------------------------------------------------------------------------
# External process adapter

KNOWN_SOLVERS = ("kissat", "cadical", "cryptominisat5", "glucose", "lingeling")


def find_external_solver() -> Optional[list[str]]:
    """Command for an external solver: $RESV_EXTERNAL_SOLVER or a known binary on PATH."""
    env = os.environ.get("RESV_EXTERNAL_SOLVER")
    if env:
        return env.split()
    for name in KNOWN_SOLVERS:
        path = shutil.which(name)
        if path:
            return [path]
    return None


def parse_competition_output(text: str, num_vars: int) -> SatResult:
    status = None
    values: dict[int, bool] = {}
    for line in text.splitlines():
        if line.startswith("s "):
            status = line[2:].strip()
        elif line.startswith("v "):
            for tok in line[2:].split():
                lit = int(tok)
                if lit:
                    values[abs(lit)] = lit > 0
    if status == "UNSATISFIABLE":
        return UNSAT
    if status != "SATISFIABLE":
        raise RuntimeError(f"external solver gave no verdict: {text[:200]!r}")
    return SatResult(True, [False] + [values.get(v, False) for v in range(1, num_vars + 1)])


class ExternalSolver(IncrementalSolver):
    """Runs a competition-format solver process on the full clause set per solve."""

    def __init__(self, command: Sequence[str], num_vars: int = 0, timeout: float | None = None):
        self.command = list(command)
        self.timeout = timeout
        self.stats = SolverStats()
        self._formula = Formula(num_vars=num_vars)

    @property
    def num_vars(self) -> int:
        return self._formula.num_vars

    def new_var(self) -> int:
        return self._formula.new_var()

    def add_clause(self, clause: Iterable[int]) -> None:
        lits = tuple(clause)
        for lit in lits:
            if lit == 0 or abs(lit) > self.num_vars:
                raise ValueError(f"literal {lit!r} references an undeclared variable")
        self._formula.add(lits)

    def solve(self, should_stop: StopFn = None) -> SatResult:
        self.stats.solve_calls += 1
        with tempfile.NamedTemporaryFile("w", suffix=".cnf", delete=False) as fh:
            fh.write(export_dimacs(self._formula))
            path = fh.name
        try:
            proc = subprocess.run(
                self.command + [path], capture_output=True, text=True, timeout=self.timeout
            )
        finally:
            os.unlink(path)
        return parse_competition_output(proc.stdout, self.num_vars)


def solve_formula(formula: Formula, solver: IncrementalSolver | None = None) -> SatResult:
    solver = solver if solver is not None else CDCLSolver()
    solver.add_formula(formula)
    return solver.solve()


__all__ = [
    "CDCLSolver",
    "ExternalSolver",
    "IncrementalSolver",
    "SatResult",
    "SolveInterrupted",
    "SolverStats",
    "find_external_solver",
    "solve_formula",
]
