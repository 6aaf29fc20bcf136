"""CNF construction for the fixed-time formulation.

Literals use the DIMACS convention: a positive int is a variable, its
negation is the negated variable. Variables are numbered row-major over
(request, alternative) in input order.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .model import InvalidProblem, Mode, Problem

Clause = tuple[int, ...]


@dataclass
class Formula:
    num_vars: int = 0
    clauses: list[Clause] = field(default_factory=list)

    def add(self, clause: Iterable[int]) -> None:
        self.clauses.append(tuple(clause))

    def new_var(self) -> int:
        self.num_vars += 1
        return self.num_vars

    def __len__(self) -> int:
        return len(self.clauses)

    def satisfied_by(self, model: Sequence[bool]) -> bool:
        """model[v] is the value of variable v (index 0 unused)."""
        return all(any(model[l] if l > 0 else not model[-l] for l in c) for c in self.clauses)


@dataclass
class VarMap:
    forward: dict[tuple[int, int], int] = field(default_factory=dict)
    reverse: dict[int, tuple[int, int]] = field(default_factory=dict)

    def add(self, i: int, j: int, var: int) -> None:
        self.forward[(i, j)] = var
        self.reverse[var] = (i, j)

    def var(self, i: int, j: int) -> int:
        return self.forward[(i, j)]

    def decode(self, model: Sequence[bool], num_requests: int) -> tuple[int, ...]:
        """Chosen alternative per request; -1 where none is true."""
        chosen = [-1] * num_requests
        for var, (i, j) in self.reverse.items():
            if model[var] and chosen[i] == -1:
                chosen[i] = j
        return tuple(chosen)

    def encode(self, chosen: Sequence[int]) -> list[int]:
        """Full literal assignment (one true literal per request, the rest false)."""
        return [v if chosen[i] == j else -v for (i, j), v in self.forward.items()]


def exactly_one(formula: Formula, lits: Sequence[int]) -> None:
    formula.add(lits)
    for a in range(len(lits)):
        for b in range(a + 1, len(lits)):
            formula.add((-lits[a], -lits[b]))


def fixed_conflict_pairs(problem: Problem) -> list[tuple[tuple[int, int], tuple[int, int]]]:
    """All unordered cross-request conflicting pairs, sorted lexicographically.

    Sweep per resource over start-sorted alternatives so wide discretized
    instances stay tractable.
    """
    by_resource: dict[str, list[tuple[int, float, int, int]]] = defaultdict(list)
    for req in problem.requests:
        for j, alt in enumerate(req.alternatives):
            by_resource[alt.resource].append((alt.start, alt.end, req.id, j))
    pairs = []
    for items in by_resource.values():
        items.sort()
        for a in range(len(items)):
            s_a, e_a, i, j = items[a]
            for b in range(a + 1, len(items)):
                s_b, _, k, m = items[b]
                if s_b >= e_a:
                    break
                if i != k:
                    pairs.append(((i, j), (k, m)) if (i, j) < (k, m) else ((k, m), (i, j)))
    pairs.sort()
    return pairs


def alternative_vars(problem: Problem, formula: Formula) -> VarMap:
    varmap = VarMap()
    for req in problem.requests:
        for j in range(len(req.alternatives)):
            varmap.add(req.id, j, formula.new_var())
    return varmap


def encode_fixed(problem: Problem) -> tuple[Formula, VarMap]:
    if problem.mode is not Mode.FIXED:
        raise InvalidProblem("encode_fixed requires a fixed-mode problem")
    problem.require_nonempty()
    formula = Formula()
    varmap = alternative_vars(problem, formula)
    for req in problem.requests:
        exactly_one(formula, [varmap.var(req.id, j) for j in range(len(req.alternatives))])
    for (i, j), (k, m) in fixed_conflict_pairs(problem):
        formula.add((-varmap.var(i, j), -varmap.var(k, m)))
    return formula, varmap


def export_dimacs(formula: Formula) -> str:
    lines = [f"p cnf {formula.num_vars} {len(formula.clauses)}"]
    lines.extend(" ".join(map(str, c)) + " 0" for c in formula.clauses)
    return "\n".join(lines) + "\n"


def parse_dimacs(text: str) -> Formula:
    """Parse DIMACS CNF text. Clauses may span lines; comments start with 'c'."""
    formula = Formula()
    declared = None
    pending: list[int] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("c") or line.startswith("%"):
            continue
        if line.startswith("p"):
            parts = line.split()
            if len(parts) != 4 or parts[1] != "cnf":
                raise ValueError(f"line {lineno}: invalid problem line {line!r}")
            formula.num_vars = int(parts[2])
            declared = int(parts[3])
            continue
        for tok in line.split():
            lit = int(tok)
            if lit == 0:
                formula.add(pending)
                pending = []
            else:
                if abs(lit) > formula.num_vars:
                    raise ValueError(f"line {lineno}: literal {lit} exceeds declared variables")
                pending.append(lit)
    if pending:
        formula.add(pending)
    if declared is not None and declared != len(formula.clauses):
        raise ValueError(f"header declares {declared} clauses, found {len(formula.clauses)}")
    return formula


__all__ = [
    "Clause",
    "Formula",
    "VarMap",
    "encode_fixed",
    "export_dimacs",
    "parse_dimacs",
    "fixed_conflict_pairs",
    "exactly_one",
    "alternative_vars",
]
