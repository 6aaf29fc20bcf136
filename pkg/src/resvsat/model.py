"""Domain types for reservation requests and the pairwise conflict predicates.

Times are integer milliseconds. A missing duration means the reservation is
held indefinitely (until released).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum
from typing import Any, Sequence, Union

INT64_MIN = -(2**63)
INT64_MAX = 2**63 - 1


class InvalidProblem(ValueError):
    """Raised for structurally invalid problems or malformed problem files."""


class Mode(str, Enum):
    FIXED = "fixed"
    FLEXIBLE = "flexible"


def _check_time(value: Any, field: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise InvalidProblem(f"{field}: expected integer milliseconds, got {value!r}")
    if not INT64_MIN <= value <= INT64_MAX:
        raise InvalidProblem(f"{field}: {value} outside signed 64-bit range")
    return value


def add_time(t: int, delta: int) -> int:
    """Add a delta to a time point, refusing to leave the 64-bit range."""
    out = t + delta
    if not INT64_MIN <= out <= INT64_MAX:
        raise OverflowError(f"time overflow: {t} + {delta}")
    return out


def _check_duration(value: Any, field: str) -> int | None:
    if value is None:
        return None
    value = _check_time(value, field)
    if value <= 0:
        raise InvalidProblem(f"{field}: duration must be strictly positive, got {value}")
    return value


def _check_cost(value: Any, field: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise InvalidProblem(f"{field}: expected a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value) or value < 0:
        raise InvalidProblem(f"{field}: cost must be finite and non-negative, got {value}")
    return value


def _check_resource(value: Any, field: str) -> str:
    if not isinstance(value, str) or not value:
        raise InvalidProblem(f"{field}: resource must be a non-empty string, got {value!r}")
    return value


@dataclass(frozen=True)
class FixedAlternative:
    start: int
    duration: int | None
    resource: str
    cost: float

    def __post_init__(self) -> None:
        _check_time(self.start, "start")
        _check_duration(self.duration, "duration")
        _check_resource(self.resource, "resource")
        object.__setattr__(self, "cost", _check_cost(self.cost, "cost"))
        if self.duration is not None:
            add_time(self.start, self.duration)

    @property
    def end(self) -> float:
        return math.inf if self.duration is None else self.start + self.duration


@dataclass(frozen=True)
class FlexibleAlternative:
    earliest_start: int
    latest_start: int
    duration: int | None
    resource: str
    cost: float

    def __post_init__(self) -> None:
        _check_time(self.earliest_start, "earliest_start")
        _check_time(self.latest_start, "latest_start")
        _check_duration(self.duration, "duration")
        _check_resource(self.resource, "resource")
        object.__setattr__(self, "cost", _check_cost(self.cost, "cost"))
        if self.earliest_start > self.latest_start:
            raise InvalidProblem(
                f"earliest_start {self.earliest_start} > latest_start {self.latest_start}"
            )
        if self.duration is not None:
            add_time(self.latest_start, self.duration)

    @property
    def earliest_end(self) -> float:
        if self.duration is None:
            return math.inf
        return self.earliest_start + self.duration


Alternative = Union[FixedAlternative, FlexibleAlternative]


@dataclass(frozen=True)
class Request:
    id: int
    alternatives: tuple[Alternative, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "alternatives", tuple(self.alternatives))
        if not self.alternatives:
            raise InvalidProblem(f"request {self.id}: at least one alternative required")

    @property
    def costs(self) -> list[float]:
        return [a.cost for a in self.alternatives]


@dataclass(frozen=True)
class Problem:
    requests: tuple[Request, ...]
    mode: Mode

    def __post_init__(self) -> None:
        object.__setattr__(self, "requests", tuple(self.requests))
        object.__setattr__(self, "mode", Mode(self.mode))
        kind = FixedAlternative if self.mode is Mode.FIXED else FlexibleAlternative
        for i, req in enumerate(self.requests):
            if req.id != i:
                raise InvalidProblem(f"request ids must be dense 0..m, found {req.id} at {i}")
            for j, alt in enumerate(req.alternatives):
                if not isinstance(alt, kind):
                    raise InvalidProblem(
                        f"requests[{i}].alternatives[{j}]: expected {kind.__name__} in "
                        f"{self.mode.value} mode"
                    )

    @classmethod
    def build(cls, alternatives: Sequence[Sequence[Alternative]], mode: Mode | None = None) -> Problem:
        """Build a problem from nested alternative lists, numbering requests densely."""
        if mode is None:
            first = next((a for alts in alternatives for a in alts), None)
            mode = Mode.FLEXIBLE if isinstance(first, FlexibleAlternative) else Mode.FIXED
        return cls(tuple(Request(i, tuple(alts)) for i, alts in enumerate(alternatives)), mode)

    def __len__(self) -> int:
        return len(self.requests)

    def alt(self, i: int, j: int) -> Alternative:
        return self.requests[i].alternatives[j]

    def cost_of(self, chosen: Sequence[int]) -> float:
        return sum(self.requests[i].alternatives[j].cost for i, j in enumerate(chosen))

    def require_nonempty(self) -> None:
        if not self.requests:
            raise InvalidProblem("problem has no requests")


def conflicts_fixed(a: FixedAlternative, b: FixedAlternative) -> bool:
    """Same resource and intersecting half-open occupation intervals."""
    if a.resource != b.resource:
        return False
    return a.start < b.end and b.start < a.end


def cannot_coexist_flexible(a: FlexibleAlternative, b: FlexibleAlternative) -> bool:
    """True when neither a-then-b nor b-then-a fits within the latest-start bounds."""
    if a.resource != b.resource:
        return False
    return a.earliest_end > b.latest_start and b.earliest_end > a.latest_start


# ---------------------------------------------------------------------------
# JSON problem files


def _alt_to_json(alt: Alternative) -> dict[str, Any]:
    if isinstance(alt, FixedAlternative):
        return {
            "resource": alt.resource,
            "cost": alt.cost,
            "start": alt.start,
            "duration_ms": alt.duration,
        }
    return {
        "resource": alt.resource,
        "cost": alt.cost,
        "earliest_start": alt.earliest_start,
        "latest_start": alt.latest_start,
        "duration_ms": alt.duration,
    }


def problem_to_dict(problem: Problem) -> dict[str, Any]:
    return {
        "mode": problem.mode.value,
        "requests": [
            {"id": req.id, "alternatives": [_alt_to_json(a) for a in req.alternatives]}
            for req in problem.requests
        ],
    }


def dumps_problem(problem: Problem) -> str:
    return json.dumps(problem_to_dict(problem), indent=2) + "\n"


def _field(obj: dict, key: str, path: str) -> Any:
    if not isinstance(obj, dict):
        raise InvalidProblem(f"{path}: expected an object")
    if key not in obj:
        raise InvalidProblem(f"{path}.{key}: missing field")
    return obj[key]


def problem_from_dict(data: Any) -> Problem:
    mode_raw = _field(data, "mode", "$")
    try:
        mode = Mode(mode_raw)
    except ValueError:
        raise InvalidProblem(f"$.mode: expected 'fixed' or 'flexible', got {mode_raw!r}") from None
    reqs_raw = _field(data, "requests", "$")
    if not isinstance(reqs_raw, list):
        raise InvalidProblem("$.requests: expected a list")
    requests = []
    for i, req in enumerate(reqs_raw):
        path = f"$.requests[{i}]"
        rid = _field(req, "id", path)
        alts_raw = _field(req, "alternatives", path)
        if not isinstance(alts_raw, list):
            raise InvalidProblem(f"{path}.alternatives: expected a list")
        alts: list[Alternative] = []
        for j, a in enumerate(alts_raw):
            apath = f"{path}.alternatives[{j}]"
            try:
                resource = _check_resource(_field(a, "resource", apath), f"{apath}.resource")
                cost = _check_cost(_field(a, "cost", apath), f"{apath}.cost")
                duration = _check_duration(a.get("duration_ms"), f"{apath}.duration_ms")
                if mode is Mode.FIXED:
                    start = _check_time(_field(a, "start", apath), f"{apath}.start")
                    alts.append(FixedAlternative(start, duration, resource, cost))
                else:
                    s = _check_time(_field(a, "earliest_start", apath), f"{apath}.earliest_start")
                    l = _check_time(_field(a, "latest_start", apath), f"{apath}.latest_start")
                    alts.append(FlexibleAlternative(s, l, duration, resource, cost))
            except InvalidProblem as exc:
                msg = str(exc)
                raise InvalidProblem(msg if msg.startswith("$") else f"{apath}: {msg}") from None
        try:
            requests.append(Request(rid, tuple(alts)))
        except InvalidProblem as exc:
            raise InvalidProblem(f"{path}: {exc}") from None
    return Problem(tuple(requests), mode)


def loads_problem(text: str) -> Problem:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidProblem(f"line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return problem_from_dict(data)


def load_problem(path: str) -> Problem:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        return loads_problem(text)
    except InvalidProblem as exc:
        raise InvalidProblem(f"{path}: {exc}") from None
