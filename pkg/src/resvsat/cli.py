"""Command-line entry point.

Machine-readable results go to stdout (or ``-o``); a one-line human summary
goes to stderr. Exit status: 0 on success, 2 when the problem is infeasible,
1 on any error (including running out of budget without a solution).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict
from typing import Optional, Sequence

from . import bench
from .cnf import encode_fixed, export_dimacs
from .flexible import discretize, encode_flexible, optimize_flexible, schedule_from_fixed, solve_flexible
from .ledger import simulate
from .model import InvalidProblem, Mode, Problem, dumps_problem, load_problem
from .opt_greedy import solve_greedy
from .opt_sat import Status, solve_lemma1, solve_naive
from .race import RaceMode, race

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INFEASIBLE = 2

FIXED_SOLVERS = ("naive", "lemma1", "greedy", "race")
FLEXIBLE_SOLVERS = ("flexible", "discretize")


class CliError(Exception):
    pass


def _budget(ms: Optional[float]) -> Optional[float]:
    if ms is None:
        return None
    if ms <= 0:
        raise CliError("--budget-ms must be positive")
    return ms / 1000.0


def _seed(value: Optional[int]) -> int:
    if value is not None:
        return value
    env = os.environ.get("RESV_SEED")
    if env is None or env == "":
        return 0
    try:
        return int(env)
    except ValueError:
        raise CliError(f"RESV_SEED must be an integer, got {env!r}") from None


def _write(text: str, path: Optional[str]) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def _note(msg: str, quiet: bool = False) -> None:
    if not quiet:
        print(msg, file=sys.stderr)


def _dump(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


# -- solve -----------------------------------------------------------------


def _solve_fixed(problem: Problem, solver: str, budget, first: bool) -> tuple[Status, dict]:
    if problem.mode is not Mode.FIXED:
        raise CliError(f"solver {solver!r} needs a fixed-mode problem; use flexible or discretize")
    if solver == "greedy":
        res = solve_greedy(problem, budget)
        return res.status, {"solution": res.solution and res.solution.to_dict(), "stats": asdict(res.stats)}
    if solver == "race":
        out = race(problem, budget, RaceMode.FIRST_FEASIBLE if first else RaceMode.OPTIMAL)
        stats = {k: asdict(v) for k, v in out.stats.items()}
        return out.status, {"solution": out.solution and out.solution.to_dict(), "winner": out.winner, "stats": stats}
    stream = (solve_naive if solver == "naive" else solve_lemma1)(problem, budget)
    if first:
        sol = next(stream, None)
        stream.close()
        status = stream.terminal if sol is None else Status.FEASIBLE
    else:
        stream.run()
        status = stream.terminal
    best = stream.best
    return status, {"solution": best and best.to_dict(), "stats": asdict(stream.stats)}


def _solve_flexible(problem: Problem, solver: str, budget, first: bool, step: int) -> tuple[Status, dict]:
    if problem.mode is not Mode.FLEXIBLE:
        raise CliError(f"solver {solver!r} needs a flexible-mode problem")
    if solver == "flexible":
        res = (solve_flexible if first else optimize_flexible)(problem, budget)
        return res.status, {
            "solution": res.solution and res.solution.to_dict(),
            "schedule": res.schedule and res.schedule.to_dict(),
            "stats": asdict(res.stats),
        }
    disc = discretize(problem, step)
    stream = solve_lemma1(disc.problem, budget)
    if first:
        sol = next(stream, None)
        stream.close()
        status = stream.terminal if sol is None else Status.FEASIBLE
    else:
        stream.run()
        status = stream.terminal
    best = stream.best
    schedule = schedule_from_fixed(disc, best.chosen) if best else None
    solution = None
    if best:
        chosen = schedule.chosen(len(problem.requests))
        solution = {"chosen": list(chosen), "cost": best.total_cost, "optimal": best.optimal}
    return status, {"solution": solution, "schedule": schedule and schedule.to_dict(), "stats": asdict(stream.stats)}


def cmd_solve(args) -> int:
    budget = _budget(args.budget_ms)
    problem = load_problem(args.input)
    solver = args.solver or ("flexible" if problem.mode is Mode.FLEXIBLE else "lemma1")
    if solver in FIXED_SOLVERS:
        status, body = _solve_fixed(problem, solver, budget, args.first_feasible)
    else:
        if args.step_ms <= 0:
            raise CliError("--step-ms must be positive")
        status, body = _solve_flexible(problem, solver, budget, args.first_feasible, args.step_ms)
    out = {"solver": solver, "status": status.value}
    out.update(body)
    if not args.stats:
        out.pop("stats", None)
    _write(_dump(out), args.output)
    sol = out.get("solution")
    cost = f" cost={sol['cost']}" if sol else ""
    _note(f"{solver}: {status.value}{cost}", args.quiet)
    if status is Status.INFEASIBLE:
        return EXIT_INFEASIBLE
    if sol is None:
        _note("no solution found within budget", args.quiet)
        return EXIT_ERROR
    return EXIT_OK


# -- gen / dimacs ----------------------------------------------------------


def cmd_gen(args) -> int:
    params = {}
    for key in ("n_requests", "n_alternatives", "n_conflicts", "window_ms", "step_ms"):
        value = getattr(args, key)
        if value is not None:
            params[key] = value
    scenario = bench.Scenario.make(args.family, seed=_seed(args.seed), **params)
    problem = bench.gen(scenario)
    _write(dumps_problem(problem), args.output)
    _note(f"{scenario.family.value}: {len(problem.requests)} requests, seed {scenario.seed}", args.quiet)
    return EXIT_OK


def cmd_dimacs(args) -> int:
    problem = load_problem(args.input)
    if problem.mode is Mode.FIXED:
        formula, _ = encode_fixed(problem)
    else:
        formula, _, _ = encode_flexible(problem)
    _write(export_dimacs(formula), args.output)
    _note(f"{formula.num_vars} variables, {len(formula.clauses)} clauses", args.quiet)
    return EXIT_OK


# -- bench -----------------------------------------------------------------


def cmd_bench(args) -> int:
    with open(args.suite, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise CliError(f"{args.suite}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    plan, budget = bench.parse_suite(data)
    if args.budget_ms is not None:
        budget = _budget(args.budget_ms)
    records = []
    for scenario, solvers in plan:
        records.extend(bench.run_suite([scenario], solvers, budget))
    _write(bench.to_csv(records), args.output)
    if args.summary:
        with open(args.summary, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(bench.summary_csv(bench.summarize(records)))
    errors = sum(r.outcome == "error" for r in records)
    _note(f"{len(records)} runs, {errors} errors", args.quiet)
    for r in records:
        if r.error:
            _note(f"  {r.scenario.family.value} seed {r.scenario.seed} {r.solver}: {r.error}", args.quiet)
    return EXIT_OK if errors == 0 else EXIT_ERROR


# -- ledger-sim ------------------------------------------------------------


def cmd_ledger_sim(args) -> int:
    if args.agents < 1 or args.cycles < 0:
        raise CliError("--agents must be >= 1 and --cycles >= 0")
    report = simulate(
        agents=args.agents,
        cycles=args.cycles,
        seed=_seed(args.seed),
        resources=tuple(args.resource or ["dock"]),
        mode=Mode(args.mode),
    )
    if args.log:
        with open(args.log, "w", encoding="utf-8", newline="\n") as fh:
            for ev in report.events:
                fh.write(ev.to_json() + "\n")
    _write(_dump(report.to_dict()), args.output)
    _note(
        f"{report.completed}/{report.cycles} cycles, {report.deadlocks} deadlocks, "
        f"{len(report.violations)} violations",
        args.quiet,
    )
    return EXIT_OK if report.ok else EXIT_ERROR


# -- parser ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="resvsat", description="Resource reservation via SAT and greedy search.")
    parser.add_argument("-q", "--quiet", action="store_true", help="no summary on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve a problem file")
    p.add_argument("input", help="problem JSON file")
    p.add_argument("-o", "--output", help="write the result here instead of stdout")
    p.add_argument("--solver", choices=FIXED_SOLVERS + FLEXIBLE_SOLVERS)
    p.add_argument("--budget-ms", type=float)
    p.add_argument("--first-feasible", action="store_true", help="stop at the first feasible solution")
    p.add_argument("--step-ms", type=int, default=bench.MINUTE * 10, help="discretization step")
    p.add_argument("--stats", action="store_true", help="include solver statistics (timings vary run to run)")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("gen", help="generate a benchmark problem")
    p.add_argument("--family", required=True, choices=[f.value for f in bench.Family])
    p.add_argument("-n", "--n-requests", type=int)
    p.add_argument("-a", "--n-alternatives", type=int)
    p.add_argument("-k", "--n-conflicts", type=int)
    p.add_argument("--window-ms", type=int)
    p.add_argument("--step-ms", type=int)
    p.add_argument("--seed", type=int, help="defaults to $RESV_SEED, then 0")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("bench", help="run a benchmark suite and write CSV")
    p.add_argument("suite", help="suite JSON file")
    p.add_argument("-o", "--output")
    p.add_argument("--summary", help="also write box-plot statistics CSV here")
    p.add_argument("--budget-ms", type=float, help="overrides the suite's budget")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("dimacs", help="export the CNF encoding of a problem")
    p.add_argument("input")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_dimacs)

    p = sub.add_parser("ledger-sim", help="simulate agents contending through the ledger")
    p.add_argument("--agents", type=int, default=2)
    p.add_argument("--cycles", type=int, default=10_000)
    p.add_argument("--seed", type=int, help="defaults to $RESV_SEED, then 0")
    p.add_argument("--resource", action="append", help="shared resource name (repeatable)")
    p.add_argument("--mode", choices=[m.value for m in Mode], default=Mode.FLEXIBLE.value)
    p.add_argument("--log", help="write the JSON-lines event log here")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_ledger_sim)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CliError, InvalidProblem, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
