from __future__ import annotations

import json
import subprocess
import sys
from pathlib import Path

import pytest

from resvsat.cli import main
from resvsat.ledger import check_log, read_log

DATA = Path(__file__).parent / "data"
P00 = str(DATA / "corpus" / "p00.json")
EXPECTED = json.loads((DATA / "oracle_costs.json").read_text())


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.mark.parametrize("solver", ["naive", "lemma1", "greedy", "race"])
def test_solve_fixed(capsys, solver):
    code, out, err = run(capsys, "solve", P00, "--solver", solver)
    assert code == 0
    body = json.loads(out)
    assert body["status"] == "optimal"
    assert body["solution"]["cost"] == EXPECTED["p00.json"]["cost"]
    assert "stats" not in body
    assert err.startswith(f"{solver}: optimal")


def test_solve_output_is_deterministic(capsys, tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert run(capsys, "-q", "solve", P00, "-o", str(a))[0] == 0
    assert run(capsys, "-q", "solve", P00, "-o", str(b))[0] == 0
    assert a.read_bytes() == b.read_bytes()


def test_solve_stats_and_first_feasible(capsys):
    code, out, _ = run(capsys, "solve", P00, "--first-feasible", "--stats")
    body = json.loads(out)
    assert code == 0 and body["status"] in ("feasible", "optimal")
    assert body["stats"]["solve_calls"] >= 1


def test_solve_infeasible_exit_code(capsys):
    code, out, _ = run(capsys, "solve", str(DATA / "infeasible.json"))
    assert code == 2
    assert json.loads(out)["status"] == "infeasible"


def test_budget_without_solution_is_an_error(capsys, tmp_path):
    path = tmp_path / "devil.json"
    run(capsys, "gen", "--family", "greedy-devil", "-n", "14", "-a", "14", "-o", str(path))
    code, out, err = run(capsys, "solve", str(path), "--solver", "greedy", "--budget-ms", "1")
    assert code == 1
    assert json.loads(out)["status"] == "budget_exhausted"
    assert "no solution" in err


def test_flexible_round_trip(capsys, tmp_path):
    path = tmp_path / "flex.json"
    assert run(capsys, "gen", "--family", "random-flexible", "--seed", "3", "-o", str(path))[0] == 0
    code, out, _ = run(capsys, "solve", str(path))
    flex = json.loads(out)
    code2, out2, _ = run(capsys, "solve", str(path), "--solver", "discretize", "--step-ms", "600000")
    disc = json.loads(out2)
    assert code == code2 == 0
    assert flex["solver"] == "flexible" and flex["status"] == "optimal"
    assert flex["solution"]["cost"] == disc["solution"]["cost"]
    assert set(flex["schedule"]["resources"]) <= {"r0", "r1"}


def test_gen_uses_env_seed(capsys, monkeypatch):
    monkeypatch.setenv("RESV_SEED", "9")
    _, a, _ = run(capsys, "gen", "--family", "conflict-count", "-k", "8")
    _, b, _ = run(capsys, "gen", "--family", "conflict-count", "-k", "8", "--seed", "9")
    _, c, _ = run(capsys, "gen", "--family", "conflict-count", "-k", "8", "--seed", "1")
    assert a == b != c
    monkeypatch.setenv("RESV_SEED", "x")
    code, _, err = run(capsys, "gen", "--family", "sat-devil")
    assert code == 1 and "RESV_SEED" in err


def test_dimacs(capsys):
    code, out, err = run(capsys, "dimacs", str(DATA / "infeasible.json"))
    assert code == 0
    assert out == "p cnf 2 3\n1 0\n2 0\n-1 -2 0\n"
    assert "2 variables, 3 clauses" in err


def test_bench(capsys, tmp_path):
    suite = tmp_path / "suite.json"
    suite.write_text(
        json.dumps(
            {
                "budget_ms": 5000,
                "solvers": ["lemma1", "greedy"],
                "scenarios": [{"family": "conflict-count", "n_conflicts": 4, "seeds": 3}],
            }
        )
    )
    summary = tmp_path / "summary.csv"
    code, out, err = run(capsys, "bench", str(suite), "--summary", str(summary))
    assert code == 0
    lines = out.splitlines()
    assert lines[0].startswith("family,n_requests") and len(lines) == 7
    assert len(summary.read_text().splitlines()) == 3
    assert "6 runs, 0 errors" in err


def test_bench_bad_suite(capsys, tmp_path):
    suite = tmp_path / "suite.json"
    suite.write_text('{"scenarios": [{"family": "nope"}]}')
    code, _, err = run(capsys, "bench", str(suite))
    assert code == 1 and "scenarios[0].family" in err
    suite.write_text("{oops")
    code, _, err = run(capsys, "bench", str(suite))
    assert code == 1 and ":1:2:" in err


def test_ledger_sim(capsys, tmp_path):
    log = tmp_path / "events.jsonl"
    code, out, err = run(capsys, "ledger-sim", "--agents", "3", "--cycles", "200", "--log", str(log))
    assert code == 0
    report = json.loads(out)
    assert report["completed"] == 200 and report["deadlocks"] == 0 and report["violations"] == []
    assert check_log(read_log(log.read_text().splitlines())) == []
    assert "0 deadlocks" in err


@pytest.mark.parametrize(
    "argv, needle",
    [
        (["solve", "missing.json"], "missing.json"),
        (["solve", P00, "--budget-ms", "0"], "--budget-ms"),
        (["solve", P00, "--solver", "flexible"], "flexible-mode"),
        (["solve", P00, "--step-ms", "0", "--solver", "discretize"], "--step-ms"),
        (["gen", "--family", "conflict-count", "-k", "19"], "exactly 19"),
        (["ledger-sim", "--agents", "0"], "--agents"),
    ],
)
def test_errors_exit_one(capsys, argv, needle):
    code, _, err = run(capsys, *argv)
    assert code == 1
    assert err.startswith("error:") and needle in err


def test_bad_problem_file(capsys, tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"mode": "fixed", "requests": [{"id": 0, "alternatives": []}]}')
    code, _, err = run(capsys, "solve", str(path))
    assert code == 1 and "requests[0]" in err


def test_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "resvsat", "-q", "solve", str(DATA / "infeasible.json")],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 2
    assert json.loads(proc.stdout)["status"] == "infeasible"
    assert proc.stderr == ""
