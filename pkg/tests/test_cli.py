import json
import subprocess
import sys
from pathlib import Path

import pytest

from gridlb.cli import main

GOLDEN = Path(__file__).parent / "golden"


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_validate(capsys, tmp_path):
    code, out, _ = run(capsys, "validate", "tables23")
    assert code == 0 and out.startswith("ok: tables23 n=5 m=8")
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"nodes": [{"mu": 1.0}], "schedulers": [{"lambda": 2.0}]}))
    code, out, _ = run(capsys, "validate", str(bad))
    assert code == 1 and "InfeasibleLoad" in out


def test_missing_scenario(capsys):
    code, _, err = run(capsys, "solve", "no_such_scenario")
    assert code == 1 and "error" in err


def test_solve_tables(capsys):
    code, out, _ = run(capsys, "solve", "tables23", "--format", "json")
    doc = json.loads(out)
    assert code == 0 and doc["converged"]
    assert len(doc["strategy"]) == 5 and len(doc["alpha"]) == 5


def test_solve_forced_nonconvergence(capsys):
    code, out, _ = run(capsys, "solve", "tables23", "--threshold", "0", "--max-iter", "3")
    assert code == 2 and "NOT converged after 3" in out


def test_solve_bad_threshold(capsys):
    code, _, err = run(capsys, "solve", "tables23", "--threshold", "1.5")
    assert code == 1 and "threshold" in err


def test_solve_single(capsys):
    code, out, _ = run(capsys, "solve", "single", "--format", "json")
    assert code == 0 and json.loads(out)["strategy"] == [[1.0]]


def test_solve_rejects_overload(capsys):
    code, _, _ = run(capsys, "solve", "tables23", "--load", "1.2")
    assert code == 1


def test_baseline(capsys):
    code, out, _ = run(capsys, "baseline", "tables23", "--format", "json")
    doc = json.loads(out)
    assert code == 0 and doc["fi"] == 1.0
    assert all(v == 0.125 for row in doc["strategy"] for v in row)
    code, _, err = run(capsys, "baseline", "tables23", "--load", "0.9")
    assert code == 1 and "node" in err


def test_moments(capsys):
    code, out, _ = run(capsys, "moments", "--pareto", "k=0.001", "p=0.07", "alpha=1.1")
    assert code == 0
    vals = dict(line.split() for line in out.splitlines())
    assert float(vals["mean"]) == pytest.approx(0.003843, rel=5e-3)
    assert float(vals["second_moment"]) == pytest.approx(5.52e-5, rel=5e-3)
    code, out, _ = run(capsys, "moments", "--exp", "mu=2")
    assert out == "mean 0.5\nsecond_moment 0.5\n"
    code, _, err = run(capsys, "moments", "--pareto", "k=0.001", "p=0.07", "alpha=2")
    assert code == 1 and "SingularShape" in err


def test_experiment_unknown(capsys, tmp_path):
    code, _, err = run(capsys, "experiment", "bogus", "tables23", "--output-dir", str(tmp_path))
    assert code == 1 and "unknown experiment" in err


def test_experiment_load_rows(capsys, tmp_path):
    code, out, _ = run(capsys, "experiment", "load", "tables23", "--output-dir", str(tmp_path))
    assert code == 0 and "load tables23" in out
    lines = (tmp_path / "load_tables23.csv").read_text().splitlines()[1:]
    for scheme in ("game", "average"):
        loads = {l.split(",")[2] for l in lines if l.split(",")[1] == scheme}
        assert len(loads) == 9


def test_experiment_pareto_moments(capsys, tmp_path):
    code, _, _ = run(capsys, "experiment", "pareto", "table5", "--output-dir", str(tmp_path))
    assert code == 0
    lines = (tmp_path / "pareto_moments_table5.csv").read_text().splitlines()
    first = dict(zip(lines[0].split(","), lines[1].split(",")))
    assert float(first["mean"]) == pytest.approx(0.003843, rel=5e-3)
    assert float(first["second_moment"]) == pytest.approx(5.52e-5, rel=5e-3)


def test_experiment_output_dir_from_environment(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv("GRIDLB_OUTPUT_DIR", str(tmp_path / "env"))
    code, _, _ = run(capsys, "experiment", "convergence", "tables23")
    assert code == 0
    assert (tmp_path / "env" / "convergence_tables23.csv").exists()
    assert (tmp_path / "env" / "convergence_trace_tables23.csv").exists()


def test_experiment_not_converged(capsys, tmp_path):
    code, _, _ = run(capsys, "experiment", "convergence", "tables23", "--threshold", "0",
                     "--max-iter", "5", "--output-dir", str(tmp_path))
    assert code == 2


@pytest.mark.parametrize("name", ["secondary", "schedulers"])
def test_experiment_byte_identical_rerun(capsys, tmp_path, name):
    for d in ("a", "b"):
        assert run(capsys, "experiment", name, "tables23", "--seed", "3",
                   "--output-dir", str(tmp_path / d))[0] == 0
    for f in (tmp_path / "a").iterdir():
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()


def test_simulate_mm1(capsys):
    code, out, _ = run(capsys, "simulate", "--exp", "mu=1", "--rate", "0.5", "--format", "json",
                       "--seed", "1")
    doc = json.loads(out)
    assert code == 0 and doc["analytic_mean_wait"] == 1.0
    assert abs(doc["des_mean_wait"] - 1.0) <= max(0.05, doc["ci95_wait"])


def test_simulate_zero_rate(capsys):
    code, out, _ = run(capsys, "simulate", "--exp", "mu=1", "--rate", "0", "--format", "json")
    assert code == 0 and json.loads(out)["des_mean_wait"] == 0.0


def test_simulate_unstable(capsys):
    code, _, _ = run(capsys, "simulate", "--exp", "mu=1", "--rate", "1.0")
    assert code == 1


def test_simulate_scenario_node(capsys):
    code, out, _ = run(capsys, "simulate", "tables23", "--node", "1", "--horizon", "20000")
    assert code == 0 and "tables23 node 1 at equilibrium" in out


def test_simulate_golden(capsys):
    code, out, _ = run(capsys, "simulate", "--pareto", "k=0.001", "p=0.07", "alpha=1.1",
                       "--load", "0.5", "--seed", "7")
    assert code == 0
    assert out == (GOLDEN / "simulate_table5_node0.txt").read_text()


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "gridlb", "moments", "--exp", "mu=4"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert proc.stdout == "mean 0.25\nsecond_moment 0.125\n"
