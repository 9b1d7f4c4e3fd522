"""Smoke tests for the command-line interface."""

import csv
import json

import numpy as np
import pytest
from click.testing import CliRunner

from gpselect.cli import main


@pytest.fixture
def runner():
    return CliRunner()


def prior_config(tmp_path, kind="cap"):
    cfg = {
        "prior": {
            "xi": 1.0,
            "d_n": 3,
            "n": 60,
            "size_prior": {"kind": kind, "k": 1.0},
            "rescaling": {"rate": 1.0},
        }
    }
    path = tmp_path / "prior.json"
    path.write_text(json.dumps(cfg))
    return str(path)


def test_eigen_json(runner):
    res = runner.invoke(main, ["eigen", "--xi", "1", "--a", "1", "--budget", "6"])
    assert res.exit_code == 0, res.output
    out = json.loads(res.output)
    assert out["constants"]["B"] == pytest.approx(0.5)
    assert out["spectrum"][0]["eigenvalue"] == pytest.approx(0.5)


def test_rkhs_csv(runner):
    res = runner.invoke(
        main, ["rkhs", "--epsilon-grid", "0.05,0.02", "--emit", "csv"]
    )
    assert res.exit_code == 0, res.output
    lines = res.output.strip().splitlines()
    assert len(lines) == 3  # header + two epsilons
    header = lines[0].split(",")
    assert "log_lower" in header and "log_upper" in header


def test_smallball(runner):
    res = runner.invoke(
        main, ["smallball", "--epsilon", "0.4", "--samples", "20000", "--seed", "1"]
    )
    assert res.exit_code == 0, res.output
    out = json.loads(res.output)
    row = out[0] if isinstance(out, list) else out
    assert row["neg_log_prob"] > 0


def test_prior_sample(runner, tmp_path):
    res = runner.invoke(
        main, ["prior-sample", "--config", prior_config(tmp_path), "--n-draws", "5"]
    )
    assert res.exit_code == 0, res.output
    rows = json.loads(res.output)
    assert len(rows) == 5
    assert all(len(r["gamma"]) == 3 for r in rows)


def test_fit_with_trace(runner, tmp_path):
    rng = np.random.default_rng(0)
    X = rng.normal(size=(40, 2))
    y = np.sin(2.0 * X[:, 0]) + 0.1 * rng.normal(size=40)
    data_path = tmp_path / "data.csv"
    with open(data_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x1", "x2", "y"])
        for i in range(40):
            w.writerow([X[i, 0], X[i, 1], y[i]])
    trace_path = tmp_path / "trace.csv"
    res = runner.invoke(
        main,
        [
            "fit", "--data", str(data_path), "--config", prior_config(tmp_path),
            "--iters", "600", "--burn-in", "150", "--chains", "1",
            "--sigma", "0.1", "--trace-out", str(trace_path),
        ],
    )
    assert res.exit_code == 0, res.output
    out = json.loads(res.output)
    assert out["inclusion_probs"][0] > 0.8
    with open(trace_path) as fh:
        rows = list(csv.DictReader(fh))
    assert rows and set(rows[0]) == {"iter", "gamma_bits_hex", "log_a", "log_marginal"}


def test_simulate_and_report(runner, tmp_path):
    data_out = tmp_path / "sim.csv"
    res = runner.invoke(
        main, ["simulate", "--n", "30", "--d-n", "4", "--out", str(data_out)]
    )
    assert res.exit_code == 0, res.output
    with open(data_out) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 30
    assert set(rows[0]) == {"x1", "x2", "x3", "x4", "y"}


def test_consistency_and_report(runner, tmp_path):
    plan = {
        "plan": {
            "n_grid": [30, 60, 120], "d_n": 3, "replications": 2, "chains": 1,
            "iters": 300, "burn_in": 80, "n_fresh": 400,
        }
    }
    plan_path = tmp_path / "plan.json"
    plan_path.write_text(json.dumps(plan))
    out = tmp_path / "results.csv"
    res = runner.invoke(
        main, ["consistency", "--plan", str(plan_path), "--out", str(out)]
    )
    assert res.exit_code == 0, res.output
    with open(out) as fh:
        assert len(list(csv.DictReader(fh))) == 6
    rep = runner.invoke(main, ["report", "--results", str(out)])
    assert rep.exit_code == 0, rep.output
    summary = json.loads(rep.output)
    assert "slope" in summary
