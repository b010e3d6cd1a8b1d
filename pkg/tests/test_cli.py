import json
import os
import subprocess
import sys

import pytest

CLI = [sys.executable, "-m", "repdyn.cli"]

# keep CLI runs light: overrides for the fast bayes-opt configuration
FAST_BAYES = ["--set", "n_random_subspaces=20", "--set", "mc_samples=5000"]


def run_cli(args, **kwargs):
    return subprocess.run(CLI + args, capture_output=True, text=True, **kwargs)


def test_experiment_command_writes_bundle_and_exits_zero(tmp_path):
    out = tmp_path / "bundle"
    result = run_cli(["bayes-opt", "--seed", "7", "--out", str(out)] + FAST_BAYES)
    assert result.returncode == 0, result.stderr
    assert (out / "config.json").exists()
    assert (out / "checks.json").exists()
    assert list((out / "tables").glob("*.csv"))
    assert list((out / "figures").glob("*.svg")) == []  # bayes-opt is table-only
    assert "[PASS]" in result.stdout


def test_rerun_with_same_seed_is_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        result = run_cli(["bayes-opt", "--seed", "3", "--out", str(out)] + FAST_BAYES)
        assert result.returncode == 0
    for csv_a in sorted((a / "tables").glob("*.csv")):
        csv_b = b / "tables" / csv_a.name
        assert csv_a.read_bytes() == csv_b.read_bytes()


def test_different_seed_changes_tables(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    run_cli(["bayes-opt", "--seed", "3", "--out", str(a)] + FAST_BAYES)
    run_cli(["bayes-opt", "--seed", "4", "--out", str(b)] + FAST_BAYES)
    assert (a / "tables" / "projected_traces.csv").read_bytes() != \
        (b / "tables" / "projected_traces.csv").read_bytes()


def test_env_seed_fallback(tmp_path):
    env = dict(os.environ, REPDYN_SEED="3")
    out_env = tmp_path / "env"
    result = run_cli(["bayes-opt", "--out", str(out_env)] + FAST_BAYES, env=env)
    assert result.returncode == 0
    config = json.loads((out_env / "config.json").read_text())
    assert config["seed"] == 3


def test_usage_error_exits_one():
    result = run_cli(["bogus"])
    assert result.returncode == 1
    assert "usage" in result.stderr.lower() or "invalid choice" in result.stderr


def test_unknown_override_exits_one(tmp_path):
    result = run_cli(["bayes-opt", "--set", "nope=3", "--out", str(tmp_path / "x")])
    assert result.returncode == 1
    assert "unknown override" in result.stderr


def test_failed_check_exits_two(tmp_path):
    result = run_cli([
        "limit-checks", "--out", str(tmp_path / "f"),
        "--set", "M_list=100", "--set", "n_seeds=1", "--set", "gap_tol=1e-12",
        "--set", "cov_seeds=20", "--set", "weight_M=1000", "--set", "weight_seeds=1",
        "--set", "weight_tol=1.0", "--set", "rewmat_seeds=20", "--set", "rewmat_tol=1.0",
        "--set", "step=5e-3",
    ])
    assert result.returncode == 2, result.stdout + result.stderr
    assert "[FAIL]" in result.stdout


def test_flow_command_wide_csv(tmp_path):
    out = tmp_path / "flow"
    result = run_cli(["flow", "--flow", "td", "--mdp", "chain", "--gamma", "0.9",
                      "--t-max", "100", "--samples", "21", "--out", str(out)])
    assert result.returncode == 0, result.stderr
    text = (out / "tables" / "trajectory.csv").read_text()
    header = [ln for ln in text.splitlines() if ln.startswith("t,")][0]
    assert header.split(",")[:3] == ["t", "v_0", "v_1"]
    assert (out / "figures" / "trajectory.svg").read_text().startswith("<svg")


@pytest.mark.parametrize("flow", ["mc", "nstep", "tdlambda", "limit", "rc"])
def test_flow_command_variants(flow, tmp_path):
    out = tmp_path / flow
    result = run_cli(["flow", "--flow", flow, "--t-max", "2", "--samples", "5",
                      "--m", "8", "--k", "2", "--step", "0.01", "--out", str(out)])
    assert result.returncode == 0, result.stderr
    assert (out / "tables" / "trajectory.csv").exists()
