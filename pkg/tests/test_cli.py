import json
import subprocess
import sys

import pytest

import repgame
from repgame.cli import main
from repgame.scenario_io import read_json, scenario_to_dict
from repgame.scenarios import benchmark_scenario

BENCH = repgame.data_path("benchmark.json")
PERTURBED = repgame.data_path("perturbed.json")
PERTURBED_PROFILE = repgame.data_path("perturbed_profile.json")
DRIFT = repgame.data_path("drift.json")
DRIFT_PROFILE = repgame.data_path("drift_profile.json")


def run(tmp_path, *argv):
    return main([*argv, "--out-dir", str(tmp_path)])


def load(tmp_path, name):
    return json.loads((tmp_path / name).read_text())


def test_validate_benchmark(tmp_path, capsys):
    assert run(tmp_path, "validate", BENCH) == 0
    rep = load(tmp_path, "validation.json")
    assert rep["ok"] and rep["errors"] == []
    assert all("not unique" in w for w in rep["warnings"])
    assert rep["manifest"] == "validate.manifest.json"
    manifest = load(tmp_path, "validate.manifest.json")
    assert manifest["run_id"] == rep["run_id"] and manifest["scenario"] == BENCH
    assert set(manifest) >= {"command", "parameters", "seed", "version", "outputs", "wall_clock_seconds"}


def test_validate_rejects_empty_and_negative(tmp_path, capsys):
    empty = tmp_path / "empty.json"
    empty.write_text("")
    assert run(tmp_path, "validate", str(empty)) == 2
    assert "line 1" in capsys.readouterr().err
    d = scenario_to_dict(benchmark_scenario())
    d["prior"]["theta1|strategic"] = "-1/10"
    bad = tmp_path / "neg.json"
    bad.write_text(json.dumps(d))
    assert run(tmp_path, "validate", str(bad)) == 1
    assert any(e.startswith("normalization") for e in load(tmp_path, "validation.json")["errors"])


def test_missing_file_and_bad_command_are_usage_errors(tmp_path, capsys):
    assert run(tmp_path, "validate", str(tmp_path / "nope.json")) == 2
    with pytest.raises(SystemExit) as exc:
        main(["bogus"])
    assert exc.value.code == 2


def test_regions_benchmark_boundary(tmp_path, capsys):
    assert run(tmp_path, "regions", "--scenario", BENCH, "--alpha", "H", "--theta-star", "theta_star",
               "--lambda", "0,3,3", "--grid-step", "0.25", "--grid-max", "2") == 0
    out = load(tmp_path, "regions.json")
    assert out["summary"]["psi_star"] == {"theta_star": "inf", "theta1": 3.0, "theta2": 3.0}
    assert out["summary"]["chi"] == pytest.approx(2.0)
    assert out["summary"]["lambda_boundary_distance"] == 0.0
    rows = (tmp_path / "regions.csv").read_text().strip().splitlines()
    assert rows[0] == "lambda_theta1,lambda_theta2,lambda_bar,lambda,lambda_underline"
    assert len(rows) - 1 == 9 * 9 == out["grid"]["points"]


def test_simulate_expect_payoff_exit_codes(tmp_path, capsys):
    base = ["simulate", "--scenario", PERTURBED, "--profile", PERTURBED_PROFILE, "--true-type",
            "strategic:theta_star", "--horizon", "300", "--reps", "20"]
    assert run(tmp_path, *base, "--expect-payoff", "0.5") == 0
    header = (tmp_path / "traces.csv").read_text().splitlines()[0]
    assert header.split(",")[:7] == ["rep", "t", "a1", "a2", "u1", "chi", "kl"]
    assert run(tmp_path, *base, "--expect-payoff", "0.7") == 1


def test_identical_invocations_give_identical_bytes(tmp_path, capsys):
    argv = ["simulate", "--scenario", DRIFT, "--profile", DRIFT_PROFILE, "--true-type", "commitment:alpha1star",
            "--alpha", "alpha1star", "--horizon", "50", "--reps", "30", "--seed", "7"]
    names = ("traces.csv", "simulation.json")
    assert run(tmp_path, *argv) == 0
    first = {n: (tmp_path / n).read_bytes() for n in names}
    assert run(tmp_path, *argv, "--threads", "1") == 0
    assert {n: (tmp_path / n).read_bytes() for n in names} == first
    assert run(tmp_path, *argv[:-1], "8") == 0
    assert (tmp_path / "traces.csv").read_bytes() != first["traces.csv"]


def test_deviation_plan(tmp_path, capsys):
    assert run(tmp_path, "deviation", "--scenario", DRIFT, "--profile", DRIFT_PROFILE, "--alpha", "alpha1star",
               "--epsilon", "0.1", "--horizon", "6", "--verify-reps", "200") == 0
    out = load(tmp_path, "plan.json")
    assert out["chi"] == pytest.approx(0.5)
    assert out["conditioned_law"]["passed"] and out["verification"]["passed"]
    node = out["plan"]["nodes"][0]
    assert node["t"] == 0 and node["allowed"] == ["H", "I"]


def test_equilibrium_build_and_check(tmp_path, capsys):
    assert run(tmp_path, "equilibrium", "build", "--construction", "example") == 0
    assert run(tmp_path, "equilibrium", "check", "--eq", str(tmp_path / "equilibrium.json"),
               "--delta", "0.95", "--tol", "1e-6") == 0
    assert load(tmp_path, "incentives.json")["incentives"]["passed"]


def test_low_payoff_build_inside_region_fails(tmp_path, capsys):
    assert run(tmp_path, "equilibrium", "build", "--scenario", BENCH, "--theta-star", "theta_star",
               "--a1-star", "H") == 1
    assert run(tmp_path, "equilibrium", "build") == 2


def test_low_payoff_build_on_construction_scenario(tmp_path, capsys):
    assert run(tmp_path, "equilibrium", "build", "--scenario", repgame.data_path("construction.json"),
               "--theta-star", "theta_star", "--a1-star", "H", "--eta", "0.4") == 0
    params = load(tmp_path, "equilibrium.json")["params"]
    assert (params["k_bar"], params["k_star"]) == (4, 8)


def test_classify(tmp_path, capsys):
    assert run(tmp_path, "classify", "--scenario", PERTURBED, "--alpha", "alpha1star") == 0
    assert load(tmp_path, "classification.json")["classification"]["statement"] == "statement-4"


def test_report_pipeline(tmp_path, capsys):
    run(tmp_path, "simulate", "--scenario", PERTURBED, "--profile", PERTURBED_PROFILE, "--true-type",
        "strategic:theta_star", "--horizon", "300", "--reps", "10", "--expect-payoff", "0.5", "--no-traces")
    run(tmp_path, "classify", "--scenario", PERTURBED, "--alpha", "alpha1star")
    assert run(tmp_path, "report", str(tmp_path / "simulation.json"), str(tmp_path / "classification.json")) == 0
    rep = load(tmp_path, "report.json")
    claim = next(c for c in rep["claims"] if c["claim"] == "discounted payoff = 0.5")
    assert claim["passed"] and claim["value"] == pytest.approx(0.5, abs=1e-9) and "tolerance" in claim
    assert rep["all_passed"]


def test_report_usage_errors(tmp_path, capsys):
    assert run(tmp_path, "report") == 2
    run(tmp_path, "classify", "--scenario", PERTURBED, "--alpha", "alpha1star")
    run(tmp_path, "validate", BENCH)
    assert run(tmp_path, "report", str(tmp_path / "classification.json"), str(tmp_path / "validation.json")) == 2


def test_console_script_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "repgame.cli", "validate", BENCH, "--out-dir", str(tmp_path)],
                         capture_output=True, text=True)
    assert out.returncode == 0
    assert json.loads(out.stdout)["ok"]
    assert read_json(tmp_path / "validation.json")["scenario"] == BENCH


def test_global_flags_before_the_command(tmp_path, capsys):
    assert main(["--out-dir", str(tmp_path), "--seed", "5", "validate", BENCH]) == 0
    assert load(tmp_path, "validate.manifest.json")["parameters"]["seed"] == 5
