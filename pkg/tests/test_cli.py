import json
import logging
import os
import subprocess
import sys

import pytest

from hybridhj.cli import main
from hybridhj.scenarios import billiard


@pytest.fixture(autouse=True)
def _reset_log_level():
    yield
    logging.getLogger("hybridhj").setLevel(logging.NOTSET)


def run(argv, tmp_path, *extra):
    return main([*argv, "--out", str(tmp_path), *extra])


def read(tmp_path, name):
    return json.loads((tmp_path / name).read_text())


def test_simulate_billiard_horizon_10(tmp_path, capsys):
    code = run(["simulate", "--scenario", "billiard", "--horizon", "10"], tmp_path)
    assert code == 0
    expected = len(billiard.oracle(billiard.Q0, billiard.LAMBDA0, 10.0).events)
    assert expected == 5
    out = capsys.readouterr().out
    assert f"{expected} impacts" in out and "hybrid constant angular_momentum" in out
    assert len(read(tmp_path, "events.json")["events"]) == expected
    lines = (tmp_path / "trajectory.csv").read_text().splitlines()
    assert lines[0] == "t,q0,q1,p0,p1,segment_index" and lines[-1].startswith("10,")


def test_unknown_scenario_exits_2(tmp_path, capsys):
    assert run(["simulate", "--scenario", "pendulum"], tmp_path) == 2
    err = capsys.readouterr().err
    assert "available: billiard, bouncing_ball" in err


def test_usage_errors_exit_2(tmp_path, capsys):
    assert main(["frobnicate"]) == 2
    assert main(["simulate", "--h", "abc"]) == 2
    assert main(["simulate"]) == 2  # no scenario
    assert run(["simulate", "--scenario", "billiard", "--set", "run.h=-1"], tmp_path) == 2
    assert run(["simulate", "--scenario", "rolling_disk", "--set", "alpha=0.5"], tmp_path) == 2
    assert run(["simulate", "--scenario", "rolling_disk", "--set", "mass=2"], tmp_path) == 2
    assert main(["simulate", "--scenario", "billiard", "--jobs", "0"]) == 2


def test_duplicate_flag_last_wins_with_warning(tmp_path, caplog):
    with caplog.at_level(logging.WARNING):
        code = run(["simulate", "--scenario", "billiard", "--horizon", "1", "--h", "1e-2", "--h", "1e-3"], tmp_path)
    assert code == 0
    assert any("--h given 2 times; using the last value" in r.message for r in caplog.records)
    lines = (tmp_path / "trajectory.csv").read_text().splitlines()
    assert len(lines) == 1 + 1001  # no impact before t = 1, so one segment at h = 1e-3


def test_log_level_from_environment(tmp_path, caplog, monkeypatch):
    monkeypatch.setenv("HYBRIDHJ_LOG", "error")
    with caplog.at_level(logging.DEBUG):
        run(["simulate", "--scenario", "billiard", "--horizon", "1", "--h", "1e-2", "--h", "1e-3"], tmp_path)
    assert not any("given 2 times" in r.message for r in caplog.records)
    monkeypatch.setenv("HYBRIDHJ_LOG", "debug")
    with caplog.at_level(logging.DEBUG):
        run(["simulate", "--scenario", "bouncing_ball", "--horizon", "10"], tmp_path)
    assert any("stopping at" in r.message for r in caplog.records)


def test_verify_billiard_passes(tmp_path):
    assert run(["verify-hj", "--scenario", "billiard"], tmp_path) == 0
    rep = read(tmp_path, "residuals.json")
    assert rep["passed"] and rep["complete_solution"]["passed"]


def test_verify_rigid_body_undefined_transfer(tmp_path):
    code = run(["verify-hj", "--scenario", "rigid_body", "--set", "mu3=2", "--set", "eps=2"], tmp_path)
    assert code == 1
    rep = read(tmp_path, "residuals.json")
    assert rep["delta_relatedness"]["error"] == "TransferUndefined"


def test_verify_forced_disk_wrong_slope(tmp_path):
    code = run(["verify-hj", "--scenario", "forced_disk", "--set", "slope_perturbation=0.05"], tmp_path)
    assert code == 1
    rep = read(tmp_path, "residuals.json")
    assert max(r["max_residual"] for r in rep["residuals"]) > 1e-3


def test_compare_nh_particle(tmp_path):
    assert run(["compare", "--scenario", "nh_particle"], tmp_path) == 0
    rep = read(tmp_path, "comparison.json")
    assert rep["sup_discrepancy"] <= 1e-6 and rep["passed"]


def test_compare_billiard_refinement(tmp_path):
    sups = []
    for h in ("2e-3", "1e-3"):
        out = tmp_path / h
        assert main(["compare", "--scenario", "billiard", "--h", h, "--out", str(out)]) == 0
        sups.append(read(out, "comparison.json")["sup_discrepancy"])
    # straight-line flight is integrated exactly; both runs report 0, which satisfies the bound trivially
    assert sups[1] <= sups[0] / 8


def test_horizon_zero(tmp_path):
    assert run(["compare", "--scenario", "billiard", "--horizon", "0"], tmp_path) == 0
    rep = read(tmp_path, "comparison.json")
    assert rep["sup_discrepancy"] == 0.0 and rep["direct_impacts"] == 0
    assert run(["simulate", "--scenario", "billiard", "--horizon", "0"], tmp_path) == 0
    assert read(tmp_path, "events.json")["events"] == []


def test_reconstruct_writes_transfer_log(tmp_path):
    code = run(["reconstruct", "--scenario", "billiard", "--set", "family.lambda0=[0, 1]",
                "--set", "run.q0=[0, -0.5]", "--horizon", "4"], tmp_path)
    assert code == 0
    log_ = read(tmp_path, "transfer_log.json")
    assert [round(t["t"], 9) for t in log_["transfers"]] == [1.5, 3.5]
    assert (tmp_path / "trajectory.csv").exists() and (tmp_path / "events.json").exists()


def test_runtime_error_exits_3(tmp_path, capsys):
    assert run(["simulate", "--scenario", "rigid_body"], tmp_path) == 3
    assert "ResetOffConstraint" in capsys.readouterr().err


def test_config_file_and_flag_override(tmp_path):
    cfg = tmp_path / "run.toml"
    cfg.write_text('[scenario]\nname = "rolling_disk"\ne = 1.0\n\n[run]\nhorizon = 2.0\n')
    assert main(["simulate", "--config", str(cfg), "--horizon", "1", "--out", str(tmp_path / "o")]) == 0
    lines = (tmp_path / "o" / "trajectory.csv").read_text().splitlines()
    assert lines[-1].startswith("1,")
    cfg.write_text("[run]\nstep = 1\n")
    assert main(["simulate", "--config", str(cfg)]) == 2


def test_output_is_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert main(["simulate", "--scenario", "forced_disk", "--horizon", "3", "--out", str(out)]) == 0
    for name in ("trajectory.csv", "events.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_batch_mode_with_jobs(tmp_path):
    paths = []
    for name in ("billiard", "nh_particle", "rolling_disk"):
        p = tmp_path / f"{name}.toml"
        p.write_text(f'[scenario]\nname = "{name}"\n\n[run]\nhorizon = 2.0\n')
        paths.append(str(p))
    bad = tmp_path / "broken.toml"
    bad.write_text('[scenario]\nname = "rigid_body"\n')
    out = tmp_path / "batch"
    code = main(["simulate", "--config", *paths, str(bad), "--jobs", "2", "--out", str(out)])
    assert code == 3
    for name in ("billiard", "nh_particle", "rolling_disk"):
        assert (out / name / "trajectory.csv").exists()
    assert main(["simulate", "--config", *paths[:2], "--jobs", "2", "--out", str(out)]) == 0


def test_list_scenarios(capsys):
    assert main(["list-scenarios"]) == 0
    assert capsys.readouterr().out.count("\n") == 6
    assert main(["list-scenarios", "--json"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert [d["name"] for d in data][:2] == ["billiard", "bouncing_ball"]


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "hybridhj", "list-scenarios"], capture_output=True, text=True,
                         env={**os.environ, "HYBRIDHJ_LOG": "warn"}, check=False)
    assert res.returncode == 0 and "nh_particle" in res.stdout
