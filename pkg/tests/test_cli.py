import csv
import json
import math
import subprocess
import sys
from pathlib import Path

import pytest

from randpress import cli
from randpress.verification import Check, SuiteReport

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def run(args, tmp_path):
    return cli.main(list(args) + ["--out", str(tmp_path), "--quiet"])


def test_solve_clock2(tmp_path):
    assert run(["solve", "--config", str(CONFIGS / "clock2.json")], tmp_path) == 0
    rec = json.loads((tmp_path / "solve.json").read_text())
    assert rec["exit_status"] == 0 and rec["command"] == "solve"
    assert abs(rec["result"]["root"]["beta_star"] - math.log(2) / 2) <= 1e-6
    assert abs(rec["result"]["root"]["residual"]) <= 1e-6
    assert rec["config_digest"] == cli.config_digest(rec["config"])


def test_pressure_csv(tmp_path):
    assert run(["pressure", "--config", str(CONFIGS / "full2_onestep.json")], tmp_path) == 0
    rows = list(csv.reader((tmp_path / "pressure.csv").open()))
    assert rows[0] == ["n_or_T", "beta", "sample", "raw_value", "averaged_value"]
    assert [r[0] for r in rows[1:]] == ["4", "8", "12", "16", "20"]
    assert rows[1][1] == "" and rows[1][2] == "0"
    assert rows[1][3] == "%.12g" % math.log(math.exp(0.3) + math.exp(-0.5))


def test_curve_csv_has_beta(tmp_path):
    args = ["curve", "--config", str(CONFIGS / "clock2.json"), "--set", "command.beta_grid=[0.0,0.2,0.4]"]
    assert run(args, tmp_path) == 0
    rows = list(csv.reader((tmp_path / "curve.csv").open()))[1:]
    assert [r[1] for r in rows] == ["0", "0.2", "0.4"]
    assert float(rows[2][4]) == pytest.approx(math.log(2) - 0.8)


def test_empty_schedule_exit_1(tmp_path, capsys):
    args = ["pressure", "--config", str(CONFIGS / "full2_zero.json"), "--set", "estimator.n_schedule=[]"]
    assert run(args, tmp_path) == 1
    assert "n_schedule must be nonempty" in capsys.readouterr().err
    assert not (tmp_path / "pressure.json").exists()


def test_malformed_json_exit_1(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"version": 1,\n "system": }')
    assert run(["pressure", "--config", str(bad)], tmp_path) == 1
    assert "parse error" in capsys.readouterr().err


def test_estimation_failure_exit_2(tmp_path):
    args = ["induced", "--config", str(CONFIGS / "clock2.json"), "--set", "estimator.T_schedule=[0.5,1.0]"]
    assert run(args, tmp_path) == 2


def test_verify_consistency(tmp_path):
    assert run(["verify", "consistency"], tmp_path) == 0
    rec = json.loads((tmp_path / "verify-consistency.json").read_text())
    assert rec["result"]["report"]["passed"] is True


def test_verify_failure_exit_3(tmp_path, monkeypatch):
    failing = SuiteReport("consistency", [], [Check("x", "i", 0.0, 1.0, 0.0)], [0])
    monkeypatch.setattr(cli, "run_consistency_suite", lambda: failing)
    assert run(["verify", "consistency"], tmp_path) == 3


def test_replay_identical_and_mismatch(tmp_path):
    assert run(["pressure", "--config", str(CONFIGS / "iid_golden.json")], tmp_path) == 0
    record = tmp_path / "pressure.json"
    assert cli.main(["replay", str(record), "--quiet"]) == 0
    rec = json.loads(record.read_text())
    rec["result"]["estimate"]["point"] += 1e-15
    record.write_text(json.dumps(rec))
    assert cli.main(["replay", str(record), "--quiet"]) == 3


def test_seed_override_changes_iid_result(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    cfg = str(CONFIGS / "iid_golden.json")
    assert run(["pressure", "--config", cfg, "--seed", "7"], a) == 0
    assert run(["pressure", "--config", cfg, "--seed", "8"], b) == 0
    ra = json.loads((a / "pressure.json").read_text())
    rb = json.loads((b / "pressure.json").read_text())
    assert ra["config"]["system"]["base"]["seed"] == 7 and rb["config"]["system"]["base"]["seed"] == 8
    assert ra["result"]["estimate"]["raw"] != rb["result"]["estimate"]["raw"]


def test_threads_do_not_change_results(tmp_path):
    cfg = str(CONFIGS / "iid_golden.json")
    assert run(["pressure", "--config", cfg, "--threads", "1"], tmp_path / "a") == 0
    assert run(["pressure", "--config", cfg, "--threads", "4"], tmp_path / "b") == 0
    ra = json.loads((tmp_path / "a" / "pressure.json").read_text())["result"]
    rb = json.loads((tmp_path / "b" / "pressure.json").read_text())["result"]
    assert cli.canonical(ra) == cli.canonical(rb)


def test_env_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("RANDPRESS_OUT", str(tmp_path / "env"))
    assert cli.main(["pressure", "--config", str(CONFIGS / "full2_zero.json"), "--quiet"]) == 0
    assert (tmp_path / "env" / "pressure.json").exists()


def test_console_script(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "randpress.cli", "solve", "--config", str(CONFIGS / "clock2.json"),
                           "--out", str(tmp_path), "--quiet"], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "solve.json").exists()


@pytest.mark.parametrize("name", sorted(p.name for p in CONFIGS.glob("*.json")))
def test_shipped_configs_run(name, tmp_path):
    assert run([json.loads((CONFIGS / name).read_text())["command"]["name"], "--config", str(CONFIGS / name)],
               tmp_path) == 0
