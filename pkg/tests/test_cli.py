import csv
import json
import os

import pytest

from wavectl import cli


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_key_value_config_parsing():
    cfg = cli.parse_config_text("n = 16  # grid\nregion = arc:2.0\ndepth = inf\nns = [8, 16]\n")
    assert cfg == {"n": 16, "region": "arc:2.0", "depth": float("inf"), "ns": [8, 16]}
    assert cli.parse_config_text('{"n": 8}') == {"n": 8}
    with pytest.raises(cli.ConfigError):
        cli.parse_config_text("n 16")
    with pytest.raises(cli.ConfigError):
        cli.parse_config_text("{bad json")


@pytest.mark.parametrize("raw", [{"n": 7}, {"n": 4}, {"bogus": 1}, {"region": "arc:9"},
                                 {"region": "hexagon"}, {"steps": 0}, {"T": -1.0},
                                 {"region": "ball:1,1,0.5"}])
def test_validation_rejects(raw):
    with pytest.raises(cli.ConfigError):
        cli.validate("control-linear", raw)


def test_nonlinear_amplitude_guard():
    with pytest.raises(cli.ConfigError):
        cli.validate("control-nonlinear", {"amplitude": 1e-2})


def test_malformed_config_exits_2_without_files(tmp_path, capsys):
    cfg = write(tmp_path, "bad.cfg", "n = 7\n")
    out = tmp_path / "run"
    assert cli.main(["control-linear", "--config", cfg, "--out", str(out)]) == 2
    assert not out.exists()
    assert "config error" in capsys.readouterr().err


def test_gcc_check_torus(tmp_path):
    cfg = write(tmp_path, "g.cfg", "region = torus\n")
    out = str(tmp_path / "run")
    assert cli.main(["gcc-check", "--config", cfg, "--out", out]) == 0
    rec = json.load(open(os.path.join(out, "record.json")))
    assert rec["metrics"]["L"] == 0.0 and rec["metrics"]["verdict"] == "GCC holds"
    assert rec["status"] == "ok" and len(rec["input_hash"]) == 64


def test_quasimode_csv_and_determinism(tmp_path):
    cfg = write(tmp_path, "q.cfg", "n = 64\nns = [2, 4, 8]\n")
    outs = [str(tmp_path / f"run{i}") for i in range(2)]
    for o in outs:
        assert cli.main(["quasimode", "--config", cfg, "--out", o]) == 0
    with open(os.path.join(outs[0], "quasimode.csv")) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["n", "r_n", "obs_n"] and len(rows) == 4
    assert os.path.isfile(os.path.join(outs[0], "quasimode.png"))
    recs = [json.load(open(os.path.join(o, "record.json"))) for o in outs]
    assert recs[0]["metrics"] == recs[1]["metrics"]
    assert recs[0]["artifacts"]["quasimode.csv"] == recs[1]["artifacts"]["quasimode.csv"]


def test_verify_detects_tampering(tmp_path, capsys):
    cfg = write(tmp_path, "c.json", '{"n": 16, "steps": 64}')
    out = str(tmp_path / "run")
    assert cli.main(["control-linear", "--config", cfg, "--out", out, "--seed", "3"]) == 0
    assert cli.main(["verify", out]) == 0
    with open(os.path.join(out, "trajectory.csv"), "a") as fh:
        fh.write("9,9,9\n")
    capsys.readouterr()
    assert cli.main(["verify", out]) == 1
    assert "trajectory.csv hash mismatch" in capsys.readouterr().out


def test_verify_missing_record(tmp_path, capsys):
    assert cli.main(["verify", str(tmp_path)]) == 2
    assert "no record.json" in capsys.readouterr().err


def test_seed_changes_hash():
    a = cli.config_hash("simulate", cli.validate("simulate", {}, 0))
    b = cli.config_hash("simulate", cli.validate("simulate", {}, 1))
    assert a != b


def test_stage_failure_exit_1(tmp_path, capsys):
    # T = 1 with 2 steps trips the resolution guard inside the operator stage
    cfg = write(tmp_path, "c.cfg", "n = 16\nsteps = 2\n")
    out = str(tmp_path / "run")
    assert cli.main(["control-linear", "--config", cfg, "--out", out]) == 1
    rec = json.load(open(os.path.join(out, "record.json")))
    assert rec["status"] == "failed" and rec["error"].startswith("[operator]")
    assert "[operator]" in capsys.readouterr().err
