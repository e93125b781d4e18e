import json

import numpy as np
import pytest

from cliffordch.cli import main


def _run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_profile_reports_constants(capsys):
    code, out, _ = _run(capsys, "profile")
    assert code == 0
    d = json.loads(out)
    assert d["passed"] is True
    assert d["results"]["c_star"] == pytest.approx(2 * np.sqrt(2) / 3, abs=1e-8)
    assert d["timing"] is None


def test_willmore_checks_pass(capsys):
    code, out, _ = _run(capsys, "willmore")
    d = json.loads(out)
    assert code == 0 and d["passed"]
    assert d["results"]["residual_sup"] < 1e-6


def test_unknown_command_is_usage_error(capsys):
    code, out, err = _run(capsys, "bogus")
    assert code == 2
    assert out == ""
    e = json.loads(err)["error"]
    assert e["type"] == "usage" and e["exit_code"] == 2


def test_unknown_config_key(capsys, tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text("eps = 0.05\nspeed = 3\n")
    code, _, err = _run(capsys, "profile", "--config", str(cfg))
    assert code == 2
    assert "speed" in json.loads(err)["error"]["message"]


def test_flag_overrides_config(capsys, tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text("eps = 0.07\nmodes = 16\n")
    code, out, _ = _run(capsys, "geometry", "--config", str(cfg), "--eps", "0.05")
    d = json.loads(out)
    assert d["config"]["eps"] == 0.05
    assert d["config"]["modes"] == 16


def test_artifact_is_reproducible(capsys, tmp_path):
    path = tmp_path / "a.json"
    assert _run(capsys, "geometry", "--out", str(path))[0] == 0
    first = path.read_bytes()
    assert _run(capsys, "geometry", "--out", str(path))[0] == 0
    assert path.read_bytes() == first


def test_timing_is_opt_in(capsys):
    _, out, _ = _run(capsys, "profile", "--timing")
    assert json.loads(out)["timing"]["wall_seconds"] >= 0


def test_out_of_range_eps_is_numerical_error(capsys):
    code, _, err = _run(capsys, "solve", "--eps", "0.5")
    assert code == 3
    assert json.loads(err)["error"]["type"] == "numerical"


def test_volume_command(capsys):
    code, out, _ = _run(capsys, "volume", "--eps", "0.05")
    d = json.loads(out)["results"]
    assert code == 0
    assert d["volume_phi"] == pytest.approx(d["volume_phi_quadrature"], rel=1e-8)
    assert d["profile_integral"] == pytest.approx(np.pi**2 / 12, rel=1e-10)


def test_all_subset_prints_table(capsys):
    code, out, err = _run(capsys, "all", "--criteria", "1,2")
    d = json.loads(out)
    assert code == 0 and d["passed"]
    assert err.count("PASS") == 2


def test_solve_writes_trace_and_csv(capsys, tmp_path):
    tr, csv = tmp_path / "t.jsonl", tmp_path / "phi.csv"
    code, out, _ = _run(capsys, "solve", "--eps", "0.1", "--modes", "32",
                        "--trace", str(tr), "--csv", str(csv))
    d = json.loads(out)
    assert code == 0 and d["results"]["state"]["converged"]
    recs = [json.loads(line) for line in tr.read_text().splitlines()]
    assert recs and recs[-1]["update_norm"] <= 1e-8
    rows = csv.read_text().splitlines()
    assert len(rows) == 33
