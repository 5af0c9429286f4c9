import csv
import io
import json

import pytest

from singulib.cli import (EXIT_ERROR, EXIT_HYPOTHESIS, EXIT_OK, ConfigError, main,
                          resolve_config, validate_config)


def write(tmp_path, name, doc):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


POWER = {"family": "power_exp", "q": 2, "r": 1}


def test_classify_stdout(tmp_path, capsys):
    code = main(["classify", "--config", write(tmp_path, "c.json", POWER)])
    doc = json.loads(capsys.readouterr().out)
    assert code == EXIT_OK
    assert doc["status"] == "ok" and doc["command"] == "classify"
    assert doc["classification"]["hypothesis"]["verdict"] == "pass"
    assert doc["config"]["run"]["rho0"] == 50


def test_classify_deterministic(tmp_path, capsys):
    path = write(tmp_path, "c.json", POWER)
    main(["classify", "--config", path])
    first = capsys.readouterr().out
    main(["classify", "--config", path])
    assert capsys.readouterr().out == first


def test_schema_errors_listed_with_paths(tmp_path, capsys):
    bad = {"nonlinearity": {"family": "power_exp", "q": 2},
           "run": {"bumps": ["nope"], "tol": -1}}
    code = main(["classify", "--config", write(tmp_path, "bad.json", bad)])
    err = capsys.readouterr().err
    assert code == EXIT_ERROR
    assert "config.nonlinearity" in err and "config.run.bumps[0]" in err and "config.run.tol" in err


def test_validate_and_resolve():
    cfg = resolve_config(POWER, {"rho0": 40.0, "tol": None})
    assert cfg["run"]["rho0"] == 40.0 and cfg["run"]["tol"] == 1e-8
    validate_config(cfg)
    with pytest.raises(ConfigError, match="rho_max"):
        resolve_config({"nonlinearity": POWER, "run": {"rho0": 3000}})


def test_missing_file(capsys):
    assert main(["classify", "--config", "/nonexistent/x.json"]) == EXIT_ERROR


def test_borderline_exponential_is_error(tmp_path, capsys):
    code = main(["classify", "--config", write(tmp_path, "e.json",
                                               {"family": "custom", "a": "s"})])
    assert code == EXIT_ERROR
    assert "sub-exponential borderline" in capsys.readouterr().err


def test_demo_log_exp_fails_hypothesis(capsys):
    code = main(["demo", "example3.3", "--q", "2", "--r", "1"])
    doc = json.loads(capsys.readouterr().out)
    assert code == EXIT_HYPOTHESIS
    assert doc["status"] == "hypothesis_fail"
    assert doc["classification"]["hypothesis"]["verdict"] == "fail"


def test_demo_r_rejected_for_iter_exp(capsys):
    assert main(["demo", "example3.4", "--r", "1"]) == EXIT_ERROR


def test_demo_power_exp(capsys):
    code = main(["demo", "example3.1", "--q", "2", "--r", "1"])
    doc = json.loads(capsys.readouterr().out)
    assert code == EXIT_OK
    fit = doc["verification"]["expansion_fits"][0]
    assert fit["fitted_order"] == pytest.approx(1.5, abs=0.15) and fit["passed"]
    assert doc["extension"]["R"] > doc["extension"]["r0"]


def test_extend_writes_csv(tmp_path, capsys):
    out = tmp_path / "run"
    code = main(["extend", "--config", write(tmp_path, "c.json", POWER), "--out", str(out)])
    summary = json.loads(capsys.readouterr().out)
    assert code == EXIT_OK
    assert summary["files"] == ["profile.csv", "report.json"]
    raw = (out / "profile.csv").read_bytes()
    assert b"\r\n" in raw and b"\r\r\n" not in raw
    rows = list(csv.reader(io.StringIO(raw.decode())))
    assert rows[0] == ["r", "rho", "u", "u_prime", "phi", "eta", "residual", "segment"]
    report = json.loads((out / "report.json").read_text())
    assert report["extension"]["R"] == summary["R"]


def test_construct_json_format(tmp_path, capsys):
    out = tmp_path / "run"
    code = main(["construct", "--config", write(tmp_path, "c.json", POWER), "--out", str(out),
                 "--format", "json"])
    assert code == EXIT_OK
    prof = json.loads((out / "inner_profile.json").read_text())
    assert set(prof) >= {"rho", "u", "u_prime", "segment"}
    report = json.loads((out / "report.json").read_text())
    assert report["correction"]["converged"]


def test_sweep_needs_out(tmp_path, capsys):
    a = write(tmp_path, "a.json", POWER)
    b = write(tmp_path, "b.json", {"family": "iter_exp", "q": 1})
    assert main(["classify", "--config", a, "--config", b]) == EXIT_ERROR


def test_sweep_parallel(tmp_path, capsys):
    a = write(tmp_path, "a.json", POWER)
    b = write(tmp_path, "b.json", {"family": "iter_exp", "q": 2})
    out = tmp_path / "sweep"
    code = main(["classify", "--config", a, "--config", b, "--out", str(out), "--threads", "2"])
    assert code == EXIT_HYPOTHESIS  # iter_exp(2) fails the decay hypothesis
    ra = json.loads((out / "a" / "report.json").read_text())
    rb = json.loads((out / "b" / "report.json").read_text())
    assert ra["status"] == "ok" and rb["status"] == "hypothesis_fail"
