import json

import pytest

from catbench import io as cio
from catbench.cli import main

from conftest import make_config


@pytest.fixture
def scenario(tmp_path):
    path = tmp_path / "s.json"
    path.write_text(cio.dumps_pretty(make_config(n_users=40, duration_weeks=2).to_dict()))
    return path


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_generate_evaluate_fit_optimize(tmp_path, scenario, capsys):
    log, lat = tmp_path / "log.ndjson", tmp_path / "lat.txt"
    assert run(capsys, "generate", "--scenario", scenario, "--out", log, "--latent-out", lat)[0] == 0
    assert (tmp_path / "log.ndjson.manifest.json").is_file()
    code, out, _ = run(capsys, "evaluate", "--log", log, "--goals", "builtin:engagement", "--out", tmp_path / "e.json")
    assert code == 0
    keys = [line.split("\t")[0] for line in out.splitlines()]
    assert keys[:5] == ["gai", "baseline_score", "integration", "gar", "f1_star"]
    doc = json.loads((tmp_path / "e.json").read_text())
    assert 0.0 <= doc["gai"] <= 1.0
    assert run(capsys, "fit-pattern", "--log", log, "--latent", lat, "--out", tmp_path / "pat.json")[0] == 0
    code, out, _ = run(capsys, "optimize", "--log", log, "--latent", lat, "--out", tmp_path / "pol.json")
    assert code == 0 and "converged" in out
    code, out, _ = run(capsys, "evaluate", "--log", log, "--goals", "builtin:podcast", "--model", tmp_path / "pat.json")
    assert code == 0
    assert run(capsys, "generate", "--scenario", scenario, "--policy", tmp_path / "pol.json",
               "--out", tmp_path / "log2.ndjson")[0] == 0


def test_default_out_dir_from_env(tmp_path, scenario, capsys, monkeypatch):
    monkeypatch.setenv("CATBENCH_OUT", str(tmp_path / "outdir"))
    assert run(capsys, "generate", "--scenario", scenario)[0] == 0
    assert (tmp_path / "outdir" / "log.ndjson").is_file()


def test_generate_replay_is_byte_identical(tmp_path, scenario, capsys):
    log = tmp_path / "log.ndjson"
    assert run(capsys, "generate", "--scenario", scenario, "--out", log)[0] == 0
    code, out, _ = run(capsys, "replay", "--manifest", f"{log}.manifest.json", "--out-root", tmp_path / "re")
    assert code == 0 and out.splitlines()[-1].startswith("match")
    assert (tmp_path / "re" / "log.ndjson").read_bytes() == log.read_bytes()
    # a manifest whose recorded hash is wrong is reported
    m = json.loads((tmp_path / "log.ndjson.manifest.json").read_text())
    m["outputs"][0]["sha256"] = "0" * 64
    (tmp_path / "bad.json").write_text(json.dumps(m))
    code, out, _ = run(capsys, "replay", "--manifest", tmp_path / "bad.json", "--out-root", tmp_path / "re2")
    assert code == 1 and "DIFFER" in out


def test_rct_report_and_replay(tmp_path, scenario, capsys):
    out = tmp_path / "rct"
    code, text, _ = run(capsys, "rct", "--scenarios", scenario, "--out", out, "--resamples", 50)
    assert code == 0 and "Effect Size (d)" in text
    names = {p.name for p in out.iterdir()}
    assert {"report.json", "tables.txt", "series.csv", "effects.csv", "manifest.json", "figures"} <= names
    assert run(capsys, "report", "--report", out / "report.json", "--out", tmp_path / "rep", "--no-figures")[0] == 0
    assert (tmp_path / "rep" / "tables.txt").read_text() == (out / "tables.txt").read_text()
    code, text, _ = run(capsys, "replay", "--manifest", out / "manifest.json", "--out-root", tmp_path / "again")
    assert code == 0 and "DIFFER" not in text


@pytest.mark.parametrize("argv", [
    ["generate", "--scenario", "s.json", "--users", "0"],
    ["evaluate", "--log", "x", "--goals", "builtin:engagement", "--lambdas", "1,2"],
    ["optimize", "--log", "x", "--gamma", "1.5"],
    ["rct", "--out", "x"],
    ["bogus"],
    [],
])
def test_usage_errors_exit_2(argv, capsys):
    assert main(argv) == 2
    assert "usage" in capsys.readouterr().err


def test_data_errors_exit_1(tmp_path, capsys):
    code, _, err = run(capsys, "evaluate", "--log", tmp_path / "missing.ndjson", "--goals", "builtin:engagement")
    assert code == 1 and "missing.ndjson" in err
    bad = tmp_path / "bad.ndjson"
    bad.write_text('{"timestamp": 0}\n')
    code, _, err = run(capsys, "evaluate", "--log", bad, "--goals", "builtin:engagement")
    assert code == 1 and "bad.ndjson:1" in err
    broken = tmp_path / "broken.json"
    broken.write_text('{\n  "scenario_id": "x",\n  oops\n}')
    code, _, err = run(capsys, "generate", "--scenario", broken)
    assert code == 1 and "broken.json:3" in err
    invalid = tmp_path / "invalid.json"
    invalid.write_text(cio.dumps(make_config(n_users=-1).to_dict()))
    code, _, err = run(capsys, "rct", "--scenarios", invalid)
    assert code == 1 and "nonpositive-population" in err


def test_lenient_evaluate(tmp_path, scenario, capsys):
    log = tmp_path / "log.ndjson"
    run(capsys, "generate", "--scenario", scenario, "--out", log)
    with open(log, "a") as fh:
        fh.write("{garbage\n")
    assert run(capsys, "evaluate", "--log", log, "--goals", "builtin:engagement")[0] == 1
    code, _, err = run(capsys, "evaluate", "--log", log, "--goals", "builtin:engagement", "--lenient")
    assert code == 0 and "warning" in err


def test_version(capsys):
    assert main(["--version"]) == 0
