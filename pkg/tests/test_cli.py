import json

import pytest

from distopt import acceptance
from distopt.cli import main
from distopt.core import ScenarioError
from distopt.scenarios import dump_scenario, freeze


@pytest.fixture(scope="module")
def small_file(gas_lift, tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "small.json"
    dump_scenario(freeze(gas_lift, 0.0, horizon=30.0), path)
    return path


def _run(capsys, *argv):
    rc = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return rc, out, err


def test_simulate_writes_trace_and_metrics(capsys, small_file, tmp_path):
    out_csv = tmp_path / "dual.csv"
    rc, out, _ = _run(capsys, "simulate", "--scenario", small_file, "--arch", "dual", "--out", out_csv)
    assert rc == 0
    report = json.loads(out)
    assert report["samples"] == 301
    assert report["metrics"]["violation_integral"][0] >= 0.0
    assert out_csv.read_text().startswith("time,u[0][0]")


def test_compare_against_self(capsys, small_file, tmp_path):
    a = tmp_path / "a.csv"
    _run(capsys, "simulate", "--scenario", small_file, "--arch", "primal", "--out", a)
    rc, out, _ = _run(capsys, "compare", "--traces", a, "--baseline", a)
    assert rc == 0
    assert json.loads(out)["traces"][str(a)]["cumulative_pdiff"] == 0.0


def test_compare_misaligned_grids(capsys, small_file, tmp_path):
    a = tmp_path / "a.csv"
    _run(capsys, "simulate", "--scenario", small_file, "--arch", "naive", "--out", a)
    lines = a.read_text().splitlines()
    b = tmp_path / "b.csv"
    b.write_text("\n".join(lines[:-5]) + "\n")
    rc, _, err = _run(capsys, "compare", "--traces", a, "--baseline", b)
    assert rc == 2
    assert "different time grids" in err


def test_missing_scenario_exit_2(capsys, tmp_path):
    rc, _, err = _run(capsys, "simulate", "--scenario", tmp_path / "none.json", "--arch", "dual",
                      "--out", tmp_path / "x.csv")
    assert rc == 2
    assert "none.json" in err


def test_bad_usage_exit_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["simulate", "--scenario", "gas_lift", "--arch", "bogus", "--out", "x.csv"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2


def test_invalid_backoff_exit_2(capsys, small_file, tmp_path):
    rc, _, err = _run(capsys, "simulate", "--scenario", small_file, "--arch", "dual",
                      "--out", tmp_path / "x.csv", "--backoff", "1.5")
    assert rc == 2
    assert "backoff" in err


def test_verify_single_criterion(capsys):
    rc, out, _ = _run(capsys, "verify", "--criteria", "8")
    assert rc == 0
    assert "criterion  8 PASS" in out
    assert "1/1 criteria passed" in out


def test_corrupted_scenario_is_a_named_failure(capsys, monkeypatch):
    def broken(name):
        raise ScenarioError(f"{name}: corrupted")

    acceptance.clear_cache()
    monkeypatch.setattr(acceptance, "_scenario", broken)
    try:
        rc, out, _ = _run(capsys, "verify", "--criteria", "9")
    finally:
        monkeypatch.undo()
        acceptance.clear_cache()
    assert rc == 1
    assert "criterion  9 FAIL" in out
    assert "ScenarioError" in out and "corrupted" in out
