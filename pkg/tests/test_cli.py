import csv
import io
import json
import subprocess
import sys
from importlib import resources

import jsonschema
import pytest

from hypsigma import cli


def run(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture(scope="module")
def schema():
    text = resources.files("hypsigma").joinpath("schema/output.schema.json").read_text()
    return json.loads(text)


def test_int_sweep_syntax():
    assert cli.int_sweep("3..6") == [3, 4, 5, 6]
    assert cli.int_sweep("2,5..6") == [2, 5, 6]
    assert cli.int_sweep("4") == [4]


@pytest.mark.parametrize("bad", ["6..3", "a", "1..x"])
def test_int_sweep_rejects(bad):
    import argparse

    with pytest.raises(argparse.ArgumentTypeError):
        cli.int_sweep(bad)


def test_gap_sweep_all_pass(capsys, schema):
    code, out, _ = run(["gap", "--d", "2", "--L", "3..16", "--lambda", "1"], capsys)
    doc = json.loads(out)
    assert code == 0
    assert doc["passed"] is True
    assert [r["L"] for r in doc["rows"]] == list(range(3, 17))
    assert all(r["passed"] for r in doc["rows"])
    jsonschema.validate(doc, schema)


def test_gap_single_site_pair(capsys):
    code, out, _ = run(["gap", "--d", "2", "--L", "2", "--lambda", "1"], capsys)
    doc = json.loads(out)
    assert code == 0
    assert len(doc["rows"]) == 1
    row = doc["rows"][0]
    assert row["V"] == 4 and row["omega_minus"] < 0


def test_missing_coupling_is_usage_error(capsys):
    code, out, err = run(["gap", "--d", "2", "--L", "3"], capsys)
    assert code == 1
    assert out == ""
    assert "usage" in err.lower()


@pytest.mark.parametrize("argv", [
    ["gap", "--lambda", "1", "--beta", "2", "--N", "3"],
    ["gap", "--beta", "2"],
    ["gap", "--lambda", "-1"],
    ["gap", "--lambda", "1", "--L", "1"],
    ["gap", "--lambda", "1", "--x0", "99"],
    ["gap", "--lambda", "1", "--workers", "0"],
    ["mc", "--lambda", "1", "--L", "3"],
    ["gap", "--d", "1", "--lambda", "1"],
])
def test_invalid_specs_exit_one(argv, capsys):
    assert run(argv, capsys)[0] == 1


def test_argparse_errors_exit_one():
    proc = subprocess.run([sys.executable, "-m", "hypsigma", "gap", "--format", "xml"],
                          capture_output=True, text=True)
    assert proc.returncode == 1
    assert "usage" in proc.stderr.lower()


def test_beta_and_lambda_agree(capsys):
    _, a, _ = run(["gap", "--L", "4", "--N", "3", "--beta", "4"], capsys)
    _, b, _ = run(["gap", "--L", "4", "--lambda", "1"], capsys)
    ra, rb = json.loads(a)["rows"][0], json.loads(b)["rows"][0]
    assert ra["omega_minus"] == rb["omega_minus"]


def test_check_failure_exits_two(capsys, schema):
    # an impossibly tight band turns the asymptotics check red
    code, out, _ = run(["asym", "--d", "2", "--L", "8,16", "--lambda", "1", "--max-rel", "1e-6"], capsys)
    doc = json.loads(out)
    assert code == 2
    assert doc["passed"] is False
    jsonschema.validate(doc, schema)


def test_csv_format(capsys):
    code, out, _ = run(["gap", "--L", "3..5", "--lambda", "0.5,2", "--format", "csv"], capsys)
    assert code == 0
    assert "\r" not in out
    lines = out.split("\n")
    assert lines[0].startswith("# version=") and "seed=0" in lines[0]
    assert lines[1].startswith("# spec=")
    json.loads(lines[1][len("# spec="):])
    rows = list(csv.DictReader(io.StringIO("\n".join(lines[2:]))))
    assert len(rows) == 6
    assert "omega_minus" in rows[0]
    for r in rows:
        float(r["omega_minus"])
        assert "," not in r["omega_minus"]


def test_output_embeds_run_spec(capsys):
    _, out, _ = run(["gap", "--L", "3", "--lambda", "1", "--seed", "7"], capsys)
    doc = json.loads(out)
    assert doc["seed"] == 7
    assert doc["spec"]["command"] == "gap"
    assert doc["spec"]["lambda"] == [1.0]
    assert doc["version"]


def test_output_file(tmp_path, capsys):
    path = tmp_path / "gap.csv"
    code, out, _ = run(["gap", "--L", "3", "--lambda", "1", "--format", "csv", "--output", str(path)], capsys)
    assert code == 0 and out == ""
    assert path.read_bytes().count(b"\r") == 0


def test_worker_pool_preserves_order(capsys):
    argv = ["gap", "--d", "2,3", "--L", "3..6", "--lambda", "1,2"]
    _, serial, _ = run(argv, capsys)
    _, pooled, _ = run(argv + ["--workers", "3"], capsys)
    a, b = json.loads(serial), json.loads(pooled)
    assert a["rows"] == b["rows"]


@pytest.mark.parametrize("argv", [
    ["saddle", "--L", "3", "--lambda", "1", "--starts", "4"],
    ["tree", "--d", "1", "--L", "4", "--lambda", "1", "--samples", "3"],
    ["convexity", "--L", "3", "--lambda", "1", "--segments", "20", "--points", "3"],
    ["asym", "--d", "3", "--L", "8", "--lambda", "1", "--L-ref", "16", "--max-rel", "0.5"],
])
def test_subcommands_pass_and_validate(argv, capsys, schema):
    code, out, _ = run(argv, capsys)
    doc = json.loads(out)
    jsonschema.validate(doc, schema)
    assert code == 0, doc["certificates"]


def test_tree_reports_known_count(capsys):
    _, out, _ = run(["tree", "--d", "2", "--L", "3", "--lambda", "1", "--samples", "2"], capsys)
    row = json.loads(out)["rows"][0]
    assert row["spanning_trees"] == 11664
    assert row["enumerated_trees"] == 11664


def test_mc_reproducible(capsys, schema):
    argv = ["mc", "--d", "2", "--L", "3", "--lambda", "1", "--N", "10", "--sweeps", "400",
            "--burn-in", "100", "--chains", "2", "--seed", "3", "--max-rel", "1", "--max-pull", "100"]
    code, a, _ = run(argv, capsys)
    _, b, _ = run(argv, capsys)
    assert a == b
    doc = json.loads(a)
    jsonschema.validate(doc, schema)
    assert code == 0
    assert len(doc["rows"]) == 9
