"""Command-line interface: outputs, manifests and exit codes."""

import json
import math
import subprocess
import sys

import numpy as np
import pytest

from cleradii import cli
from cleradii.cli import EXIT_GATE, EXIT_OK, EXIT_USAGE, main, read_samples
from cleradii.errors import ManifestError

from conftest import MC_DT


def run(argv, tmp_path, name="out"):
    """Run the CLI in-process, returning (exit code, output text)."""
    path = tmp_path / name
    code = main([*argv, "--output", str(path)])
    return code, path.read_text() if path.exists() else ""


def load_json(text):
    return json.loads(text)


def csv_payload(text):
    """Everything after the manifest line: the data section."""
    return text.partition("\n")[2]


# ---------------------------------------------------------------- law

@pytest.mark.parametrize("what, value", [("mean", 2 * math.sqrt(3) * math.pi),
                                         ("alpha", 5 / 48), ("dimension", 91 / 48)])
def test_law_scalars(tmp_path, what, value):
    code, text = run(["law", "--kappa", "6", "--what", what, "--format", "json"], tmp_path)
    doc = load_json(text)
    assert code == EXIT_OK
    assert doc["rows"][0][1] == pytest.approx(value, rel=1e-12)
    assert doc["manifest"]["command"] == "law" and doc["manifest"]["params"]["what"] == what


def test_law_mean_printed_value(tmp_path):
    code, text = run(["law", "--kappa", "6", "--what", "mean"], tmp_path)
    assert code == EXIT_OK
    header, _, body = text.partition("\n")
    assert header.startswith("# {")
    cols, row = body.splitlines()[:2]
    assert cols == "kappa,value,error_bound"
    assert f"{float(row.split(',')[1]):.4f}" == "10.8828"


def test_law_mgf_at_zero(tmp_path):
    code, text = run(["law", "--kappa", "6", "--what", "mgf", "--lambda", "0",
                      "--format", "json"], tmp_path)
    doc = load_json(text)
    assert code == EXIT_OK
    assert doc["columns"] == ["lambda_re", "lambda_im", "value_re", "value_im", "error_bound"]
    assert doc["rows"][0][2] == pytest.approx(1.0, abs=1e-15) and doc["rows"][0][3] == 0.0


def test_law_density_and_cdf_grids(tmp_path):
    code, text = run(["law", "--kappa", "5", "--what", "cdf", "--grid", "1:30:5",
                      "--format", "json"], tmp_path)
    rows = np.array(load_json(text)["rows"])
    assert code == EXIT_OK and rows.shape == (5, 3)
    assert np.all(np.diff(rows[:, 1]) > 0) and np.all((rows[:, 1] > 0) & (rows[:, 1] < 1))
    code, text = run(["law", "--kappa", "5", "--what", "density"], tmp_path, "d")
    assert code == EXIT_OK and len(text.splitlines()) == 2 + 80


@pytest.mark.parametrize("argv", [
    ["law", "--kappa", "9", "--what", "mean"],
    ["law", "--kappa", "6", "--what", "nonsense"],
    ["law", "--kappa", "6", "--what", "mgf", "--lambda", "1"],
    ["law", "--kappa", "6", "--what", "cdf", "--grid", "1:2"],
    ["law", "--what", "mean"],
    ["simulate", "--kappa", "6", "--n", "0"],
    ["simulate", "--kappa", "6", "--n", "10", "--dt-max", "1"],
    ["gasket", "--kappa", "6", "--mode", "covering", "--grid", "0:3:4"],
    ["martingale", "--kappa", "6", "--lambda", "0.5"],
    ["verify", "/nonexistent/file.csv"],
])
def test_usage_errors(tmp_path, argv, capsys):
    code, text = run(argv, tmp_path)
    assert code == EXIT_USAGE and text == ""
    assert capsys.readouterr().err


def test_no_command_is_usage_error():
    assert main([]) == EXIT_USAGE


# ---------------------------------------------------------------- simulate and verify

SIM = ["simulate", "--kappa", "6", "--n", "3000", "--seed", "7", "--dt-max", str(MC_DT)]


def test_simulate_output_schema(tmp_path):
    code, text = run(SIM, tmp_path)
    assert code == EXIT_OK
    manifest = json.loads(text.partition("\n")[0][2:])
    for key in ("command", "params", "rng", "seed", "version", "duration_s"):
        assert key in manifest
    assert manifest["params"]["kappa"] == 6.0 and manifest["seed"] == 7
    assert manifest["summary"]["n_exits"] == 3000
    assert manifest["summary"]["config"]["step_const"] == 0.05
    lines = csv_payload(text).splitlines()
    assert lines[0] == "seed_index,exit_time,exit_side,steps" and len(lines) == 3001
    data = np.array([r.split(",") for r in lines[1:]], dtype=float)
    assert np.array_equal(data[:, 0], np.arange(3000))
    assert np.all(data[:, 1] > 0) and set(data[:, 2]) <= {-1.0, 1.0}


def test_simulate_reproducible_across_runs_and_workers(tmp_path, monkeypatch):
    payloads = []
    for i, workers in enumerate(["1", "4", "4"]):
        monkeypatch.setenv("CLERADII_WORKERS", workers)
        code, text = run(SIM, tmp_path, f"w{i}")
        assert code == EXIT_OK
        payloads.append(csv_payload(text).encode())
    assert payloads[0] == payloads[1] == payloads[2]
    monkeypatch.setenv("CLERADII_WORKERS", "4")
    code, text = run([*SIM, "--format", "json"], tmp_path, "j")
    doc = load_json(text)
    lines = payloads[0].decode().splitlines()[1:]
    assert [cli._num(v) for v in doc["rows"][5]] == lines[5].split(",")


def test_bad_worker_count(tmp_path, monkeypatch):
    monkeypatch.setenv("CLERADII_WORKERS", "zero")
    assert run(SIM, tmp_path)[0] == EXIT_USAGE


def test_censoring_is_a_gate_failure(tmp_path):
    code, _ = run([*SIM[:-2], "--dt-max", "0.01", "--max-time", "0.5"], tmp_path)
    assert code == EXIT_GATE


@pytest.fixture(scope="module")
def kappa6_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("sim") / "k6.csv"
    code = main(["simulate", "--kappa", "6", "--n", "100000", "--dt-max", str(MC_DT),
                 "--output", str(path)])
    assert code == EXIT_OK
    return path


def test_verify_passes_on_matching_law(kappa6_file, tmp_path):
    code, text = run(["verify", str(kappa6_file)], tmp_path)
    report = load_json(text)["summary"]
    assert code == EXIT_OK, report
    assert report["ks"]["statistic"] < report["ks"]["threshold"]
    for gate in ("ks", "mean", "tail", "symmetry"):
        assert report[gate]["pass"]


def test_verify_fails_on_other_law(kappa6_file, tmp_path):
    code, text = run(["verify", str(kappa6_file), "--kappa", "3"], tmp_path)
    report = load_json(text)["summary"]
    assert code == EXIT_GATE
    assert not report["ks"]["pass"] and not report["mean"]["pass"]


def test_verify_kappa_4(tmp_path):
    sim = tmp_path / "k4.csv"
    assert main(["simulate", "--kappa", "4", "--n", "100000", "--dt-max", str(MC_DT),
                 "--seed", "3", "--output", str(sim)]) == EXIT_OK
    code, text = run(["verify", str(sim), "--format", "csv"], tmp_path)
    assert code == EXIT_OK
    assert csv_payload(text).splitlines()[1:] == ["ks,1", "mean,1", "tail,1", "symmetry,1"]


def test_verify_json_input(tmp_path):
    code, _ = run([*SIM, "--format", "json"], tmp_path, "s.json")
    assert code == EXIT_OK
    manifest, data = read_samples(str(tmp_path / "s.json"))
    assert data.shape == (3000, 4) and manifest["summary"]["n_exits"] == 3000


def test_verify_rejects_bad_files(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    assert run(["verify", str(empty)], tmp_path)[0] == EXIT_USAGE
    code, text = run(SIM, tmp_path, "good.csv")
    header, _, body = text.partition("\n")
    manifest = json.loads(header[2:])
    for change in ({"rng": "mt19937"}, {"command": "law"},
                   {"summary": {**manifest["summary"], "n_exits": 5}}):
        bad = tmp_path / "bad.csv"
        bad.write_text("# " + json.dumps({**manifest, **change}) + "\n" + body)
        with pytest.raises(ManifestError):
            read_samples(str(bad))
        assert run(["verify", str(bad)], tmp_path)[0] == EXIT_USAGE
    headless = tmp_path / "headless.csv"
    headless.write_text(body)
    assert run(["verify", str(headless)], tmp_path)[0] == EXIT_USAGE


# ---------------------------------------------------------------- gasket and martingale

def test_gasket_covering(tmp_path):
    code, text = run(["gasket", "--kappa", "6", "--mode", "covering", "--format", "json"], tmp_path)
    doc = load_json(text)
    assert code == EXIT_OK
    assert doc["summary"]["fit"]["slope"] == pytest.approx(-91 / 48, abs=0.02)
    assert len(doc["rows"]) == 9


def test_gasket_survival(tmp_path):
    code, text = run(["gasket", "--kappa", "6", "--mode", "survival", "--n", "20000",
                      "--dt-max", str(MC_DT), "--grid", "2:30:8", "--format", "json"], tmp_path)
    doc = load_json(text)
    assert code == EXIT_OK, doc["summary"]
    assert doc["columns"][:3] == ["s", "estimate", "stderr"]


def test_gasket_survival_insufficient(tmp_path):
    code, text = run(["gasket", "--kappa", "3", "--mode", "survival", "--n", "200",
                      "--dt-max", str(MC_DT), "--grid", "30:60:4", "--format", "json"], tmp_path)
    assert code == EXIT_GATE
    assert load_json(text)["summary"]["insufficient_survivals"]


def test_gasket_nested_depth_one_equals_simulate(tmp_path):
    common = ["--kappa", "5", "--n", "50", "--seed", "4", "--dt-max", str(MC_DT),
              "--format", "json"]
    _, sim = run(["simulate", *common], tmp_path, "a")
    code, nested = run(["gasket", "--mode", "nested", "--depth", "1", *common], tmp_path, "b")
    assert code in (EXIT_OK, EXIT_GATE)
    t = [r[1] for r in load_json(sim)["rows"]]
    assert [-r[2] for r in load_json(nested)["rows"]] == t


def test_martingale_lambda_zero(tmp_path):
    code, text = run(["martingale", "--kappa", "6", "--lambda", "0", "--format", "json"], tmp_path)
    doc = load_json(text)
    assert code == EXIT_OK
    assert [r[1] for r in doc["rows"]] == [1.0, 1.0, 1.0]


def test_martingale_constancy(tmp_path):
    code, text = run(["martingale", "--kappa", "3", "--lambda", "-0.1", "--theta0", str(math.pi),
                      "--n", "4000", "--dt-max", str(MC_DT), "--checkpoints", "0.5,2",
                      "--format", "json"], tmp_path)
    assert code == EXIT_OK, load_json(text)["summary"]


# ---------------------------------------------------------------- entry points

def test_console_script_and_module():
    for cmd in (["cleradii"], [sys.executable, "-m", "cleradii"]):
        out = subprocess.run([*cmd, "law", "--kappa", "6", "--what", "alpha"],
                             capture_output=True, text=True)
        assert out.returncode == EXIT_OK
        assert out.stdout.splitlines()[2].startswith("6.0,0.10416666666666")
    out = subprocess.run([sys.executable, "-m", "cleradii", "simulate", "--kappa", "6", "--n", "0"],
                         capture_output=True, text=True)
    assert out.returncode == EXIT_USAGE and out.stdout == ""
