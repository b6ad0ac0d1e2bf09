import json
import subprocess
import sys

import numpy as np
import pytest

from hybridqvi import library
from hybridqvi.cli import main
from hybridqvi.model import HybridState
from hybridqvi.grid import read_value_binary, read_value_csv


@pytest.fixture(scope="module")
def models(tmp_path_factory):
    d = tmp_path_factory.mktemp("models")
    library.write_model_files(d)
    return d


def run(models, tmp_path, *argv, model="conveyor"):
    out = tmp_path / "out"
    code = main([argv[0], "--model", str(models / f"{model}.json"), "--out", str(out), *argv[1:]])
    return code, out


def test_validate_ok_and_manifest(models, tmp_path):
    code, out = run(models, tmp_path, "validate")
    assert code == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["subcommand"] == "validate" and man["sources"]["seed"] == "default"
    assert json.loads((out / "validation.json").read_text())["passed"]


def test_bad_model_is_input_error(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["validate", "--model", str(bad), "--out", str(tmp_path / "o")]) == 1
    assert main(["validate", "--model", str(tmp_path / "missing.json"), "--out", str(tmp_path / "o")]) == 1


def test_unknown_flag_is_input_error(models, tmp_path):
    with pytest.raises(SystemExit) as exc:
        run(models, tmp_path, "validate", "--bogus")
    assert exc.value.code == 1


def test_failed_audit_refuses_solve(models, tmp_path):
    doc = library.conveyor_doc()
    doc["constants"]["beta"] = 5.0  # A sits closer to D than claimed
    p = tmp_path / "bad_beta.json"
    p.write_text(json.dumps(doc))
    out = tmp_path / "o"
    assert main(["validate", "--model", str(p), "--out", str(out)]) == 2
    assert main(["solve-stationary", "--model", str(p), "--out", str(out), "--grid-h", "0.1"]) == 2
    assert not (out / "value.csv").exists()


def test_precedence_flags_over_config(models, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"grid_h": 0.1, "tol": 1e-8, "seed": 4}))
    code, out = run(models, tmp_path, "solve-stationary", "--config", str(cfg), "--grid-h", "0.05")
    assert code == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["settings"]["grid_h"] == 0.05 and man["sources"]["grid_h"] == "flag"
    assert man["settings"]["tol"] == 1e-8 and man["sources"]["tol"] == "config"
    assert man["sources"]["max_iter"] == "default"
    diag = json.loads((out / "diagnostics.json").read_text())
    assert diag["grid"]["h"] == 0.05


def test_unknown_config_key(models, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"gridh": 0.1}))
    assert run(models, tmp_path, "validate", "--config", str(cfg))[0] == 1


def test_bad_thread_count(models, tmp_path, monkeypatch):
    monkeypatch.setenv("HYBRIDQVI_THREADS", "zero")
    assert run(models, tmp_path, "validate")[0] == 1


def test_solve_stationary_outputs(models, tmp_path):
    code, out = run(models, tmp_path, "solve-stationary", "--grid-h", "0.05")
    assert code == 0
    for f in ("value.csv", "value.bin", "policy.csv", "diagnostics.json"):
        assert (out / f).exists()
    V = read_value_binary(out / "value.bin")
    W = read_value_csv(out / "value.csv", V.grid)
    assert np.array_equal(V.values, W.values)
    x = V.grid.nodes(0)[:, 0]
    assert np.max(np.abs(V.values - library.conveyor_value(x))) <= 0.2


def test_max_iter_exhaustion_is_numeric(models, tmp_path):
    assert run(models, tmp_path, "solve-stationary", "--grid-h", "0.1", "--max-iter", "3")[0] == 3


def test_policy_file_simulation(models, tmp_path):
    code, out = run(models, tmp_path, "solve-stationary", "--grid-h", "0.05")
    assert code == 0
    V = read_value_binary(out / "value.bin")
    sim = tmp_path / "sim"
    code = main(["simulate", "--model", str(models / "conveyor.json"), "--out", str(sim),
                 "--policy", str(out / "policy.csv"), "--x0", "0:0.5"])
    assert code == 0
    res = json.loads((sim / "result.json").read_text())
    assert res["events"] >= 1
    assert res["total_cost"] <= V.at(HybridState(0, [0.5])) + 5 * 0.05
    lines = (sim / "trajectory.jsonl").read_text().splitlines()
    assert json.loads(lines[-1])["type"] == "summary"


def test_simulate_explicit_and_bad_state(models, tmp_path):
    code, out = run(models, tmp_path, "simulate", "--x0", "0:0.5", "--horizon", "finite", "--T", "1.0",
                    model="constant_cost")
    assert code == 0
    assert json.loads((out / "result.json").read_text())["total_cost"] == pytest.approx(1.0, abs=1e-8)  # undiscounted
    assert run(models, tmp_path, "simulate", "--x0", "0:abc")[0] == 1
    assert run(models, tmp_path, "simulate", "--x0", "3:0.5")[0] == 1
    assert run(models, tmp_path, "simulate")[0] == 1


def test_solve_finite_outputs(models, tmp_path):
    code, out = run(models, tmp_path, "solve-finite", "--grid-h", "0.05", "--T", "1.0", "--slices", "0,5",
                    model="finite_conveyor")
    assert code == 0
    idx = json.loads((out / "index.json").read_text())
    assert [f["n"] for f in idx["files"]] == [0, 5]
    assert idx["terminal_consistency"][-1] == 0.0
    s0 = read_value_binary(out / "slice_00000.bin")
    x = s0.grid.nodes(0)[:, 0]
    assert np.max(np.abs(s0.values - library.finite_conveyor_value(0.0, x, 1.0))) <= 0.1


def test_solve_finite_rejects_coarse_time_step(models, tmp_path):
    assert run(models, tmp_path, "solve-finite", "--grid-h", "0.1", "--steps", "2", model="constant_cost")[0] == 1


def test_verify_and_injected_violation(models, tmp_path):
    code, out = run(models, tmp_path, "verify", "--trials", "10", "--grid-h", "0.1")
    assert code == 0
    assert all(r["passed"] for r in json.loads((out / "verify.json").read_text()))
    code, _ = run(models, tmp_path, "verify", "--trials", "10", "--grid-h", "0.1", "--inject-violation")
    assert code == 2


def test_convergence_threshold(models, tmp_path):
    code, out = run(models, tmp_path, "convergence", "--levels", "3", "--h0", "0.1")
    assert code == 0 and json.loads((out / "convergence.json").read_text())["passed"]
    code, _ = run(models, tmp_path, "convergence", "--levels", "3", "--h0", "0.1", "--threshold", "1.5")
    assert code == 3
    assert run(models, tmp_path, "convergence", model="switching")[0] == 1


def test_module_entry_point(models, tmp_path):
    r = subprocess.run([sys.executable, "-m", "hybridqvi", "validate", "--model", str(models / "conveyor.json"),
                        "--out", str(tmp_path / "m")], capture_output=True, text=True)
    assert r.returncode == 0
