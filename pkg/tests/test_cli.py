import json

import numpy as np
import pytest

from eddyinv.cli import main

SMALL = {
    "mesh": {"divisions": [10, 10, 11]},
    "anomaly": {"boxes": [{"bounds": [[-0.4, 0.4], [-0.4, 0.4], [-1.2, -0.4]], "sigma": 1.0}]},
    "inversion": {"max_iter": 2},
    "noise": {"delta": 0.004, "seed": 3},
}


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps(dict(SMALL, output={"directory": str(tmp_path / "out")})))
    return path


def test_mesh_command(config, tmp_path, capsys):
    assert main(["mesh", "--config", str(config)]) == 0
    summary = json.loads((tmp_path / "out" / "mesh_summary.json").read_text())
    assert summary["free_edges"] == 7051
    assert (tmp_path / "out" / "config.json").exists()


def test_forward_then_invert(config, tmp_path):
    out = tmp_path / "out"
    assert main(["forward", "--config", str(config)]) == 0
    obs = out / "observation.dat"
    assert obs.exists() and (out / "forward.vtk").exists()
    text = (out / "forward.vtk").read_text()
    assert "SCALARS sigma_exact double 1" in text and "SCALARS E_magnitude double 1" in text

    inv = tmp_path / "inv"
    assert main(["invert", "--config", str(config), "--obs", str(obs), "--out", str(inv)]) == 0
    summary = json.loads((inv / "summary.json").read_text())
    assert summary["iterations"] == 2
    assert summary["final_objective"] < summary["initial_objective"]
    assert {"wall_time", "final_objective"} <= set(summary)
    assert (inv / "iterations.csv").read_text().startswith("k,objective")
    assert (inv / "sigma.vtk").exists() and (inv / "config.json").exists()
    assert np.load(inv / "sigma.npy").shape == (729,)


def test_seed_override_changes_data(config, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["forward", "--config", str(config), "--out", str(a)]) == 0
    assert main(["forward", "--config", str(config), "--out", str(b), "--seed", "4"]) == 0
    assert (a / "observation.dat").read_bytes() != (b / "observation.dat").read_bytes()


def test_mesh_mismatch_exit_code(config, tmp_path):
    assert main(["forward", "--config", str(config)]) == 0
    other = tmp_path / "other.json"
    other.write_text(json.dumps(dict(SMALL, mesh={"divisions": [5, 5, 11]})))
    code = main(["invert", "--config", str(other), "--obs", str(tmp_path / "out" / "observation.dat"),
                 "--out", str(tmp_path / "x")])
    assert code == 2


def test_bad_config_exit_code(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"mesh": {"bogus": 1}}')
    assert main(["mesh", "--config", str(bad)]) == 1
    bad.write_text("{not json")
    assert main(["mesh", "--config", str(bad)]) == 1
    assert main(["mesh", "--config", str(tmp_path / "missing.json")]) == 4


def test_misaligned_mesh_exit_code(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"mesh": {"divisions": [10, 10, 7]}, "output": {"directory": str(tmp_path)}}))
    assert main(["mesh", "--config", str(cfg)]) == 2


def test_missing_obs_file_exit_code(config, tmp_path):
    assert main(["invert", "--config", str(config), "--obs", str(tmp_path / "nope.dat")]) == 4


def test_verify_nonradiating(config, tmp_path):
    assert main(["verify", "--config", str(config), "--suite", "nonradiating"]) == 0
    rep = json.loads((tmp_path / "out" / "verify_nonradiating.json").read_text())
    assert rep["passed"] and rep["trace_ratio"] <= 1e-8
