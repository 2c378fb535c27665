import json
import subprocess
import sys

import numpy as np
import pytest
import yaml

from obstaclelab.cli import main
from obstaclelab.storage import read_csv, read_field, verify_manifest


def write_cfg(tmp_path, data, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(data))
    return p


RADIAL_1D = {
    "problem": {"fixture": "radial_sharpness", "params": {"gamma": 1.0, "r_contact": 0.5}},
    "grid": {"dim": 1, "h": "1/64"},
    "measurements": {"geometry": {"x0": [[0.5]]}, "renorm": {"center": [0.5], "rho": 0.5}},
}


@pytest.fixture(scope="module")
def solved(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("solve")
    cfg = write_cfg(tmp, RADIAL_1D)
    code = main(["solve", "--config", str(cfg), "--out", str(tmp / "out")])
    return tmp, cfg, code


class TestSolve:
    def test_outputs(self, solved):
        tmp, _, code = solved
        out = tmp / "out"
        assert code == 0
        for name in ("solution.bin", "residual_history.csv", "summary.json", "config.yaml", "manifest.json"):
            assert (out / name).exists()
        summary = json.loads((out / "summary.json").read_text())
        assert summary["converged"] and summary["error_vs_exact"] < 0.05
        assert verify_manifest(out) == []

    def test_solution_is_deterministic(self, solved, tmp_path):
        tmp, cfg, _ = solved
        assert main(["solve", "--config", str(cfg), "--out", str(tmp_path)]) == 0
        assert (tmp_path / "solution.bin").read_bytes() == (tmp / "out" / "solution.bin").read_bytes()

    def test_geometry_from_solution(self, solved, tmp_path):
        tmp, cfg, _ = solved
        code = main(["geometry", "--config", str(cfg), "--solution", str(tmp / "out" / "solution.bin"),
                     "--out", str(tmp_path)])
        assert code == 0
        summary = json.loads((tmp_path / "geometry_summary.json").read_text())
        assert summary["source"] == "solution_file" and not summary["empty_free_boundary"]
        # at h = 1/64 the window at x0 = 1/2 holds only three dyadic radii
        assert "fewer than 4" in summary["per_point"][0]["error"]
        assert read_csv(tmp_path / "geometry.csv") == []

    def test_solution_grid_mismatch(self, solved, tmp_path):
        tmp, _, _ = solved
        cfg = write_cfg(tmp_path, {**RADIAL_1D, "grid": {"dim": 1, "h": "1/32"}})
        code = main(["geometry", "--config", str(cfg), "--solution", str(tmp / "out" / "solution.bin"),
                     "--out", str(tmp_path / "o")])
        assert code == 2


class TestOracleCommands:
    def test_oracle_sampling(self, tmp_path):
        cfg = write_cfg(tmp_path, {**RADIAL_1D, "grid": {"dim": 1, "h": "1/256"}})
        assert main(["oracle", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
        u = read_field(tmp_path / "o" / "oracle.bin")
        assert u.at((1.0,)) == pytest.approx(0.5**1.5)
        summary = json.loads((tmp_path / "o" / "oracle_summary.json").read_text())
        assert summary["residual_off_collar"] <= 0.05

    def test_geometry_on_oracle(self, tmp_path):
        cfg = write_cfg(tmp_path, {**RADIAL_1D, "grid": {"dim": 1, "h": "1/1024"}})
        assert main(["geometry", "--oracle", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
        s = json.loads((tmp_path / "o" / "geometry_summary.json").read_text())
        assert abs(s["slopes"]["growth"] - 1.5) <= 0.05
        assert s["targets"]["growth"] == 1.5

    def test_renorm_on_oracle(self, tmp_path):
        cfg = write_cfg(tmp_path, {**RADIAL_1D, "grid": {"dim": 1, "h": "1/256"}})
        assert main(["renorm", "--oracle", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
        s = json.loads((tmp_path / "o" / "renorm_summary.json").read_text())
        assert s["max_sup_norm"] <= 1.0 + 1e-12 and s["growth_bound_holds"]

    def test_no_exact_solution(self, tmp_path):
        cfg = write_cfg(tmp_path, {"problem": {"obstacle": "-1", "source": "1", "boundary": "0"},
                                   "grid": {"dim": 1, "h": 0.125}})
        assert main(["oracle", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2


class TestExitCodes:
    def test_sign_changing_source(self, tmp_path):
        cfg = write_cfg(tmp_path, {"problem": {"gamma": 1.0, "obstacle": "0", "source": "x1", "boundary": "1"},
                                   "grid": {"dim": 2, "h": "1/16"}, "solver": {"backend": "penalized"}})
        assert main(["solve", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2

    def test_empty_free_boundary(self, tmp_path):
        cfg = write_cfg(tmp_path, {"problem": {"obstacle": "-5", "source": "0.001", "boundary": "1"},
                                   "grid": {"dim": 1, "h": "1/32"}})
        assert main(["geometry", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 4
        assert json.loads((tmp_path / "o" / "geometry_summary.json").read_text())["empty_free_boundary"]

    def test_nonconvergence(self, tmp_path):
        cfg = write_cfg(tmp_path, {**RADIAL_1D, "solver": {"max_inner": 2, "max_outer": 1}})
        assert main(["solve", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 3

    def test_convergence_needs_levels(self, tmp_path):
        cfg = write_cfg(tmp_path, RADIAL_1D)
        assert main(["convergence", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2

    def test_missing_config(self, tmp_path):
        assert main(["solve", "--out", str(tmp_path)]) == 2
        assert main(["solve", "--config", str(tmp_path / "nope.yaml"), "--out", str(tmp_path)]) == 2

    def test_bad_threads(self, tmp_path):
        assert main(["solve", "--config", "x", "--threads", "0"]) == 2

    def test_unknown_criterion(self, tmp_path):
        assert main(["verify", "A9", "--out", str(tmp_path)]) == 2


def test_convergence_study(tmp_path):
    cfg = write_cfg(tmp_path, {**RADIAL_1D, "grid": {"dim": 1, "h": "1/32", "levels": 3}})
    assert main(["convergence", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    rows = read_csv(tmp_path / "o" / "convergence.csv")
    assert len(rows) == 3
    errors = [float(r["error"]) for r in rows]
    assert errors[2] < errors[0]
    assert np.isfinite(float(rows[2]["cauchy_ratio"]))


def test_verify_writes_record(tmp_path):
    assert main(["verify", "A7", "--out", str(tmp_path)]) == 0
    data = json.loads((tmp_path / "verify_A7.json").read_text())
    assert data["passed"] is True
    assert json.loads((tmp_path / "manifest.json").read_text())["command"] == "verify"


def test_console_script_help():
    out = subprocess.run([sys.executable, "-m", "obstaclelab.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    for cmd in ("solve", "geometry", "oracle", "convergence", "renorm", "verify"):
        assert cmd in out.stdout
