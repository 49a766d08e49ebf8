"""Pipeline front door: configs, reports, sweeps, subcommands."""

import json
import os

import numpy as np
import pytest

from eqmin.cli import RunConfig, main, run, sweep
from eqmin.errors import InvalidParameterError

REPORT_KEYS = ("config_echo", "mesh", "solution", "invariants", "higgs_checks", "moduli")


def test_config_validation():
    with pytest.raises(InvalidParameterError):
        RunConfig(genus=1).validate()
    with pytest.raises(InvalidParameterError):
        RunConfig(target="rh5").validate()
    with pytest.raises(InvalidParameterError):
        RunConfig(target="rh4", genus=2, l=2).validate()
    with pytest.raises(InvalidParameterError):
        RunConfig(solver_tol=-1.0).validate()
    RunConfig().validate()


def test_zero_run_report(tmp_path):
    cfg = RunConfig(genus=2, resolution=2, target="rh3", data_spec="zero",
                    output_dir=str(tmp_path))
    rep = run(cfg)
    assert "failed_at" not in rep
    for key in REPORT_KEYS:
        assert key in rep
    assert rep["solution"]["converged"]
    assert rep["solution"]["u_max"] < 1e-10
    assert rep["moduli"]["verdict"] == "Polystable"
    assert os.path.exists(tmp_path / "report.json")
    with open(tmp_path / "report.json") as fh:
        on_disk = json.load(fh)
    assert on_disk["mesh"]["genus"] == 2
    with open(tmp_path / "fields.csv") as fh:
        header = fh.readline().strip().split(",")
    assert header == ["vertex", "x", "y", "kappa_gamma", "kappa_perp", "u4_norm"]


def test_failed_run_writes_partial_report(tmp_path):
    # resolution too coarse for kernel detection: fails at the bundle stage
    cfg = RunConfig(genus=2, resolution=2, target="rh3", data_spec="basis:0:0.5",
                    output_dir=str(tmp_path))
    rep = run(cfg)
    assert rep["failed_at"]["stage"] == "bundles"
    assert "mesh" in rep
    assert os.path.exists(tmp_path / "report.json")


def test_bad_data_spec_rejected(tmp_path):
    cfg = RunConfig(genus=2, resolution=2, target="rh3", data_spec="nonsense",
                    output_dir=str(tmp_path))
    rep = run(cfg)
    assert rep["failed_at"]["error"] == "InvalidParameterError"


def test_manufactured_run_records_error(tmp_path):
    cfg = RunConfig(genus=2, resolution=2, target="rh3",
                    data_spec="manufactured:0.1", output_dir=str(tmp_path))
    rep = run(cfg, stages=("solve",))
    assert rep["solution"]["mms_error"] < 1e-10


def test_seeded_random_data_is_deterministic(tmp_path):
    cfg = RunConfig(genus=2, resolution=3, target="rh3", data_spec="random:0.4",
                    seed=5, output_dir=str(tmp_path))
    rep1 = run(cfg, write_files=False)
    rep2 = run(cfg, write_files=False)
    assert rep1["invariants"]["area"] == rep2["invariants"]["area"]
    assert rep1["config_echo"]["rng"] == "numpy default_rng"
    assert rep1["config_echo"]["seed"] == 5


def test_sweep_axis_validated(tmp_path):
    cfg = RunConfig(output_dir=str(tmp_path))
    with pytest.raises(InvalidParameterError):
        sweep(cfg, "banana", [1, 2])


def test_resolution_sweep_aggregates(tmp_path):
    cfg = RunConfig(genus=2, target="rh3", data_spec="zero",
                    output_dir=str(tmp_path))
    rows, reports = sweep(cfg, "resolution", [1, 2])
    assert len(rows) == 2
    for row in rows:
        assert row["failed_at"] is None
        assert abs(row["area"] - 4.0 * np.pi) < 1e-6
    assert os.path.exists(tmp_path / "sweep_resolution.csv")


def test_mesh_info_command(capsys):
    assert main(["mesh-info", "--genus", "2", "--resolution", "1"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["euler_characteristic"] == -2


def test_basis_command(capsys):
    code = main(["basis", "--target", "rh3", "--resolution", "3"])
    assert code == 0
    out = json.loads(capsys.readouterr().out)
    assert out["K2"]["detected"] == 3


def test_verify_command_zero_data(tmp_path, capsys):
    code = main([
        "verify", "--target", "rh3", "--resolution", "2",
        "--data", "zero", "--output-dir", str(tmp_path),
    ])
    assert code == 0


def test_config_file_with_flag_override(tmp_path, capsys):
    cfgfile = tmp_path / "cfg.json"
    cfgfile.write_text(json.dumps({"genus": 2, "resolution": 2, "target": "rh3"}))
    code = main(["mesh-info", "--config", str(cfgfile), "--resolution", "1"])
    assert code == 0
    out = json.loads(capsys.readouterr().out)
    assert out["resolution"] == 1
