import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from spectralshift import cli
from spectralshift.cli import EXIT_CHECK, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, main, run_config
from spectralshift.density import SpectralShiftDensity
from spectralshift.errors import NoLimitError
from spectralshift.ssf import ssf_density
from spectralshift.transform import xi_from_eta

CONSTANT_LATTICE = {"d": 3, "N": 3, "h": 0.5, "m": 2,
                    "potential": {"family": "constant", "mu": 0.7}, "t_list": [0.5, 1.0]}
SSF_BLOCK = {"n": 2, "A": [[1.0, 0.0], [0.0, 2.0]],
             "T": [[[0.0, 1.0], [1.0, 0.0]], [[0.0, 1.0], [1.0, 0.0]]]}


def write_json(path, obj):
    path.write_text(json.dumps(obj), encoding="utf-8")
    return str(path)


def read_csv(text):
    return list(csv.DictReader(io.StringIO(text)))


# ------------------------------------------------------------- subcommands
def test_clifford_check(capsys):
    assert main(["clifford-check", "--d", "3"]) == EXIT_OK
    rows = read_csv(capsys.readouterr().out)
    assert [r["d"] for r in rows] == ["3"]
    assert float(rows[0]["max"]) < 1e-12


def test_clifford_check_rejects_even_d(capsys):
    assert main(["clifford-check", "--d", "4"]) == EXIT_USAGE
    assert "odd" in capsys.readouterr().err


def test_unknown_subcommand_is_usage_error():
    assert main(["no-such-command"]) == EXIT_USAGE


def test_trace_compare_constant_model(tmp_path, capsys):
    cfg = write_json(tmp_path / "lat.json", {"lattice": CONSTANT_LATTICE})
    assert main(["trace-compare", "--config", cfg]) == EXIT_OK
    rows = read_csv(capsys.readouterr().out)
    assert len(rows) == 2
    for r in rows:
        assert float(r["lhs"]) == 0 and float(r["rhs"]) == 0


def test_ssf_compute_matches_module(tmp_path):
    cfg = write_json(tmp_path / "ssf.json", SSF_BLOCK)
    out = tmp_path / "eta.json"
    assert main(["ssf", "compute", "--config", cfg, "--out", str(out)]) == EXIT_OK
    got = SpectralShiftDensity.from_json(out.read_text(encoding="utf-8"))
    A = np.array(SSF_BLOCK["A"])
    ref = ssf_density(2, A, None, [np.array(t) for t in SSF_BLOCK["T"]])
    for t in (0.5, 1.0):
        assert got.laplace(t) == pytest.approx(ref.laplace(t), rel=1e-15)


def test_transform_xi_and_witten(tmp_path, capsys):
    eta = SpectralShiftDensity([0.0, 1.0, 2.0], [[2.0, 0.0], [2.0, -2.0]], power=0.5)
    path = tmp_path / "eta.json"
    path.write_text(eta.to_json(), encoding="utf-8")
    assert main(["transform", "xi", "--eta", str(path), "--d", "3", "--grid", "0:2:5"]) == EXIT_OK
    rows = read_csv(capsys.readouterr().out)
    lam = np.array([float(r["lambda"]) for r in rows])
    assert np.allclose([float(r["xi"]) for r in rows], np.real(xi_from_eta(eta, 3)(lam)), rtol=1e-15, atol=0)
    assert main(["transform", "witten", "--eta", str(path), "--d", "3"]) == EXIT_OK
    rep = json.loads(capsys.readouterr().out)
    assert rep["index"] == pytest.approx(1 / (4 * np.pi), rel=1e-6)


def test_transform_witten_atoms_is_usage_error(tmp_path, capsys):
    cfg = write_json(tmp_path / "ssf.json", SSF_BLOCK)
    eta = tmp_path / "eta.json"
    main(["ssf", "compute", "--config", cfg, "--out", str(eta)])
    assert main(["transform", "witten", "--eta", str(eta), "--d", "3"]) == EXIT_USAGE
    assert "jumps" in capsys.readouterr().err


@pytest.mark.parametrize("check", ["schlafli", "bessel-derivative"])
def test_example_kernels(check, capsys):
    assert main(["example", "kernels", "--check", check]) == EXIT_OK
    rows = read_csv(capsys.readouterr().out)
    assert rows and max(float(r["residual"]) for r in rows) <= 1e-8


def test_example_index_winding(capsys):
    assert main(["example", "index", "--method", "winding"]) == EXIT_OK
    rep = json.loads(capsys.readouterr().out)
    assert rep["routes"]["winding"]["nearest_integer"] == -1
    assert rep["checks"] == {"winding_integer": True}


def test_numeric_fault_exit_code(monkeypatch, capsys):
    def broken(*args, **kwargs):
        raise NoLimitError("no limit", {"averages": [1.0, 2.0]})

    monkeypatch.setattr(cli, "cmd_clifford", broken)
    assert main(["clifford-check"]) == EXIT_NUMERIC
    err = capsys.readouterr().err
    assert "numeric fault" in err and "averages" in err


def test_missing_file_is_usage_error(tmp_path):
    assert main(["ssf", "compute", "--config", str(tmp_path / "none.json")]) == EXIT_USAGE


# ------------------------------------------------------------------ run
def test_validate_command(tmp_path, capsys):
    good = write_json(tmp_path / "good.json", {"kind": "clifford-check", "clifford": {"d": [3]}})
    assert main(["validate", "--config", good]) == EXIT_OK
    assert json.loads(capsys.readouterr().out) == {"issues": []}
    bad = write_json(tmp_path / "bad.json", {"kind": "clifford-check", "clifford": {"d": [2]}})
    assert main(["validate", "--config", bad]) == EXIT_USAGE
    issues = json.loads(capsys.readouterr().out)["issues"]
    assert issues[0]["field"] == "clifford.d"


def test_run_writes_artifacts(tmp_path):
    raw = {"kind": "clifford-check", "seed": 3, "clifford": {"d": [1, 3, 5]}}
    assert run_config(raw, tmp_path) == EXIT_OK
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ["clifford.csv", "manifest.json", "summary.json"]
    manifest = json.loads((tmp_path / "manifest.json").read_text(encoding="utf-8"))
    assert manifest["seed"] == 3 and manifest["status"] == "pass"
    assert manifest["artifacts"] == ["clifford.csv"]
    assert len(manifest["config_sha256"]) == 64
    assert set(manifest["versions"]) == {"package", "python", "numpy", "scipy"}
    summary = json.loads((tmp_path / "summary.json").read_text(encoding="utf-8"))
    assert summary == {"checks": {"clifford": True}, "status": "pass"}


def test_run_tolerance_failure_exit_code(tmp_path):
    raw = {"kind": "clifford-check", "clifford": {"d": [3]}, "tolerances": {"clifford": 0.0}}
    assert run_config(raw, tmp_path) == EXIT_CHECK
    assert json.loads((tmp_path / "summary.json").read_text(encoding="utf-8"))["status"] == "fail"


def test_run_schema_violation(tmp_path, capsys):
    assert run_config({"kind": "trace-compare", "lattice": {"d": 3}}, tmp_path) == EXIT_USAGE
    assert "lattice.N" in capsys.readouterr().err
    assert not list(tmp_path.iterdir())


def test_seventeen_significant_digits(tmp_path):
    raw = {"kind": "trace-compare", "lattice": dict(CONSTANT_LATTICE, t_list=[1 / 3])}
    assert run_config(raw, tmp_path) == EXIT_OK
    row = read_csv((tmp_path / "trace_compare.csv").read_text(encoding="utf-8"))[0]
    assert float(row["t"]) == 1 / 3
    assert len(row["t"].replace("0.", "", 1)) == 17


@pytest.mark.parametrize("raw", [
    {"kind": "trace-compare", "seed": 5, "lattice": CONSTANT_LATTICE},
    {"kind": "ssf", "ssf": SSF_BLOCK},
    {"kind": "example", "seed": 2, "example": {"method": "density", "samples": 64, "integrator": "mc"}},
])
def test_determinism(tmp_path, raw):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run_config(raw, a) == run_config(raw, b)
    for p in a.iterdir():
        if p.name != "manifest.json":
            assert p.read_bytes() == (b / p.name).read_bytes()
    ma = json.loads((a / "manifest.json").read_text(encoding="utf-8"))
    mb = json.loads((b / "manifest.json").read_text(encoding="utf-8"))
    for key in ("timestamp", "wall_time_s"):
        ma.pop(key), mb.pop(key)
    assert ma == mb


@pytest.mark.slow
def test_full_pipeline_hedgehog(tmp_path):
    raw = {
        "kind": "full-pipeline",
        "lattice": {"d": 3, "N": 4, "h": 1.25, "m": 2, "potential": {"family": "hedgehog", "mu": 1.0},
                    "t_list": [0.5], "rhs_points": 12},
        "example": {"method": "all", "integrator": "grid", "grid_points": 8, "winding_n": 64},
        "tolerances": {"trace_relgap": 1.0},
    }
    cfg = write_json(tmp_path / "full.json", raw)
    code = main(["full-pipeline", "--config", cfg, "--output-dir", str(tmp_path / "out")])
    report = json.loads((tmp_path / "out" / "full_pipeline.json").read_text(encoding="utf-8"))
    assert set(report["index_routes"]) == {"winding", "density", "pipeline"}
    for route in report["index_routes"].values():
        assert route["index"] == pytest.approx(-1, abs=0.1)
    assert report["checks"]["winding_integer"] and report["checks"]["index_density"]
    assert code in (EXIT_OK, EXIT_CHECK)
    assert (tmp_path / "out" / "trace_compare.csv").exists()


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "spectralshift.cli", "clifford-check", "--d", "1", "3"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == EXIT_OK
    assert proc.stdout.splitlines()[0] == "d,anticommutation,anti_hermitian,full_trace,short_trace,max"
