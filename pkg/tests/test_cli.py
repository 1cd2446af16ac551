from __future__ import annotations

import csv
import json
import subprocess
import sys

import pytest

from surfhel.cli import main
from surfhel.geometry import FourierTorus


def write_json(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


@pytest.fixture
def files(tmp_path):
    std = write_json(tmp_path / "torus.json", FourierTorus.standard().to_dict())
    plasma = write_json(tmp_path / "plasma.json", FourierTorus.standard(2.0, 0.55).to_dict())
    solve = write_json(tmp_path / "solve.json", {
        "surface": "torus.json", "cws": "torus.json", "plasma": "plasma.json",
        "target": {"type": "wire", "I": 1.0}, "lambdas": [1.0, 1e-2, 1e-4], "modes": 3, "res": 64,
        "plasma_nodes": {"n_s": 3, "n_theta": 8, "n_phi": 12}})
    return {"dir": tmp_path, "std": std, "plasma": plasma, "solve": solve}


def run_json(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, (json.loads(out.out) if out.out else None), out.err


def test_eigen_standard_torus(files, capsys):
    code, rep, _ = run_json(["eigen", "--surface", files["std"], "--res", "64"], capsys)
    assert code == 0
    assert abs(rep["result"]["Lambda"] - 0.5) < 1e-2
    assert rep["resolution"] == {"n_theta": 64, "n_phi": 64}
    assert set(rep["tolerances"]) == {"quadrature", "laplace_cg_rtol", "ode_rtol", "constraint"}


def test_malformed_config(files, capsys):
    bad = files["dir"] / "bad.json"
    bad.write_text("{not json")
    code, _, err = run_json(["eigen", "--config", str(bad)], capsys)
    assert code == 2
    assert json.loads(err)["error"] == "ConfigError"


def test_unknown_config_key(files, capsys):
    cfg = write_json(files["dir"] / "c.json", {"surface": "torus.json", "bogus": 1})
    code, _, err = run_json(["geom", "--config", cfg], capsys)
    assert code == 2 and "bogus" in json.loads(err)["message"]


def test_missing_surface(capsys):
    code, _, _ = run_json(["geom"], capsys)
    assert code == 2


def test_geometry_error_exit_code(files, capsys):
    bad = write_json(files["dir"] / "through_axis.json", FourierTorus.standard(1.0, 1.5).to_dict())
    code, _, err = run_json(["geom", "--surface", bad, "--res", "16"], capsys)
    assert code == 3
    assert json.loads(err)["module"] == "surfhel.geometry"


def test_numerics_error_exit_code(files, capsys):
    # the default field has irrational transform, so periodic linking cannot close its lines
    code, _, err = run_json(["link", "--surface", files["std"], "--res", "32", "--pairs", "2"], capsys)
    assert code == 4
    assert json.loads(err) == {"error": "SamplingError", "module": "surfhel.linking",
                               "message": json.loads(err)["message"]}


def test_negative_lambda(files, capsys):
    code, _, _ = run_json(["solve", "--config", files["solve"], "--lambda", "-1"], capsys)
    assert code == 2


def test_sweep_writes_monotone_csv(files, capsys):
    out = files["dir"] / "out" / "sweep.json"
    code = main(["sweep", "--config", files["solve"], "--out", str(out)])
    assert code == 0
    rep = json.loads(out.read_text())
    assert rep["result"]["monotone_misfit"] is True
    with open(out.with_name("sweep_sweep.csv")) as fh:
        rows = list(csv.DictReader(fh))
    assert [float(r["lambda"]) for r in rows] == [1.0, 1e-2, 1e-4]
    mis = [float(r["misfit"]) for r in rows]
    assert all(b <= a for a, b in zip(mis, mis[1:]))
    assert all(abs(float(r["Q_bar"])) < 1e-12 for r in rows)


def test_solve_report(files, capsys):
    code, rep, _ = run_json(["solve", "--config", files["solve"], "--lambda", "1e-3"], capsys)
    assert code == 0
    assert abs(rep["result"]["Q_bar"]) < 1e-12
    assert rep["resolution"] == {"n_theta": 64, "n_phi": 96}


def test_reports_byte_identical(files):
    a, b = files["dir"] / "a.json", files["dir"] / "b.json"
    for path in (a, b):
        assert main(["trace", "--surface", files["std"], "--res", "32", "--out", str(path)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert (files["dir"] / "a_trajectory.csv").read_bytes() == (files["dir"] / "b_trajectory.csv").read_bytes()


def test_thread_count_does_not_change_results(files):
    outs = []
    for n in (1, 4):
        path = files["dir"] / f"t{n}.json"
        assert main(["sweep", "--config", files["solve"], "--threads", str(n), "--out", str(path)]) == 0
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]


def test_iota_command(files, capsys):
    code, rep, _ = run_json(["iota", "--surface", files["std"], "--res", "32", "--transits", "50"], capsys)
    assert code == 0
    assert abs(rep["result"]["iota_formula"] - 3 ** 0.5) < 1e-6


def test_link_offset_mode(files, capsys):
    cfg = write_json(files["dir"] / "link.json", {"surface": "torus.json", "res": 32, "mode": "offset",
                                                  "T": 5.0, "pairs": 3,
                                                  "field": {"toroidal": 1.0, "poloidal": 0.0}})
    code, rep, _ = run_json(["link", "--config", cfg], capsys)
    assert code == 0 and rep["result"]["mode"] == "offset" and rep["result"]["n_pairs"] == 3


def test_entry_point_runs(files):
    r = subprocess.run([sys.executable, "-m", "surfhel.cli", "basis", "--surface", files["std"], "--res", "16"],
                       capture_output=True, text=True, check=False)
    assert r.returncode == 0
    assert json.loads(r.stdout)["command"] == "basis"
