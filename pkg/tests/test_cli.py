import csv
import hashlib
import json
import subprocess
import sys
from fractions import Fraction

import numpy as np
import pytest
from scipy import stats

from walshwalk.catalog import (
    harrison_shepp,
    matrix_perturbed_axis,
    simple_walk,
    symmetric_spider,
)
from walshwalk.cli import main
from walshwalk.distributions import IntDistribution, StateDistribution
from walshwalk.models import AxisChainSpec, MembraneWalkSpec, dump_spec

EXAMPLE_Q = [["1/2", "1/4", "1/4"], ["1/3", "1/3", "1/3"], ["1/6", "1/2", "1/3"]]


@pytest.fixture
def spec_file(tmp_path):
    def write(spec, name="spec.json"):
        path = tmp_path / name
        dump_spec(spec, path)
        return str(path)
    return write


def run(*argv):
    return main([str(a) for a in argv])


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def test_validate_passes_for_harrison_shepp(spec_file, tmp_path, capsys):
    assert run("validate", "--spec", spec_file(harrison_shepp("7/10")), "--out", tmp_path) == 0
    report = read_json(tmp_path / "validate.json")
    assert set(report) == {"B1", "B2", "B3", "B4"} and all(r["passed"] for r in report.values())
    assert "B2: pass" in capsys.readouterr().out


def test_validate_names_failed_lattice_assumption(spec_file, tmp_path, capsys):
    two = IntDistribution({-2: "1/2", 2: "1/2"})
    spec = AxisChainSpec([two], {(x, 1): StateDistribution.point(2, 1) for x in (-1, 0)})
    assert run("validate", "--spec", spec_file(spec), "--out", tmp_path) == 1
    assert not read_json(tmp_path / "validate.json")["A1"]["passed"]
    assert "A1: FAIL" in capsys.readouterr().out


def test_validate_names_trapped_membrane(spec_file, tmp_path, capsys):
    spec = MembraneWalkSpec(1, simple_walk(), simple_walk(),
                            {-1: IntDistribution({-2: 1}), 0: IntDistribution({0: 1}),
                             1: IntDistribution({2: 1})})
    assert run("validate", "--spec", spec_file(spec), "--out", tmp_path) == 1
    assert not read_json(tmp_path / "validate.json")["B2"]["passed"]
    assert "B2: FAIL" in capsys.readouterr().out


def test_params_harrison_shepp(spec_file, tmp_path):
    assert run("params", "--spec", spec_file(harrison_shepp("7/10")), "--out", tmp_path) == 0
    p = read_json(tmp_path / "params.json")
    assert p["kind"] == "membrane" and abs(p["gamma"] - 0.4) < 1e-12
    assert p["drift_coefficient"] == pytest.approx(0.4)


def test_params_symmetric_spider(spec_file, tmp_path):
    assert run("params", "--spec", spec_file(symmetric_spider(3)), "--out", tmp_path) == 0
    assert np.allclose(read_json(tmp_path / "params.json")["weights"], [1 / 3] * 3, atol=1e-9)


def test_params_matrix_axis_gives_stationary_vector(spec_file, tmp_path):
    assert run("params", "--spec", spec_file(matrix_perturbed_axis(EXAMPLE_Q)), "--out", tmp_path) == 0
    Q = np.array([[float(Fraction(q)) for q in row] for row in EXAMPLE_Q])
    vals, vecs = np.linalg.eig(Q.T)
    pi = np.real(vecs[:, np.argmin(np.abs(vals - 1))])
    pi /= pi.sum()
    p = read_json(tmp_path / "params.json")
    assert np.allclose(p["weights"], pi, atol=1e-9)
    assert p["mu"] == pytest.approx(1.0)


def test_params_mc_mode(spec_file, tmp_path):
    assert run("params", "--spec", spec_file(matrix_perturbed_axis(EXAMPLE_Q)), "--mode", "mc",
               "--cycles", 20000, "--out", tmp_path) == 0
    p = read_json(tmp_path / "params.json")
    assert np.all(np.array(p["stderr"]["a"]) > 0)


def test_verify_small_run_and_negative_control(spec_file, tmp_path):
    spec = spec_file(harrison_shepp("7/10"))
    common = ("--spec", spec, "--n", 400, "--paths", 2000, "--seed", 3, "--threads", 1)
    assert run("verify", *common, "--out", tmp_path / "ok") == 0
    report = read_json(tmp_path / "ok" / "report.json")
    assert report["passed"] and "ks_signed_marginal" in report["tests"]
    with open(tmp_path / "ok" / "marginals.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["x_scaled"] and len(rows) == 2001
    assert run("verify", *common, "--reference-gamma", -0.2, "--out", tmp_path / "bad") == 1
    assert not read_json(tmp_path / "bad" / "report.json")["tests"]["occupation_positive"]["passed"]


def test_verify_zero_paths_is_config_error(spec_file, tmp_path):
    assert run("verify", "--spec", spec_file(harrison_shepp("7/10")), "--paths", 0, "--out", tmp_path) == 2


def test_missing_spec_and_bad_mode(tmp_path):
    assert run("params", "--out", tmp_path) == 2
    assert run("params", "--spec", tmp_path / "nope.json", "--out", tmp_path) == 2
    with pytest.raises(SystemExit):
        run("params", "--mode", "fast")


def test_density_gaussian_table(tmp_path):
    assert run("density", "--gamma", 0, "--t", 1, "--out", tmp_path) == 0
    table = np.loadtxt(tmp_path / "density.csv", delimiter=",", skiprows=1)
    assert table.shape == (801, 3)
    assert np.allclose(table[:, 1], stats.norm.pdf(table[:, 0]), atol=1e-15)
    assert abs(np.trapezoid(table[:, 1], table[:, 0]) - 1) < 1e-4


def test_density_fully_skewed(tmp_path):
    assert run("density", "--gamma", 1, "--t", 0.5, "--grid=-3:3:61", "--out", tmp_path) == 0
    table = np.loadtxt(tmp_path / "density.csv", delimiter=",", skiprows=1)
    assert np.all(table[table[:, 0] < 0, 1] == 0)
    assert run("density", "--gamma", 0, "--t", 1, "--grid=bad", "--out", tmp_path) == 2
    assert run("density", "--gamma", 2, "--t", 1, "--out", tmp_path) == 2


def test_manifest_records_config_and_spec_hash(spec_file, tmp_path):
    spec = spec_file(harrison_shepp("7/10"))
    assert run("params", "--spec", spec, "--out", tmp_path) == 0
    m = read_json(tmp_path / "manifest.json")
    data = open(spec, "rb").read()
    assert m["spec_sha1"] == hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()
    git = subprocess.run(["git", "hash-object", spec], capture_output=True, text=True)
    if git.returncode == 0:
        assert m["spec_sha1"] == git.stdout.strip()
    assert m["command"] == "params" and m["outputs"] == ["params.json"] and m["config"]["spec"] == spec


def test_config_file_and_flag_override(spec_file, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"gamma": 0.4, "t": 2.0, "grid": "-1:1:5"}))
    assert run("density", "--config", cfg, "--t", 1.0, "--out", tmp_path) == 0
    m = read_json(tmp_path / "manifest.json")
    assert m["config"]["t"] == 1.0 and m["config"]["gamma"] == 0.4
    assert len(open(tmp_path / "density.csv").read().splitlines()) == 6


def test_config_rejects_unknown_keys(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"gamma": 0.4, "t": 1.0, "burn": 3}))
    assert run("density", "--config", cfg, "--out", tmp_path) == 2
    cfg.write_text(json.dumps({"gamma": "x", "t": 1.0}))
    assert run("density", "--config", cfg, "--out", tmp_path) == 2
    cfg.write_text("[1, 2]")
    assert run("density", "--config", cfg, "--out", tmp_path) == 2


def test_verify_is_bit_identical_across_threads(spec_file, tmp_path):
    spec = spec_file(symmetric_spider(3))
    common = ("--spec", spec, "--n", 200, "--paths", 300, "--seed", 5)
    assert run("verify", *common, "--threads", 1, "--out", tmp_path / "a") in (0, 1)
    assert run("verify", *common, "--threads", 3, "--out", tmp_path / "b") in (0, 1)
    for name in ("report.json", "marginals.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "walshwalk", "density", "--gamma", "0.3", "--t", "1",
                           "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0 and (tmp_path / "density.csv").exists()
