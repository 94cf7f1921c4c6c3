import csv
import json
import math

import numpy as np
import pytest

from qsa import cli, verify


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def test_simulate_writes_samples_and_manifest(tmp_path):
    out = tmp_path / "sim"
    args = ["simulate", "--space", "projective", "--t", "0.1", "--dt", "0.01", "--paths", "1000",
            "--seed", "5", "--out", str(out)]
    assert cli.main(args) == 0
    rows = read_csv(out / cli.SAMPLES_NAME)
    assert len(rows) == 1000
    assert list(rows[0]) == ["path_id", "time", "r", "clock", "aI", "aJ", "aK"]
    man = json.loads((out / cli.MANIFEST_NAME).read_text())
    assert man["command"] == "simulate" and man["seed"] == 5
    assert man["content_hash"] == cli.content_hash(man["parameters"])
    assert man["files"] == [cli.SAMPLES_NAME]
    assert (out / cli.MANIFEST_NAME).read_text() == cli.manifest_text(man)

    out2 = tmp_path / "sim2"
    assert cli.main(args[:-1] + [str(out2)]) == 0
    assert (out / cli.SAMPLES_NAME).read_bytes() == (out2 / cli.SAMPLES_NAME).read_bytes()


def test_content_hash_is_git_blob():
    # git hash-object of '{}'
    assert cli.content_hash({}) == "9e26dfeeb6e641a33dae4961196235bdb965b21b"


def test_route_space_mismatch_exits_2(tmp_path, capsys):
    code = cli.main(["simulate", "--space", "flat", "--route", "ambient", "--t", "0.1",
                     "--out", str(tmp_path)])
    assert code == 2
    assert "ambient" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [
    ["charfn", "--space", "flat", "--t", "1", "--lambda", "1,2", "--out", "x"],
    ["charfn", "--space", "flat", "--t", "-1", "--lambda", "1,0,0", "--out", "x"],
    ["density", "--space", "flat", "--t", "1", "--radii", "-1", "--out", "x"],
    ["simulate", "--space", "sphere", "--t", "1", "--out", "x"],
])
def test_bad_arguments_exit_2(argv):
    assert cli.main(argv) == 2


def test_charfn_methods_agree(tmp_path):
    out = tmp_path / "cf"
    code = cli.main(["charfn", "--space", "projective", "--t", "0.5", "--lambda", "1,0,0",
                     "--lambda", "0.3,0.4,0", "--method", "series", "--method", "integral", "--out", str(out)])
    assert code == 0
    rows = read_csv(out / cli.CHARFN_NAME)
    assert len(rows) == 4
    by = {}
    for r in rows:
        by.setdefault((r["lambda_I"], r["lambda_J"]), []).append(float(r["cf_value"]))
    for vals in by.values():
        assert abs(vals[0] - vals[1]) < 1e-6
    assert float(rows[0]["cf_value"]) == pytest.approx(0.76749908905486219, abs=1e-12)


def test_charfn_wrong_method_and_far_lambda(tmp_path):
    assert cli.main(["charfn", "--space", "flat", "--t", "1", "--lambda", "1,0,0", "--method", "series",
                     "--out", str(tmp_path / "a")]) == 2
    assert cli.main(["charfn", "--space", "hyperbolic", "--t", "1", "--lambda", "50,0,0",
                     "--out", str(tmp_path / "b")]) == 0
    val = float(read_csv(tmp_path / "b" / cli.CHARFN_NAME)[0]["cf_value"])
    assert math.isfinite(val) and 0 <= val < 1e-40


def test_density_flat_mass(tmp_path):
    h = 0.01
    radii = np.arange(0, 12 + h / 2, h)
    out = tmp_path / "d"
    arg = ",".join(f"{r:.2f}" for r in radii)
    assert cli.main(["density", "--space", "flat", "--t", "1", "--radii", arg, "--out", str(out)]) == 0
    vals = np.array([float(r["density"]) for r in read_csv(out / cli.DENSITY_NAME)])
    assert np.all(vals >= 0)
    mass = np.trapezoid(4 * np.pi * radii ** 2 * vals, radii)
    assert mass == pytest.approx(1.0, abs=1e-3)


def test_density_hyperbolic_values(tmp_path):
    out = tmp_path / "h"
    assert cli.main(["density", "--space", "hyperbolic", "--t", "1", "--radii", "0,0.5",
                     "--out", str(out)]) == 0
    vals = [float(r["density"]) for r in read_csv(out / cli.DENSITY_NAME)]
    assert vals == pytest.approx([0.10049008162430852, 0.084361356026046469], rel=1e-9)


def test_verify_corruption_hook_fails_criterion(monkeypatch):
    monkeypatch.setenv(verify.CORRUPT_ENV, "hyp_constant")
    res = verify.run_criterion(verify.criterion_4, "quick")
    assert not res.passed
    assert res.line().startswith("[FAIL] criterion 4")
    monkeypatch.delenv(verify.CORRUPT_ENV)
    assert verify.run_criterion(verify.criterion_4, "quick").passed


def test_verify_exit_code_names_failed_criterion(monkeypatch, tmp_path, capsys):
    monkeypatch.setattr(verify, "CRITERIA", [verify.criterion_4, verify.criterion_7])
    monkeypatch.setenv(verify.CORRUPT_ENV, "proj_series")
    code = cli.main(["verify", "--suite", "quick", "--out", str(tmp_path)])
    assert code == 1
    assert "failed criteria: 7" in capsys.readouterr().err
    report = json.loads((tmp_path / cli.REPORT_NAME).read_text())
    assert report["failed"] == ["7"] and report["corruption"] == "proj_series"

    monkeypatch.delenv(verify.CORRUPT_ENV)
    assert cli.main(["verify", "--suite", "quick", "--out", str(tmp_path)]) == 0
