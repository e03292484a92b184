import csv
import io
import json
import os
import subprocess
import sys
from pathlib import Path

import pytest

from weylglue import cli

CONFIGS = Path(__file__).resolve().parents[1] / "demos" / "configs"


def run_cli(*argv, env_threads=None):
    env = dict(os.environ)
    if env_threads is not None:
        env["WEYL_GLUE_THREADS"] = str(env_threads)
    return subprocess.run([sys.executable, "-m", "weylglue", *argv],
                          capture_output=True, text=True, env=env, timeout=600)


def test_coeffs_table(capsys):
    assert cli.main(["coeffs", "--t", "2,1.5,1.05"]) == 0
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    assert [row["t"] for row in rows] == ["2.0", "1.5", "1.05"]
    assert float(rows[0]["C2"]) == pytest.approx(8.4615, abs=5e-4)
    assert float(rows[0]["C1"]) == pytest.approx(float(rows[0]["C0"]) / 2.0)
    assert float(rows[2]["ratio"]) == pytest.approx(float(rows[2]["C2"]) / float(rows[2]["C2_asymptotic"]))


def test_coeffs_uses_crlf_rows(tmp_path):
    out = tmp_path / "c.csv"
    assert cli.main(["coeffs", "--t", "2", "--out", str(out)]) == 0
    assert out.read_bytes().count(b"\r\n") == 2


@pytest.mark.parametrize("argv", [
    ["coeffs", "--t", ""],
    ["coeffs", "--t", "0.5"],
    ["coeffs", "--t", "abc"],
    ["verify", "--suite", "nonsense"],
    ["verify", "--tol", "no.such.check=1"],
    ["verify", "--tol", "tensor.round_trip"],
])
def test_invalid_input_exits_with_two(argv):
    assert cli.main(argv) == 2


def test_config_rejects_unknown_and_duplicate_keys(tmp_path):
    unknown = tmp_path / "u.conf"
    unknown.write_text("t = 2\ncolour = blue\n")
    assert cli.main(["coeffs", "--config", str(unknown)]) == 2
    duplicate = tmp_path / "d.conf"
    duplicate.write_text("t = 2\nt = 3\n")
    assert cli.main(["coeffs", "--config", str(duplicate)]) == 2


def test_glue_rejects_thick_neck(tmp_path):
    conf = tmp_path / "g.conf"
    conf.write_text("a = 1e-3\ngamma = 5e-3\nneck = false\n")
    assert cli.main(["glue", "--config", str(conf)]) == 2


def test_failed_check_exits_with_one(tmp_path, capsys):
    assert cli.main(["verify", "--suite", "tensor", "--tol", "tensor.round_trip=0"]) == 1
    report = json.loads(capsys.readouterr().out)
    assert not report["passed"]
    assert report["failed"] >= 1
    assert not report["suites"]["tensor"][0]["passed"]


def test_verify_report_is_identical_across_thread_caps():
    one = run_cli("verify", "--seed", "3", env_threads=1)
    four = run_cli("verify", "--seed", "3", env_threads=4)
    assert one.returncode == four.returncode == 0
    assert one.stdout == four.stdout
    report = json.loads(one.stdout)
    assert report["seed"] == 3
    records = [check for checks in report["suites"].values() for check in checks]
    assert len(records) == report["checks"]
    assert all(check["anchor"] for check in records)


def test_glue_self_dual_config_is_indeterminate(tmp_path):
    out = tmp_path / "sd.json"
    assert cli.main(["glue", "--config", str(CONFIGS / "self_dual.conf"), "--out", str(out)]) == 0
    report = json.loads(out.read_text())
    assert report["sign"] == "indeterminate"
    assert report["seed"] == 11


def test_glue_quotient_config_records_near_fixed_warning(tmp_path):
    out = tmp_path / "q.json"
    assert cli.main(["glue", "--config", str(CONFIGS / "quotient.conf"), "--out", str(out)]) == 0
    report = json.loads(out.read_text())
    assert report["sign"] == "negative"
    assert any("NearFixedPointWarning" in message for message in report["warnings"])
    assert report["quotient_remainders"]


@pytest.mark.slow
def test_glue_generic_config_is_negative(tmp_path):
    out = tmp_path / "g.json"
    assert cli.main(["glue", "--config", str(CONFIGS / "generic.conf"), "--out", str(out)]) == 0
    report = json.loads(out.read_text())
    assert report["sign"] == "negative"
    energy = report["energy_report"]
    assert energy["consistent"]
    assert energy["neck_correction"] != 0.0
