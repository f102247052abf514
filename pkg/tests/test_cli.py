import json
import os

import pandas as pd

from sketchlab import cli
from sketchlab.utils.matrix_io import read_matrix, sidecar_path


def test_gen_writes_matrix_and_sidecar(tmp_path):
    path = str(tmp_path / "svd.sklb")
    assert cli.main(["gen", "--kind", "svd", "--n", "32", "--r", "4", "--seed", "5", "-o", path]) == cli.EXIT_OK
    assert read_matrix(path).shape == (32, 32)
    with open(sidecar_path(path)) as fp:
        sidecar = json.load(fp)
    assert sidecar["kind"] == "svd" and sidecar["seed"] == 5 and sidecar["params"] == {"n": 32, "r": 4}


def test_approx_on_a_generated_matrix(tmp_path):
    path = str(tmp_path / "m.sklb")
    cli.main(["gen", "--kind", "svd", "--n", "64", "--r", "4", "-o", path])
    out = str(tmp_path / "report.json")
    code = cli.main(["approx", "--matrix", path, "--multiplier", "3-ASPH", "--l", "16", "--tau", "1e-6",
                     "--trials", "3", "--seed", "1", "-o", out, "--expect_success"])
    assert code == cli.EXIT_OK
    with open(out) as fp:
        report = json.load(fp)
    assert report["success_rate"] == 1.0 and report["seeds"] == [1, 0, 3]


def test_approx_reports_failed_trials(tmp_path):
    code = cli.main(["approx", "--trials", "2", "--tau", "0", "--l", "2", "--expect_success"])
    assert code == cli.EXIT_VIOLATION


def test_recursive_with_csv_report(tmp_path):
    out = str(tmp_path / "recursive.csv")
    code = cli.main(["recursive", "--trials", "2", "--blocks", "8,8,16,32,64,128", "--tau", "1e-6", "-o", out,
                     "--format", "csv", "--expect_success"])
    assert code == cli.EXIT_OK
    assert len(pd.read_csv(out)) == 2
    assert cli.main(["recursive", "--trials", "1", "--blocks", "8,8,16", "--tau", "1e-6"]) == cli.EXIT_VIOLATION


def test_recursive_defaults_to_doubling_blocks(tmp_path):
    out = str(tmp_path / "recursive.json")
    code = cli.main(["recursive", "--trials", "2", "--tau", "1e-6", "-o", out, "--expect_success"])
    assert code == cli.EXIT_OK
    with open(out) as fp:
        report = json.load(fp)
    assert report["config"]["block_sizes"] == "doubling"
    assert all(t["l_used"] in (8, 16, 32, 64, 128, 256) for t in report["trials"])


def test_audit_and_norms():
    assert cli.main(["audit", "--n", "128"]) == cli.EXIT_OK
    assert cli.main(["mc-norms", "--m", "60", "--n", "30", "--trials", "100"]) == cli.EXIT_OK
    assert cli.main(["mc-norms", "--m", "40", "--n", "40", "--trials", "100"]) == cli.EXIT_OK


def test_audit_csv(tmp_path):
    out = str(tmp_path / "audit.csv")
    assert cli.main(["audit", "--n", "64", "--families", "AH,ASPH", "-o", out]) == cli.EXIT_OK
    assert list(pd.read_csv(out)["family"]) == ["AH", "ASPH"]


def test_lsr_command(tmp_path):
    out = str(tmp_path / "lsr.json")
    assert cli.main(["lsr", "--m", "512", "--d", "5", "--trials", "50", "-o", out]) == cli.EXIT_OK
    assert os.path.exists(out)
    assert cli.main(["lsr", "--m", "512", "--d", "5", "--k", "1", "--trials", "50", "--sketch", "gaussian",
                     "--primal"]) == cli.EXIT_VIOLATION


def test_usage_errors():
    assert cli.main([]) == cli.EXIT_USAGE
    assert cli.main(["approx", "--trials", "many"]) == cli.EXIT_USAGE
    assert cli.main(["bench", "--table", "12"]) == cli.EXIT_USAGE
    assert cli.main(["approx", "--multiplier", "hadamard-ish", "--trials", "1"]) != cli.EXIT_OK
