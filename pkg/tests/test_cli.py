"""Command-line front end: reports, exit codes and reproducibility."""

import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from gwlimits.cli import main
from gwlimits.fileio import export_csv, format_gaussian
from gwlimits.gw import sample_gaussian
from gwlimits.harness import P_REF, Q_REF
from gwlimits.rng import make_rng


@pytest.fixture
def files(tmp_path):
    (tmp_path / "P.txt").write_text(format_gaussian(P_REF))
    (tmp_path / "Q.txt").write_text(format_gaussian(Q_REF))
    r = make_rng(1)
    export_csv(sample_gaussian(P_REF, 300, r), tmp_path / "x.csv")
    export_csv(sample_gaussian(Q_REF, 200, r), tmp_path / "y.csv")
    return tmp_path


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_dist(files, capsys):
    code, out, err = run(["dist", "--input", files / "P.txt", "--ref", files / "Q.txt", "--seed", 1], capsys)
    assert code == 0
    assert json.loads(out)["result"]["gw2"] == pytest.approx(1.25736, abs=5e-6)
    assert "gw2 = 1.25736" in err


def test_default_seed_is_printed(files, capsys):
    code, _, err = run(["dist", "--input", files / "P.txt", "--ref", files / "Q.txt"], capsys)
    assert code == 0
    assert "seed: 20240101" in err


@pytest.mark.parametrize(
    "cmd",
    [
        ["estimate", "--ref", "Q.txt"],
        ["ci", "--ref", "Q.txt"],
        ["ci", "--other", "y.csv"],
        ["test", "--ref", "Q.txt", "--null-draws", "2000"],
        ["test", "--other", "y.csv", "--null-draws", "2000"],
        ["test", "--ref", "Q.txt", "--mode", "neighborhood", "--delta", "3"],
        ["bootstrap", "--ref", "Q.txt", "--b-reps", "200"],
        ["bootstrap", "--ref", "Q.txt", "--scheme", "m-of-n", "--b-reps", "200"],
    ],
)
def test_commands_are_reproducible(files, capsys, cmd):
    argv = [cmd[0], "--input", files / "x.csv"] + [files / c if c.endswith((".txt", ".csv")) else c for c in cmd[1:]]
    outs = []
    for _ in range(2):
        code = main([str(a) for a in argv + ["--seed", "5", "--out", files / "r.json"]])
        capsys.readouterr()
        assert code == 0
        outs.append((files / "r.json").read_bytes())
    assert outs[0] == outs[1]
    assert "seconds" not in outs[0].decode()


def test_protein_synthetic_table(tmp_path, capsys):
    table = tmp_path / "t.csv"
    code, out, _ = run(
        ["protein", "--synthetic", 12, "--n", 40, "--shifted", 2, "--seed", 3, "--null-draws", 5000, "--table", table],
        capsys,
    )
    assert code == 0
    rows = list(csv.DictReader(table.open()))
    assert len(rows) == 12
    assert set(rows[0]) == {"site", "n", "b_factor", "statistic", "p_value", "decision"}
    assert json.loads(out)["result"]["rejected"] >= 2


def test_protein_bundle(tmp_path, capsys):
    r = make_rng(2)
    sites = [{"name": "s1", "samples": r.standard_normal((30, 3)).tolist(), "ref_mean": [0, 0, 0], "b_factor": 1.0}]
    (tmp_path / "b.json").write_text(json.dumps({"sites": sites}))
    code, out, _ = run(["protein", "--input", tmp_path / "b.json", "--seed", 1, "--null-draws", 2000], capsys)
    assert code == 0
    assert json.loads(out)["result"]["sites"][0]["site"] == "s1"


def test_parse_error_exit_code(tmp_path, capsys):
    (tmp_path / "bad.csv").write_text("x1,x2\n1,2\n3\n")
    (tmp_path / "Q.txt").write_text(format_gaussian(Q_REF))
    code, _, err = run(["estimate", "--input", tmp_path / "bad.csv", "--ref", tmp_path / "Q.txt", "--seed", 1], capsys)
    assert code == 1
    assert "line 3" in err


def test_missing_argument_exit_code(capsys):
    code, _, _ = run(["ci", "--seed", 1], capsys)
    assert code == 1


def test_unknown_flag_exit_code(capsys):
    with pytest.raises(SystemExit) as info:
        main(["dist", "--bogus"])
    assert info.value.code == 1


def test_degenerate_exit_code(tmp_path, capsys):
    x = np.zeros((20, 2))
    x[:, 0] = np.arange(20)
    export_csv(x, tmp_path / "flat.csv")
    (tmp_path / "Q.txt").write_text(format_gaussian(Q_REF))
    code, _, _ = run(["ci", "--input", tmp_path / "flat.csv", "--ref", tmp_path / "Q.txt", "--seed", 1], capsys)
    assert code == 2


def test_near_null_exit_code(tmp_path, capsys):
    export_csv(sample_gaussian(P_REF, 50, make_rng(3)), tmp_path / "x.csv")
    code, _, _ = run(["ci", "--input", tmp_path / "x.csv", "--other", tmp_path / "x.csv", "--seed", 1], capsys)
    assert code == 2


def test_timing_flag(files, capsys):
    code, out, _ = run(["mc-clt", "--theorem", "one-sample", "--n", 200, "--reps", 200, "--seed", 1, "--timing"], capsys)
    assert code == 0
    assert "seconds" in out


def test_console_script(files):
    res = subprocess.run(
        [sys.executable, "-m", "gwlimits.cli", "dist", "--input", str(files / "P.txt"), "--ref", str(files / "Q.txt"), "--seed", "1"],
        capture_output=True,
        text=True,
    )
    assert res.returncode == 0
    assert json.loads(res.stdout)["command"] == "dist"
