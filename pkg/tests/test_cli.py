import csv
import subprocess
import sys

import pytest

from pfclus.cli import main

CFG = """
output = "results.csv"
k = 3
seeds = [0, 300]
[dataset]
kind = "NO"
n_clusters = 4
points_per_cluster = 30
[split]
Z = [4]
H = [2, 4]
min_points = 5
"""


@pytest.fixture
def cfg_path(tmp_path):
    p = tmp_path / "exp.toml"
    p.write_text(CFG)
    return p


def test_generate_counts(tmp_path):
    out = tmp_path / "d.csv"
    assert main(["generate", "--syn", "NO", "--clusters", "10", "--per-cluster", "100",
                 "--seed", "0", "--out", str(out)]) == 0
    with out.open() as fh:
        recs = list(csv.DictReader(fh))
    assert len(recs) == 1000
    assert set(recs[0]) == {"x0", "x1", "label"}


def test_generate_with_split(tmp_path):
    out, side = tmp_path / "d.csv", tmp_path / "split.txt"
    rc = main(["generate", "--syn", "O", "--clusters", "4", "--per-cluster", "10", "--out", str(out),
               "--split", "balanced", "--Z", "4", "--H", "2", "--split-out", str(side)])
    assert rc == 0
    lines = side.read_text().splitlines()
    assert len(lines) == 40 and all(len(line.split(",")) == 2 for line in lines)


def test_generate_stdout(capsys):
    assert main(["generate", "--syn", "LO", "--clusters", "2", "--per-cluster", "3"]) == 0
    assert len(capsys.readouterr().out.splitlines()) == 7


def test_run_and_report(cfg_path, tmp_path, capsys):
    out = tmp_path / "results.csv"
    assert main(["run", "--config", str(cfg_path), "--output", str(out)]) == 0
    capsys.readouterr()
    assert main(["report", "--input", str(out), "--group-by", "method,H"]) == 0
    recs = list(csv.DictReader(capsys.readouterr().out.splitlines()))
    assert {(r["method"], r["H"]) for r in recs} == {(m, h) for m in ("pfclus", "kfed", "mfc", "centclus")
                                                    for h in ("2", "4")}
    assert all(r["n"] == "2" for r in recs)


def test_report_panels(cfg_path, tmp_path):
    out = tmp_path / "results.csv"
    main(["run", "--config", str(cfg_path), "--output", str(out)])
    summary = tmp_path / "summary.csv"
    assert main(["report", "--input", str(out), "--output", str(summary),
                 "--panels", str(tmp_path / "panels")]) == 0
    assert summary.exists()
    assert len(list((tmp_path / "panels").glob("*.csv"))) == 3


def test_run_partial_failure_exit(tmp_path):
    p = tmp_path / "bad.toml"
    p.write_text("l = 1\n" + CFG)
    assert main(["run", "--config", str(p), "--output", str(tmp_path / "r.csv")]) == 3


def test_config_error_exit(tmp_path, capsys):
    p = tmp_path / "bad.toml"
    p.write_text('k = "ten"\n[dataset]\nkind = "NO"\n')
    assert main(["run", "--config", str(p)]) == 2
    assert "k:" in capsys.readouterr().err


def test_unknown_flag_exit():
    with pytest.raises(SystemExit) as info:
        main(["run", "--nope"])
    assert info.value.code == 1


def test_validate(cfg_path, capsys):
    assert main(["validate", "--config", str(cfg_path)]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines and all(line.startswith("PASS") for line in lines)


def test_module_entry_point(cfg_path):
    proc = subprocess.run([sys.executable, "-m", "pfclus", "validate", "--config", str(cfg_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0
