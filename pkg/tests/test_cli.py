import math
import os
import subprocess
import sys

import pytest

from sparselab import cli
from sparselab.experiments import CSV_MAGIC, read_rows
from sparselab.fields import read_csv


def test_parse_number_forms():
    assert cli.parse_number("2^-3") == 0.125
    assert cli.parse_number("1/8") == 0.125
    assert cli.parse_number("0.125") == 0.125
    assert cli.parse_number("inf") == math.inf
    with pytest.raises(cli.ConfigError):
        cli.parse_number("eighth")


def test_parse_range_forms():
    assert cli.parse_range("2^-3..2^-7") == [2.0 ** -k for k in range(3, 8)]
    assert cli.parse_range("1/16..1/4") == [0.0625, 0.125, 0.25]
    assert cli.parse_range("1..6", integer=True) == [1, 2, 3, 4, 5, 6]
    assert cli.parse_range("0.5,0.25") == [0.5, 0.25]
    pts = cli.parse_range("0.1..1:3")
    assert len(pts) == 3 and pts[1] == pytest.approx(math.sqrt(0.1))
    with pytest.raises(cli.ConfigError):
        cli.parse_range("0.1..0.3")
    with pytest.raises(cli.ConfigError):
        cli.parse_range("0..1")


def test_missing_required_flag(capsys):
    code = cli.main(["sharpness", "--d", "2", "--deltas", "2^-3..2^-5"])
    err = capsys.readouterr().err
    assert code == 2
    assert "usage:" in err and "--kind" in err


def test_bad_value_exits_two(capsys):
    assert cli.main(["sharpness", "--kind", "disk", "--deltas", "2^-3..2^-5"]) == 2
    assert "unknown extremizer kind" in capsys.readouterr().err


def test_guard_checked_before_compute(capsys):
    code = cli.main(["sharpness", "--kind", "ball-annulus", "--deltas", "2^-3..2^-9", "--n", "64"])
    assert code == 2
    assert "n_per_axis" in capsys.readouterr().err


def test_config_file_and_override(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# demo\nkind = ball-annulus\ndeltas = 2^-3..2^-5\nn = 128\nd = 3\n")
    args = cli.build_parser().parse_args(["sharpness", "--config", str(cfg), "--d", "2"])
    values = cli.merge_config(args)
    assert values["kind"] == "ball-annulus"
    assert values["d"] == "2"
    assert values["n"] == "128"
    assert values["p"] == "2"


def test_config_unknown_key(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("colour = blue\n")
    assert cli.main(["lp-decay", "--config", str(cfg)]) == 2


def test_average_to_file(tmp_path):
    out = tmp_path / "a.csv"
    code = cli.main(["average", "--f", "ball:0,0:0.8", "--g", "ball:0,0:0.8", "--n", "64", "--out", str(out)])
    assert code == 0
    f = read_csv(out)
    assert f.spec.n == 64 and 0.2 < f.at((0.0, 0.0)) < 0.35


def test_sparse_check_bit_identical(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    args = ["sparse-check", "--d", "1", "--suite", "random4", "--p", "2", "--q", "2", "--r", "2"]
    assert cli.main(args + ["--out", str(a)]) in (0, 1)
    assert cli.main(args + ["--out", str(b), "--threads", "1"]) in (0, 1)
    assert a.read_bytes() == b.read_bytes()
    text = a.read_text().splitlines()
    assert text[0] == CSV_MAGIC
    assert len(read_rows(a)) == 8


def test_console_script_runs():
    env = dict(os.environ, SPARSELAB_THREADS="1")
    res = subprocess.run([sys.executable, "-m", "sparselab.cli", "lp-decay", "--ks", "1..3", "--suite-size", "1",
                          "--n", "1024"], capture_output=True, text=True, env=env, timeout=300)
    assert res.returncode in (0, 1), res.stderr
    assert res.stdout.startswith(CSV_MAGIC)
    assert "PASS" in res.stderr or "FAIL" in res.stderr


@pytest.mark.slow
def test_sharpness_example_exits_zero(tmp_path):
    out = tmp_path / "s.csv"
    code = cli.main(["sharpness", "--kind", "ball-annulus", "--d", "2", "--deltas", "2^-3..2^-7",
                     "--p", "2", "--q", "2", "--r", "2", "--out", str(out)])
    assert code == 0
    assert len(read_rows(out)) == 5
