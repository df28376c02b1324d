import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from ltk import cli
from ltk.data import load_fused_csv
from ltk.errors import NumericalError

SUBCOMMANDS = ["simulate", "tune", "dose", "ate", "dist", "herd"]


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli")
    assert cli.run(["simulate", "--n", "120", "--seed", "7", "--out", str(path / "d.csv"),
                    "--alt-out", str(path / "alt.csv"), "--alt-n", "30"]) == 0
    assert cli.run(["simulate", "--n", "120", "--seed", "7", "--treatment", "binary",
                    "--out", str(path / "b.csv")]) == 0
    return path


def test_simulate_writes_dataset(workdir, capsys):
    out = workdir / "s.csv"
    assert cli.run(["simulate", "--n", "500", "--seed", "7", "--out", str(out)]) == 0
    assert load_fused_csv(out).n == 500
    assert "500 rows" in capsys.readouterr().out


def test_simulate_is_byte_identical(tmp_path):
    for name in ("a.csv", "b.csv"):
        cli.run(["simulate", "--n", "50", "--seed", "3", "--kind", "sine", "--out",
                 str(tmp_path / name)])
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_dose_curve(workdir):
    out = workdir / "curve.json"
    assert cli.run(["dose", "--data", str(workdir / "d.csv"), "--estimand", "ate",
                    "--grid", "0:1:9", "--out", str(out)]) == 0
    obj = json.loads(out.read_text())
    assert len(obj["curve"]) == 9
    assert obj["metadata"]["estimand"] == "ate"


def test_dose_is_byte_identical(workdir):
    paths = [workdir / f"c{i}.json" for i in range(2)]
    for p in paths:
        cli.run(["dose", "--data", str(workdir / "d.csv"), "--grid", "0:1:3", "--out", str(p)])
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_tune_then_dose_with_hyper(workdir):
    hyper = workdir / "hp.json"
    assert cli.run(["tune", "--data", str(workdir / "d.csv"), "--out", str(hyper)]) == 0
    hp = json.loads(hyper.read_text())
    out = workdir / "ds.json"
    assert cli.run(["dose", "--data", str(workdir / "d.csv"), "--estimand", "ds",
                    "--alt", str(workdir / "alt.csv"), "--hyper", str(hyper),
                    "--grid", "0:1:3", "--out", str(out)]) == 0
    meta = json.loads(out.read_text())["metadata"]
    assert meta["lambda"] == hp["lambda"] and meta["lambda1"] == hp["lambda1"]


def test_ate_interval(workdir):
    out = workdir / "est.json"
    assert cli.run(["ate", "--data", str(workdir / "b.csv"), "--d", "1", "--folds", "5",
                    "--level", "0.95", "--out", str(out)]) == 0
    obj = json.loads(out.read_text())
    assert obj["ciLower"] <= obj["theta"] <= obj["ciUpper"]
    assert obj["folds"] == 5


def test_dist_and_herd(workdir):
    emb = workdir / "emb.json"
    assert cli.run(["dist", "--data", str(workdir / "d.csv"), "--d", "0.5",
                    "--out", str(emb)]) == 0
    sample = workdir / "h.csv"
    assert cli.run(["herd", "--embedding", str(emb), "--m", "20", "--out", str(sample)]) == 0
    with open(sample) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["y_tilde"] and len(rows) == 21
    direct = workdir / "h2.csv"
    assert cli.run(["herd", "--data", str(workdir / "d.csv"), "--d", "0.5", "--m", "20",
                    "--out", str(direct)]) == 0
    assert direct.read_bytes() == sample.read_bytes()


@pytest.mark.parametrize("command", SUBCOMMANDS)
def test_help_lists_flags(command, capsys):
    with pytest.raises(SystemExit) as exc:
        cli.run([command, "--help"])
    assert exc.value.code == 0
    text = capsys.readouterr().out
    parser = cli.build_parser()
    sub = parser._subparsers._group_actions[0].choices[command]
    for action in sub._actions:
        for flag in action.option_strings:
            assert flag in text


def test_unknown_flag(capsys):
    assert cli.run(["simulate", "--n", "10", "--out", "x.csv", "--bogus"]) == 1
    assert "usage" in capsys.readouterr().err


def test_unknown_command():
    assert cli.run(["frobnicate"]) == 1
    assert cli.run([]) == 1


def test_ds_without_alt(workdir):
    assert cli.run(["dose", "--data", str(workdir / "d.csv"), "--estimand", "ds",
                    "--out", str(workdir / "x.json")]) == 1


def test_ate_on_continuous(workdir):
    assert cli.run(["ate", "--data", str(workdir / "d.csv"), "--out",
                    str(workdir / "x.json")]) == 1


def test_bad_level_and_missing_file(workdir):
    assert cli.run(["ate", "--data", str(workdir / "b.csv"), "--level", "1.5", "--out",
                    str(workdir / "x.json")]) == 1
    assert cli.run(["dose", "--data", str(workdir / "nope.csv"), "--out",
                    str(workdir / "x.json")]) == 1


def test_numerical_error_exit(workdir, monkeypatch):
    def boom(*args, **kwargs):
        raise NumericalError("singular")
    monkeypatch.setattr(cli, "dml_estimate", boom)
    assert cli.run(["ate", "--data", str(workdir / "b.csv"), "--out",
                    str(workdir / "x.json")]) == 2


def test_thread_setting(workdir, monkeypatch):
    seen = []
    monkeypatch.setattr(cli._accel, "set_threads", seen.append)
    monkeypatch.setenv(cli.THREADS_ENV, "3")
    assert cli.run(["simulate", "--n", "20", "--out", str(workdir / "t.csv")]) == 0
    assert cli.run(["simulate", "--n", "20", "--threads", "1", "--out",
                    str(workdir / "t.csv")]) == 0
    assert seen == [3, 1]
    monkeypatch.setenv(cli.THREADS_ENV, "many")
    assert cli.run(["simulate", "--n", "20", "--out", str(workdir / "t.csv")]) == 1


def test_lambda_grid_parsing():
    np.testing.assert_allclose(cli.parse_lambda_grid("1e-4:1:5"), np.logspace(-4, 0, 5))


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "ltk.cli", "simulate", "--n", "10", "--out",
                          str(tmp_path / "d.csv")], capture_output=True, text=True)
    assert res.returncode == 0 and (tmp_path / "d.csv").exists()
