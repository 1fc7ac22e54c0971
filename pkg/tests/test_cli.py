import csv
import io
import json

import numpy as np
import pytest

from fcpd import read_kruskal, read_tensor, write_tensor
from fcpd.cli import EXIT_IO, EXIT_NO_FORM, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, main


@pytest.fixture
def files(tmp_path):
    t, k = tmp_path / "y.fcpt", tmp_path / "truth.fcpk"
    code = main(["generate", "--shape", "5,5,5,5", "--rank", "3",
                 "--collinearity", "0.1,0.2,0.9,0.9", "--snr", "30", "--seed", "4",
                 "--out", str(t), "--truth", str(k)])
    assert code == EXIT_OK
    return t, k


def test_generate_writes_files(files):
    t, k = files
    assert read_tensor(t).shape == (5, 5, 5, 5)
    assert read_kruskal(k).rank == 3


def test_generate_is_byte_identical(tmp_path):
    outs = []
    for name in ("a", "b"):
        t, k = tmp_path / f"{name}.fcpt", tmp_path / f"{name}.fcpk"
        main(["generate", "--shape", "4,5,6", "--rank", "2", "--collinearity", "0.5,0.5,0.5",
              "--snr", "10", "--seed", "7", "--out", str(t), "--truth", str(k)])
        outs.append((t.read_bytes(), k.read_bytes()))
    assert outs[0] == outs[1]


def test_generate_json(tmp_path, capsys):
    main(["generate", "--shape", "4,5,6", "--rank", "2", "--collinearity", "0,0,0",
          "--snr", "10", "--out", str(tmp_path / "a"), "--truth", str(tmp_path / "b"),
          "--format", "json"])
    info = json.loads(capsys.readouterr().out)
    assert abs(info["realized_snr_db"] - 10) < 0.01


@pytest.mark.parametrize("alg", ["fcp", "r1fcp", "als"])
def test_decompose(files, tmp_path, capsys, alg):
    t, k = files
    est = tmp_path / "est.fcpk"
    code = main(["decompose", str(t), "--alg", alg, "--rank", "3", "--rule", "1,2,(3,4)",
                 "--truth", str(k), "--out", str(est), "--format", "json"])
    assert code == EXIT_OK
    info = json.loads(capsys.readouterr().out)
    assert info["msae_db"] > 20
    assert read_kruskal(est).shape == (5, 5, 5, 5)


def test_decompose_table(files, capsys):
    t, _ = files
    assert main(["decompose", str(t), "--rank", "3", "--rule", "1,2,(3,4)", "--refine"]) == EXIT_OK
    assert "fit" in capsys.readouterr().out


def test_advise(capsys):
    assert main(["advise", "--collinearity", "0.1,0.1,0.9,0.9,0.9,0.9"]) == EXIT_OK
    assert capsys.readouterr().out.splitlines()[0] == "1,2,(3,4,5,6)"


def test_advise_from_estimate(files, tmp_path, capsys):
    t, _ = files
    est = tmp_path / "est.fcpk"
    # a poor rule still yields factors good enough to re-advise from
    main(["decompose", str(t), "--rank", "3", "--rule", "(1,2),3,4", "--out", str(est)])
    capsys.readouterr()
    assert main(["advise", "--from", str(est), "--format", "json"]) == EXIT_OK
    info = json.loads(capsys.readouterr().out)
    assert info["rule"] == "1,2,(3,4)"


def test_crib_closed_forms(capsys):
    assert main(["crib", "--collinearity", "0,0.3,0.6,0.9", "--I1", "10",
                 "--format", "json"]) == EXIT_OK
    rows = json.loads(capsys.readouterr().out)
    assert len(rows) == 3
    assert rows[0]["bound"] == pytest.approx(9.74095871847836, rel=1e-12)


def test_crib_order6_and_ortho():
    assert main(["crib", "--order", "6", "--c", "0.9"]) == EXIT_OK
    assert main(["crib", "--ortho", "0.5,0.7", "--rank", "4", "--I1", "6"]) == EXIT_OK


def test_crib_extra_rule(capsys):
    assert main(["crib", "--collinearity", "0.2,0.4,0.6", "--rule", "1,(2,3)",
                 "--format", "json"]) == EXIT_OK
    assert len(json.loads(capsys.readouterr().out)) == 2


def test_bench_outputs(tmp_path, capsys):
    out, summ = tmp_path / "sae.csv", tmp_path / "sum.csv"
    code = main(["bench", "--preset", "example3", "--reps", "1", "--alg", "fcp",
                 "--out", str(out), "--summary", str(summ)])
    assert code == EXIT_OK
    assert "MSAE" in capsys.readouterr().out
    rows = list(csv.DictReader(io.StringIO(out.read_text())))
    assert rows and rows[0]["schema"] == "sae.v1"
    assert summ.read_text().startswith("schema,")


def test_bench_threads_env(monkeypatch, tmp_path):
    monkeypatch.setenv("FCPD_THREADS", "2")
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    main(["bench", "--preset", "example3", "--reps", "2", "--alg", "r1fcp", "--out", str(a)])
    monkeypatch.setenv("FCPD_THREADS", "1")
    main(["bench", "--preset", "example3", "--reps", "2", "--alg", "r1fcp", "--out", str(b)])
    assert a.read_bytes() == b.read_bytes()
    monkeypatch.setenv("FCPD_THREADS", "many")
    assert main(["bench", "--preset", "example3", "--reps", "1"]) == EXIT_USAGE


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["frobnicate"],
        ["generate", "--shape", "4,4", "--rank", "3", "--collinearity", "-0.9,0.1"],
        ["advise"],
        ["crib"],
        ["crib", "--order", "6"],
        ["bench", "--preset", "nope"],
        ["generate", "--shape", "a,b", "--rank", "1", "--collinearity", "0,0"],
    ],
)
def test_usage_errors(argv, capsys):
    assert main(argv) == EXIT_USAGE


def test_decompose_needs_rule(files):
    t, _ = files
    assert main(["decompose", str(t), "--rank", "3"]) == EXIT_USAGE


def test_io_errors(tmp_path):
    assert main(["decompose", str(tmp_path / "missing.fcpt"), "--rank", "2", "--alg", "als"]) == EXIT_IO
    bad = tmp_path / "bad.fcpt"
    bad.write_bytes(b"NOPE")
    assert main(["decompose", str(bad), "--rank", "2", "--alg", "als"]) == EXIT_IO


def test_numeric_error(tmp_path):
    z = tmp_path / "z.fcpt"
    write_tensor(z, np.zeros((3, 3, 3, 3)))
    assert main(["decompose", str(z), "--rank", "2", "--rule", "1,2,(3,4)"]) == EXIT_NUMERIC


def test_no_closed_form():
    assert main(["crib", "--collinearity", "0.1,0.2,0.3", "--rank", "3"]) == EXIT_NO_FORM
