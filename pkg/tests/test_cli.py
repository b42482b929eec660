import csv

import pytest

from cptr.cli import EXIT_CONFIG, EXIT_FAILURES, EXIT_OK, main

CONFIG = """
[scenario small]
methods = cpr-direct, cptr3-amg
grids = 4x4
pe = 1e2, 1e-2
"""


def _generate(tmp_path, *extra):
    assert main(["generate", "--grid", "5x5", "--pe", "10", "--out", str(tmp_path), "--stem", "g", *extra]) == EXIT_OK
    return [f"--matrix={tmp_path / 'g.mtx'}", f"--layout={tmp_path / 'g.layout'}", f"--rhs={tmp_path / 'g.rhs'}"]


def _iterations(out):
    line = next(ln for ln in out.splitlines() if ln.startswith("iterations"))
    return int(line.split()[1])


def test_generate_then_solve_matches_synthetic(tmp_path, capsys):
    files = _generate(tmp_path)
    assert (tmp_path / "g.states").exists()
    capsys.readouterr()
    assert main(["solve", *files, "--method", "cptr3-amg", "--history", str(tmp_path / "h.csv")]) == EXIT_OK
    from_files = _iterations(capsys.readouterr().out)
    assert main(["solve", "--grid", "5x5", "--pe", "10", "--method", "cptr3-amg"]) == EXIT_OK
    assert _iterations(capsys.readouterr().out) == from_files
    assert len((tmp_path / "h.csv").read_text().splitlines()) == from_files + 2


def test_solve_not_converged(capsys):
    assert main(["solve", "--grid", "6x6", "--method", "ilu0", "--max-iter", "2"]) == EXIT_FAILURES
    assert "converged false" in capsys.readouterr().out


@pytest.mark.parametrize("argv", [
    ["solve", "--grid", "3x3", "--method", "bogus"],
    ["solve", "--grid", "3x3", "--tol", "1.5"],
    ["solve", "--matrix", "nowhere.mtx", "--layout", "x", "--rhs", "y"],
    ["solve", "--matrix", "nowhere.mtx"],
    ["sweep", "no-such-config.ini"],
])
def test_configuration_errors(argv, capsys):
    assert main(argv) == EXIT_CONFIG
    assert "error" in capsys.readouterr().err


def test_bad_grid_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["solve", "--grid", "ten"])
    assert exc.value.code == 2


def test_sweep_and_report(tmp_path, capsys):
    cfg = tmp_path / "exp.ini"
    cfg.write_text(CONFIG)
    out = tmp_path / "out"
    assert main(["sweep", str(cfg), "--output-dir", str(out), "--format", "csv", "--no-timing"]) == EXIT_OK
    text = capsys.readouterr().out
    rows = list(csv.DictReader(text.splitlines()))
    assert len(rows) == 4 and "setup_time" not in rows[0]
    assert all(r["converged"] == "true" for r in rows)
    assert main(["report", str(out / "iterations.csv"), "--format", "text"]) == EXIT_OK
    assert "cptr3-amg" in capsys.readouterr().out
    assert main(["report", str(out / "iterations.csv"), "--cv"]) == EXIT_OK
    cv = list(csv.DictReader(capsys.readouterr().out.splitlines()))
    assert {r["method"] for r in cv} == {"cpr-direct", "cptr3-amg"}
    dest = tmp_path / "copy.csv"
    assert main(["report", str(out / "iterations.csv"), "--format", "csv", "--output", str(dest)]) == EXIT_OK
    assert dest.read_text() == (out / "iterations.csv").read_text()


def test_sweep_with_failures_exit_code(tmp_path, capsys):
    cfg = tmp_path / "exp.ini"
    cfg.write_text("[scenario gone]\nsource = files\nmatrix = a.mtx\nlayout = a.layout\nrhs = a.rhs\nmethods = ilu0\n")
    assert main(["sweep", str(cfg)]) == EXIT_FAILURES
    assert "FileNotFoundError" in capsys.readouterr().out


def test_spectral_full_dense(tmp_path, capsys):
    assert main(["spectral", "--grid", "4x4", "--pe", "1", "--out", str(tmp_path)]) == EXIT_OK
    for name in ("B_PP", "C_TT"):
        lines = (tmp_path / f"{name}.csv").read_text().splitlines()
        assert lines[0] == "index,real,imag"
        assert len(lines) == 17
    assert "verdict" in capsys.readouterr().out


def test_spectral_single_block_and_mode(tmp_path):
    assert main(["spectral", "--grid", "4x4", "--block", "C_TT", "--mode", "extremal", "--out", str(tmp_path)]) == EXIT_OK
    assert not (tmp_path / "B_PP.csv").exists()
    assert (tmp_path / "C_TT.csv").read_text().splitlines()[0] == "quantity,value"
    assert main(["spectral", "--grid", "4x4", "--method", "cpr-direct", "--block", "C_TT",
                 "--out", str(tmp_path)]) == EXIT_CONFIG
