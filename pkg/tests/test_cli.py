import json

import numpy as np
import pytest

from platevem.analysis import eta_field, nondimensionalize
from platevem.assembly import assemble
from platevem.cli import EXIT_INPUT, EXIT_NUMERICAL, EXIT_OK, cli_main
from platevem.eigensolver import dense_reference
from platevem.mesh import read_mesh


def test_mesh_command_writes_valid_file(tmp_path, capsys):
    out = tmp_path / "m.pvem"
    assert cli_main(["mesh", "--family", "t3", "--N", "4", "--domain", "square", "--out", str(out)]) == EXIT_OK
    mesh = read_mesh(out)
    mesh.validate()
    assert mesh.n_cells == 32
    assert "wrote" in capsys.readouterr().out


def test_solve_prints_signed_eigenvalues(tmp_path, capsys):
    out = tmp_path / "m.pvem"
    cli_main(["mesh", "--family", "T3", "--N", "4", "--out", str(out)])
    capsys.readouterr()
    code = cli_main(["solve", "--mesh", str(out), "--k", "2", "--eta", "eta3", "--bc", "clamped", "--nev", "4"])
    assert code == EXIT_OK
    lines = capsys.readouterr().out.strip().splitlines()[2:]
    lam = np.array([float(l.split()[1]) for l in lines])
    mags = [float(l.split()[3]) for l in lines]
    assert len(lam) == 4 and np.any(lam < 0)
    assert mags == sorted(mags)
    ref, _, _ = dense_reference(assemble(read_mesh(out), 2, eta_field("eta3")))
    np.testing.assert_allclose(lam, ref[:4], rtol=1e-7)
    np.testing.assert_allclose(mags, np.abs(nondimensionalize(ref[:4])), atol=1e-6)


def test_study_writes_table_and_report(tmp_path, capsys):
    code = cli_main(["study", "--preset", "table1-k2-hex", "--N", "4,8,16", "--out-dir", str(tmp_path)])
    assert code == EXIT_OK
    table = (tmp_path / "table1-k2-hex.txt").read_text()
    report = json.loads((tmp_path / "table1-k2-hex.json").read_text())
    assert "Extrap." in table and table == capsys.readouterr().out
    assert len(report["records"]) == 12 and len(report["fits"]) == 4
    assert report["config"]["Ns"] == [4, 8, 16]


def test_study_overrides_and_name(tmp_path):
    code = cli_main(
        ["study", "--family", "T3", "--N", "4,8", "--eta", "eta3", "--nev", "1", "--branch", "negative",
         "--out-dir", str(tmp_path), "--name", "shear"]
    )
    assert code == EXIT_OK
    report = json.loads((tmp_path / "shear.json").read_text())
    assert all(r["lambda"] < 0 for r in report["records"])


def test_export_command(tmp_path, capsys):
    out = tmp_path / "mode.vtk"
    assert cli_main(["export", "--family", "T2", "--N", "4", "--index", "2", "--out", str(out)]) == EXIT_OK
    assert "buckling mode 2" in out.read_text().splitlines()[1]


@pytest.mark.parametrize(
    "argv",
    [
        ["mesh", "--family", "T9", "--N", "4", "--out", "x"],
        ["mesh", "--family", "T3", "--N", "1", "--out", "x"],
        ["solve", "--mesh", "/nonexistent/file.pvem"],
        ["solve", "--family", "T3", "--k", "1"],
        ["solve", "--family", "T3", "--bc", "hinged"],
        ["solve", "--family", "T2", "--domain", "lshape"],
        ["study", "--preset", "table1-k2-hex", "--N", "8,12,16"],
        ["study", "--N", "a,b"],
        ["export", "--family", "T3", "--index", "0", "--out", "x"],
        ["frobnicate"],
        [],
        ["solve", "--family", "T3", "--unknown-flag"],
    ],
)
def test_input_errors_exit_one(argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert cli_main(argv) == EXIT_INPUT


def test_numerical_failures_exit_two(tmp_path):
    assert cli_main(["solve", "--family", "T3", "--N", "4", "--bc", "free"]) == EXIT_NUMERICAL
    assert cli_main(["study", "--family", "T3", "--N", "4,8", "--bc", "free", "--out-dir", str(tmp_path)]) == EXIT_NUMERICAL
    assert cli_main(["solve", "--family", "T3", "--N", "2", "--nev", "4"]) == EXIT_NUMERICAL
