import subprocess
import sys

import numpy as np
import pytest

from fracfps.cli import main, read_config
from fracfps.fem import UniformMesh, assemble_stiffness, load_stiffness, l2_norm
from fracfps.l1 import TimeGrid, solve_scalar
from fracfps.model import Characteristic
from fracfps.verify import quad_stiffness_entry

BASE = ["--alpha1", "0.4", "--alpha2", "0.7", "--s1", "0.3", "--s2", "0.3", "--a", "2"]


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_solve_writes_snapshots(tmp_path, capsys):
    out = tmp_path / "run"
    code, stdout, _ = run(["solve", *BASE, "--grid", "10", "--tau", "0.1", "--T", "1",
                           "--ic1", "chi:0.5:1", "--ic2", "chi:0:0.5", "--out", str(out),
                           "--snapshots", "0.5", "--no-timestamp"], capsys)
    assert code == 0
    assert sorted(p.name for p in out.iterdir()) == ["snap_t0.5.csv", "snap_t1.csv"]
    lines = (out / "snap_t1.csv").read_text().splitlines()
    assert lines[0] == "x,g1,g2" and len(lines) == 10
    assert stdout.startswith("t=1 steps=10 cells=10 ")
    data = np.loadtxt(out / "snap_t1.csv", delimiter=",", skiprows=1)
    assert f"|G1|_L2={l2_norm(data[:, 1], UniformMesh(10))!r}" in stdout


def test_output_is_reproducible_without_timestamp(tmp_path, capsys):
    argv = ["solve", *BASE, "--grid", "8", "--ltau", "4", "--no-timestamp"]
    run([*argv, "--out", str(tmp_path / "a")], capsys)
    run([*argv, "--out", str(tmp_path / "b")], capsys)
    assert (tmp_path / "a" / "snap_t1.csv").read_bytes() == (tmp_path / "b" / "snap_t1.csv").read_bytes()
    run(["solve", *BASE, "--grid", "8", "--ltau", "4", "--out", str(tmp_path / "c")], capsys)
    assert (tmp_path / "c" / "snap_t1.csv").read_text().startswith("# generated ")


def test_decoupled_summary_matches_scalar_runs(capsys):
    code, stdout, _ = run(["solve", "--alpha1", "0.3", "--alpha2", "0.6", "--s1", "0.2", "--s2", "0.7",
                           "--a", "0", "--grid", "16", "--ltau", "8"], capsys)
    assert code == 0
    mesh, grid = UniformMesh(16), TimeGrid.from_steps(1.0, 8)
    n1 = l2_norm(solve_scalar(0.3, 0.2, 0.0, mesh, grid, Characteristic(0.5, 1.0)), mesh)
    n2 = l2_norm(solve_scalar(0.6, 0.7, 0.0, mesh, grid, Characteristic(0.0, 0.5)), mesh)
    parts = dict(tok.split("=") for tok in stdout.split())
    assert float(parts["|G1|_L2"]) == pytest.approx(n1, abs=1e-12)
    assert float(parts["|G2|_L2"]) == pytest.approx(n2, abs=1e-12)


def test_missing_flag_is_usage_error(capsys):
    code, _, err = run(["solve", "--alpha1", "0.4"], capsys)
    assert code == 2
    assert "missing" in err and "usage:" in err


@pytest.mark.parametrize("extra", [
    ["--grid", "8", "--tau", "0.3"],
    ["--grid", "8", "--tau", "0.1", "--ltau", "10"],
    ["--grid", "1", "--ltau", "4"],
    ["--grid", "8", "--ltau", "4", "--ic1", "pow:3"],
    ["--grid", "8", "--ltau", "4", "--snapshots", "0.3"],
])
def test_bad_values_are_usage_errors(extra, capsys):
    assert run(["solve", *BASE, *extra], capsys)[0] == 2


def test_validation_error_lists_all_fields(capsys):
    code, _, err = run(["solve", "--alpha1", "1.5", "--alpha2", "0.7", "--s1", "-1", "--s2", "0.3",
                        "--a", "1", "--grid", "8", "--ltau", "4"], capsys)
    assert code == 2
    assert "alpha1" in err and "s1" in err


def test_m_sets_coupling(capsys):
    a = run(["solve", "--alpha1", "0.4", "--alpha2", "0.7", "--s1", "0.3", "--s2", "0.3",
             "--m", "0.75", "--grid", "8", "--ltau", "4"], capsys)[1]
    b = run(["solve", "--alpha1", "0.4", "--alpha2", "0.7", "--s1", "0.3", "--s2", "0.3",
             "--a", "0.5", "--grid", "8", "--ltau", "4"], capsys)[1]
    assert a == b
    assert run(["solve", *BASE[:-2], "--m", "0.5", "--grid", "8", "--ltau", "4"], capsys)[0] == 2


def test_config_file_and_flag_precedence(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# example 1\nalpha1 = 0.4\nalpha2=0.7  # trailing\ns1 = 0.3\ns2 = 0.3\na = 2\n"
                   "grid = 8\nltau = 4\nlevels = 4, 8\n")
    assert read_config(cfg)["alpha2"] == "0.7"
    from_file = run(["solve", "--config", str(cfg)], capsys)[1]
    from_flags = run(["solve", *BASE, "--grid", "8", "--ltau", "4"], capsys)[1]
    assert from_file == from_flags
    overridden = run(["solve", "--config", str(cfg), "--a", "0"], capsys)[1]
    direct = run(["solve", *BASE[:-1], "0", "--grid", "8", "--ltau", "4"], capsys)[1]
    assert overridden == direct != from_file
    # study-time shares the file; its own key 'levels' is read, 'ltau' is ignored
    assert run(["study-time", "--config", str(cfg)], capsys)[0] == 0


def test_config_rejects_unknown_key(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("alpha1 = 0.4\ncolour = blue\n")
    code, _, err = run(["solve", "--config", str(cfg)], capsys)
    assert code == 2 and "colour" in err
    assert run(["solve", "--config", str(tmp_path / "missing.cfg")], capsys)[0] == 2


def test_study_commands(tmp_path, capsys):
    code, stdout, _ = run(["study-space", *BASE, "--ltau", "10", "--levels", "4,8", "--out", str(tmp_path),
                           "--no-timestamp"], capsys)
    assert code == 0 and "E1,h" in stdout
    csv = (tmp_path / "study_space.csv").read_text().splitlines()
    assert csv[0] == "field,axis,level,error,rate" and len(csv) == 5
    code, stdout, _ = run(["study-time", *BASE, "--grid", "8", "--levels", "4,8"], capsys)
    assert code == 0 and "E2,tau" in stdout
    assert run(["study-time", *BASE, "--grid", "8", "--levels", "4,6"], capsys)[0] == 2
    assert run(["study-space", *BASE, "--tau", "0.3", "--levels", "4,8"], capsys)[0] == 2


def test_table_unknown_id(capsys):
    code, _, err = run(["table", "7"], capsys)
    assert code == 2 and "unknown table" in err
    assert run(["table", "1", "--rows", "4"], capsys)[0] == 2


def test_table_row_runs(tmp_path, capsys):
    code, stdout, _ = run(["table", "4", "--rows", "2", "--out", str(tmp_path)], capsys)
    assert code == 0 and "(0.3,0.4)" in stdout
    assert (tmp_path / "table4_row2.csv").exists()


def test_runtime_failure_exit_code(monkeypatch, capsys):
    import fracfps.cli as cli

    def boom(*a, **k):
        raise FloatingPointError("non-finite solution at step 3")

    monkeypatch.setattr(cli, "solve_transient", boom)
    code, _, err = run(["solve", *BASE, "--grid", "8", "--ltau", "4"], capsys)
    assert code == 3 and "non-finite" in err


def test_dump_matrix(tmp_path, capsys):
    code, stdout, _ = run(["dump-matrix", "--s", "0.5", "--grid", "8"], capsys)
    assert code == 0
    lines = stdout.splitlines()
    assert lines[0] == "# s=0.5 n_cells=8 convention=half-fullplane"
    assert len(lines) == 8
    back = load_stiffness(stdout)
    assert np.array_equal(back.toarray(), assemble_stiffness(UniformMesh(8), 0.5).toarray())
    for k in (0, 2, 6):
        ref = quad_stiffness_entry(1, 1 + k, UniformMesh(8), 0.5).value
        assert back.first_row[k] == pytest.approx(ref, rel=1e-6)
    out = tmp_path / "m.txt"
    assert run(["dump-matrix", "--s", "0.5", "--grid", "8", "--out", str(out)], capsys)[0] == 0
    assert out.read_text() == stdout
    assert run(["dump-matrix", "--s", "1.5", "--grid", "8"], capsys)[0] == 2
    assert run(["dump-matrix", "--s", "0.5"], capsys)[0] == 2


def test_check_subsets(capsys):
    code, stdout, _ = run(["check", "--only", "weights"], capsys)
    assert code == 0
    assert stdout.splitlines() == [l for l in stdout.splitlines() if l.startswith("PASS weights")]
    code, stdout, _ = run(["check", "--only", "dirichlet", "--s", "0.5"], capsys)
    assert code == 0
    rate = float(stdout.split("rate ")[1].split()[0])
    assert rate >= 0.9
    assert run(["check", "--only", "oracle", "--s", "2"], capsys)[0] == 2


def test_check_failure_exit_code(monkeypatch, capsys):
    import fracfps.cli as cli

    monkeypatch.setattr(cli, "check_weights", lambda: (False, "forced"))
    code, stdout, _ = run(["check", "--only", "weights"], capsys)
    assert code == 1 and stdout.startswith("FAIL weights")


def test_full_check_passes(capsys):
    code, stdout, _ = run(["check"], capsys)
    assert code == 0
    assert [l.split()[1].rstrip(":") for l in stdout.splitlines()] == ["weights", "oracle", "dirichlet", "ball"]


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "fracfps", "table", "9"], capture_output=True, text=True)
    assert proc.returncode == 2
