import csv
import io

import numpy as np
import pytest

from lswg import cli
from lswg.cli import COLUMNS, EXIT_INPUT, EXIT_OK, EXIT_SOLVER, ExperimentConfig, InputError, main
from lswg.mesh import GAMMA1, GAMMA2, generate, read_mesh, write_mesh


def body_rows(text):
    """Data rows of a CSV, skipping the '#' metadata header."""
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    return list(csv.reader(io.StringIO("\n".join(lines))))


def run_cli(args, capsys):
    code = main(args)
    out, err = capsys.readouterr()
    return code, out, err


def test_run_cubic_table(capsys):
    code, out, _ = run_cli(
        ["run", "--solution", "s2", "--k2", "10", "--degree", "3", "--mesh", "tri_uniform", "--levels", "3,4,5"], capsys
    )
    assert code == EXIT_OK
    rows = body_rows(out)
    assert rows[0] == COLUMNS
    assert len(rows) == 4
    assert float(rows[-1][COLUMNS.index("l2_rate")]) >= 3.5


def test_single_level_has_empty_rates(capsys):
    code, out, _ = run_cli(["run", "--solution", "s2", "--degree", "2", "--levels", "3"], capsys)
    assert code == EXIT_OK
    rows = body_rows(out)
    assert len(rows) == 2
    row = dict(zip(rows[0], rows[1]))
    assert row["l2_rate"] == "" and row["wlap_rate"] == ""
    assert row["grid_level"] == "3" and row["n_cells"] == "32"


def test_metadata_header(capsys):
    _, out, _ = run_cli(["run", "--levels", "2"], capsys)
    header = [ln for ln in out.splitlines() if ln.startswith("#")]
    text = "\n".join(header)
    for needle in ("# command: lswg run", "tol=", "quadrature: cell order", "wlap_err ="):
        assert needle in text


def test_malformed_mesh_file(tmp_path, capsys):
    bad = tmp_path / "bad.mesh"
    bad.write_text("3 1 3\n0 0\n1 0\n")
    code, _, err = run_cli(["run", "--mesh", f"file:{bad}", "--levels", "1"], capsys)
    assert code == EXIT_INPUT
    assert "error" in err


def test_mesh_file_round_trip_through_run(tmp_path, capsys):
    path = tmp_path / "g.mesh"
    code, _, _ = run_cli(["mesh", "--mesh", "pentagon", "--n", "2", "--out", str(path)], capsys)
    assert code == EXIT_OK
    mesh = read_mesh(path.read_text())
    assert mesh.n_cells == generate("pentagon", 2).n_cells
    code, out, _ = run_cli(["run", "--mesh", f"file:{path}", "--levels", "2"], capsys)
    assert code == EXIT_OK
    assert body_rows(out)[1][1] == "8"
    # generated-mesh run on the same level gives the same errors
    _, out2, _ = run_cli(["run", "--mesh", "pentagon", "--levels", "2"], capsys)
    col = COLUMNS.index("l2_err")
    assert body_rows(out)[1][col] == body_rows(out2)[1][col]


def test_mesh_file_needs_one_level(tmp_path, capsys):
    path = tmp_path / "g.mesh"
    path.write_text(write_mesh(generate("tri_uniform", 1)))
    code, _, _ = run_cli(["run", "--mesh", f"file:{path}", "--levels", "1,2"], capsys)
    assert code == EXIT_INPUT


@pytest.mark.parametrize(
    "args",
    [
        ["run", "--levels", "4,3"],
        ["run", "--levels", "0"],
        ["run", "--k2", "-1"],
        ["run", "--degree", "5"],
        ["run", "--solution", "s7"],
        ["run", "--mesh", "hexagon"],
        ["run", "--solver", "gmres"],
        ["run", "--tol", "0"],
        ["run", "--gamma2", "right"],
        ["mesh", "--n", "0"],
        ["replay", "/nonexistent.csv"],
    ],
)
def test_invalid_input_exit_code(args, capsys):
    assert main(args) == EXIT_INPUT


def test_unparsable_levels_exit_code():
    with pytest.raises(SystemExit) as info:
        main(["run", "--levels", "a,b"])
    assert info.value.code == EXIT_INPUT


def test_invalid_thread_variable(monkeypatch, capsys):
    monkeypatch.setenv("LSWG_THREADS", "zero")
    assert main(["run", "--levels", "1"]) == EXIT_INPUT


def test_config_validation_before_solve():
    with pytest.raises(InputError):
        ExperimentConfig(levels=[]).validate()
    cfg = ExperimentConfig(degree=3, k2=1e6).validate()
    assert (cfg.wg.m, cfg.wg.k2) == (3, 1e6)


def test_oracle_default_and_high_wavenumber(capsys):
    code, out, _ = run_cli(["oracle"], capsys)
    assert code == EXIT_OK
    assert all(ln.split()[0] in ("PASS", "INFO") for ln in out.splitlines() if not ln.startswith("#"))
    code, _, _ = run_cli(["oracle", "--degree", "4", "--mesh", "pentagon", "--n", "2", "--k2", "1e6"], capsys)
    assert code == EXIT_OK


def test_oracle_missing_file(capsys):
    assert main(["oracle", "--mesh", "file:/nonexistent/x.mesh"]) == EXIT_INPUT


def test_oracle_failure_exit_code(monkeypatch, capsys):
    from lswg.verify import OracleReport, OracleResult

    def broken(mesh, config):
        return OracleReport([OracleResult("commutativity", 1.0, 1e-9)])

    monkeypatch.setattr(cli, "oracle_suite", broken)
    code, out, _ = run_cli(["oracle"], capsys)
    assert code == EXIT_SOLVER
    assert "FAIL commutativity" in out


def export_rows(out):
    rows = body_rows(out)
    assert rows[0] == ["x", "y", "u_h", "u_exact", "u_h-u_exact"]
    return np.array(rows[1:], dtype=float)


@pytest.mark.slow
def test_export_s5_error_sits_in_the_layer(capsys):
    # tri_uniform n = 16 is grid level 5
    code, out, _ = run_cli(
        ["export", "--solution", "s5", "--degree", "4", "--k2", "1e6", "--mesh", "tri_uniform", "--levels", "5",
         "--solver", "direct"],
        capsys,
    )
    assert code == EXIT_OK
    data = export_rows(out)
    err = np.abs(data[:, 4])
    in_layer = np.abs(20 * data[:, 0] - 10) <= 2
    assert np.abs(20 * data[np.argmax(err), 0] - 10) <= 2
    # most of the squared error sits in the layer and it decays away from it
    assert (err[in_layer] ** 2).sum() >= 0.9 * (err**2).sum()
    far = np.abs(20 * data[:, 0] - 10) > 6
    assert err[far].max() <= 1e-3 * err.max()


def test_export_polynomial_exact(capsys):
    code, out, _ = run_cli(["export", "--solution", "p2", "--degree", "2", "--levels", "3"], capsys)
    assert code == EXIT_OK
    data = export_rows(out)
    assert len(data) == 32 * 6
    assert np.abs(data[:, 4]).max() <= 1e-8


def test_export_empty_sample_grid(capsys):
    assert main(["export", "--levels", "2", "--points-per-side", "0"]) == EXIT_INPUT


def strip_time(text):
    rows = body_rows(text)
    t = COLUMNS.index("time_ms")
    return [r[:t] + r[t + 1 :] for r in rows]


def test_deterministic_bodies(capsys):
    args = ["run", "--mesh", "tri_figure", "--levels", "2,3", "--degree", "2"]
    _, a, _ = run_cli(args, capsys)
    _, b, _ = run_cli(args, capsys)
    assert strip_time(a) == strip_time(b)
    head = lambda s: [ln for ln in s.splitlines() if ln.startswith("#")]  # noqa: E731
    assert head(a) == head(b)


def test_replay_reproduces(tmp_path, capsys):
    first = tmp_path / "a.csv"
    assert main(["run", "--solution", "s3", "--mesh", "pentagon", "--levels", "1,2", "--k2", "1e6",
                 "--gamma2", "none", "--out", str(first)]) == EXIT_OK
    second = tmp_path / "b.csv"
    assert main(["replay", str(first), "--out", str(second)]) == EXIT_OK
    assert strip_time(first.read_text()) == strip_time(second.read_text())


def test_replay_needs_header(tmp_path, capsys):
    plain = tmp_path / "plain.csv"
    plain.write_text("grid_level\n1\n")
    assert main(["replay", str(plain)]) == EXIT_INPUT


def test_gamma2_none_changes_the_problem(capsys):
    _, a, _ = run_cli(["run", "--levels", "2"], capsys)
    _, b, _ = run_cli(["run", "--levels", "2", "--gamma2", "none"], capsys)
    col = COLUMNS.index("l2_err")
    assert body_rows(a)[1][col] != body_rows(b)[1][col]


def test_mesh_subcommand_tags(capsys):
    _, default, _ = run_cli(["mesh", "--n", "2"], capsys)
    _, none, _ = run_cli(["mesh", "--n", "2", "--gamma2", "none"], capsys)
    assert np.count_nonzero(read_mesh(default).edge_tags == GAMMA2) == 2
    tags = read_mesh(none).edge_tags
    assert np.count_nonzero(tags == GAMMA2) == 0 and np.count_nonzero(tags == GAMMA1) == 8


def test_partial_csv_on_solver_failure(tmp_path, monkeypatch, capsys):
    import lswg.verify as verify
    from lswg.system import SolverError

    real = verify._level_report

    def flaky(level, *args):
        if level == 3:
            raise SolverError("forced failure")
        return real(level, *args)

    monkeypatch.setattr(verify, "_level_report", flaky)
    out = tmp_path / "partial.csv"
    code = main(["run", "--levels", "1,2,3", "--out", str(out)])
    assert code == EXIT_SOLVER
    rows = body_rows(out.read_text())
    assert [r[0] for r in rows[1:]] == ["1", "2"]
    assert "forced failure" in capsys.readouterr().err
