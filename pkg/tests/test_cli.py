"""CLI surface: grammar, exit codes, JSON/CSV/VTK serialization."""

import json
import math

import numpy as np
import pytest

from infsup_lab import cli
from infsup_lab.linalg import SingularMatrix

SUBCOMMANDS = ("stokes", "convergence", "infsup", "locking", "weakbc",
               "selftest")


def run(args, tmp_path=None, json_out=False):
    """main() plus the parsed JSON document when requested."""
    if json_out:
        path = tmp_path / "out.json"
        code = cli.main(list(args) + ["--json", str(path)])
        return code, json.loads(path.read_text())
    return cli.main(list(args))


# --- grammar and exit codes -----------------------------------------------

@pytest.mark.parametrize("sub", SUBCOMMANDS)
def test_help_mentions_defaults(sub, capsys):
    with pytest.raises(SystemExit) as exc:
        cli.build_parser().parse_args([sub, "--help"])
    assert exc.value.code == 0
    assert "default" in capsys.readouterr().out


def test_no_subcommand_is_usage_error():
    assert cli.main([]) == 2


@pytest.mark.parametrize("argv", [
    ["stokes", "--method", "p3p2"],                      # unknown method
    ["stokes", "--method", "taylor-hood", "--eps", "0.1"],
    ["stokes", "--method", "th", "--n", "0"],
    ["stokes", "--method", "bp", "--eps", "-1"],
    ["convergence", "--method", "th", "--ns", "8,16"],   # needs >= 3
    ["convergence", "--method", "th", "--ns", "8,x,32"],
    ["infsup", "--pair", "p2p2"],
    ["locking", "--lambdas", ""],
    ["locking", "--lambdas", "1e2,-5"],
    ["locking", "--method", "multiplier", "--grad-div", "--lambdas", "0.5"],
    ["weakbc", "--method", "nitsche", "--trace", "p2"],
    ["weakbc", "--method", "bh", "--alpha", "-0.25"],
])
def test_usage_errors_exit_2(argv, capsys):
    assert cli.main(argv) == 2


def test_expected_singular_pair_exits_0(tmp_path):
    code, doc = run(["stokes", "--method", "p1p1-plain", "--n", "4"],
                    tmp_path, json_out=True)
    assert code == 0
    assert doc["status"] == "singular"
    assert "error" in doc["results"]


def test_unexpected_numerical_failure_exits_1(tmp_path, monkeypatch, capsys):
    def blow_up(config):
        raise SingularMatrix("synthetic breakdown")
    monkeypatch.setitem(cli._RUNNERS, "infsup", blow_up)
    code, doc = run(["infsup", "--pair", "th", "--n", "2"],
                    tmp_path, json_out=True)
    assert code == 1
    assert doc["status"] == "fail"
    assert "synthetic breakdown" in capsys.readouterr().err


def test_bad_thread_env_exits_2(monkeypatch):
    monkeypatch.setenv("INFSUP_LAB_THREADS", "many")
    assert cli.main(["infsup", "--pair", "p1p0", "--n", "2"]) == 2
    monkeypatch.setenv("INFSUP_LAB_THREADS", "0")
    assert cli.main(["infsup", "--pair", "p1p0", "--n", "2"]) == 2


# --- JSON ------------------------------------------------------------------

def test_json_document_shape(tmp_path):
    code, doc = run(["infsup", "--pair", "th", "--n", "2"],
                    tmp_path, json_out=True)
    assert code == 0
    assert set(doc) == {"config", "results", "status", "version", "timestamp"}
    assert doc["status"] == "ok"
    assert doc["version"]
    assert doc["config"]["subcommand"] == "infsup"
    assert doc["config"]["pair"] == "taylor-hood"       # alias resolved
    assert doc["results"]["beta"] > 0.3
    assert len(doc["results"]["sigma"]) == doc["results"]["numerical_rank"] \
        + doc["results"]["kernel_dim_pressure"]


def test_json_floats_carry_17_significant_digits(tmp_path):
    path = tmp_path / "out.json"
    cli.main(["stokes", "--method", "gls", "--n", "2", "--json", str(path)])
    text = path.read_text()
    assert format(math.sqrt(2.0) / 2.0, ".17g") in text   # the h entry


def test_json_deterministic_apart_from_timestamp(tmp_path):
    path = tmp_path / "out.json"
    argv = ["infsup", "--pair", "p1p1", "--n", "2", "--json", str(path)]
    cli.main(argv)
    first = path.read_text()
    cli.main(argv)
    second = path.read_text()
    strip = lambda t: [l for l in t.splitlines() if "timestamp" not in l]
    assert strip(first) == strip(second)


def test_nan_serializes_as_null(tmp_path):
    # a singular locking run reports NaN norms; JSON must stay parseable
    code, doc = run(["locking", "--method", "multiplier", "--gamma-space",
                     "continuous", "--lambdas", "1e6", "--n", "4"],
                    tmp_path, json_out=True)
    assert code == 0
    assert doc["status"] == "singular"
    row = doc["results"]["reports"][0]
    assert row["solve_ok"] is False
    assert row["u_h1_norm"] is None


# --- CSV -------------------------------------------------------------------

def test_stokes_csv_header_and_row(tmp_path):
    path = tmp_path / "errs.csv"
    assert cli.main(["stokes", "--method", "p1p1-loss", "--n", "4",
                     "--csv", str(path)]) == 0
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "h,err_u_l2,err_u_h1,err_p_l2"
    assert len(lines) == 2
    h = float(lines[1].split(",")[0])
    assert abs(h - math.sqrt(2.0) / 4.0) < 1e-15


def test_convergence_csv_levels(tmp_path):
    path = tmp_path / "conv.csv"
    assert cli.main(["convergence", "--method", "gls", "--ns", "2,4,8",
                     "--csv", str(path)]) == 0
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "level,h,err_u_l2,err_u_h1,err_p_l2"
    assert len(lines) == 4
    hs = [float(l.split(",")[1]) for l in lines[1:]]
    assert hs == sorted(hs, reverse=True)


def test_locking_sweep_cardinality(tmp_path, capsys):
    path = tmp_path / "sweep.csv"
    code, doc = run(["locking", "--method", "plain",
                     "--lambdas", "1e2,1e4,1e6", "--n", "4",
                     "--csv", str(path)], tmp_path, json_out=True)
    assert code == 0
    assert len(doc["results"]["reports"]) == 3
    assert len(path.read_text().strip().splitlines()) == 4
    assert len([l for l in capsys.readouterr().out.splitlines()
                if l.startswith("lambda=")]) == 3


# --- VTK -------------------------------------------------------------------

def vtk_sections(text):
    lines = text.splitlines()
    assert lines[0] == "# vtk DataFile Version 3.0"
    assert lines[2] == "ASCII"
    assert lines[3] == "DATASET UNSTRUCTURED_GRID"
    return lines


def test_stokes_vtk_nodal_fields(tmp_path):
    path = tmp_path / "f.vtk"
    cli.main(["stokes", "--method", "th", "--n", "2", "--vtk", str(path)])
    lines = vtk_sections(path.read_text())
    assert "POINTS 9 double" in lines
    assert "CELLS 8 32" in lines
    assert lines.count("5") >= 8                    # cell type 5 rows
    assert "POINT_DATA 9" in lines
    assert "SCALARS pressure double 1" in lines     # P1 pressure is nodal
    assert "VECTORS velocity double" in lines
    i = lines.index("VECTORS velocity double")
    assert all(len(l.split()) == 3 for l in lines[i + 1: i + 10])


def test_p0_pressure_lands_in_cell_data(tmp_path):
    path = tmp_path / "f.vtk"
    cli.main(["stokes", "--method", "p2p0", "--n", "2", "--vtk", str(path)])
    lines = vtk_sections(path.read_text())
    assert "CELL_DATA 8" in lines
    idx = lines.index("CELL_DATA 8")
    assert lines[idx + 1] == "SCALARS pressure double 1"


def test_infsup_vtk_exports_worst_mode(tmp_path):
    path = tmp_path / "mode.vtk"
    cli.main(["infsup", "--pair", "p1p0", "--n", "4", "--mode", "euclidean",
              "--vtk", str(path)])
    lines = vtk_sections(path.read_text())
    assert "SCALARS pressure_mode double 1" in lines
    assert "CELL_DATA 32" in lines
    start = lines.index("SCALARS pressure_mode double 1") + 2
    mode = np.array([float(v) for v in lines[start:start + 32]])
    assert abs(np.linalg.norm(mode) - 1.0) < 1e-12


def test_weakbc_vtk_and_report(tmp_path):
    vtk = tmp_path / "u.vtk"
    code, doc = run(["weakbc", "--method", "multiplier", "--n", "4",
                     "--vtk", str(vtk)], tmp_path, json_out=True)
    assert code == 0
    res = doc["results"]
    assert res["err_l2"] < 0.1
    assert res["multiplier_roughness"] > 0.0
    assert "SCALARS u double 1" in vtk.read_text().splitlines()


def test_nitsche_report_has_no_roughness(tmp_path):
    code, doc = run(["weakbc", "--method", "nitsche", "--n", "4"],
                    tmp_path, json_out=True)
    assert code == 0
    assert "multiplier_roughness" not in doc["results"]


# --- threading -------------------------------------------------------------

def test_thread_fanout_matches_serial(tmp_path, monkeypatch):
    path = tmp_path / "out.json"
    argv = ["convergence", "--method", "bp", "--ns", "2,4,8",
            "--json", str(path)]
    monkeypatch.setenv("INFSUP_LAB_THREADS", "1")
    cli.main(argv)
    serial = [l for l in path.read_text().splitlines() if "timestamp" not in l]
    monkeypatch.setenv("INFSUP_LAB_THREADS", "3")
    cli.main(argv)
    fanned = [l for l in path.read_text().splitlines() if "timestamp" not in l]
    assert serial == fanned


def test_stokes_stdout_summary(capsys):
    assert cli.main(["stokes", "--method", "mini", "--n", "2"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("h=")
    assert "err_u_h1=" in out
