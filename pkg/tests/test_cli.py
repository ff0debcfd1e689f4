import json

import pytest

from sphwave.cli import build_parser, main


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_zeros_command(capsys):
    code, out, _ = run(capsys, "zeros", "--bc", "dirichlet", "--order", "2")
    assert code == 0
    lines = [l for l in out.splitlines() if not l.startswith("#")]
    assert lines[0] == "j,real,imag,residual" and len(lines) == 3
    assert lines[1].startswith("0,-1.5")


def test_solve_json(capsys):
    code, out, _ = run(capsys, "solve", "--order", "8", "--ptime", "4", "--steps", "6",
                       "--radius", "3", "--time", "4", "--format", "json")
    doc = json.loads(out)
    assert code == 0 and doc["config"]["N"] == 8 and doc["config"]["version"]
    assert doc["rows"][0]["quantity"] == "rel_l2_error"


def test_solve_probe_trace(capsys):
    code, out, _ = run(capsys, "solve", "--order", "6", "--ptime", "4", "--steps", "5",
                       "--radius", "3", "--time", "4", "--probe", "0,0")
    rows = [l for l in out.splitlines() if not l.startswith("#")]
    assert rows[0] == "t,probe,theta,phi,value" and len(rows) == 7


def test_sweep_csv(tmp_path, capsys):
    path = tmp_path / "sweep.csv"
    code, _, _ = run(capsys, "sweep", "--axis", "N", "--values", "6,8", "--ptime", "4",
                     "--steps", "6", "--radius", "3", "--time", "4", "--out", str(path))
    assert code == 0
    lines = [l for l in path.read_text().splitlines() if not l.startswith("#")]
    assert lines[0] == "axis,value,rel_l2_error,wall_seconds"
    assert [l.split(",")[1] for l in lines[1:]] == ["6", "8"]


def test_config_then_flag_override(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("bc = robin\nN = 6\np = 4\nN_T = 5\nr = 3\nT = 4\n")
    code, out, _ = run(capsys, "solve", "--config", str(cfg), "--order", "7", "--format", "json")
    doc = json.loads(out)
    assert doc["config"]["bc"] == "robin" and doc["config"]["N"] == 7


def test_diagnostics(capsys):
    code, out, _ = run(capsys, "diagnostics", "--order", "12", "--radius", "2")
    assert code == 0 and "growth_exponent" in out and "residue_sum_real" in out


def test_demo_writes_files(tmp_path, capsys):
    code, _, err = run(capsys, "demo", "--order", "8", "--ptime", "4", "--steps", "20",
                       "--radius", "4", "--time", "7", "--out", str(tmp_path / "d"))
    assert code == 0
    for name in ("boundary_trace", "target_trace", "annulus"):
        text = (tmp_path / "d" / f"{name}.csv").read_text()
        assert any(l.startswith("x,z,value") or l.startswith("t,value") for l in text.splitlines())


def test_errors_exit_nonzero(capsys):
    code, _, err = run(capsys, "solve", "--radius", "0.5")
    assert code == 2 and "radius must exceed 1" in err
    with pytest.raises(SystemExit):
        build_parser().parse_args(["solve", "--bc", "neumann"])
