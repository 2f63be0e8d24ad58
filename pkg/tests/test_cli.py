import json

import pytest

from horizon_pmp import io as hio
from horizon_pmp.cli import PATHOLOGY_VERDICT, RunConfig, main
from horizon_pmp.scenarios import build_instance


def _run(*argv):
    return main([str(a) for a in argv])


def test_scenario_writes_four_files(tmp_path):
    assert _run("scenario", "lq_regulator", "--out", tmp_path) == 0
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ["adjoint.csv", "plot_data.csv", "trajectory.csv", "verdict.json"]
    verdict = json.loads((tmp_path / "verdict.json").read_text())
    assert verdict["verdicts"]["pmp"] == "pass"
    header = (tmp_path / "plot_data.csv").read_text().splitlines()[0]
    assert header == "t,x_1,u_1,p_1,h_gap"


def test_scenario_flag_form_and_formats(tmp_path):
    assert _run("scenario", "--scenario", "embedded_lq", "--N", 64, "--format", "csv", "--out", tmp_path) == 0
    assert (tmp_path / "verdict.csv").read_text().startswith("name,residual,tolerance,pass")
    assert _run("scenario", "embedded_lq", "--N", 64, "--format", "text", "--out", tmp_path) == 0
    assert (tmp_path / "verdict.txt").exists()


def test_usage_errors(tmp_path, capsys):
    assert _run("scenario", "nonexistent", "--out", tmp_path) == 2
    assert _run("scenario", "lq_regulator", "--N", 4, "--out", tmp_path) == 2
    assert _run("scenario", "lq_regulator", "--tol-abs", -1, "--out", tmp_path) == 2
    assert _run("bogus") == 2
    assert _run("scenario", "--out", tmp_path) == 2
    assert _run("scenario", "--list") == 0
    assert "ramsey_budget" in capsys.readouterr().out


def test_env_overrides_out(tmp_path, monkeypatch):
    monkeypatch.setenv("HORIZON_PMP_OUT", str(tmp_path / "env"))
    assert _run("scenario", "embedded_lq", "--N", 64, "--out", tmp_path / "flag") == 0
    assert (tmp_path / "env" / "verdict.json").exists()
    assert not (tmp_path / "flag").exists()


def test_deterministic_reports(tmp_path):
    for d in ("a", "b"):
        assert _run("scenario", "ramsey_budget", "--N", 64, "--seed", 3, "--out", tmp_path / d) == 0
    assert (tmp_path / "a" / "verdict.json").read_bytes() == (tmp_path / "b" / "verdict.json").read_bytes()


def test_grid_residual_shrinks_with_N(tmp_path):
    fd = {}
    for N in (64, 256):
        assert _run("scenario", "ramsey_budget", "--N", N, "--out", tmp_path / str(N)) == 0
        v = json.loads((tmp_path / str(N) / "verdict.json").read_text())
        fd[N] = v["diagnostics"]["grid_fd_adjoint"]
        assert all(c["pass"] for c in v["conditions"])
    assert fd[256] < 0.6 * fd[64]


@pytest.fixture()
def lq_csv(tmp_path):
    inst = build_instance("lq_regulator", N=256)
    path = tmp_path / "lq.csv"
    hio.write_process_csv(inst.process, path)
    return path


def test_verify_round_trip(lq_csv, tmp_path):
    assert _run("verify", "--input", lq_csv, "--scenario", "lq_regulator", "--out", tmp_path / "o") == 0


def test_verify_scaled_control_fails(lq_csv, tmp_path):
    lines = lq_csv.read_text().splitlines()
    out = [lines[0]]
    for line in lines[1:]:
        t, x, u = line.split(",")
        out.append(f"{t},{x},{float(u) * 1.1!r}")
    bad = tmp_path / "scaled.csv"
    bad.write_text("\n".join(out) + "\n")
    assert _run("verify", "--input", bad, "--scenario", "lq_regulator", "--out", tmp_path / "o") == 1
    v = json.loads((tmp_path / "o" / "verdict.json").read_text())
    assert not {c["name"]: c["pass"] for c in v["conditions"]}["max_condition"]


@pytest.mark.parametrize(
    "text, column",
    [("", "t"), ("t,x_1,v_1\n0,1,1\ninf,0,0\n", "u_1"), ("t,x_1,u_1\n0,abc,1\ninf,0,0\n", "x_1"),
     ("t,x_1,u_1\n0,1,1\n1,1,1\n", "t")],
)
def test_verify_schema_errors(tmp_path, capsys, text, column):
    p = tmp_path / "in.csv"
    p.write_text(text)
    assert _run("verify", "--input", p, "--scenario", "lq_regulator", "--out", tmp_path / "o") == 2
    assert repr(column) in capsys.readouterr().err


def test_verify_missing_file(tmp_path):
    assert _run("verify", "--input", tmp_path / "none.csv", "--scenario", "lq_regulator", "--out", tmp_path) == 2


def test_pathology_command(tmp_path, capsys):
    assert _run("pathology", "--rho", 0.5, "--T", "5,10,20", "--out", tmp_path) == 0
    out = capsys.readouterr().out
    assert PATHOLOGY_VERDICT in out
    rows = (tmp_path / "pathology.csv").read_text().splitlines()
    assert len(rows) == 4
    gaps = [float(r.split(",")[1]) - float(r.split(",")[0]) for r in rows[1:]]
    assert all(abs(g + 1.38629436112) < 1e-9 for g in gaps)
    assert _run("pathology", "--rho", 0.5, "--T", "1", "--out", tmp_path) == 2


def test_pathology_default_monotone(tmp_path):
    assert _run("pathology", "--out", tmp_path) == 0
    J = [float(r.split(",")[2]) for r in (tmp_path / "pathology.csv").read_text().splitlines()[1:]]
    assert len(J) == 4 and J == sorted(J)


def test_run_config_validation():
    with pytest.raises(ValueError):
        RunConfig(N=7)
    with pytest.raises(ValueError):
        RunConfig(fmt="xml")
