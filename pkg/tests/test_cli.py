import json
from pathlib import Path
import subprocess
import sys

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from radflow.cli import main, report
from radflow.config import SCHEMA, RunConfig, parse_config, parse_text, serialize
from radflow.errors import MissingArtifacts, SchemaError

FAST = """\
params.eps = 0.1
grid.n_points = 16
solver.dt = 0.02
solver.t_end = 0.2
solver.record_every = 5
experiment.toy_draws = 3
experiment.rho_count = 12
experiment.amplitude = 0.01
"""


@pytest.fixture
def fast_config(tmp_path):
    path = tmp_path / "fast.cfg"
    path.write_text(FAST)
    return path


def run_cli(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_minimal_config_gets_defaults(tmp_path):
    path = tmp_path / "min.cfg"
    path.write_text("# only physics\nparams.eps = 0.2\nparams.ell = 0.4\n")
    cfg = parse_config(path)
    assert cfg["params.eps"] == 0.2 and cfg["grid.n_points"] == SCHEMA["grid.n_points"].default
    assert cfg.physical_params().ell == 0.4


@pytest.mark.parametrize("text,key,line", [
    ("params.eps = -1\n", "params.eps", 1),
    ("\nparams.bogus = 3\n", "params.bogus", 2),
    ("params.eps = 0.1\nparams.eps = 0.2\n", "params.eps", 2),
    ("grid.n_points = 24\n", "grid.n_points", 1),
    ("solver.dt = nan\n", "solver.dt", 1),
    ("experiment.eps_ladder = 0.1, 0.2\n", "experiment.eps_ladder", 1),
    ("experiment.rho_min = 5\nexperiment.rho_max = 1\n", "experiment.rho_max", 2),
])
def test_schema_errors_name_key_and_line(text, key, line):
    with pytest.raises(SchemaError) as info:
        parse_text(text)
    assert info.value.key == key and info.value.line == line


ladders = st.lists(st.floats(1e-4, 1.0), min_size=1, max_size=5, unique=True).map(
    lambda xs: tuple(sorted(xs, reverse=True)))


@settings(max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(eps=st.floats(1e-6, 10.0), ell=st.floats(1e-3, 10.0), n=st.sampled_from([8, 16, 32, 64]),
       kind=st.sampled_from(["noneq", "degen", "poisson", "modpressure"]), ladder=ladders,
       nonlinear=st.booleans(), seed=st.integers(0, 2 ** 31))
def test_config_round_trip(eps, ell, n, kind, ladder, nonlinear, seed):
    cfg = RunConfig().with_overrides(params__eps=eps, params__ell=ell, grid__n_points=n, experiment__kind=kind,
                                     experiment__eps_ladder=ladder, solver__nonlinear_on=nonlinear,
                                     experiment__seed=seed)
    assert parse_text(serialize(cfg)) == cfg


def test_every_subcommand_exits_zero_and_prints_paths(capsys, tmp_path, fast_config):
    out = tmp_path / "run"
    for cmd in ("modes", "toy", "simulate", "limits", "converge", "report"):
        code, stdout, stderr = run_cli(capsys, cmd, "--config", str(fast_config), "--out", str(out))
        assert code == 0, stderr
        paths = stdout.split()
        assert paths and all(Path(p).exists() for p in paths)
    summary = (out / "report" / "summary.txt").read_text()
    assert "fitted j1 slope" in summary and "j1 scale ratio" in summary
    toy_lines = (out / "toy.jsonl").read_text().splitlines()
    # one record for the configured physics, then the random draws
    assert len(toy_lines) == 1 + 3
    rec = json.loads(toy_lines[0])
    assert rec["draw"] == "params"
    assert {"coeffs", "tilde_nu", "max_ratio_ODE5", "commutator_residual", "det_residual"} <= set(rec)
    header = (out / "modes.csv").read_bytes().split(b"\r\n")[0].decode()
    assert header.startswith("rho,re_lambda_1") and "measured_rad_rate_j1" in header


def test_report_is_idempotent(capsys, tmp_path, fast_config):
    out = tmp_path / "run"
    for cmd in ("modes", "converge"):
        assert run_cli(capsys, cmd, "--config", str(fast_config), "--out", str(out))[0] == 0
    first = {p.name: p.read_bytes() for p in report(out)}
    second = {p.name: p.read_bytes() for p in report(out)}
    assert first == second
    assert "eigenvalue_curves.csv" in first and "convergence_slopes.csv" in first


def test_report_missing_artifacts(capsys, tmp_path):
    empty = tmp_path / "empty"
    empty.mkdir()
    with pytest.raises(MissingArtifacts):
        report(empty)
    code, stdout, stderr = run_cli(capsys, "report", str(empty))
    assert code == 1 and stdout == ""
    rec = json.loads(stderr)
    assert rec["error"] == "MissingArtifacts" and rec["missing"]


def test_report_partial_group(capsys, tmp_path, fast_config):
    out = tmp_path / "run"
    assert run_cli(capsys, "toy", "--config", str(fast_config), "--out", str(out))[0] == 0
    (out / "toy.json").unlink()
    with pytest.raises(MissingArtifacts) as info:
        report(out)
    assert any(m.endswith("toy.json") for m in info.value.missing)


def test_validation_exit_code(capsys, tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("params.eps = -1\n")
    code, stdout, stderr = run_cli(capsys, "modes", "--config", str(bad), "--out", str(tmp_path / "o"))
    assert code == 1 and stdout == ""
    rec = json.loads(stderr)
    assert rec["key"] == "params.eps" and rec["line"] == 1 and rec["exit_code"] == 1
    assert run_cli(capsys, "bogus")[0] == 1
    assert run_cli(capsys, "modes", "--config", str(tmp_path / "nope.cfg"))[0] == 1
    assert run_cli(capsys, "converge", "--eps-ladder", "0.1,x")[0] == 1
    assert run_cli(capsys, "converge", "--eps-ladder", "0.05,0.1")[0] == 1


def test_numerical_failure_exit_code(capsys, tmp_path):
    cfg = tmp_path / "big_dt.cfg"
    cfg.write_text("grid.n_points = 16\nsolver.dt = 5\nsolver.t_end = 10\nexperiment.amplitude = 0.1\n")
    code, stdout, stderr = run_cli(capsys, "simulate", "--config", str(cfg), "--out", str(tmp_path / "o"))
    assert code == 2 and stdout == ""
    assert json.loads(stderr)["error"] == "StepRejected"


def test_partial_converge_exits_two(capsys, tmp_path):
    cfg = tmp_path / "tight.cfg"
    cfg.write_text(FAST + "solver.smallness = 1e-6\n")
    code, stdout, stderr = run_cli(capsys, "converge", "--config", str(cfg), "--out", str(tmp_path / "o"))
    assert code == 2
    assert (tmp_path / "o" / "convergence.json").exists()
    assert json.loads((tmp_path / "o" / "convergence.json").read_text())["partial"] is True


def test_flags_override_config(capsys, tmp_path, fast_config):
    out = tmp_path / "o"
    code, _, err = run_cli(capsys, "limits", "--config", str(fast_config), "--out", str(out), "--kind", "poisson",
                           "--seed", "4")
    assert code == 0, err
    assert (out / "limit_poisson.csv").exists()
    meta = json.loads((out / "limit_poisson" / "meta.json").read_text())
    assert meta["kind"] == "poisson"


def test_module_entry_point(tmp_path, fast_config):
    proc = subprocess.run([sys.executable, "-m", "radflow", "modes", "--config", str(fast_config), "--out",
                           str(tmp_path / "m")], capture_output=True, text=True, timeout=120)
    assert proc.returncode == 0, proc.stderr
    assert proc.stdout.strip().splitlines()[0].endswith("modes.csv")
