import argparse
import json
import math

import numpy as np
import pytest

from kellersegel import output
from kellersegel.cli import load_run, parse_vary, run_command
from kellersegel.config import parse_config
from kellersegel.dynamics import DiagnosticsRow, StepControl, Trajectory, simulate
from kellersegel.errors import ConfigError
from kellersegel.verify import gradcheck

from refruns import cosine_state, p0_params

P0_TEXT = """# reference parameters
a = 1
b = 1
c = 1
d = 1
k = 1
alpha = 0
beta = 3.141592653589793
f = 1
"""


def write_cfg(tmp_path, extra="", name="p0.cfg"):
    path = tmp_path / name
    path.write_text(P0_TEXT + extra, encoding="utf-8")
    return path


def test_defaults_are_filled():
    cfg = parse_config(P0_TEXT)
    assert cfg.n == 256 and cfg.params().delta == 0.5
    assert cfg.control == StepControl(dt=1e-2, dt_min=1e-10, dt_max=1e-2, cfl_safety=0.5,
                                      t_end=200.0, snapshot_stride=1)
    assert cfg.ic.kind == "cosine_perturbation" and cfg.formats == ("csv", "json")
    s = cfg.initial_state()
    assert np.min(s.u(cfg.params()).values) == pytest.approx(0.8, abs=1e-4)


@pytest.mark.parametrize("text, kind, key, line", [
    (P0_TEXT.replace("k = 1", "k = -1"), "invalid-value", "k", 6),
    (P0_TEXT + "banana = 7\n", "unknown-key", "banana", 10),
    (P0_TEXT.replace("f = 1\n", ""), "missing-required", "f", None),
    (P0_TEXT + "n = abc\n", "invalid-value", "n", 10),
    (P0_TEXT + "eps_u = 1.5\n", "invalid-value", "eps_u", 10),
    (P0_TEXT + "k = 2\n", "invalid-value", "k", 10),
])
def test_config_errors_name_key_and_line(text, kind, key, line):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    err = info.value
    assert (err.kind, err.key, err.line) == (kind, key, line)


def test_config_replace_and_echo():
    cfg = parse_config(P0_TEXT + "n = 64\n")
    other = cfg.replace(k=2.5, f=2.0)
    assert other.k == 2.5 and other.params().delta == 1.0 and other.n == 64
    assert parse_config(P0_TEXT).as_dict()["delta"] == 0.5


def small_traj(rows):
    params = p0_params(16)
    traj = Trajectory(params=params)
    for i in range(rows):
        traj.rows.append(DiagnosticsRow(*(float(i + j) for j in range(9))))
    return traj


def test_timeseries_lines(tmp_path):
    path = tmp_path / "ts.csv"
    output.write_timeseries(small_traj(3), path)
    lines = path.read_text().splitlines()
    assert len(lines) == 4
    assert lines[0] == ("t,mass,min_u,positivity_floor,phi,dphi_dt_chain,dissipation,"
                        "grad_norm_Z,vel_norm_Zstar,dist_X_to_ref")
    output.write_timeseries(small_traj(0), path)
    assert path.read_text().splitlines() == [lines[0]]


def test_timeseries_round_trip(tmp_path, params, perturbed):
    traj = simulate(perturbed, params, StepControl(t_end=0.2))
    path = tmp_path / "ts.csv"
    output.write_timeseries(traj, path)
    back = output.read_timeseries(path)
    for a, b in zip(traj.rows, back):
        assert a.as_tuple() == pytest.approx(b.as_tuple(), nan_ok=True, rel=0, abs=0)


def test_state_round_trip(tmp_path):
    params = p0_params(64)
    rng = np.random.default_rng(0)
    s = cosine_state(params)
    s = type(s).from_coeffs(params.grid, s.v.coeffs + 1e-3 * np.r_[0, rng.standard_normal(63)],
                            s.rho.coeffs * (1 + rng.standard_normal(64)), 1.25)
    output.write_state(s, tmp_path / "s.csv")
    back = output.read_state(tmp_path / "s.csv")
    assert back.grid == s.grid and back.t == s.t
    assert np.max(np.abs(back.v.coeffs - s.v.coeffs)) <= 1e-15
    assert np.max(np.abs(back.rho.coeffs - s.rho.coeffs)) <= 1e-15
    assert (tmp_path / "s.csv").read_text().splitlines()[2] == "v,rho"


def test_read_state_rejects_truncated_file(tmp_path):
    path = tmp_path / "bad.csv"
    output.write_state(cosine_state(p0_params(16)), path)
    path.write_text("\n".join(path.read_text().splitlines()[:-2]) + "\n")
    with pytest.raises(ValueError):
        output.read_state(path)


def test_json_cleaning(tmp_path):
    output.write_json({"x": np.float64(1.5), "nan": math.nan, "n": np.int64(3),
                       "arr": np.arange(2.0)}, tmp_path / "a.json")
    assert output.read_json(tmp_path / "a.json") == {"x": 1.5, "nan": None, "n": 3,
                                                     "arr": [0.0, 1.0]}


def test_gradcheck_passes_on_p0():
    res = gradcheck(p0_params(256), samples=20, seed=1)
    assert res.passed()


def test_parse_vary():
    key, values = parse_vary("k=1:3:0.25")
    assert key == "k" and len(values) == 9 and values[-1] == 3.0
    with pytest.raises(argparse.ArgumentTypeError):
        parse_vary("k=3:1:0.5")


def test_cli_exit_codes(tmp_path, caplog):
    assert run_command(["simulate", str(tmp_path / "missing.cfg")]) == 2
    bad = write_cfg(tmp_path, "banana = 7\n", "bad.cfg")
    assert run_command(["simulate", str(bad)]) == 2
    assert "banana (line 10)" in caplog.text
    assert run_command([]) == 2
    assert run_command(["analyze", str(tmp_path)]) == 2


def test_cli_gradcheck(tmp_path, capsys):
    cfg = write_cfg(tmp_path)
    assert run_command(["gradcheck", str(cfg), "--samples", "10"]) == 0
    out = dict(line.split(" = ") for line in capsys.readouterr().out.splitlines())
    assert float(out["gradient_rel_error"]) <= 1e-6
    assert float(out["hessian_rel_error"]) <= 1e-5


def test_cli_simulate_then_analyze(tmp_path):
    cfg = write_cfg(tmp_path, "n = 64\n")
    out = tmp_path / "run"
    assert run_command(["simulate", str(cfg), "--out", str(out)]) == 0
    summary = output.read_json(out / "summary.json")
    assert summary["converged"] and summary["classification"] == "constant"
    assert summary["kernel_dim"] == 0
    assert "wall_time" in output.read_json(out / "timing.json")
    assert run_command(["analyze", str(out)]) == 0
    report = output.read_json(out / "report.json")
    assert report["theta_hat"] == pytest.approx(0.5, abs=0.05)
    assert report["rate_violations"] == 0
    traj = load_run(out)
    assert traj.converged and len(traj.snapshots) == len(list((out / "snapshots").glob("*.csv")))


def test_cli_simulate_is_deterministic(tmp_path):
    cfg = write_cfg(tmp_path, "n = 32\nt_end = 3\n")
    for name in ("one", "two"):
        assert run_command(["simulate", str(cfg), "--out", str(tmp_path / name)]) == 0
    for rel in ("timeseries.csv", "summary.json", "snapshots/snap_000010.csv"):
        assert (tmp_path / "one" / rel).read_bytes() == (tmp_path / "two" / rel).read_bytes()


def test_cli_output_root_from_environment(tmp_path, monkeypatch):
    cfg = write_cfg(tmp_path, "n = 16\nt_end = 0.05\nformats = json\n", "short.cfg")
    monkeypatch.setenv("KS_OUTPUT_DIR", str(tmp_path / "root"))
    assert run_command(["simulate", str(cfg)]) == 0
    assert (tmp_path / "root" / "short" / "summary.json").exists()
    assert not (tmp_path / "root" / "short" / "timeseries.csv").exists()


def test_cli_stationary(tmp_path):
    cfg = tmp_path / "k2.cfg"
    cfg.write_text(P0_TEXT.replace("k = 1", "k = 2") + "n = 32\n")
    out = tmp_path / "st"
    assert run_command(["stationary", str(cfg), "--out", str(out)]) == 0
    spectrum = output.read_json(out / "spectrum.json")
    assert spectrum["kernel_dim"] == 1 and (out / "kernel_0.csv").exists()
    seed = out / "stationary.csv"
    assert run_command(["stationary", str(cfg), "--seed-from", str(seed),
                        "--out", str(tmp_path / "st2")]) == 0


def test_cli_sweep_matches_single_runs(tmp_path):
    cfg = write_cfg(tmp_path, "n = 32\nt_end = 2\n")
    out = tmp_path / "sweep"
    assert run_command(["sweep", str(cfg), "--vary", "k=1:2:1", "--out", str(out)]) == 0
    table = json.loads((out / "sweep.json").read_text())
    assert [r["k"] for r in table["runs"]] == [1.0, 2.0]
    single = tmp_path / "single"
    cfg2 = tmp_path / "k2.cfg"
    cfg2.write_text(P0_TEXT.replace("k = 1", "k = 2") + "n = 32\nt_end = 2\n")
    assert run_command(["simulate", str(cfg2), "--out", str(single)]) == 0
    assert table["runs"][1]["final_phi"] == output.read_json(single / "summary.json")["final_phi"]
