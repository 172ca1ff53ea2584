import json
import types

import numpy as np
import pytest

from fchkit.cli import ConfigError, DEFAULTS, _cast, _grid_n, _parse_p, \
    load_config, main, merge_config


def args(**kw):
    base = dict(config=None, experiment=None, out=None, seed=None,
                epsilon=None, threads=None)
    base.update(kw)
    return types.SimpleNamespace(**base)


def write_cfg(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_cast_and_unknown_key():
    assert _cast("epsilon", "0.2,0.1") == [0.2, 0.1]
    assert _cast("epsilon", 0.1) == [0.1]
    assert _cast("seed", "3") == 3
    assert _cast("M0", "None") is None
    with pytest.raises(ConfigError):
        _cast("no_such_key", 1.0)


def test_load_config(tmp_path):
    path = write_cfg(tmp_path, """
# comment line
experiment = residual-scaling
epsilon = 0.2, 0.1     # inline comment
sigma_offset = 0.05
n = 128
p_modes = 3:0.04,6:0.03
""")
    cfg = load_config(path)
    assert cfg["experiment"] == "residual-scaling"
    assert cfg["epsilon"] == [0.2, 0.1]
    assert cfg["sigma_offset"] == 0.05
    assert cfg["n"] == 128
    assert cfg["p_modes"] == "3:0.04,6:0.03"


def test_load_config_rejects_garbage(tmp_path):
    with pytest.raises(ConfigError):
        load_config(write_cfg(tmp_path, "no equals sign here\n"))
    with pytest.raises(ConfigError):
        load_config(write_cfg(tmp_path, "not_a_key = 1\n"))


def test_merge_flags_override_file(tmp_path):
    file_cfg = load_config(write_cfg(
        tmp_path, "experiment = residual-scaling\nseed = 1\n"))
    cfg = merge_config(file_cfg, args(seed=7, epsilon="0.25",
                                      out="elsewhere"))
    assert cfg["seed"] == 7
    assert cfg["epsilon"] == [0.25]
    assert cfg["out"] == "elsewhere"
    assert cfg["gamma"] == DEFAULTS["gamma"]
    with pytest.raises(ConfigError):
        merge_config({}, args(experiment="no-such-experiment"))


def test_grid_chooser():
    cfg = dict(DEFAULTS, n=None, L=2.0 * np.pi, resolution_factor=2.0)
    # smallest power of two with 2L/n <= eps/resolution_factor
    assert _grid_n(cfg, 0.2) == 128
    assert _grid_n(cfg, 0.1) == 256
    assert _grid_n(cfg, 0.05) == 512
    cfg["n"] = 96
    assert _grid_n(cfg, 0.05) == 96


def test_parse_p_modes():
    cfg = dict(DEFAULTS, p_modes="3:0.04,6:0.03")
    p = _parse_p(cfg, 9)
    assert p.p[3] == 0.04 and p.p[6] == 0.03
    assert np.sum(p.p != 0.0) == 2
    assert _parse_p(dict(DEFAULTS), 9).vnorm(1) == 0.0


def test_unknown_experiment_exits_2(tmp_path, capsys):
    rc = main(["--experiment", "bogus", "--out", str(tmp_path / "o")])
    assert rc == 2
    err = json.loads(capsys.readouterr().err.strip())
    assert err["error"] == "ConfigError"


def test_missing_config_file_exits_2(tmp_path):
    rc = main(["--config", str(tmp_path / "nope.cfg")])
    assert rc == 2


def test_sets_overlap_exits_2(tmp_path, capsys):
    out = tmp_path / "o"
    path = write_cfg(tmp_path, """
experiment = residual-scaling
epsilon = 0.2
rho_factor = 1.5
n = 64
""")
    rc = main(["--config", path, "--out", str(out)])
    assert rc == 2
    err = json.loads(capsys.readouterr().err.strip())
    assert err["error"] == "SetsOverlap"
    disk = json.loads((out / "error.json").read_text())
    assert disk == err


def test_residual_scaling_end_to_end(tmp_path):
    out = tmp_path / "o"
    path = write_cfg(tmp_path, """
experiment = residual-scaling
epsilon = 0.4, 0.2
n = 128
R0 = 2.0
ell = 0.9
""")
    rc = main(["--config", path, "--out", str(out)])
    assert rc == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["experiment"] == "residual-scaling"
    assert summary["version"]
    assert len(summary["res_norm"]) == 2
    # critical sigma: the projected residual drops super-quadratically
    assert summary["slope"] > 2.5
    lines = (out / "residual_scaling.csv").read_text().splitlines()
    assert lines[0] == "epsilon,res_norm"
    assert len(lines) == 3


def test_determinism_bit_identical(tmp_path):
    cfg_text = """
experiment = residual-scaling
epsilon = 0.4, 0.2
n = 128
seed = 5
"""
    outputs = []
    for tag in ("a", "b"):
        out = tmp_path / tag
        path = write_cfg(tmp_path, cfg_text, name="run_%s.cfg" % tag)
        assert main(["--config", path, "--out", str(out)]) == 0
        outputs.append((out / "residual_scaling.csv").read_bytes())
    assert outputs[0] == outputs[1]


def test_curve_flow_experiment(tmp_path):
    out = tmp_path / "o"
    path = write_cfg(tmp_path, """
experiment = curve-flow
epsilon = 0.1
T = 5.0
dt = 0.01
""")
    rc = main(["--config", path, "--out", str(out)])
    assert rc == 0
    summary = json.loads((out / "summary.json").read_text())
    assert (out / "circle_ode.csv").exists()
    assert (out / "curve_flow.csv").exists()
    assert summary["R_star"] > 0.0
    # the radial-graph flow started on the circle tracks the scalar ODE
    assert abs(summary["R_final_curve"] - summary["R_final_ode"]) < 1e-6


def test_pde_run_experiment(tmp_path):
    out = tmp_path / "o"
    path = write_cfg(tmp_path, """
experiment = pde-run
epsilon = 0.4
n = 128
dt = 1e-4
T = 2e-3
amplitude = 0.01
snap_every = 10
""")
    rc = main(["--config", path, "--out", str(out)])
    assert rc == 0
    summary = json.loads((out / "summary.json").read_text())
    assert abs(summary["mass_drift"]) < 1e-12
    assert summary["energy_monotone"]
    assert (out / "trajectory.csv").exists()
    assert (out / "run_meta.json").exists()
    assert list((out / "snapshots").glob("*.fchb"))
