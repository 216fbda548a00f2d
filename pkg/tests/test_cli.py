import json
import subprocess
import sys

import numpy as np
import pytest

from qgcyl.cli import build_parser, main, observed_orders
from qgcyl.config import ConfigError, describe_defaults, load_settings, parse_config

TINY = """
[resolution]
modes = 6x6
vertical_degree = 4
[time]
dt = 0.05
final_time = 0.1
window_steps = 2
[sqg]
dt = 0.01
every = 2
[convergence]
resolutions = 6,8
final_time = 0.05
"""


@pytest.fixture
def tiny(tmp_path):
    p = tmp_path / "tiny.ini"
    p.write_text(TINY)
    return p


def test_defaults_without_file():
    s = load_settings(env={})
    assert s.get("domain", "height") == 1.0
    assert s.modes() == (32, 32)
    assert s.get("tolerances", "circulation") == 1e-6
    assert "[tolerances]" in describe_defaults()


def test_bad_height_names_the_key(tmp_path):
    p = tmp_path / "c.ini"
    p.write_text("[domain]\nheight = -2\n")
    with pytest.raises(ConfigError, match=r"\[domain\] height"):
        load_settings(p, env={})


def test_unknown_key_reports_line(tmp_path):
    p = tmp_path / "c.ini"
    p.write_text("[time]\ndt = 0.1\n\n# comment\nstepsize = 3\n")
    with pytest.raises(ConfigError, match="stepsize.*line 5"):
        load_settings(p, env={})
    p.write_text("[timing]\ndt = 1\n")
    with pytest.raises(ConfigError, match="section.*line 1"):
        load_settings(p, env={})


def test_unreadable_values(tmp_path):
    p = tmp_path / "c.ini"
    p.write_text("[time]\nwindow_steps = many\n")
    with pytest.raises(ConfigError, match="window_steps"):
        load_settings(p, env={})


def test_environment_overrides_file(tiny):
    s = load_settings(tiny, env={"QGCYL_TIME_DT": "0.025", "QGCYL_DOMAIN_SHAPE": "disk", "HOME": "/x"})
    assert s.get("time", "dt") == 0.025 and s.get("domain", "shape") == "disk"
    with pytest.raises(ConfigError, match="QGCYL_TIME_STEP"):
        load_settings(tiny, env={"QGCYL_TIME_STEP": "1"})


def test_small_epsilon_is_clamped_with_warning(tiny):
    s = load_settings(tiny, env={"QGCYL_MOLLIFIER_EPSILON": "1e-3"})
    with pytest.warns(RuntimeWarning, match="clamped"):
        cfg = s.run_config()
    assert cfg.epsilon > 1e-3


def test_parse_config_builds_run_config(tiny):
    cfg = parse_config(tiny, env={})
    assert cfg.N == (6, 6) and cfg.M == 4 and cfg.T == 0.1
    assert cfg.f0 is not None and cfg.j0 == "balanced"


def test_observed_orders():
    assert observed_orders([0.2, 0.1, 0.05], [4.0, 1.0, 0.25]) == [None, 2.0, 2.0]
    assert observed_orders([0.2, 0.1], [0.0, 1.0]) == [None, None]


def test_unknown_command_exits_2(tmp_path, capsys):
    assert main(["explode", "--out", str(tmp_path)]) == 2
    assert "invalid choice" in capsys.readouterr().err


def test_help_lists_env_prefix():
    assert "QGCYL_<SECTION>_<KEY>" in build_parser().format_help()


def test_console_script_module_entry(tmp_path):
    r = subprocess.run([sys.executable, "-m", "qgcyl.cli", "nope"], capture_output=True, text=True)
    assert r.returncode == 2


def test_failure_record(tmp_path, monkeypatch):
    bad = tmp_path / "bad.ini"
    bad.write_text("[domain]\nheight = 0\n")
    out = tmp_path / "out"
    assert main(["evolve", "--config", str(bad), "--out", str(out)]) == 1
    rec = json.loads((out / "failure.json").read_text())
    assert rec["error_type"] == "ConfigError" and "height" in rec["message"]


def test_manufactured_elliptic_run(tmp_path, monkeypatch):
    monkeypatch.setenv("QGCYL_SCENARIO_NAME", "manufactured")
    monkeypatch.setenv("QGCYL_RESOLUTION_MODES", "12x12")
    out = tmp_path / "o"
    assert main(["solve-elliptic", "--out", str(out), "--seed", "4"]) == 0
    summary = json.loads((out / "summary.json").read_text())
    h = [r for r in summary["table"] if r["quantity"] == "H_error_relative"][0]
    assert h["value"] < 1e-10 and h["pass"]
    assert (out / "elliptic_errors.csv").exists()


def test_evolve_is_bit_reproducible(tmp_path, tiny):
    outs = []
    for k in range(2):
        out = tmp_path / f"r{k}"
        assert main(["evolve", "--config", str(tiny), "--out", str(out), "--snapshot-every", "1",
                     "--threads", "2"]) == 0
        outs.append(out)
    a, b = [(o / "diagnostics.csv").read_bytes() for o in outs]
    assert a == b
    snaps = sorted(p.name for p in (outs[0] / "snapshots").iterdir())
    assert snaps
    for name in snaps:
        assert (outs[0] / "snapshots" / name).read_bytes() == (outs[1] / "snapshots" / name).read_bytes()


def test_sqg_compare_and_convergence(tmp_path, tiny):
    out = tmp_path / "s"
    assert main(["sqg-compare", "--config", str(tiny), "--out", str(out)]) == 0
    s = json.loads((out / "summary.json").read_text())
    assert len(s["obstruction_max_per_height"]) == 3
    assert (out / "qg_diagnostics.csv").exists() and (out / "sqg_diagnostics.csv").exists()
    out = tmp_path / "c"
    assert main(["convergence-study", "--config", str(tiny), "--out", str(out)]) == 0
    rows = json.loads((out / "summary.json").read_text())["rows"]
    assert [r["resolution"] for r in rows] == ["6", "8"]
    assert np.isfinite(rows[1]["order_F_drift_per_time"])


def test_picard_failure_exit_code(tmp_path, tiny):
    out = tmp_path / "p"
    env_cfg = tmp_path / "p.ini"
    env_cfg.write_text(TINY + "[picard]\nmax_iter = 1\ntol = 1e-30\n")
    assert main(["evolve", "--config", str(env_cfg), "--out", str(out)]) == 3
    rec = json.loads((out / "failure.json").read_text())
    assert rec["error_type"] == "PicardError" and rec["history"]
    assert (out / "diagnostics.csv").exists()
