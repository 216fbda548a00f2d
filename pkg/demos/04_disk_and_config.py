"""
The disk, driven from a config file
===================================

Everything the command line does is reachable from Python.  Here we write a
small INI file, override one key from the environment the way a batch script
would, and run the radially symmetric disk case, which should not change.
"""
import json
import os
import tempfile
from pathlib import Path

from qgcyl.cli import main

ini = """
[domain]
shape = disk
radius = 1.0

[resolution]
modes = 60
vertical_degree = 8

[scenario]
name = steady_disk

[time]
dt = 0.05
final_time = 0.5
window_steps = 5
"""

with tempfile.TemporaryDirectory() as tmp:
    cfg = Path(tmp) / "disk.ini"
    cfg.write_text(ini)
    os.environ["QGCYL_PICARD_TOL"] = "1e-9"
    status = main(["evolve", "--config", str(cfg), "--out", str(Path(tmp) / "run")])
    print("exit status", status)
    summary = json.loads((Path(tmp) / "run" / "summary.json").read_text())
    for key in ("steps", "psi_drift", "weak_circulation_max_dev", "max_abs_defect", "max_trace_spread"):
        print(f"{key:<26} {summary[key]:.3e}")

###############################################################################
# psi_drift is the largest H-norm distance from the first state.  It grows
# linearly with the number of steps at a rate set by the interpolation error
# of the box grid; refine the box (``box_points``) to shrink it.
