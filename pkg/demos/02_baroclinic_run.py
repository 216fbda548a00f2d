"""
A short unforced run
====================

Two vortices of opposite sign, whose strength changes with height, interact
inside the rectangle.  The time driver alternates mollification, transport of
the interior and plate fields, and the elliptic solve, and iterates each
window to a fixed point.  We watch the quantities that should not move.
"""
from qgcyl import RunConfig, march
from qgcyl.scenarios import get_scenario

sc = get_scenario("baroclinic")
print(sc.description)

###############################################################################
# A coarse grid keeps this under a minute.  Raise N and M for real work.

cfg = RunConfig(N=(24, 24), M=12, dt=0.05, T=0.5, window_steps=5, **sc.run_kwargs())


def show(rec):
    if round(rec.time / 0.1, 6) % 1 == 0:
        print(f"t={rec.time:4.2f}  |F|={rec.F_L2:.6f}  |G|={rec.G_L2:.6f}  "
              f"weak circ err={rec.weak_circulation_max_dev:.1e}  defect={rec.compatibility_defect:+.1e}  "
              f"Picard its={rec.picard_iterations}")


res = march(cfg, on_step=show)
d = res.diagnostics
print(f"relative change of |F| over the run: {abs(d[-1].F_L2 / d[0].F_L2 - 1):.2e}")
print(f"largest spread of the wall value within a level: {max(r.trace_spread for r in d):.1e}")
print(f"wall time {res.wall_time:.1f} s")
