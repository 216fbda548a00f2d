"""Command-line driver: qgcyl {solve-elliptic, evolve, sqg-compare, convergence-study}.

Exit status: 0 success, 1 error, 2 usage, 3 fixed-point non-convergence.
Failures leave ``failure.json`` in the output directory.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
import traceback
from pathlib import Path

import numpy as np

from . import __version__
from .config import ENV_PREFIX, ConfigError, describe_defaults, load_settings

log = logging.getLogger("qgcyl")

EXIT_OK, EXIT_ERROR, EXIT_USAGE, EXIT_PICARD = 0, 1, 2, 3


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    return str(o)


def write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def write_table(path, rows, delimiter=","):
    if not rows:
        return
    keys = list(rows[0])
    for r in rows[1:]:
        keys += [k for k in r if k not in keys]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys, delimiter=delimiter)
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(float(v)) if isinstance(v, (float, np.floating)) else v for k, v in r.items()})


class _StreamingCsv:
    """Writes diagnostics rows as they arrive so a failed run keeps its prefix."""

    def __init__(self, path, delimiter):
        self.path, self.delimiter = path, delimiter
        self.fh = None
        self.writer = None

    def __call__(self, rec):
        row = rec.row()
        if self.writer is None:
            self.fh = open(self.path, "w", newline="")
            self.writer = csv.DictWriter(self.fh, fieldnames=list(row), delimiter=self.delimiter)
            self.writer.writeheader()
        self.writer.writerow({k: repr(float(v)) if isinstance(v, (float, np.floating)) else v for k, v in row.items()})
        self.fh.flush()

    def close(self):
        if self.fh:
            self.fh.close()


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------
def cmd_solve_elliptic(settings, out: Path) -> dict:
    from .elliptic import BoundaryTriple, GalerkinSystem, bilinear_residual, compatibility_defect, solve_variational
    from .fields import circulation_of, norms, write_snapshot
    from .scenarios import get_scenario, manufactured_stream
    from .solver import QGSolver

    name = settings.get("scenario", "name")
    tol = settings.values["tolerances"]
    rows = []
    if name == "manufactured":
        from .elliptic import apply_L
        from .geometry import build_basis

        cfg = settings.run_config(get_scenario("manufactured", settings.domain()))

        hb, vb = build_basis(cfg.domain, cfg.N, cfg.M, cfg.grid, cfg.vertical_kind, cfg.n_levels)
        rng = np.random.default_rng(settings.get("run", "seed"))
        exact = manufactured_stream(hb, vb, rng)
        t0 = time.perf_counter()
        data = BoundaryTriple(apply_L(exact), exact.neumann_data(), circulation_of(exact))
        system = GalerkinSystem(hb, vb)
        psi = solve_variational(data, system, cfg.elliptic_rtol)
        wall = time.perf_counter() - t0
        err = norms(psi - exact)
        ref = norms(exact)
        rows = [
            {"quantity": "H_error_relative", "value": err["H"] / ref["H"], "tolerance": tol["manufactured"]},
            {"quantity": "L2_error_relative", "value": err["L2"] / ref["L2"], "tolerance": tol["manufactured"]},
            {"quantity": "galerkin_residual", "value": psi.meta["residual"], "tolerance": cfg.elliptic_rtol},
            {"quantity": "compatibility_defect", "value": abs(psi.meta["defect"]), "tolerance": tol["defect"]},
        ]
        summary_extra = {"N": hb.N, "M": vb.M, "solve_seconds": wall}
    else:
        cfg = settings.run_config(out_dir=str(out))
        s = QGSolver(cfg)
        data = s.elliptic_data(s.F0, s.G0)
        psi = s.solve(s.F0, s.G0)
        circ = circulation_of(psi).values
        j0n = norms(s.j0)["L2"]
        rows = [
            {"quantity": "galerkin_residual", "value": bilinear_residual(psi, data, s.system),
             "tolerance": cfg.elliptic_rtol},
            {"quantity": "compatibility_defect", "value": abs(compatibility_defect(data)), "tolerance": tol["defect"]},
            {"quantity": "circulation_max_dev", "value": float(np.max(np.abs(circ - s.j0.values))),
             "tolerance": tol["circulation"] * (1 + j0n)},
        ]
        kw = dict(N=s.hbasis.N, M=s.vbasis.M, n_levels=s.vbasis.n_levels, domain=cfg.domain, time=0.0)
        write_snapshot(out / "psi_U.bin", "psi_U", psi.U, **kw)
        write_snapshot(out / "psi_V.bin", "psi_V", psi.V, **kw)
        summary_extra = {"N": s.hbasis.N, "M": s.vbasis.M, "H_norm": norms(psi)["H"]}
    for r in rows:
        r["pass"] = bool(r["value"] <= r["tolerance"])
    write_table(out / "elliptic_errors.csv", rows, settings.get("output", "delimiter"))
    for r in rows:
        print(f"{r['quantity']:<24} {r['value']:.3e}  (tol {r['tolerance']:.1e})  {'ok' if r['pass'] else 'FAIL'}")
    return {"scenario": name, "table": rows, **summary_extra}


def _evolve(settings, cfg, out: Path, prefix="", on_step=None):
    from .fields import norms
    from .solver import QGSolver

    s = QGSolver(cfg)
    sink = _StreamingCsv(out / f"{prefix}diagnostics.csv", settings.get("output", "delimiter"))

    def cb(rec):
        sink(rec)
        if on_step:
            on_step(rec)

    try:
        res = s.march(cb)
    finally:
        sink.close()
    d = res.diagnostics
    T = max(d[-1].time, 1e-300)
    p0 = res.states[0]
    summary = {
        "steps": len(d) - 1,
        "final_time": d[-1].time,
        "wall_seconds": res.wall_time,
        "F_drift_per_time": abs(d[-1].F_L2 - d[0].F_L2) / max(d[0].F_L2, 1e-300) / T if d[0].F_L2 > 0 else 0.0,
        "G_drift_per_time": abs(d[-1].G_L2 - d[0].G_L2) / max(d[0].G_L2, 1e-300) / T if d[0].G_L2 > 0 else 0.0,
        "circulation_max_dev": max(r.circulation_max_dev for r in d),
        "weak_circulation_max_dev": max(r.weak_circulation_max_dev for r in d),
        "circulation_drift": float(max(np.max(np.abs(r.circulation - d[0].circulation)) for r in d)),
        "max_abs_defect": max(abs(r.compatibility_defect) for r in d),
        "max_energy_ratio": max(r.energy_ratio for r in d),
        "max_trace_spread": max(r.trace_spread for r in d),
        "psi_drift": float(max(norms(p - p0)["H"] for p in res.states)),
        "picard_iterations_max": max(r.picard_iterations for r in d),
        "j0_L2": s.data_norm0["j0"],
        "initial_defect": s.initial_defect,
    }
    return s, res, summary


def cmd_evolve(settings, out: Path) -> dict:
    cfg = settings.run_config(out_dir=str(out))
    tol = settings.values["tolerances"]
    _, _, summary = _evolve(settings, cfg, out)
    checks = {
        "norm_drift": max(summary["F_drift_per_time"], summary["G_drift_per_time"]) <= tol["norm_drift"],
        "circulation": summary["circulation_max_dev"] <= tol["circulation"] * (1 + summary["j0_L2"]),
        "defect": summary["max_abs_defect"] <= tol["defect"],
        "steady_drift": summary["psi_drift"] <= tol["steady_drift"],
        "lateral_trace": summary["max_trace_spread"] <= tol["lateral_trace"],
    }
    summary["checks"] = checks
    for k in ("F_drift_per_time", "G_drift_per_time", "circulation_max_dev", "weak_circulation_max_dev",
              "max_abs_defect", "psi_drift", "max_energy_ratio"):
        print(f"{k:<26} {summary[k]:.3e}")
    return summary


def cmd_sqg_compare(settings, out: Path) -> dict:
    from .geometry import build_basis
    from .scenarios import get_scenario, sqg_coefficients
    from .sqg import SqgState, harmonic_extension_circulation, run_sqg

    name = settings.get("scenario", "name")
    if name == "baroclinic":  # the default scenario has no surface-only datum
        name = "sqg_two_mode"
    sc = get_scenario(name, settings.domain(), amplitude=settings.get("scenario", "amplitude"))
    cfg = settings.run_config(sc, out_dir=str(out))
    hb, _ = build_basis(cfg.domain, cfg.N, cfg.M, cfg.grid)
    a0 = sqg_coefficients(sc, hb)
    run = run_sqg(SqgState(hb, a0), cfg.T, settings.get("sqg", "dt"), settings.get("sqg", "every"))
    ec = harmonic_extension_circulation(run, hb, settings.heights())
    write_table(out / "sqg_diagnostics.csv", list(ec.rows()), settings.get("output", "delimiter"))
    _, _, qg = _evolve(settings, cfg, out, prefix="qg_")
    summary = {
        "sqg_relative_drift": ec.relative_drift(),
        "sqg_l2_drift": float(abs(run.l2[-1] - run.l2[0]) / run.l2[0]),
        "sqg_max_tail_fraction": float(run.tail.max()),
        "obstruction_max_per_height": np.max(np.abs(ec.obstruction), axis=0).tolist(),
        "heights": ec.z.tolist(),
        "qg_circulation_drift": qg["circulation_drift"],
        "qg_weak_circulation_max_dev": qg["weak_circulation_max_dev"],
        "qg": qg,
    }
    print(f"SQG extension circulation drift (relative) {summary['sqg_relative_drift']:.3e}")
    print(f"QG circulation drift                        {summary['qg_circulation_drift']:.3e}")
    print("obstruction max |.| per height            ", " ".join(f"{v:.2e}" for v in summary["obstruction_max_per_height"]))
    return summary


def observed_orders(sizes, errors):
    """Orders between consecutive resolutions; sizes are mesh widths (decreasing)."""
    out = [None]
    for (h0, e0), (h1, e1) in zip(zip(sizes, errors), zip(sizes[1:], errors[1:])):
        out.append(float(np.log(e0 / e1) / np.log(h0 / h1)) if e0 > 0 and e1 > 0 else None)
    return out


def cmd_convergence_study(settings, out: Path) -> dict:
    T = settings.get("convergence", "final_time")
    rows = []
    for res in settings.resolutions():
        cfg = settings.run_config(modes=res, T=T)
        sub = out / f"res_{res}"
        sub.mkdir(parents=True, exist_ok=True)
        s, _, summ = _evolve(settings, cfg, sub)
        rows.append({
            "resolution": res,
            "modes": s.hbasis.N,
            "spacing": s.grid.spacing,
            "F_drift_per_time": summ["F_drift_per_time"],
            "G_drift_per_time": summ["G_drift_per_time"],
            "circulation_max_dev": summ["circulation_max_dev"],
            "max_abs_defect": summ["max_abs_defect"],
            "wall_seconds": summ["wall_seconds"],
        })
    hs = [r["spacing"] for r in rows]
    for key in ("F_drift_per_time", "G_drift_per_time", "circulation_max_dev", "max_abs_defect"):
        for r, p in zip(rows, observed_orders(hs, [r[key] for r in rows])):
            r[f"order_{key}"] = p if p is not None else ""
    write_table(out / "convergence.csv", rows, settings.get("output", "delimiter"))
    print(f"{'res':>6} {'spacing':>9} {'F drift/T':>10} {'order':>6} {'G drift/T':>10} {'order':>6}"
          f" {'defect':>9} {'order':>6}")
    for r in rows:
        def o(k):
            v = r[f"order_{k}"]
            return f"{v:6.2f}" if v != "" else "     -"
        print(f"{r['resolution']:>6} {r['spacing']:9.4f} {r['F_drift_per_time']:10.3e} {o('F_drift_per_time')}"
              f" {r['G_drift_per_time']:10.3e} {o('G_drift_per_time')} {r['max_abs_defect']:9.2e} {o('max_abs_defect')}")
    return {"rows": rows}


COMMANDS = {
    "solve-elliptic": cmd_solve_elliptic,
    "evolve": cmd_evolve,
    "sqg-compare": cmd_sqg_compare,
    "convergence-study": cmd_convergence_study,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="qgcyl",
        description="Quasi-geostrophic flow in a stratified cylinder with a prescribed lateral circulation.",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=f"Environment overrides: {ENV_PREFIX}<SECTION>_<KEY>=value\n\nConfig keys and defaults:\n"
        + describe_defaults(),
    )
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("command", choices=sorted(COMMANDS), help="what to run")
    p.add_argument("--config", type=Path, help="INI file")
    p.add_argument("--out", type=Path, default=Path("qgcyl-out"), help="output directory")
    p.add_argument("--threads", type=int, help="compiled-kernel threads")
    p.add_argument("--seed", type=int, help="seed for randomised scenarios")
    p.add_argument("--snapshot-every", type=int, dest="snapshot_every", help="snapshot cadence in steps")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _set_threads(n):
    import numba

    numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    record = {"command": args.command, "config": str(args.config) if args.config else None}
    try:
        settings = load_settings(args.config)
        if args.threads is not None:
            settings.set("run", "threads", args.threads)
        if args.seed is not None:
            settings.set("run", "seed", args.seed)
        if args.snapshot_every is not None:
            if args.snapshot_every < 0:
                raise ConfigError("--snapshot-every must be non-negative")
            settings.set("output", "snapshot_every", args.snapshot_every)
        _set_threads(settings.get("run", "threads"))
        summary = COMMANDS[args.command](settings, out)
        write_json(out / "summary.json", {**record, "status": "ok", "settings": settings.values, **summary})
        return EXIT_OK
    except Exception as exc:  # noqa: BLE001 - every failure becomes a record
        from .solver import PicardError

        code = EXIT_PICARD if isinstance(exc, PicardError) else EXIT_ERROR
        fail = {**record, "status": "error", "error_type": type(exc).__name__, "message": str(exc),
                "exit_status": code}
        if isinstance(exc, PicardError):
            fail["history"] = exc.history
        if not isinstance(exc, ConfigError):
            fail["traceback"] = traceback.format_exc()
        write_json(out / "failure.json", fail)
        print(f"qgcyl: {type(exc).__name__}: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
