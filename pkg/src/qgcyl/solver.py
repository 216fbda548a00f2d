"""Fixed-point time driver.

On each window [t0, t0 + K dt] the map S_eps sends a stream trajectory P to
Q: mollify P, transport the interior and plate fields along its velocity,
then solve the elliptic problem at every time node with the fixed circulation
j0.  A Picard iteration finds the fixed point; the window is halved when the
iteration stops contracting.
"""
from __future__ import annotations

import csv
import logging
import time as _time
from dataclasses import dataclass, field, fields as dc_fields
from pathlib import Path
from typing import Callable

import numpy as np

from .elliptic import BoundaryTriple, GalerkinSystem, compatibility_defect, solve_variational, weak_circulation
from .fields import (CirculationProfile, StreamState, circulation_of, norms, surface_to_spectral,
                     transform_to_spectral, write_snapshot)
from .geometry import DomainSpec, build_basis
from .mollify import (MollifierSpec, box_spacing, build_padded_grid, check_padding, clamp_epsilon,
                      extend_mollify_data, mollify, mollify_stream, sample_on_box, sample_plates_on_box, velocity_from_stream,
                      vertical_data_operator, vertical_stream_operator)
from .transport import VelocityHistory, advance_interior, advance_plates

log = logging.getLogger(__name__)


class PicardError(RuntimeError):
    def __init__(self, msg, history):
        super().__init__(msg)
        self.history = history


@dataclass
class RunConfig:
    domain: DomainSpec = field(default_factory=DomainSpec)
    N: object = (16, 16)
    M: int = 8
    grid: object = None
    box_points: int | None = None
    vertical_kind: str = "legendre"
    n_levels: int | None = None
    epsilon: float | None = None
    kernel: str = "bspline"
    beta0: float = 0.0
    dt: float = 0.05
    T: float = 1.0
    window_steps: int = 10
    picard_tol: float = 1e-8
    picard_max_iter: int = 40
    monotone: bool = False
    f0: object = None  # callable (x, y, z) or ScalarField3D
    g0: object = None  # (bottom(x, y), top(x, y)) or SurfaceFieldPair
    j0: object = "balanced"  # callable (z), array of level values, or "balanced"
    a_L: Callable | None = None  # (t, x, y, z)
    a_nu: tuple | None = None  # (bottom(t, x, y), top(t, x, y))
    snapshot_every: int = 0
    out_dir: str | None = None
    elliptic_rtol: float = 1e-10

    def __post_init__(self):
        for name in ("dt", "picard_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.T < 0:
            raise ValueError("T must be non-negative")
        if self.window_steps < 1 or self.picard_max_iter < 1:
            raise ValueError("window_steps and picard_max_iter must be >= 1")


@dataclass
class DiagnosticsRecord:
    time: float
    F_L2: float
    G_L2: float
    circulation_max_dev: float
    weak_circulation_max_dev: float
    compatibility_defect: float
    H_norm: float
    decay: float
    trace_spread: float
    energy_ratio: float
    picard_iterations: int
    contraction_ratio: float
    trace: np.ndarray = field(repr=False, default=None)
    circulation: np.ndarray = field(repr=False, default=None)

    def row(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in dc_fields(self) if f.name not in ("trace", "circulation")}
        for i, v in enumerate(self.trace):
            d[f"trace_{i}"] = v
        for i, v in enumerate(self.circulation):
            d[f"circulation_{i}"] = v
        return d


@dataclass
class TrajectoryState:
    times: np.ndarray
    P: list
    F: list
    G: list
    iterations: int = 0
    history: list = field(default_factory=list)


@dataclass
class MarchResult:
    times: list
    states: list
    diagnostics: list
    windows: list
    F_final: np.ndarray
    G_final: np.ndarray
    wall_time: float


class QGSolver:
    """Owns the discretisation and the data of one run."""

    def __init__(self, config: RunConfig):
        self.config = cfg = config
        self.hbasis, self.vbasis = build_basis(cfg.domain, cfg.N, cfg.M, cfg.grid, cfg.vertical_kind, cfg.n_levels)
        eps = clamp_epsilon(cfg.epsilon, box_spacing(self.hbasis, cfg.box_points))
        self.grid = build_padded_grid(self.hbasis, eps, cfg.box_points)
        self.mollifier = MollifierSpec(eps, cfg.kernel)
        check_padding(self.grid, self.mollifier)
        self.system = GalerkinSystem(self.hbasis, self.vbasis)
        self.zop_stream = vertical_stream_operator(self.vbasis, self.mollifier)
        self.zop_data = vertical_data_operator(self.vbasis, self.mollifier)
        self.F0, self.G0 = extend_mollify_data(cfg.f0, cfg.g0, self.grid, self.vbasis, self.mollifier, self.zop_data)
        self.j0 = self._circulation_data(cfg.j0)
        self._forcing_cache: dict = {}
        self.data_norm0 = self.box_norms(self.F0, self.G0)
        self.data_norm0["j0"] = norms(self.j0)["L2"]
        d0 = compatibility_defect(self.elliptic_data(self.F0, self.G0))
        self.initial_defect = d0
        log.info("initial compatibility defect %.3e", d0)

    # -- data ----------------------------------------------------------------
    def _circulation_data(self, spec) -> CirculationProfile:
        vb = self.vbasis
        if isinstance(spec, str):
            if spec != "balanced":
                raise ValueError(f"unknown circulation spec {spec!r}")
            d = self.elliptic_data(self.F0, self.G0, CirculationProfile(vb, np.zeros(vb.n_levels)))
            gb, gt = d.g.integrals()
            vals = d.f.level_integrals() - (vb.lam_bottom * gb + vb.lam_top * gt) / vb.h
            return CirculationProfile(vb, vals)
        if spec is None:
            return CirculationProfile(vb, np.zeros(vb.n_levels))
        if callable(spec):
            return CirculationProfile.from_function(vb, spec)
        vals = np.asarray(spec, dtype=float)
        if vals.shape != (vb.n_levels,):
            raise ValueError("circulation values must be given at every collocation level")
        return CirculationProfile(vb, vals)

    def elliptic_data(self, F, G, j=None) -> BoundaryTriple:
        f = transform_to_spectral(self.grid.restrict(F), self.hbasis, self.vbasis)
        Gq = self.grid.restrict(G)
        g = surface_to_spectral(Gq[0], Gq[1], self.hbasis)
        return BoundaryTriple(f, g, self.j0 if j is None else j)

    def forcing_interior(self, t):
        key = ("L", float(t))
        if key not in self._forcing_cache:
            fn = self.config.a_L
            raw = sample_on_box(lambda x, y, z: fn(t, x, y, z), self.grid, self.vbasis.levels)
            self._forcing_cache[key] = mollify(np.tensordot(self.zop_data, raw, axes=1), self.grid, self.mollifier)
        return self._forcing_cache[key]

    def forcing_plates(self, t):
        key = ("nu", float(t))
        if key not in self._forcing_cache:
            fb, ft = self.config.a_nu
            raw = sample_plates_on_box((lambda x, y: fb(t, x, y), lambda x, y: ft(t, x, y)), self.grid)
            self._forcing_cache[key] = mollify(raw, self.grid, self.mollifier)
        return self._forcing_cache[key]

    def box_norms(self, F, G) -> dict:
        w = self.vbasis.level_weights
        return {
            "F": float(np.sqrt(max(w @ self.grid.box_integral(F**2), 0.0))),
            "G": float(np.sqrt(max(np.sum(self.grid.box_integral(G**2)), 0.0))),
        }

    # -- operator S_eps ---------------------------------------------------------
    def velocity_history(self, times, P) -> VelocityHistory:
        us, vs = [], []
        for p in P:
            pe = mollify_stream(p, self.grid, self.mollifier, self.zop_stream)
            u, v = velocity_from_stream(pe, self.grid)
            us.append(u)
            vs.append(v)
        return VelocityHistory(self.grid, np.asarray(times), np.stack(us), np.stack(vs))

    def solve(self, F, G) -> StreamState:
        return solve_variational(self.elliptic_data(F, G), self.system, self.config.elliptic_rtol)

    def apply_S_epsilon(self, traj: TrajectoryState) -> TrajectoryState:
        cfg = self.config
        times = traj.times
        hist = self.velocity_history(times, traj.P)
        plates = hist.select_levels([0, self.vbasis.n_levels - 1])
        F, G = [traj.F[0]], [traj.G[0]]
        fL = self.forcing_interior if cfg.a_L is not None else None
        fN = self.forcing_plates if cfg.a_nu is not None else None
        for k in range(1, len(times)):
            t0, t1 = times[k - 1], times[k]
            F.append(advance_interior(F[-1], hist.window(k - 1, k), t0, t1, fL, cfg.beta0, cfg.monotone))
            G.append(advance_plates(G[-1], plates.window(k - 1, k), t0, t1, fN, cfg.monotone))
        Q = [traj.P[0]] + [self.solve(F[k], G[k]) for k in range(1, len(times))]
        return TrajectoryState(times, Q, F, G, traj.iterations, traj.history)

    def picard_fixed_point(self, F_start, G_start, t0: float, n_steps: int, P_start: StreamState | None = None):
        """Fixed point of S_eps on [t0, t0 + n_steps dt], halving the window on failure."""
        cfg = self.config
        K = n_steps
        Q0 = P_start if P_start is not None else self.solve(F_start, G_start)
        attempts = []
        while True:
            times = t0 + cfg.dt * np.arange(K + 1)
            traj = TrajectoryState(times, [Q0] * (K + 1), [F_start] + [None] * K, [G_start] + [None] * K)
            hist = []
            ok = False
            for it in range(1, cfg.picard_max_iter + 1):
                new = self.apply_S_epsilon(traj)
                diffs = [norms(a - b)["H"] for a, b in zip(new.P, traj.P)]
                scale = max(1.0, max(norms(q)["H"] for q in new.P))
                d = max(diffs) / scale
                ratio = d / hist[-1]["change"] if hist and hist[-1]["change"] > 0 else float("nan")
                hist.append({"iteration": it, "change": d, "ratio": ratio})
                traj = TrajectoryState(times, new.P, new.F, new.G, it, hist)
                if d <= cfg.picard_tol:
                    ok = True
                    break
                if len(hist) >= 3 and hist[-1]["ratio"] >= 1.0 and hist[-2]["ratio"] >= 1.0:
                    break
            attempts.append({"steps": K, "history": hist, "converged": ok})
            if ok:
                traj.history = attempts
                return traj
            if K == 1:
                raise PicardError("Picard iteration failed at the minimal window", attempts)
            log.warning("Picard iteration did not contract on %d steps; halving window", K)
            K = max(1, K // 2)

    # -- diagnostics ------------------------------------------------------------
    def diagnostics_step(self, t, psi: StreamState, F, G, forcing_integral: float = 0.0,
                         iterations: int = 0, ratio: float = float("nan")) -> DiagnosticsRecord:
        bn = self.box_norms(F, G)
        data = self.elliptic_data(F, G)
        circ = circulation_of(psi).values
        defect = compatibility_defect(data)
        weak = weak_circulation(psi, data.f, defect).values
        nm = norms(psi)
        a = self.vbasis.psi_levels @ psi.U.T
        bvals = self.hbasis.boundary_values(a)
        spread = float(np.max(np.abs(bvals))) if bvals.size else 0.0
        d0 = self.data_norm0
        denom = d0["F"] + d0["G"] + d0["j0"] + forcing_integral
        return DiagnosticsRecord(
            time=float(t),
            F_L2=bn["F"],
            G_L2=bn["G"],
            circulation_max_dev=float(np.max(np.abs(circ - self.j0.values))),
            weak_circulation_max_dev=float(np.max(np.abs(weak - self.j0.values))),
            compatibility_defect=defect,
            H_norm=nm["H"],
            decay=nm["decay"],
            trace_spread=spread,
            energy_ratio=nm["H"] / denom if denom > 0 else 0.0,
            picard_iterations=int(iterations),
            contraction_ratio=float(ratio),
            trace=psi.trace(),
            circulation=circ,
        )

    def _forcing_norm(self, t):
        total = 0.0
        w = self.vbasis.level_weights
        if self.config.a_L is not None:
            total += np.sqrt(max(w @ self.grid.box_integral(self.forcing_interior(t) ** 2), 0.0))
        if self.config.a_nu is not None:
            total += np.sqrt(max(np.sum(self.grid.box_integral(self.forcing_plates(t) ** 2)), 0.0))
        return float(total)

    # -- driver -------------------------------------------------------------------
    def march(self, on_step=None) -> MarchResult:
        cfg = self.config
        start = _time.perf_counter()
        n_total = int(round(cfg.T / cfg.dt))
        if n_total * cfg.dt < cfg.T - 1e-12 * max(1.0, cfg.T):
            n_total += 1
        F, G = self.F0, self.G0
        psi = self.solve(F, G)
        forced = cfg.a_L is not None or cfg.a_nu is not None
        fint = 0.0
        fprev = self._forcing_norm(0.0) if forced else 0.0
        recs = [self.diagnostics_step(0.0, psi, F, G, 0.0)]
        times, states, windows = [0.0], [psi], []
        self._snapshot(0, 0.0, psi, F, G)
        if on_step:
            on_step(recs[-1])
        step = 0
        t = 0.0
        while step < n_total:
            K = min(cfg.window_steps, n_total - step)
            traj = self.picard_fixed_point(F, G, t, K, psi)
            att = traj.history[-1]
            windows.append({"t0": t, "attempts": traj.history})
            accepted = att["steps"]
            hist = att["history"]
            ratios = [h["ratio"] for h in hist if np.isfinite(h["ratio"])]
            ratio = max(ratios) if ratios else float("nan")
            for k in range(1, accepted + 1):
                step += 1
                tk = float(traj.times[k])
                if forced:
                    fnow = self._forcing_norm(tk)
                    fint += 0.5 * cfg.dt * (fprev + fnow)
                    fprev = fnow
                rec = self.diagnostics_step(tk, traj.P[k], traj.F[k], traj.G[k], fint, len(hist), ratio)
                recs.append(rec)
                times.append(tk)
                states.append(traj.P[k])
                self._snapshot(step, tk, traj.P[k], traj.F[k], traj.G[k])
                if on_step:
                    on_step(rec)
            F, G, psi = traj.F[accepted], traj.G[accepted], traj.P[accepted]
            t = float(traj.times[accepted])
            self._forcing_cache.clear()
        return MarchResult(times, states, recs, windows, F, G, _time.perf_counter() - start)

    def _snapshot(self, step, t, psi, F, G):
        cfg = self.config
        if not cfg.out_dir or cfg.snapshot_every <= 0 or step % cfg.snapshot_every:
            return
        out = Path(cfg.out_dir) / "snapshots"
        out.mkdir(parents=True, exist_ok=True)
        kw = dict(N=self.hbasis.N, M=self.vbasis.M, n_levels=self.vbasis.n_levels, domain=cfg.domain, time=t)
        write_snapshot(out / f"psi_U_{step:06d}.bin", "psi_U", psi.U, **kw)
        write_snapshot(out / f"psi_V_{step:06d}.bin", "psi_V", psi.V, **kw)
        write_snapshot(out / f"F_{step:06d}.bin", "F", F, **kw)
        write_snapshot(out / f"G_{step:06d}.bin", "G", G, **kw)


def write_diagnostics(path, records, delimiter=","):
    """One row per accepted step with a header naming every column."""
    rows = [r.row() for r in records]
    if not rows:
        return
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), delimiter=delimiter)
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(float(v)) if isinstance(v, (float, np.floating)) else v for k, v in r.items()})


def read_diagnostics(path, delimiter=","):
    with open(path, newline="") as fh:
        return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(fh, delimiter=delimiter)]


def picard_fixed_point(config: RunConfig, n_steps: int | None = None) -> TrajectoryState:
    s = QGSolver(config)
    return s.picard_fixed_point(s.F0, s.G0, 0.0, n_steps or config.window_steps)


def march(config: RunConfig, on_step=None) -> MarchResult:
    return QGSolver(config).march(on_step)
