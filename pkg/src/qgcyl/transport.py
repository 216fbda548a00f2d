"""Semi-Lagrangian transport of the interior and plate fields.

Each step traces backward RK4 characteristics of the (time-linear) mollified
velocity from every box node and interpolates the transported quantity at the
departure point.  The interior field is advected as q = F + beta0 * y.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import interp
from .mollify import PaddedGrid


class TransportError(ValueError):
    pass


@dataclass(eq=False)
class VelocityHistory:
    """Velocity samples (n_times, n_levels, ny, nx) on a box grid, linear in time."""

    grid: PaddedGrid
    times: np.ndarray
    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        self.times = np.ascontiguousarray(self.times, dtype=float)
        self.u = np.ascontiguousarray(self.u, dtype=float)
        self.v = np.ascontiguousarray(self.v, dtype=float)
        if self.u.shape != self.v.shape or self.u.shape[0] != len(self.times):
            raise TransportError("velocity history shape mismatch")
        if not (np.all(np.isfinite(self.u)) and np.all(np.isfinite(self.v))):
            raise TransportError("non-finite velocity")

    def window(self, k0: int, k1: int) -> "VelocityHistory":
        return VelocityHistory(self.grid, self.times[k0:k1 + 1], self.u[k0:k1 + 1], self.v[k0:k1 + 1])

    def select_levels(self, idx) -> "VelocityHistory":
        return VelocityHistory(self.grid, self.times, self.u[:, idx], self.v[:, idx])


@dataclass(frozen=True, eq=False)
class CharacteristicTrace:
    arrival: np.ndarray  # (n, 2)
    levels: np.ndarray  # (n,) level index; z is constant along the path
    t_arrival: float
    times: np.ndarray  # (nsteps + 1,) from arrival back to departure
    path: np.ndarray  # (nsteps + 1, n, 2)

    @property
    def departure(self) -> np.ndarray:
        return self.path[-1]


def _box(grid: PaddedGrid):
    return grid.x[0], grid.y[0], grid.dx, grid.dy, grid.x[-1], grid.y[-1]


def trace_characteristic(points, levels, t_arrival: float, history: VelocityHistory, t_departure: float,
                         dt: float) -> CharacteristicTrace:
    """Integrate dX/ds = u(s, X) from (X, t_arrival) to t_departure with RK4 steps of size about dt."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    lev = np.broadcast_to(np.asarray(levels, dtype=np.int64), (len(pts),)).copy()
    x0, y0, dx, dy, xm, ym = _box(history.grid)
    outside = (pts[:, 0] < x0) | (pts[:, 0] > xm) | (pts[:, 1] < y0) | (pts[:, 1] > ym)
    if np.any(outside):
        raise TransportError("arrival point outside the padded box")
    span = t_departure - t_arrival
    nsteps = max(1, int(np.ceil(abs(span) / dt - 1e-9)))
    vmax = max(np.max(np.abs(history.u)), np.max(np.abs(history.v)))
    if abs(span) / nsteps * vmax > history.grid.spacing:
        warnings.warn("time step exceeds the advective bound dt*|u| <= grid spacing", RuntimeWarning, stacklevel=2)
    path = interp.trace_rk4(history.u, history.v, history.times, lev, pts[:, 0].copy(), pts[:, 1].copy(),
                            float(t_arrival), float(t_departure), nsteps, x0, y0, dx, dy, xm, ym)
    times = t_arrival + span * np.arange(nsteps + 1) / nsteps
    return CharacteristicTrace(pts, lev, float(t_arrival), times, path)


def _hermite(tau, xa, xb, ua, ub, dt):
    """Cubic Hermite path between departure (tau=0) and arrival (tau=1)."""
    h00 = 2 * tau**3 - 3 * tau**2 + 1
    h10 = tau**3 - 2 * tau**2 + tau
    h01 = -2 * tau**3 + 3 * tau**2
    h11 = tau**3 - tau**2
    return h00 * xa + h10 * dt * ua + h01 * xb + h11 * dt * ub


def _semi_lagrangian(Q, history: VelocityHistory, t0: float, t1: float, forcing=None, monotone=False):
    grid = history.grid
    Q = np.ascontiguousarray(Q, dtype=float)
    L = Q.shape[0]
    if history.u.shape[1] != L:
        raise TransportError(f"velocity has {history.u.shape[1]} levels, field has {L}")
    X, Y = grid.mesh()
    npt = X.size
    lev = np.repeat(np.arange(L, dtype=np.int64), npt)
    px = np.tile(X.ravel(), L)
    py = np.tile(Y.ravel(), L)
    x0, y0, dx, dy, xm, ym = _box(grid)
    path = interp.trace_rk4(history.u, history.v, history.times, lev, px, py, float(t1), float(t0), 1,
                            x0, y0, dx, dy, xm, ym)
    xd, yd = path[-1, :, 0].copy(), path[-1, :, 1].copy()
    out = interp.interp_points(Q, lev, xd, yd, x0, y0, dx, dy, monotone)
    if forcing is not None:
        dt = t1 - t0
        u1, v1 = interp.velocity_at(history.u, history.v, history.times, lev, float(t1), px, py, x0, y0, dx, dy)
        u0, v0 = interp.velocity_at(history.u, history.v, history.times, lev, float(t0), xd, yd, x0, y0, dx, dy)
        acc = np.zeros_like(out)
        for tau, w in zip((0.0, 0.25, 0.5, 0.75, 1.0), (1.0, 4.0, 2.0, 4.0, 1.0)):
            xs = np.clip(_hermite(tau, xd, px, u0, u1, dt), x0, xm)
            ys = np.clip(_hermite(tau, yd, py, v0, v1, dt), y0, ym)
            a = np.ascontiguousarray(forcing(t0 + tau * dt), dtype=float)
            acc += w * interp.interp_points(a, lev, xs, ys, x0, y0, dx, dy, False)
        out += acc * dt / 12.0
    return out.reshape(Q.shape)


def advance_interior(F, history: VelocityHistory, t0: float, t1: float, forcing=None, beta0: float = 0.0,
                     monotone: bool = False):
    """F(t1) from F(t0): (d/dt + u.grad)(F + beta0 y) = a_L along characteristics.

    ``forcing(t)`` returns mollified box samples (n_levels, ny, nx).
    """
    y = history.grid.y[None, :, None]
    q = np.asarray(F) + beta0 * y
    return _semi_lagrangian(q, history, t0, t1, forcing, monotone) - beta0 * y


def advance_plates(G, history: VelocityHistory, t0: float, t1: float, forcing=None, monotone: bool = False):
    """Plate fields (2, ny, nx) with velocity history restricted to the two plates."""
    return _semi_lagrangian(G, history, t0, t1, forcing, monotone)
