"""Compiled kernels: tensor cubic interpolation and RK4 characteristic tracing.

All fields live on a uniform box grid with node (i, j) at
(x0 + i*dx, y0 + j*dy) and arrays indexed [..., j, i].  Points are clamped to
the box; stencils at the box edge replicate the outermost nodes.
"""
from __future__ import annotations

import numpy as np
from numba import config, njit, prange

if config.THREADING_LAYER == "default":
    config.THREADING_LAYER = "workqueue"


@njit(cache=True, inline="always")
def _weights(t):
    w0 = -t * (t - 1.0) * (t - 2.0) / 6.0
    w1 = (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0
    w2 = -(t + 1.0) * t * (t - 2.0) / 2.0
    w3 = (t + 1.0) * t * (t - 1.0) / 6.0
    return w0, w1, w2, w3


@njit(cache=True)
def _interp_one(f, x, y, x0, y0, dx, dy, monotone):
    ny, nx = f.shape
    sx = (x - x0) / dx
    sy = (y - y0) / dy
    if sx < 0.0:
        sx = 0.0
    if sx > nx - 1.0:
        sx = nx - 1.0
    if sy < 0.0:
        sy = 0.0
    if sy > ny - 1.0:
        sy = ny - 1.0
    i = int(np.floor(sx))
    j = int(np.floor(sy))
    if i > nx - 2:
        i = nx - 2
    if j > ny - 2:
        j = ny - 2
    tx = sx - i
    ty = sy - j
    wx = _weights(tx)
    wy = _weights(ty)
    acc = 0.0
    for b in range(4):
        jj = j - 1 + b
        if jj < 0:
            jj = 0
        elif jj > ny - 1:
            jj = ny - 1
        row = 0.0
        for a in range(4):
            ii = i - 1 + a
            if ii < 0:
                ii = 0
            elif ii > nx - 1:
                ii = nx - 1
            row += wx[a] * f[jj, ii]
        acc += wy[b] * row
    if monotone:
        lo = min(min(f[j, i], f[j, i + 1]), min(f[j + 1, i], f[j + 1, i + 1]))
        hi = max(max(f[j, i], f[j, i + 1]), max(f[j + 1, i], f[j + 1, i + 1]))
        if acc < lo:
            acc = lo
        elif acc > hi:
            acc = hi
    return acc


@njit(cache=True, parallel=True)
def interp_points(fields, lev, px, py, x0, y0, dx, dy, monotone):
    """Interpolate fields[lev[k]] at (px[k], py[k])."""
    n = px.shape[0]
    out = np.empty(n)
    for k in prange(n):
        out[k] = _interp_one(fields[lev[k]], px[k], py[k], x0, y0, dx, dy, monotone)
    return out


@njit(cache=True)
def _stencil(nx, ny, x, y, x0, y0, dx, dy):
    sx = min(max((x - x0) / dx, 0.0), nx - 1.0)
    sy = min(max((y - y0) / dy, 0.0), ny - 1.0)
    i = min(int(np.floor(sx)), nx - 2)
    j = min(int(np.floor(sy)), ny - 2)
    return i, j, sx - i, sy - j


@njit(cache=True)
def _velocity(uh, vh, times, lev, s, x, y, x0, y0, dx, dy):
    """Both velocity components, cubic in space and linear in time, from one stencil."""
    nt = times.shape[0]
    k = 0
    w = 0.0
    if nt > 1:
        while k < nt - 2 and s > times[k + 1]:
            k += 1
        w = min(max((s - times[k]) / (times[k + 1] - times[k]), 0.0), 1.0)
    k1 = k + 1 if w > 0.0 else k
    ny, nx = uh.shape[2], uh.shape[3]
    i, j, tx, ty = _stencil(nx, ny, x, y, x0, y0, dx, dy)
    wx = _weights(tx)
    wy = _weights(ty)
    u = 0.0
    v = 0.0
    for b in range(4):
        jj = min(max(j - 1 + b, 0), ny - 1)
        ru = 0.0
        rv = 0.0
        for a in range(4):
            ii = min(max(i - 1 + a, 0), nx - 1)
            c = wx[a]
            ru += c * ((1.0 - w) * uh[k, lev, jj, ii] + w * uh[k1, lev, jj, ii])
            rv += c * ((1.0 - w) * vh[k, lev, jj, ii] + w * vh[k1, lev, jj, ii])
        u += wy[b] * ru
        v += wy[b] * rv
    return u, v


@njit(cache=True)
def _clamp(v, lo, hi):
    if v < lo:
        return lo
    if v > hi:
        return hi
    return v


@njit(cache=True, parallel=True)
def trace_rk4(uh, vh, times, lev, px, py, t_from, t_to, nsteps, x0, y0, dx, dy, xmax, ymax):
    """Classical RK4 for dX/ds = u(s, X) from t_from to t_to (either direction).

    uh, vh: (n_times, n_levels, ny, nx) velocity samples, linear in time.
    Returns the path at the nsteps+1 step times, shape (nsteps+1, n, 2).
    """
    n = px.shape[0]
    path = np.empty((nsteps + 1, n, 2))
    h = (t_to - t_from) / nsteps
    for k in prange(n):
        x = px[k]
        y = py[k]
        L = lev[k]
        path[0, k, 0] = x
        path[0, k, 1] = y
        s = t_from
        for st in range(nsteps):
            k1u, k1v = _velocity(uh, vh, times, L, s, x, y, x0, y0, dx, dy)
            xa = _clamp(x + 0.5 * h * k1u, x0, xmax)
            ya = _clamp(y + 0.5 * h * k1v, y0, ymax)
            k2u, k2v = _velocity(uh, vh, times, L, s + 0.5 * h, xa, ya, x0, y0, dx, dy)
            xa = _clamp(x + 0.5 * h * k2u, x0, xmax)
            ya = _clamp(y + 0.5 * h * k2v, y0, ymax)
            k3u, k3v = _velocity(uh, vh, times, L, s + 0.5 * h, xa, ya, x0, y0, dx, dy)
            xa = _clamp(x + h * k3u, x0, xmax)
            ya = _clamp(y + h * k3v, y0, ymax)
            k4u, k4v = _velocity(uh, vh, times, L, s + h, xa, ya, x0, y0, dx, dy)
            x = _clamp(x + h * (k1u + 2.0 * k2u + 2.0 * k3u + k4u) / 6.0, x0, xmax)
            y = _clamp(y + h * (k1v + 2.0 * k2v + 2.0 * k3v + k4v) / 6.0, y0, ymax)
            s = t_from + (st + 1) * h
            path[st + 1, k, 0] = x
            path[st + 1, k, 1] = y
    return path


@njit(cache=True, parallel=True)
def velocity_at(uh, vh, times, lev, s, px, py, x0, y0, dx, dy):
    n = px.shape[0]
    u = np.empty(n)
    v = np.empty(n)
    for k in prange(n):
        a, b = _velocity(uh, vh, times, lev[k], s, px[k], py[k], x0, y0, dx, dy)
        u[k] = a
        v[k] = b
    return u, v
