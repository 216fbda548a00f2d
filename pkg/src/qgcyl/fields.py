"""Fields on the cylinder and its plates, transforms, traces and norms.

Horizontal structure is a constant channel plus the retained eigenmodes,
value(x, y) = const + sum_n a_n e_n(x, y).  The constant channel carries the
lateral trace and the part of a field that the Dirichlet modes cannot
represent on a truncated basis.  Vertical structure is sampled at the
collocation levels of the vertical basis.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import DomainSpec, VerticalBasis


def _gram_project(hbasis, moments, integral):
    """Coefficients (const, a_n) reproducing the given moments and integral."""
    mu = hbasis.means
    rho = hbasis.area - mu @ mu
    c = (integral - moments @ mu) / rho
    a = moments - c[..., None] * mu
    return c, a


@dataclass(frozen=True, eq=False)
class ScalarField3D:
    hbasis: object
    vbasis: VerticalBasis
    coeffs: np.ndarray  # (n_levels, N)
    const: np.ndarray  # (n_levels,)

    def __post_init__(self):
        shp = (self.vbasis.n_levels, self.hbasis.N)
        if self.coeffs.shape != shp or self.const.shape != shp[:1]:
            raise ValueError(f"field shape mismatch: expected {shp}, got {self.coeffs.shape}/{self.const.shape}")

    @classmethod
    def zeros(cls, hbasis, vbasis):
        return cls(hbasis, vbasis, np.zeros((vbasis.n_levels, hbasis.N)), np.zeros(vbasis.n_levels))

    def level_integrals(self) -> np.ndarray:
        """int_Omega f(., z_l) for every level."""
        return self.const * self.hbasis.area + self.coeffs @ self.hbasis.means

    def integral(self) -> float:
        return float(self.vbasis.level_weights @ self.level_integrals())

    def moments(self) -> np.ndarray:
        """<f(., z_l), e_n> for every level."""
        return self.coeffs + self.const[:, None] * self.hbasis.means

    def __add__(self, other):
        return ScalarField3D(self.hbasis, self.vbasis, self.coeffs + other.coeffs, self.const + other.const)

    def __sub__(self, other):
        return ScalarField3D(self.hbasis, self.vbasis, self.coeffs - other.coeffs, self.const - other.const)

    def scale(self, s: float):
        return ScalarField3D(self.hbasis, self.vbasis, s * self.coeffs, s * self.const)

    def add_constant(self, c: float):
        return ScalarField3D(self.hbasis, self.vbasis, self.coeffs.copy(), self.const + c)


@dataclass(frozen=True, eq=False)
class SurfaceFieldPair:
    hbasis: object
    bottom: np.ndarray
    top: np.ndarray
    bottom_const: float = 0.0
    top_const: float = 0.0

    @classmethod
    def zeros(cls, hbasis):
        return cls(hbasis, np.zeros(hbasis.N), np.zeros(hbasis.N))

    def integrals(self):
        mu, A = self.hbasis.means, self.hbasis.area
        return (self.bottom_const * A + self.bottom @ mu, self.top_const * A + self.top @ mu)

    def __add__(self, other):
        return SurfaceFieldPair(self.hbasis, self.bottom + other.bottom, self.top + other.top,
                                self.bottom_const + other.bottom_const, self.top_const + other.top_const)

    def scale(self, s: float):
        return SurfaceFieldPair(self.hbasis, s * self.bottom, s * self.top, s * self.bottom_const, s * self.top_const)


@dataclass(frozen=True, eq=False)
class CirculationProfile:
    vbasis: VerticalBasis
    values: np.ndarray  # (n_levels,)

    def integral(self) -> float:
        return float(self.vbasis.level_weights @ self.values)

    @classmethod
    def from_function(cls, vbasis, func):
        return cls(vbasis, np.asarray(func(vbasis.levels), dtype=float) * np.ones(vbasis.n_levels))


@dataclass(frozen=True, eq=False)
class VelocityField:
    """Horizontal velocity (u, v) per level on the basis quadrature grid."""

    hbasis: object
    u: np.ndarray
    v: np.ndarray


@dataclass(eq=False)
class StreamState:
    """Galerkin representation of Psi in the energy space.

    Psi = sum_{n,m} U[n, m] e_n psi_m + sum_m V[m] psi_m, where the pure-z part
    V is also the lateral trace and V[0] fixes the mean.
    """

    hbasis: object
    vbasis: VerticalBasis
    U: np.ndarray  # (N, M+1)
    V: np.ndarray  # (M+1,)
    meta: dict = field(default_factory=dict)

    @classmethod
    def zeros(cls, hbasis, vbasis):
        return cls(hbasis, vbasis, np.zeros((hbasis.N, vbasis.M + 1)), np.zeros(vbasis.M + 1))

    def at_levels(self) -> ScalarField3D:
        P = self.vbasis.psi_levels
        return ScalarField3D(self.hbasis, self.vbasis, P @ self.U.T, P @ self.V)

    def trace(self) -> np.ndarray:
        """Lateral trace c(z) at the collocation levels."""
        return self.vbasis.psi_levels @ self.V

    def mean(self) -> float:
        h = self.vbasis.h
        ints = self.vbasis.integrals
        mu, A = self.hbasis.means, self.hbasis.area
        return float((mu @ (self.U @ ints) + A * (self.V @ ints)) / (A * h))

    def normalized(self) -> "StreamState":
        V = self.V.copy()
        V[0] -= self.mean()  # psi_0 is the constant 1
        return StreamState(self.hbasis, self.vbasis, self.U.copy(), V, dict(self.meta))

    def neumann_data(self) -> SurfaceFieldPair:
        """Outward normal derivative on the plates: -d/dz at z=0, +d/dz at z=h."""
        vb = self.vbasis
        d0 = vb.eval(np.array([0.0]), 1)[0]
        dh = vb.eval(np.array([vb.h]), 1)[0]
        return SurfaceFieldPair(self.hbasis, -self.U @ d0, self.U @ dh, float(-self.V @ d0), float(self.V @ dh))

    def __sub__(self, other):
        return StreamState(self.hbasis, self.vbasis, self.U - other.U, self.V - other.V)

    def __add__(self, other):
        return StreamState(self.hbasis, self.vbasis, self.U + other.U, self.V + other.V)

    def scale(self, s):
        return StreamState(self.hbasis, self.vbasis, s * self.U, s * self.V)


# --------------------------------------------------------------------------
# Transforms
# --------------------------------------------------------------------------


def transform_to_spectral(values, hbasis, vbasis) -> ScalarField3D:
    """Grid samples (n_levels, *grid_shape) to spectral form.

    Reproduces the quadrature moments against every retained mode and the
    integral over Omega; exact for constants plus retained modes.
    """
    values = np.asarray(values, dtype=float)
    if values.shape != (vbasis.n_levels,) + tuple(hbasis.grid_shape):
        raise ValueError(
            f"grid shape mismatch: expected {(vbasis.n_levels,) + tuple(hbasis.grid_shape)}, got {values.shape}"
        )
    c, a = _gram_project(hbasis, hbasis.analyze(values), hbasis.integrate(values))
    return ScalarField3D(hbasis, vbasis, a, c)


def transform_to_grid(f: ScalarField3D) -> np.ndarray:
    return f.const[:, None, None] + f.hbasis.synthesize(f.coeffs)


def surface_to_spectral(bottom_values, top_values, hbasis) -> SurfaceFieldPair:
    vals = np.stack([np.asarray(bottom_values, float), np.asarray(top_values, float)])
    c, a = _gram_project(hbasis, hbasis.analyze(vals), hbasis.integrate(vals))
    return SurfaceFieldPair(hbasis, a[0], a[1], float(c[0]), float(c[1]))


def surface_to_grid(g: SurfaceFieldPair) -> np.ndarray:
    vals = g.hbasis.synthesize(np.stack([g.bottom, g.top]))
    vals[0] += g.bottom_const
    vals[1] += g.top_const
    return vals


def field_from_function(func, hbasis, vbasis) -> ScalarField3D:
    """Sample func(x, y, z) on the quadrature grid at every level and project."""
    x, y = grid_points(hbasis)
    vals = np.stack([np.broadcast_to(func(x, y, z), x.shape) for z in vbasis.levels])
    return transform_to_spectral(vals, hbasis, vbasis)


def grid_points(hbasis):
    if hbasis.shape == "rectangle":
        return np.meshgrid(hbasis.x, hbasis.y)
    return hbasis.xq, hbasis.yq


# --------------------------------------------------------------------------
# Differential operators and traces
# --------------------------------------------------------------------------


def gradient_perp(psi: StreamState) -> VelocityField:
    """(u, v) = (-dPsi/dy, dPsi/dx) per level; the pure-z part contributes nothing."""
    a = psi.vbasis.psi_levels @ psi.U.T
    gx, gy = psi.hbasis.synthesize_gradient(a)
    return VelocityField(psi.hbasis, -gy, gx)


def circulation_of(psi: StreamState) -> CirculationProfile:
    """j(z) = -sum_n lambda_n mu_n a_n(z), from the divergence theorem."""
    w = psi.hbasis.eigenvalues * psi.hbasis.means
    a = psi.vbasis.psi_levels @ psi.U.T
    return CirculationProfile(psi.vbasis, -(a @ w))


def boundary_circulation(psi: StreamState) -> CirculationProfile:
    """Circulation by direct boundary quadrature of grad(Psi).nu."""
    T, w = psi.hbasis.boundary_quadrature()
    a = psi.vbasis.psi_levels @ psi.U.T
    return CirculationProfile(psi.vbasis, (a @ T) @ w)


def tangency_residual(psi: StreamState) -> float:
    """max |(u, v).nu| on the lateral boundary: the tangential derivative of Psi there."""
    hb = psi.hbasis
    a = psi.vbasis.psi_levels @ psi.U.T
    if hb.shape == "rectangle":
        gx, gy = hb.synthesize_gradient(a)
        # (u, v).nu on x = const edges is -Psi_y * nu_x; on y = const edges Psi_x * nu_y
        edges = [gy[..., :, 0], gy[..., :, -1], gx[..., 0, :], gx[..., -1, :]]
        return float(max(np.max(np.abs(e)) for e in edges)) if a.size else 0.0
    R = hb.domain.R
    th = hb.theta
    _, Ex, Ey = hb.tables_at(R * np.cos(th), R * np.sin(th), gradients=True)
    gx, gy = a @ Ex, a @ Ey
    return float(np.max(np.abs(-gy * np.cos(th) + gx * np.sin(th))))


# --------------------------------------------------------------------------
# Norms
# --------------------------------------------------------------------------


def h_inner(a: StreamState, b: StreamState) -> float:
    """Energy inner product int (Psi_x Phi_x + Psi_y Phi_y + lambda Psi_z Phi_z)."""
    vb, hb = a.vbasis, a.hbasis
    C, S = vb.C, vb.S
    lam, mu = hb.eigenvalues, hb.means
    horiz = np.sum(lam[:, None] * (a.U @ C) * b.U) + np.sum((a.U @ S) * b.U)
    cross = mu @ (a.U @ S @ b.V) + mu @ (b.U @ S @ a.V)
    pure = hb.area * (a.V @ S @ b.V)
    return float(horiz + cross + pure)


def _field_l2_sq(coeffs, const, hbasis, weights):
    per_level = np.sum(coeffs**2, axis=-1) + 2 * const * (coeffs @ hbasis.means) + const**2 * hbasis.area
    return float(weights @ per_level)


def norms(x) -> dict:
    """Named norms of a field, plate pair, circulation profile or stream state."""
    if isinstance(x, ScalarField3D):
        w = x.vbasis.level_weights
        lam = x.hbasis.eigenvalues
        return {
            "L2": np.sqrt(max(_field_l2_sq(x.coeffs, x.const, x.hbasis, w), 0.0)),
            "decay": float(np.sqrt(w @ ((x.coeffs**2) @ np.sqrt(lam)))),
        }
    if isinstance(x, SurfaceFieldPair):
        one = np.ones(1)
        sq = _field_l2_sq(x.bottom[None], np.array([x.bottom_const]), x.hbasis, one)
        sq += _field_l2_sq(x.top[None], np.array([x.top_const]), x.hbasis, one)
        return {"L2": float(np.sqrt(max(sq, 0.0)))}
    if isinstance(x, CirculationProfile):
        return {"L2": float(np.sqrt(x.vbasis.level_weights @ x.values**2))}
    if isinstance(x, StreamState):
        vb, hb = x.vbasis, x.hbasis
        C = vb.C
        lam, mu = hb.eigenvalues, hb.means
        l2 = np.sum((x.U @ C) * x.U) + 2 * mu @ (x.U @ C @ x.V) + hb.area * (x.V @ C @ x.V)
        dec = np.sum(np.sqrt(lam) * (1 + lam) * np.sum((x.U @ C) * x.U, axis=1))
        return {
            "H": float(np.sqrt(max(h_inner(x, x), 0.0))),
            "L2": float(np.sqrt(max(l2, 0.0))),
            "decay": float(np.sqrt(dec)),
        }
    raise TypeError(f"norms() does not support {type(x).__name__}")


# --------------------------------------------------------------------------
# Snapshot files
# --------------------------------------------------------------------------

_MAGIC = "qgcyl-snapshot 1"


def write_snapshot(path, name: str, array, *, N: int, M: int, n_levels: int, domain: DomainSpec, time: float):
    """Text header lines then row-major little-endian float64 data."""
    arr = np.ascontiguousarray(np.asarray(array, dtype="<f8"))
    header = [
        _MAGIC,
        f"field: {name}",
        "dims: " + " ".join(str(d) for d in arr.shape),
        f"N: {N}",
        f"M: {M}",
        f"levels: {n_levels}",
        "domain: " + json.dumps(domain.describe(), sort_keys=True),
        f"time: {time!r}",
        "end_header",
    ]
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        fh.write(arr.tobytes(order="C"))


def read_snapshot(path):
    """Return (header dict, array)."""
    raw = Path(path).read_bytes()
    end = raw.index(b"end_header\n") + len(b"end_header\n")
    lines = raw[:end].decode("ascii").splitlines()
    if lines[0] != _MAGIC:
        raise ValueError(f"{path}: not a snapshot file")
    meta = {}
    for line in lines[1:-1]:
        key, _, val = line.partition(": ")
        meta[key] = val
    dims = tuple(int(d) for d in meta["dims"].split())
    data = np.frombuffer(raw[end:], dtype="<f8")
    if data.size != int(np.prod(dims)):
        raise ValueError(f"{path}: payload size {data.size} does not match dims {dims}")
    meta["dims"] = dims
    meta["domain"] = json.loads(meta["domain"])
    meta["time"] = float(meta["time"])
    for k in ("N", "M", "levels"):
        meta[k] = int(meta[k])
    return meta, data.reshape(dims).copy()
