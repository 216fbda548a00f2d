"""Extension beyond the cylinder and mollification at scale epsilon.

The stream function is continued by its lateral trace c(z) outside Omega and
by constant continuation in z outside [0, h]; data are continued by zero.
The kernel is a tensor product of 1D kernels with half-width eps/sqrt(3), so
its support lies in the ball of radius eps.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import legendre as npleg
from scipy import integrate, ndimage

from .fields import ScalarField3D, StreamState, SurfaceFieldPair
from .geometry import lagrange_matrix
from . import interp


class MollifierError(ValueError):
    pass


def _bspline(t):
    a = np.abs(t)
    return np.where(a <= 1.0, 2.0 / 3.0 - a**2 + 0.5 * a**3, np.where(a <= 2.0, (2.0 - a) ** 3 / 6.0, 0.0))


def _bump(t):
    out = np.zeros_like(np.asarray(t, dtype=float))
    inside = np.abs(t) < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - t[inside] ** 2))
    return out


_BUMP_MASS = integrate.quad(lambda t: np.exp(-1.0 / (1.0 - t * t)), -1.0, 1.0, epsabs=0.0, epsrel=1e-13, limit=200)[0]


@dataclass(frozen=True)
class MollifierSpec:
    """Mollifier of radius ``epsilon``; kernel 'bspline' (cubic) or 'bump' (C-infinity)."""

    epsilon: float
    kernel: str = "bspline"

    def __post_init__(self):
        if not self.epsilon > 0:
            raise MollifierError(f"epsilon must be positive, got {self.epsilon}")
        if self.kernel not in ("bspline", "bump"):
            raise MollifierError(f"unknown kernel {self.kernel!r}")

    @property
    def half_width(self) -> float:
        return self.epsilon / np.sqrt(3.0)

    @property
    def normalization(self) -> float:
        return 1.0 if self.kernel == "bspline" else 1.0 / _BUMP_MASS

    def kernel_1d(self, s):
        a = self.half_width
        s = np.asarray(s, dtype=float)
        if self.kernel == "bspline":
            return (2.0 / a) * _bspline(2.0 * s / a)
        return self.normalization / a * _bump(s / a)

    def breakpoints(self):
        a = self.half_width
        if self.kernel == "bspline":
            return np.array([-a, -0.5 * a, 0.0, 0.5 * a, a])
        return np.linspace(-a, a, 9)

    def discrete_weights(self, spacing: float) -> np.ndarray:
        if spacing > self.epsilon / 4.0 * (1 + 1e-12):
            raise MollifierError(
                f"kernel under-resolved: grid spacing {spacing:.4g} exceeds epsilon/4 = {self.epsilon / 4:.4g}"
            )
        n = int(np.floor(self.half_width / spacing))
        w = self.kernel_1d(spacing * np.arange(-n, n + 1))
        return w / w.sum()


@dataclass(eq=False)
class PaddedGrid:
    """Uniform box grid covering Omega plus a padding band."""

    hbasis: object
    x: np.ndarray
    y: np.ndarray
    inside: np.ndarray  # (ny, nx) closed-domain mask
    omega_slice: tuple | None = None  # rectangle: grid block coinciding with the quadrature grid
    _tables: object = field(default=None, repr=False)

    @property
    def dx(self):
        return float(self.x[1] - self.x[0])

    @property
    def dy(self):
        return float(self.y[1] - self.y[0])

    @property
    def shape(self):
        return (len(self.y), len(self.x))

    @property
    def spacing(self):
        return max(self.dx, self.dy)

    @property
    def cell_area(self):
        return self.dx * self.dy

    def mesh(self):
        return np.meshgrid(self.x, self.y)

    def tables(self):
        if self._tables is None:
            self._tables = self.hbasis.tensor_tables(self.x, self.y)
        return self._tables

    def evaluate(self, coeffs):
        """sum_n coeffs[..., n] e_n on the box (zero outside Omega)."""
        return self.hbasis.evaluate_tensor(coeffs, self.tables())

    def restrict(self, values):
        """Box samples (..., ny, nx) to the basis quadrature grid."""
        values = np.asarray(values, dtype=float)
        if self.omega_slice is not None:
            return values[(Ellipsis,) + self.omega_slice]
        hb = self.hbasis
        lead = values.shape[:-2]
        flat = values.reshape((-1,) + self.shape)
        nf = flat.shape[0]
        npts = hb.xq.size
        lev = np.repeat(np.arange(nf), npts)
        px = np.tile(hb.xq.ravel(), nf)
        py = np.tile(hb.yq.ravel(), nf)
        out = interp.interp_points(flat, lev, px, py, self.x[0], self.y[0], self.dx, self.dy, False)
        return out.reshape(lead + tuple(hb.grid_shape))

    def box_integral(self, values):
        """Trapezoid integral over the whole box."""
        wx = np.full(len(self.x), self.dx)
        wx[[0, -1]] *= 0.5
        wy = np.full(len(self.y), self.dy)
        wy[[0, -1]] *= 0.5
        return np.einsum("...ji,j,i->...", values, wy, wx)


def box_spacing(hbasis, points: int | None = None) -> float:
    """Node spacing of the box grid that build_padded_grid would produce."""
    if hbasis.domain.shape == "rectangle":
        return float(max(hbasis.dx, hbasis.dy))
    R = hbasis.domain.R
    n = int(points) if points is not None else 2 * int(np.ceil(np.sqrt(hbasis.eigenvalues.max()) * R)) + 32
    return 2.0 * R / n


def clamp_epsilon(epsilon: float | None, spacing: float) -> float:
    """Default 4 * spacing; smaller requests are raised to it with a warning."""
    floor = 4.0 * spacing
    if epsilon is None:
        return floor
    if epsilon < floor * (1 - 1e-12):
        warnings.warn(f"epsilon {epsilon:.4g} is below 4 grid spacings; clamped to {floor:.4g}",
                      RuntimeWarning, stacklevel=2)
        return floor
    return float(epsilon)


def build_padded_grid(hbasis, epsilon: float | None = None, points: int | None = None, extra_cells: int = 4) -> PaddedGrid:
    """Box grid aligned with the rectangle quadrature grid, or a square box around the disk.

    The band is at least 2*epsilon + ``extra_cells`` cells wide.  ``points``
    sets the number of intervals across the disk diameter.
    """
    dom = hbasis.domain
    if dom.shape == "rectangle":
        dx, dy = hbasis.dx, hbasis.dy
        eps = 4.0 * max(dx, dy) if epsilon is None else epsilon
        px = int(np.ceil(2.0 * eps / dx)) + extra_cells
        py = int(np.ceil(2.0 * eps / dy)) + extra_cells
        x = dx * np.arange(-px, hbasis.P + px + 1)
        y = dy * np.arange(-py, hbasis.Q + py + 1)
        x[px + hbasis.P] = dom.Lx
        y[py + hbasis.Q] = dom.Ly
        X, Y = np.meshgrid(x, y)
        inside = dom.contains(X, Y)
        sl = (slice(py, py + hbasis.Q + 1), slice(px, px + hbasis.P + 1))
        return PaddedGrid(hbasis, x, y, inside, sl)
    R = dom.R
    n = int(points) if points is not None else 2 * int(np.ceil(np.sqrt(hbasis.eigenvalues.max()) * R)) + 32
    d = 2.0 * R / n
    eps = 4.0 * d if epsilon is None else epsilon
    p = int(np.ceil(2.0 * eps / d)) + extra_cells
    x = d * np.arange(-n // 2 - p, n - n // 2 + p + 1)
    X, Y = np.meshgrid(x, x)
    return PaddedGrid(hbasis, x, x.copy(), dom.contains(X, Y), None)


def check_padding(grid: PaddedGrid, spec: MollifierSpec):
    dom = grid.hbasis.domain
    if dom.shape == "rectangle":
        band = min(-grid.x[0], grid.x[-1] - dom.Lx, -grid.y[0], grid.y[-1] - dom.Ly)
    else:
        band = min(-grid.x[0], grid.x[-1]) - dom.R
    if band < 2.0 * spec.epsilon:
        raise MollifierError(f"padding {band:.4g} is narrower than 2*epsilon = {2 * spec.epsilon:.4g}")


def mollify(values, grid: PaddedGrid, spec: MollifierSpec):
    """Horizontal separable convolution of box samples (..., ny, nx).

    Values beyond the box edge are continued by their edge value, which is the
    correct continuation for both extensions used here.
    """
    values = np.asarray(values, dtype=float)
    wx = spec.discrete_weights(grid.dx)
    wy = spec.discrete_weights(grid.dy)
    out = ndimage.convolve1d(values, wx, axis=-1, mode="nearest")
    return ndimage.convolve1d(out, wy, axis=-2, mode="nearest")


def _vertical_operator(vbasis, spec: MollifierSpec, funcs, mode: str) -> np.ndarray:
    """Rows l: int phi(s) F(z_l - s) ds for the columns of F, with clamp or zero extension."""
    h = vbasis.h
    nodes, wts = npleg.leggauss(max(vbasis.n_levels, vbasis.M + 1) // 2 + 12)
    bps = spec.breakpoints()
    rows = []
    for zl in vbasis.levels:
        cuts = set(bps.tolist())
        for c in (zl, zl - h):
            if bps[0] < c < bps[-1]:
                cuts.add(float(c))
        cuts = np.array(sorted(cuts))
        acc = 0.0
        for a, b in zip(cuts[:-1], cuts[1:]):
            s = 0.5 * (b - a) * nodes + 0.5 * (a + b)
            w = 0.5 * (b - a) * wts * spec.kernel_1d(s)
            zz = zl - s
            vals = funcs(np.clip(zz, 0.0, h))
            if mode == "zero":
                vals = vals * ((zz >= 0.0) & (zz <= h))[:, None]
            acc = acc + w @ vals
        rows.append(acc)
    return np.array(rows)


def vertical_stream_operator(vbasis, spec: MollifierSpec) -> np.ndarray:
    """(n_levels, M+1): z-mollified modes under constant continuation."""
    return _vertical_operator(vbasis, spec, vbasis.eval, "clamp")


def vertical_data_operator(vbasis, spec: MollifierSpec) -> np.ndarray:
    """(n_levels, n_levels): z-mollification of level data under zero extension."""
    return _vertical_operator(vbasis, spec, lambda z: lagrange_matrix(vbasis.levels, z), "zero")


def extend_stream(psi: StreamState, grid: PaddedGrid, heights=None) -> np.ndarray:
    """Two-stage extension: trace c(z) outside Omega, constant continuation in z."""
    vb = psi.vbasis
    z = vb.levels if heights is None else np.atleast_1d(np.asarray(heights, dtype=float))
    B = vb.eval(np.clip(z, 0.0, vb.h))
    return grid.evaluate(B @ psi.U.T) + (B @ psi.V)[:, None, None]


def mollify_stream(psi: StreamState, grid: PaddedGrid, spec: MollifierSpec, zop: np.ndarray | None = None) -> np.ndarray:
    """P_eps at the collocation levels on the box."""
    if zop is None:
        zop = vertical_stream_operator(psi.vbasis, spec)
    ext = grid.evaluate(zop @ psi.U.T) + (zop @ psi.V)[:, None, None]
    return mollify(ext, grid, spec)


def velocity_from_stream(P, grid: PaddedGrid):
    """(u, v) = (-dP/dy, dP/dx) by fourth-order centred differences."""
    P = np.asarray(P, dtype=float)

    def d(axis, h):
        out = np.gradient(P, h, axis=axis, edge_order=2)
        a = np.moveaxis(P, axis, -1)
        o = np.moveaxis(out, axis, -1)
        o[..., 2:-2] = (-a[..., 4:] + 8 * a[..., 3:-1] - 8 * a[..., 1:-3] + a[..., :-4]) / (12.0 * h)
        return out

    return -d(-2, grid.dy), d(-1, grid.dx)


def sample_on_box(data, grid: PaddedGrid, zs) -> np.ndarray:
    """Zero-extended samples of f(x, y, z) (callable or ScalarField3D) at heights zs."""
    if isinstance(data, ScalarField3D):
        return (grid.evaluate(data.coeffs) + data.const[:, None, None]) * grid.inside
    X, Y = grid.mesh()
    return np.stack([np.broadcast_to(data(X, Y, z), X.shape) * grid.inside for z in zs])


def sample_plates_on_box(data, grid: PaddedGrid) -> np.ndarray:
    if isinstance(data, SurfaceFieldPair):
        vals = grid.evaluate(np.stack([data.bottom, data.top]))
        vals[0] += data.bottom_const
        vals[1] += data.top_const
        return vals * grid.inside
    X, Y = grid.mesh()
    return np.stack([np.broadcast_to(fn(X, Y), X.shape) * grid.inside for fn in data])


def extend_mollify_data(f0, g0, grid: PaddedGrid, vbasis, spec: MollifierSpec, zop=None):
    """Zero-extend and mollify interior data (3D) and plate data (2D per plate).

    f0: callable f(x, y, z), ScalarField3D or None; g0: pair of callables
    (bottom, top), SurfaceFieldPair or None.  Returns box arrays
    (n_levels, ny, nx) and (2, ny, nx).
    """
    if f0 is None:
        F = np.zeros((vbasis.n_levels,) + grid.shape)
    else:
        if zop is None:
            zop = vertical_data_operator(vbasis, spec)
        F = mollify(np.tensordot(zop, sample_on_box(f0, grid, vbasis.levels), axes=1), grid, spec)
    if g0 is None:
        G = np.zeros((2,) + grid.shape)
    else:
        G = mollify(sample_plates_on_box(g0, grid), grid, spec)
    return F, G
