"""Domain geometry, horizontal Dirichlet eigenbases and vertical Galerkin bases.

The cylinder is Omega x [0, h] with Omega a rectangle [0, Lx] x [0, Ly] or a
disk of radius R centred at the origin.  Horizontal functions are expanded in
Dirichlet eigenfunctions of the Laplacian; vertical structure is carried either
by Galerkin modes (inside the elliptic solve) or by values at
Chebyshev-Gauss-Lobatto collocation levels (everywhere else).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np
from numpy.polynomial import chebyshev as npcheb
from numpy.polynomial import legendre as npleg
from scipy import optimize, special

ProfileLike = Union[float, Callable[[np.ndarray], np.ndarray]]


class GeometryError(ValueError):
    """Invalid domain description or under-resolved discretisation."""


# --------------------------------------------------------------------------
# Domain
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class DomainSpec:
    """Cylinder geometry plus the stratification profile lambda(z).

    ``stratification`` is a positive constant or a vectorised callable of z.
    The profile is stored as a Chebyshev interpolant on [0, h], which is also
    used for lambda'(z).
    """

    shape: str = "rectangle"
    height: float = 1.0
    Lx: float = np.pi
    Ly: float = np.pi
    R: float = 1.0
    stratification: ProfileLike = 1.0
    Lambda_bound: float = 10.0
    _cheb: npcheb.Chebyshev = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.shape not in ("rectangle", "disk"):
            raise GeometryError(f"shape must be 'rectangle' or 'disk', got {self.shape!r}")
        if not np.isfinite(self.height) or self.height <= 0:
            raise GeometryError(f"height must be positive, got {self.height}")
        if self.shape == "rectangle" and (self.Lx <= 0 or self.Ly <= 0):
            raise GeometryError(f"rectangle sides Lx, Ly must be positive, got {self.Lx}, {self.Ly}")
        if self.shape == "disk" and self.R <= 0:
            raise GeometryError(f"disk radius R must be positive, got {self.R}")
        if self.Lambda_bound < 1:
            raise GeometryError("Lambda_bound must be >= 1")
        object.__setattr__(self, "_cheb", self._build_profile())
        zs = cgl_nodes(256, self.height)
        lam = self.lam(zs)
        if np.any(lam < 1.0 / self.Lambda_bound - 1e-14) or np.any(lam > self.Lambda_bound + 1e-14):
            raise GeometryError(
                f"stratification violates ellipticity bounds [1/{self.Lambda_bound}, {self.Lambda_bound}]: "
                f"range [{lam.min():.6g}, {lam.max():.6g}]"
            )

    def _build_profile(self) -> npcheb.Chebyshev:
        h = self.height
        s = self.stratification
        if callable(s):
            func = lambda z: np.asarray(s(np.asarray(z, dtype=float)), dtype=float) * np.ones_like(z)
        else:
            val = float(s)
            func = lambda z: np.full_like(np.asarray(z, dtype=float), val)
        probe = np.linspace(0.0, h, 1001)
        ref = func(probe)
        if not np.all(np.isfinite(ref)):
            raise GeometryError("stratification profile is not finite on [0, h]")
        for deg in (16, 32, 64, 128, 256, 512):
            cheb = npcheb.Chebyshev.interpolate(func, deg, domain=[0.0, h])
            if np.max(np.abs(cheb(probe) - ref)) <= 1e-13 * max(1.0, np.max(np.abs(ref))):
                return cheb
        raise GeometryError("stratification profile is not resolved by a degree-512 interpolant")

    @property
    def area(self) -> float:
        if self.shape == "rectangle":
            return self.Lx * self.Ly
        return np.pi * self.R**2

    @property
    def diameter(self) -> float:
        return float(np.hypot(self.Lx, self.Ly)) if self.shape == "rectangle" else 2.0 * self.R

    def lam(self, z) -> np.ndarray:
        return self._cheb(np.asarray(z, dtype=float))

    def dlam(self, z) -> np.ndarray:
        return self._cheb.deriv()(np.asarray(z, dtype=float))

    @property
    def lambda_is_constant(self) -> bool:
        return not callable(self.stratification)

    def contains(self, x, y) -> np.ndarray:
        """Closed-domain membership test."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        tol = 1e-12 * self.diameter
        if self.shape == "rectangle":
            return (x >= -tol) & (x <= self.Lx + tol) & (y >= -tol) & (y <= self.Ly + tol)
        return x * x + y * y <= (self.R + tol) ** 2

    def describe(self) -> dict:
        d = {"shape": self.shape, "height": self.height, "Lambda_bound": self.Lambda_bound}
        if self.shape == "rectangle":
            d.update(Lx=self.Lx, Ly=self.Ly)
        else:
            d["R"] = self.R
        d["stratification"] = (
            float(self.stratification) if not callable(self.stratification) else "callable"
        )
        return d


# --------------------------------------------------------------------------
# Vertical collocation
# --------------------------------------------------------------------------


def cgl_nodes(n: int, h: float) -> np.ndarray:
    """n+1 Chebyshev-Gauss-Lobatto points on [0, h], ascending."""
    theta = np.pi * np.arange(n + 1) / n
    return 0.5 * h * (1.0 - np.cos(theta))


def clenshaw_curtis_weights(n: int, h: float) -> np.ndarray:
    """Clenshaw-Curtis weights matching :func:`cgl_nodes`."""
    theta = np.pi * np.arange(n + 1) / n
    w = np.zeros(n + 1)
    inner = np.arange(1, n)
    v = np.ones(n - 1)
    if n % 2 == 0:
        w[0] = w[n] = 1.0 / (n * n - 1)
        for k in range(1, n // 2):
            v -= 2.0 * np.cos(2 * k * theta[inner]) / (4 * k * k - 1)
        v -= np.cos(n * theta[inner]) / (n * n - 1)
    else:
        w[0] = w[n] = 1.0 / (n * n)
        for k in range(1, (n - 1) // 2 + 1):
            v -= 2.0 * np.cos(2 * k * theta[inner]) / (4 * k * k - 1)
    w[inner] = 2.0 * v / n
    return 0.5 * h * w


def lagrange_matrix(nodes: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Rows evaluate the CGL Lagrange cardinal functions at ``points``.

    Barycentric formula with the closed-form weights of second-kind
    Chebyshev points.  Shape (len(points), len(nodes)).
    """
    n = len(nodes) - 1
    bw = (-1.0) ** np.arange(n + 1)
    bw[0] *= 0.5
    bw[-1] *= 0.5
    pts = np.asarray(points, dtype=float).ravel()
    diff = pts[:, None] - nodes[None, :]
    exact = diff == 0.0
    diff[exact] = 1.0
    terms = bw[None, :] / diff
    out = terms / terms.sum(axis=1, keepdims=True)
    hit = exact.any(axis=1)
    out[hit] = exact[hit].astype(float)
    return out


# --------------------------------------------------------------------------
# Bessel zeros
# --------------------------------------------------------------------------


def bessel_zeros(m: int, upper: float) -> np.ndarray:
    """All positive zeros of J_m below ``upper``, refined by Brent's method."""
    if upper <= 0:
        return np.empty(0)
    xs = np.arange(0.05, upper + 0.1, 0.1)
    vals = special.jv(m, xs)
    roots = []
    for a, b, fa, fb in zip(xs[:-1], xs[1:], vals[:-1], vals[1:]):
        if fa == 0.0:
            roots.append(a)
        elif fa * fb < 0:
            roots.append(optimize.brentq(lambda t: special.jv(m, t), a, b, xtol=1e-15, rtol=1e-15, maxiter=200))
    roots = np.array([r for r in roots if r < upper])
    return roots


# --------------------------------------------------------------------------
# Horizontal eigenbases
# --------------------------------------------------------------------------


class RectangleBasis:
    """Sine-product Dirichlet eigenbasis of [0, Lx] x [0, Ly].

    Quadrature grid: (P+1) x (Q+1) uniform nodes including the boundary,
    arrays shaped (..., Q+1, P+1) with y along the first grid axis.
    """

    shape = "rectangle"

    def __init__(self, domain: DomainSpec, N, grid_resolution=None):
        self.domain = domain
        Lx, Ly = domain.Lx, domain.Ly
        if isinstance(N, (tuple, list)):
            J, K = int(N[0]), int(N[1])
            if J < 1 or K < 1:
                raise GeometryError("mode counts must be >= 1")
            jj, kk = np.meshgrid(np.arange(1, J + 1), np.arange(1, K + 1), indexing="ij")
            jj, kk = jj.ravel(), kk.ravel()
        else:
            N = int(N)
            if N < 1:
                raise GeometryError("N must be >= 1")
            jc = min(N, int(2 * np.sqrt(N * Lx / Ly)) + 4)
            kc = min(N, int(2 * np.sqrt(N * Ly / Lx)) + 4)
            jj, kk = np.meshgrid(np.arange(1, jc + 1), np.arange(1, kc + 1), indexing="ij")
            jj, kk = jj.ravel(), kk.ravel()
        lam = (np.pi * jj / Lx) ** 2 + (np.pi * kk / Ly) ** 2
        order = np.lexsort((kk, jj, np.round(lam, 12)))
        if not isinstance(N, (tuple, list)):
            order = order[:N]
        self.jj = jj[order]
        self.kk = kk[order]
        self.eigenvalues = lam[order]
        self.N = len(self.eigenvalues)
        self.J = int(self.jj.max())
        self.K = int(self.kk.max())
        self.indices = np.stack([self.jj, self.kk], axis=1)

        if grid_resolution is None:
            P, Q = 2 * self.J + 2, 2 * self.K + 2
        elif np.isscalar(grid_resolution):
            P = Q = int(grid_resolution)
        else:
            P, Q = (int(v) for v in grid_resolution)
        if P < 2 * self.J or Q < 2 * self.K:
            raise GeometryError(
                f"under-resolved grid: need at least {2 * self.J} x {2 * self.K} intervals, got {P} x {Q}"
            )
        self.P, self.Q = P, Q
        self.x = np.linspace(0.0, Lx, P + 1)
        self.y = np.linspace(0.0, Ly, Q + 1)
        self.dx, self.dy = Lx / P, Ly / Q
        self.grid_shape = (Q + 1, P + 1)

        jx = np.arange(1, self.J + 1)
        ky = np.arange(1, self.K + 1)
        self._SX = np.sqrt(2.0 / Lx) * np.sin(np.pi * np.outer(jx, self.x) / Lx)
        self._SY = np.sqrt(2.0 / Ly) * np.sin(np.pi * np.outer(ky, self.y) / Ly)
        self._CX = np.sqrt(2.0 / Lx) * (np.pi * jx / Lx)[:, None] * np.cos(np.pi * np.outer(jx, self.x) / Lx)
        self._CY = np.sqrt(2.0 / Ly) * (np.pi * ky / Ly)[:, None] * np.cos(np.pi * np.outer(ky, self.y) / Ly)
        # clean exact zeros at the boundary nodes
        self._SX[:, [0, -1]] = 0.0
        self._SY[:, [0, -1]] = 0.0

        wx = np.full(P + 1, self.dx)
        wx[[0, -1]] *= 0.5
        wy = np.full(Q + 1, self.dy)
        wy[[0, -1]] *= 0.5
        self._wx, self._wy = wx, wy
        self.weights = np.outer(wy, wx)

        # 1D integrals of sqrt(2/L) sin(j pi x / L): zero for even j
        def mu1(j, L):
            return np.where(j % 2 == 1, np.sqrt(2.0 / L) * 2.0 * L / (np.pi * j), 0.0)

        self._mux = mu1(jx, Lx)
        self._muy = mu1(ky, Ly)
        self.means = self._mux[self.jj - 1] * self._muy[self.kk - 1]
        self.area = domain.area
        # sine-interpolant integration rule on interior nodes (exact on span{sin})
        self._omx = self._sine_rule(P, Lx)
        self._omy = self._sine_rule(Q, Ly)

        self._check()

    @staticmethod
    def _sine_rule(P: int, L: float) -> np.ndarray:
        j = np.arange(1, P)
        x = np.arange(P + 1) * L / P
        X = np.sqrt(2.0 / L) * np.sin(np.pi * np.outer(j, x) / L)
        mu = np.where(j % 2 == 1, np.sqrt(2.0 / L) * 2.0 * L / (np.pi * j), 0.0)
        om = (L / P) * (mu @ X)
        om[[0, -1]] = 0.0
        return om

    # -- coefficient layout -------------------------------------------------
    def _to_matrix(self, coeffs):
        coeffs = np.asarray(coeffs, dtype=float)
        A = np.zeros(coeffs.shape[:-1] + (self.J, self.K))
        A[..., self.jj - 1, self.kk - 1] = coeffs
        return A

    def _from_matrix(self, A):
        return A[..., self.jj - 1, self.kk - 1]

    # -- synthesis / analysis on the quadrature grid --------------------------
    def synthesize(self, coeffs):
        A = self._to_matrix(coeffs)
        return np.einsum("...jk,ji,kl->...li", A, self._SX, self._SY, optimize=True)

    def synthesize_gradient(self, coeffs):
        A = self._to_matrix(coeffs)
        gx = np.einsum("...jk,ji,kl->...li", A, self._CX, self._SY, optimize=True)
        gy = np.einsum("...jk,ji,kl->...li", A, self._SX, self._CY, optimize=True)
        return gx, gy

    def analyze(self, values):
        """Moments <values, e_n>: trapezoid on the part left after removing the edge mean.

        Exact for a constant plus sine products of degree below the grid size.
        """
        v = np.asarray(values, dtype=float)
        if v.shape[-2:] != self.grid_shape:
            raise ValueError(f"grid shape mismatch: expected {self.grid_shape}, got {v.shape[-2:]}")
        c = self._edge_mean(v)
        A = np.einsum("...li,ji,kl->...jk", (v - c[..., None, None]) * self.weights, self._SX, self._SY,
                      optimize=True)
        return self._from_matrix(A) + c[..., None] * self.means

    @staticmethod
    def _edge_mean(v):
        edge = np.concatenate([v[..., 0, :], v[..., -1, :], v[..., 1:-1, 0], v[..., 1:-1, -1]], axis=-1)
        return edge.mean(axis=-1)

    def integrate(self, values):
        """Integral over Omega, exact on constants plus sine series."""
        v = np.asarray(values, dtype=float)
        if v.shape[-2:] != self.grid_shape:
            raise ValueError(f"grid shape mismatch: expected {self.grid_shape}, got {v.shape[-2:]}")
        c = self._edge_mean(v)
        s = v - c[..., None, None]
        return c * self.area + np.einsum("...li,l,i->...", s, self._omy, self._omx, optimize=True)

    def quadrature_integrate(self, values):
        return np.einsum("...li,li->...", np.asarray(values, dtype=float), self.weights)

    # -- evaluation on arbitrary tensor grids --------------------------------
    def tensor_tables(self, xs, ys):
        """Mode tables on an arbitrary tensor grid; zero outside the rectangle."""
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        jx = np.arange(1, self.J + 1)
        ky = np.arange(1, self.K + 1)
        inx = (xs >= 0) & (xs <= self.domain.Lx)
        iny = (ys >= 0) & (ys <= self.domain.Ly)
        TX = np.sqrt(2.0 / self.domain.Lx) * np.sin(np.pi * np.outer(jx, xs) / self.domain.Lx) * inx
        TY = np.sqrt(2.0 / self.domain.Ly) * np.sin(np.pi * np.outer(ky, ys) / self.domain.Ly) * iny
        return TX, TY

    def evaluate_tensor(self, coeffs, tables):
        TX, TY = tables
        A = self._to_matrix(coeffs)
        return np.einsum("...jk,ji,kl->...li", A, TX, TY, optimize=True)

    def evaluate_points(self, coeffs, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        inside = self.domain.contains(x, y)
        X = np.sqrt(2.0 / self.domain.Lx) * np.sin(np.pi * self.jj[:, None] * x[None, :] / self.domain.Lx)
        Y = np.sqrt(2.0 / self.domain.Ly) * np.sin(np.pi * self.kk[:, None] * y[None, :] / self.domain.Ly)
        return (np.asarray(coeffs) @ (X * Y)) * inside

    # -- boundary ---------------------------------------------------------
    def boundary_quadrature(self):
        """Outward normal derivatives of every mode at the edge nodes, and edge weights."""
        Lx, Ly = self.domain.Lx, self.domain.Ly
        cx = np.sqrt(2.0 / Lx) * np.pi * self.jj / Lx
        cy = np.sqrt(2.0 / Ly) * np.pi * self.kk / Ly
        X = lambda x: np.sqrt(2.0 / Lx) * np.sin(np.pi * np.outer(self.jj, x) / Lx)
        Y = lambda y: np.sqrt(2.0 / Ly) * np.sin(np.pi * np.outer(self.kk, y) / Ly)
        sgnx = (-1.0) ** self.jj
        sgny = (-1.0) ** self.kk
        tables, weights = [], []
        # x = 0 (normal -x), x = Lx (normal +x), y = 0 (normal -y), y = Ly (normal +y)
        tables.append(-cx[:, None] * Y(self.y))
        tables.append(cx[:, None] * sgnx[:, None] * Y(self.y))
        tables.append(-cy[:, None] * X(self.x))
        tables.append(cy[:, None] * sgny[:, None] * X(self.x))
        # normal derivatives are sine series along each edge: use the sine rule
        weights = [self._omy, self._omy, self._omx, self._omx]
        return np.concatenate(tables, axis=1), np.concatenate(weights)

    def boundary_values(self, coeffs):
        """Values of the synthesized field on the boundary grid nodes."""
        g = self.synthesize(coeffs)
        return np.concatenate([g[..., 0, :], g[..., -1, :], g[..., :, 0], g[..., :, -1]], axis=-1)

    def grid_boundary_mask(self):
        m = np.zeros(self.grid_shape, dtype=bool)
        m[0, :] = m[-1, :] = m[:, 0] = m[:, -1] = True
        return m

    def _check(self):
        # tensor structure: 2D orthonormality follows from the two 1D Gram matrices
        gx = (self._SX * self._wx) @ self._SX.T
        gy = (self._SY * self._wy) @ self._SY.T
        resid = max(np.max(np.abs(gx - np.eye(self.J))), np.max(np.abs(gy - np.eye(self.K))))
        if resid > 1e-10:
            raise GeometryError(f"quadrature orthonormality residual {resid:.2e} exceeds 1e-10")
        self.orthonormality_residual = float(resid)


class DiskBasis:
    """Bessel-mode Dirichlet eigenbasis of the disk of radius R.

    Modes J_m(kappa r) cos(m theta) and J_m(kappa r) sin(m theta) with
    kappa = j_{m,k} / R, normalised in L2.  Quadrature grid: Gauss-Legendre in
    r (times r) and the periodic trapezoid rule in theta, arrays shaped
    (..., n_r, n_theta).
    """

    shape = "disk"

    def __init__(self, domain: DomainSpec, N, grid_resolution=None):
        self.domain = domain
        R = domain.R
        N = int(N[0] * N[1]) if isinstance(N, (tuple, list)) else int(N)
        if N < 1:
            raise GeometryError("N must be >= 1")
        modes = self._lowest_modes(N, R)
        self.mm = np.array([md[0] for md in modes])
        self.kidx = np.array([md[1] for md in modes])
        self.parity = np.array([md[2] for md in modes])  # 0 cos, 1 sin
        self.zeros = np.array([md[3] for md in modes])
        self.kappa = self.zeros / R
        self.eigenvalues = self.kappa**2
        self.N = N
        self.indices = np.stack([self.mm, self.kidx, self.parity], axis=1)
        m_max = int(self.mm.max())
        k_max = int(self.kidx.max())
        jmax = float(self.zeros.max())
        self.area = domain.area

        Jp1 = special.jv(self.mm + 1, self.zeros)
        ang = np.where(self.mm == 0, 2.0 * np.pi, np.pi)
        self.norm = 1.0 / np.sqrt(0.5 * R**2 * Jp1**2 * ang)
        self.means = np.where(self.mm == 0, self.norm * 2.0 * np.pi * R**2 * Jp1 / self.zeros, 0.0)

        n_r_min = int(np.ceil(0.5 * jmax)) + k_max + 4
        n_t_min = 4 * m_max + 4
        if grid_resolution is None:
            n_r, n_t = int(np.ceil(jmax)) + 24, max(4 * m_max + 16, 32)
        elif np.isscalar(grid_resolution):
            n_r, n_t = int(grid_resolution) // 2 + 1, int(grid_resolution)
        else:
            n_r, n_t = (int(v) for v in grid_resolution)
        if n_r < n_r_min or n_t < n_t_min:
            raise GeometryError(
                f"under-resolved grid: need n_r >= {n_r_min}, n_theta >= {n_t_min}, got {n_r}, {n_t}"
            )
        gx, gw = npleg.leggauss(n_r)
        self.r = 0.5 * R * (gx + 1.0)
        wr = 0.5 * R * gw * self.r
        self.theta = 2.0 * np.pi * np.arange(n_t) / n_t
        wt = np.full(n_t, 2.0 * np.pi / n_t)
        self.grid_shape = (n_r, n_t)
        self.weights = np.outer(wr, wt)
        rr, tt = np.meshgrid(self.r, self.theta, indexing="ij")
        self.xq = rr * np.cos(tt)
        self.yq = rr * np.sin(tt)
        self._E, self._Ex, self._Ey = self.tables_at(self.xq.ravel(), self.yq.ravel(), gradients=True)
        self._check()

    @staticmethod
    def _lowest_modes(N, R):
        upper = 8.0
        while True:
            cand = []
            m = 0
            while True:
                z = bessel_zeros(m, upper)
                if len(z) == 0:
                    break
                for k, j in enumerate(z, start=1):
                    cand.append((m, k, 0, j))
                    if m > 0:
                        cand.append((m, k, 1, j))
                m += 1
            if len(cand) >= N:
                break
            upper *= 1.5
        # only keep eigenvalues strictly below the search bound to be complete
        cand.sort(key=lambda c: (round(c[3], 12), c[0], c[1], c[2]))
        return cand[:N]

    def tables_at(self, x, y, gradients=False):
        """Mode values (and optionally gradients) at points; zero outside the disk."""
        x = np.asarray(x, dtype=float).ravel()
        y = np.asarray(y, dtype=float).ravel()
        r = np.hypot(x, y)
        th = np.arctan2(y, x)
        inside = r <= self.domain.R * (1 + 1e-12)
        kr = self.kappa[:, None] * r[None, :]
        m = self.mm[:, None]
        par = self.parity[:, None]
        A = self.norm[:, None]
        Jm = special.jv(m, kr)
        E = A * Jm * np.where(par == 0, np.cos(m * th), np.sin(m * th)) * inside
        if not gradients:
            return E
        zm1 = special.jv(m - 1, kr) * np.exp(1j * (m - 1) * th)
        zp1 = special.jv(m + 1, kr) * np.exp(1j * (m + 1) * th)
        dx = 0.5 * self.kappa[:, None] * (zm1 - zp1)
        dy = 0.5j * self.kappa[:, None] * (zm1 + zp1)
        Ex = A * np.where(par == 0, dx.real, dx.imag) * inside
        Ey = A * np.where(par == 0, dy.real, dy.imag) * inside
        return E, Ex, Ey

    def synthesize(self, coeffs):
        v = np.asarray(coeffs, dtype=float) @ self._E
        return v.reshape(v.shape[:-1] + self.grid_shape)

    def synthesize_gradient(self, coeffs):
        c = np.asarray(coeffs, dtype=float)
        gx = (c @ self._Ex).reshape(c.shape[:-1] + self.grid_shape)
        gy = (c @ self._Ey).reshape(c.shape[:-1] + self.grid_shape)
        return gx, gy

    def analyze(self, values):
        v = np.asarray(values, dtype=float)
        if v.shape[-2:] != self.grid_shape:
            raise ValueError(f"grid shape mismatch: expected {self.grid_shape}, got {v.shape[-2:]}")
        flat = (v * self.weights).reshape(v.shape[:-2] + (-1,))
        return flat @ self._E.T

    def integrate(self, values):
        return np.einsum("...ab,ab->...", np.asarray(values, dtype=float), self.weights)

    quadrature_integrate = integrate

    def tensor_tables(self, xs, ys):
        X, Y = np.meshgrid(xs, ys)
        return (self.tables_at(X.ravel(), Y.ravel()), (len(ys), len(xs)))

    def evaluate_tensor(self, coeffs, tables):
        T, shp = tables
        v = np.asarray(coeffs, dtype=float) @ T
        return v.reshape(v.shape[:-1] + shp)

    def evaluate_points(self, coeffs, x, y):
        return np.asarray(coeffs) @ self.tables_at(x, y)

    def boundary_quadrature(self):
        R = self.domain.R
        th = self.theta
        m = self.mm[:, None]
        djm = special.jvp(self.mm, self.zeros)[:, None]
        T = self.norm[:, None] * self.kappa[:, None] * djm * np.where(
            self.parity[:, None] == 0, np.cos(m * th), np.sin(m * th)
        )
        w = np.full(len(th), 2.0 * np.pi * R / len(th))
        return T, w

    def boundary_values(self, coeffs):
        R = self.domain.R
        T = self.tables_at(R * np.cos(self.theta), R * np.sin(self.theta))
        return np.asarray(coeffs) @ T

    def _check(self):
        G = (self._E * self.weights.ravel()) @ self._E.T
        resid = np.max(np.abs(G - np.eye(self.N)))
        if resid > 1e-10:
            raise GeometryError(f"quadrature orthonormality residual {resid:.2e} exceeds 1e-10")
        self.orthonormality_residual = float(resid)


EigenBasis = Union[RectangleBasis, DiskBasis]


# --------------------------------------------------------------------------
# Vertical Galerkin basis
# --------------------------------------------------------------------------


class VerticalBasis:
    """Vertical Galerkin modes psi_0..psi_M with mass/stiffness matrices.

    ``kind='legendre'`` uses shifted Legendre polynomials (spectral accuracy for
    any smooth vertical profile); ``kind='cosine'`` uses cos(m pi z / h).
    ``n_levels`` collocation levels carry all non-elliptic vertical data.
    """

    def __init__(self, domain: DomainSpec, M: int, kind: str = "legendre", n_levels: int | None = None):
        if M < 1:
            raise GeometryError("M must be >= 1")
        if kind not in ("legendre", "cosine"):
            raise GeometryError(f"unknown vertical basis kind {kind!r}")
        self.domain = domain
        self.M = int(M)
        self.kind = kind
        self.h = h = domain.height
        nl = self.M if n_levels is None else int(n_levels) - 1
        if nl < 2:
            raise GeometryError("need at least 3 vertical levels")
        self.levels = cgl_nodes(nl, h)
        self.level_weights = clenshaw_curtis_weights(nl, h)
        self.n_levels = nl + 1

        self.C = self._mass()
        self.S, self.S_error = self._stiffness()
        self.psi_levels = self.eval(self.levels)
        self.dpsi_levels = self.eval(self.levels, 1)
        lam_l = domain.lam(self.levels)[:, None]
        dlam_l = domain.dlam(self.levels)[:, None]
        # (lambda psi')' at levels, used by apply_L
        self.Lz_levels = dlam_l * self.dpsi_levels + lam_l * self.eval(self.levels, 2)
        self.psi_bottom = self.eval(np.array([0.0]))[0]
        self.psi_top = self.eval(np.array([h]))[0]
        self.lam_bottom = float(domain.lam(0.0))
        self.lam_top = float(domain.lam(h))
        # exact moments of the level interpolant against each mode
        xg, wg = npleg.leggauss(self.n_levels + self.M + 4)
        zg = 0.5 * h * (xg + 1.0)
        wg = 0.5 * h * wg
        self.moment_matrix = (self.eval(zg) * wg[:, None]).T @ lagrange_matrix(self.levels, zg)
        self.integrals = self.C[0] if kind == "legendre" else np.r_[h, np.zeros(self.M)]

    # -- mode evaluation -------------------------------------------------
    def eval(self, z, deriv: int = 0) -> np.ndarray:
        """psi_m^{(deriv)}(z) for m = 0..M, shape (len(z), M+1)."""
        z = np.atleast_1d(np.asarray(z, dtype=float))
        h, M = self.h, self.M
        if self.kind == "cosine":
            k = np.pi * np.arange(M + 1) / h
            arg = np.outer(z, k)
            if deriv == 0:
                return np.cos(arg)
            if deriv == 1:
                return -k * np.sin(arg)
            if deriv == 2:
                return -(k**2) * np.cos(arg)
            raise ValueError("deriv must be 0, 1 or 2")
        xi = 2.0 * z / h - 1.0
        if deriv == 0:
            return npleg.legvander(xi, M)
        eye = np.eye(M + 1)
        d = npleg.legder(eye, m=deriv, axis=0) * (2.0 / h) ** deriv
        return npleg.legval(xi, d).T if d.size else np.zeros((len(z), M + 1))

    def evaluate(self, coeffs, z, deriv: int = 0) -> np.ndarray:
        """Evaluate a vertical expansion; ``coeffs`` has the mode index last."""
        return np.asarray(coeffs) @ self.eval(z, deriv).T

    def project(self, func) -> np.ndarray:
        """L2 projection of a callable profile onto the modes."""
        xg, wg = npleg.leggauss(4 * self.M + 64)
        zg = 0.5 * self.h * (xg + 1.0)
        wg = 0.5 * self.h * wg
        vals = np.asarray(func(zg), dtype=float)
        B = self.eval(zg)
        rhs = (B * wg[:, None]).T @ vals
        return np.linalg.solve(self.C, rhs)

    # -- matrices --------------------------------------------------------
    def _mass(self):
        h, M = self.h, self.M
        if self.kind == "cosine":
            return np.diag(np.r_[h, np.full(M, h / 2.0)])
        return np.diag(h / (2.0 * np.arange(M + 1) + 1.0))

    def stiffness_closed_form(self) -> np.ndarray:
        """Stiffness for lambda = 1."""
        h, M = self.h, self.M
        m = np.arange(M + 1)
        if self.kind == "cosine":
            return np.diag((m * np.pi / h) ** 2 * h / 2.0)
        a, b = np.meshgrid(m, m, indexing="ij")
        lo = np.minimum(a, b)
        return np.where((a + b) % 2 == 0, (2.0 / h) * lo * (lo + 1.0), 0.0)

    def _stiffness_quadrature(self, n: int) -> np.ndarray:
        xg, wg = npleg.leggauss(n)
        zg = 0.5 * self.h * (xg + 1.0)
        wg = 0.5 * self.h * wg
        d = self.eval(zg, 1)
        return (d * (wg * self.domain.lam(zg))[:, None]).T @ d

    def _stiffness(self):
        n = 2 * self.M + self.domain._cheb.degree() + 8
        S = self._stiffness_quadrature(n)
        for _ in range(8):
            S2 = self._stiffness_quadrature(2 * n)
            err = np.max(np.abs(S2 - S)) / max(1.0, np.max(np.abs(S2)))
            if err <= 1e-10:
                S2 = 0.5 * (S2 + S2.T)
                S2[0, :] = 0.0
                S2[:, 0] = 0.0
                return S2, float(err)
            S, n = S2, 2 * n
        raise GeometryError(f"stiffness quadrature did not converge: achieved relative error {err:.2e}")


def vertical_matrices(domain: DomainSpec, M: int, kind: str = "legendre", n_levels: int | None = None) -> VerticalBasis:
    return VerticalBasis(domain, M, kind=kind, n_levels=n_levels)


def build_basis(domain: DomainSpec, N, M: int, grid_resolution=None, vertical_kind: str = "legendre",
                n_levels: int | None = None):
    """Construct (EigenBasis, VerticalBasis) for the domain."""
    if domain.shape == "rectangle":
        hb = RectangleBasis(domain, N, grid_resolution)
    else:
        hb = DiskBasis(domain, N, grid_resolution)
    return hb, VerticalBasis(domain, M, kind=vertical_kind, n_levels=n_levels)
