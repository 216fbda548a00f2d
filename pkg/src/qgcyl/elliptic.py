"""Variational solve of the mixed elliptic problem on the cylinder.

Unknowns: U[n, m] multiplying e_n psi_m and V[m] (m >= 1) multiplying the
pure-z mode psi_m.  The bilinear form gives per-mode blocks
K_n = lambda_n C + S, borders mu_n S and a pure-z block |Omega| S.  The
per-mode blocks are eliminated first (they share one generalised eigenbasis)
and the small pure-z Schur complement is factored by Cholesky.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .fields import CirculationProfile, ScalarField3D, StreamState, SurfaceFieldPair


class SingularSystemError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class BoundaryTriple:
    f: ScalarField3D
    g: SurfaceFieldPair
    j: CirculationProfile

    @classmethod
    def zeros(cls, hbasis, vbasis):
        return cls(ScalarField3D.zeros(hbasis, vbasis), SurfaceFieldPair.zeros(hbasis),
                   CirculationProfile(vbasis, np.zeros(vbasis.n_levels)))

    def check_finite(self):
        parts = [self.f.coeffs, self.f.const, self.g.bottom, self.g.top,
                 np.array([self.g.bottom_const, self.g.top_const]), self.j.values]
        if not all(np.all(np.isfinite(p)) for p in parts):
            raise ValueError("non-finite elliptic data")


class GalerkinSystem:
    """Factored Galerkin operator for one pair of bases."""

    def __init__(self, hbasis, vbasis):
        self.hbasis, self.vbasis = hbasis, vbasis
        C, S = vbasis.C, vbasis.S
        cd = np.diag(C)
        if np.max(np.abs(C - np.diag(cd))) > 1e-12 or np.any(cd <= 0):
            raise SingularSystemError("vertical mass matrix must be diagonal positive")
        self.C, self.S = C, S
        cm = 1.0 / np.sqrt(cd)
        theta, Q = np.linalg.eigh(cm[:, None] * S * cm[None, :])
        theta = np.maximum(theta, 0.0)
        self.theta = theta
        self.W = cm[:, None] * Q  # K_n^{-1} = W diag(1/(lambda_n + theta)) W^T
        lam, mu = hbasis.eigenvalues, hbasis.means
        if np.any(lam[:, None] + theta[None, :] <= 0):
            raise SingularSystemError("per-mode block not positive definite")
        self.S1 = S[1:, :]
        SW = self.S1 @ self.W
        weights = (mu**2) @ (1.0 / (lam[:, None] + theta[None, :]))
        schur = hbasis.area * S[1:, 1:] - (SW * weights) @ SW.T
        schur = 0.5 * (schur + schur.T)
        try:
            self.chol = linalg.cho_factor(schur, lower=True)
        except linalg.LinAlgError as exc:
            raise SingularSystemError(f"pure-z Schur complement is not positive definite: {exc}") from exc

    def _kinv(self, R):
        """Apply K_n^{-1} row by row to R (N, M+1)."""
        lam = self.hbasis.eigenvalues
        return ((R @ self.W) / (lam[:, None] + self.theta[None, :])) @ self.W.T

    def solve(self, rhs_U, rhs_V):
        mu = self.hbasis.means
        Y = self._kinv(rhs_U)
        red = rhs_V - self.S1 @ (Y.T @ mu)
        V1 = linalg.cho_solve(self.chol, red)
        s = self.S[:, 1:] @ V1
        Z = self._kinv(np.broadcast_to(s, rhs_U.shape))
        U = Y - mu[:, None] * Z
        return U, V1

    def apply(self, U, V1):
        """Action of the bilinear form on every basis test function."""
        C, S = self.C, self.S
        lam, mu = self.hbasis.eigenvalues, self.hbasis.means
        V = np.r_[0.0, V1]
        out_U = lam[:, None] * (U @ C) + U @ S + mu[:, None] * (S @ V)[None, :]
        out_V = (S @ (U.T @ mu) + self.hbasis.area * (S @ V))[1:]
        return out_U, out_V


def compatibility_defect(data: BoundaryTriple) -> float:
    """c = (int j + int_plates lambda g - int f) / (|Omega| h)."""
    vb, hb = data.f.vbasis, data.f.hbasis
    gb, gt = data.g.integrals()
    num = data.j.integral() + vb.lam_bottom * gb + vb.lam_top * gt - data.f.integral()
    return float(num / (hb.area * vb.h))


def assemble_rhs(data: BoundaryTriple, defect: float):
    """Right-hand sides F(e_n psi_m) and F(psi_m), with f replaced by f + defect."""
    vb, hb = data.f.vbasis, data.f.hbasis
    Qm = vb.moment_matrix  # (M+1, n_levels): exact int of level interpolant times psi_m
    mom = data.f.moments() + defect * hb.means[None, :]  # (n_levels, N)
    g = data.g
    gb_m = g.bottom + g.bottom_const * hb.means
    gt_m = g.top + g.top_const * hb.means
    rhs_U = -(Qm @ mom).T + vb.lam_bottom * np.outer(gb_m, vb.psi_bottom) + vb.lam_top * np.outer(gt_m, vb.psi_top)
    lev_int = data.f.level_integrals() + defect * hb.area
    gb, gt = g.integrals()
    rhs_full = -(Qm @ lev_int) + vb.lam_bottom * gb * vb.psi_bottom + vb.lam_top * gt * vb.psi_top + Qm @ data.j.values
    return rhs_U, rhs_full[1:]


def solve_variational(data: BoundaryTriple, system: GalerkinSystem | None = None, rtol: float = 1e-10) -> StreamState:
    """Galerkin solution in the energy space, normalised to zero mean.

    Incompatible data are accepted: the solve then satisfies L(Psi) = f + c
    with c = compatibility_defect(data), recorded in ``meta['defect']``.
    """
    data.check_finite()
    hb, vb = data.f.hbasis, data.f.vbasis
    if system is None:
        system = GalerkinSystem(hb, vb)
    c = compatibility_defect(data)
    rU, rV = assemble_rhs(data, c)
    U, V1 = system.solve(rU, rV)
    aU, aV = system.apply(U, V1)
    scale = max(np.max(np.abs(rU)) if rU.size else 0.0, np.max(np.abs(rV)), 1e-300)
    resid = max(np.max(np.abs(aU - rU)), np.max(np.abs(aV - rV))) / scale
    if resid > rtol and scale > 1e-280:
        warnings.warn(f"Galerkin residual {resid:.2e} exceeds {rtol:.1e}", RuntimeWarning, stacklevel=2)
    # mean normalisation: the e_n parts integrate to mu_n * int(u_n dz)
    ints = vb.integrals
    V = np.r_[0.0, V1]
    mean = (hb.means @ (U @ ints) + hb.area * (V @ ints)) / (hb.area * vb.h)
    V[0] = -mean
    return StreamState(hb, vb, U, V, {"defect": c, "residual": float(resid) if scale > 1e-280 else 0.0})


def apply_L(psi: StreamState) -> ScalarField3D:
    """L(Psi) = Psi_xx + Psi_yy + (lambda Psi_z)_z at the collocation levels."""
    vb, hb = psi.vbasis, psi.hbasis
    horiz = -(vb.psi_levels @ psi.U.T) * hb.eigenvalues[None, :]
    vert = vb.Lz_levels @ psi.U.T
    return ScalarField3D(hb, vb, horiz + vert, vb.Lz_levels @ psi.V)


def weak_circulation(psi: StreamState, f: ScalarField3D, defect: float = 0.0) -> CirculationProfile:
    """Circulation read through the equation: int_Omega (f + c) - int_Omega (lambda Psi_z)_z per level.

    This is the pointwise form of the weak definition, where L(Psi) is
    replaced by the source it was solved from.  Unlike ``circulation_of`` it
    does not differentiate the truncated eigen-expansion at the wall.
    """
    hb, vb = psi.hbasis, psi.vbasis
    Lz = vb.Lz_levels
    vert = Lz @ (psi.U.T @ hb.means) + hb.area * (Lz @ psi.V)
    return CirculationProfile(vb, f.level_integrals() + defect * hb.area - vert)


def bilinear_residual(psi: StreamState, data: BoundaryTriple, system: GalerkinSystem | None = None) -> float:
    """max |B(Psi, gamma) - F~(gamma)| over basis test functions, relative to max |F~|."""
    system = system or GalerkinSystem(psi.hbasis, psi.vbasis)
    rU, rV = assemble_rhs(data, compatibility_defect(data))
    aU, aV = system.apply(psi.U, psi.V[1:])
    scale = max(np.max(np.abs(rU)), np.max(np.abs(rV)), 1e-300)
    return float(max(np.max(np.abs(aU - rU)), np.max(np.abs(aV - rV))) / scale)


def cosh_over_sinh(a, b):
    """cosh(a) / sinh(b) for 0 <= a <= b, without overflow."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return np.exp(a - b) * (1.0 + np.exp(-2.0 * a)) / (-np.expm1(-2.0 * b))


def neumann_series_solution(g: SurfaceFieldPair, vbasis, n_terms: int | None = None) -> ScalarField3D:
    """Closed-form harmonic solution with plate Neumann data g (lambda = 1).

    u = sum_n [t_n cosh(z s_n) + b_n cosh((z - h) s_n)] / (s_n sinh(h s_n)) e_n,
    s_n = sqrt(lambda_n), evaluated at the collocation levels.  The result has
    zero lateral trace and is not mean-normalised.
    """
    dom = vbasis.domain
    if not dom.lambda_is_constant or float(dom.stratification) != 1.0:
        raise ValueError("the closed-form series requires lambda == 1")
    if g.bottom_const != 0.0 or g.top_const != 0.0:
        raise ValueError("the closed-form series needs plate data in the span of the eigenmodes")
    hb = g.hbasis
    n = hb.N if n_terms is None else int(n_terms)
    h = vbasis.h
    s = np.sqrt(hb.eigenvalues[:n])
    z = vbasis.levels[:, None]
    top = cosh_over_sinh(z * s, h * s) / s
    bot = cosh_over_sinh((h - z) * s, h * s) / s
    coeffs = np.zeros((vbasis.n_levels, hb.N))
    coeffs[:, :n] = top * g.top[:n] + bot * g.bottom[:n]
    return ScalarField3D(hb, vbasis, coeffs, np.zeros(vbasis.n_levels))


def series_circulation(u: ScalarField3D) -> CirculationProfile:
    """Circulation of a level-sampled field with zero constant channel."""
    w = u.hbasis.eigenvalues * u.hbasis.means
    return CirculationProfile(u.vbasis, -(u.coeffs @ w))


def mean_normalized(u: ScalarField3D) -> ScalarField3D:
    """Subtract the volume mean of a level-sampled field."""
    m = u.integral() / (u.hbasis.area * u.vbasis.h)
    return u.add_constant(-m)
