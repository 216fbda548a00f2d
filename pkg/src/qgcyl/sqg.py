"""Spectral surface QG on the horizontal domain and its harmonic extension.

theta = sum_n a_n e_n is advected by u = grad_perp (-Lap)^{-1/2} theta.  The
nonlinear term is formed on the quadrature grid and projected back onto the
Dirichlet modes; a 2/3 spectral cut keeps the upper third of the spectrum
empty.  The harmonic extension

    Psi(z) = sum_n a_n lambda_n^{-1/2} exp(-z sqrt(lambda_n)) e_n

has circulation -sum_n sqrt(lambda_n) mu_n a_n exp(-z sqrt(lambda_n)) at height
z, which in general is not constant in time.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fields import CirculationProfile


class SqgBlowupError(RuntimeError):
    pass


@dataclass(eq=False)
class SqgState:
    hbasis: object
    a: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=float)
        if self.a.shape != (self.hbasis.N,):
            raise ValueError(f"expected {self.hbasis.N} coefficients, got {self.a.shape}")
        if not np.all(np.isfinite(self.a)):
            raise ValueError("non-finite SQG coefficients")

    @property
    def stream(self) -> np.ndarray:
        """Surface stream coefficients a_n lambda_n^{-1/2}."""
        return self.a / np.sqrt(self.hbasis.eigenvalues)

    def l2(self) -> float:
        return float(np.linalg.norm(self.a))

    def tail_fraction(self) -> float:
        """Share of the L2 norm carried by the modes removed by the 2/3 cut."""
        keep = dealias_mask(self.hbasis)
        tot = np.sum(self.a**2)
        return float(np.sqrt(np.sum(self.a[~keep] ** 2) / tot)) if tot > 0 else 0.0


def dealias_mask(hbasis) -> np.ndarray:
    lam = hbasis.eigenvalues
    return lam <= (2.0 / 3.0) ** 2 * lam.max() * (1 + 1e-12)


def sqg_rhs(hbasis, a: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
    """da/dt = -P[(R_perp theta) . grad theta]."""
    if mask is None:
        mask = dealias_mask(hbasis)
    a = np.where(mask, a, 0.0)
    px, py = hbasis.synthesize_gradient(a / np.sqrt(hbasis.eigenvalues))
    tx, ty = hbasis.synthesize_gradient(a)
    adv = -py * tx + px * ty
    return np.where(mask, -hbasis.analyze(adv), 0.0)


def sqg_step(state: SqgState, dt: float, mask: np.ndarray | None = None) -> SqgState:
    """One classical RK4 step; raises SqgBlowupError on >10x norm growth."""
    hb = state.hbasis
    mask = dealias_mask(hb) if mask is None else mask
    a = np.where(mask, state.a, 0.0)
    k1 = sqg_rhs(hb, a, mask)
    k2 = sqg_rhs(hb, a + 0.5 * dt * k1, mask)
    k3 = sqg_rhs(hb, a + 0.5 * dt * k2, mask)
    k4 = sqg_rhs(hb, a + dt * k3, mask)
    new = a + dt * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
    n0, n1 = np.linalg.norm(a), np.linalg.norm(new)
    if not np.all(np.isfinite(new)) or (n0 > 0 and n1 > 10.0 * n0):
        raise SqgBlowupError(f"SQG norm exploded at t={state.time + dt:.4g}: {n0:.3e} -> {n1:.3e}")
    return SqgState(hb, new, state.time + dt)


def max_velocity(state: SqgState) -> float:
    px, py = state.hbasis.synthesize_gradient(state.stream)
    return float(np.sqrt(np.max(px**2 + py**2))) if px.size else 0.0


@dataclass
class SqgRun:
    times: np.ndarray
    coeffs: np.ndarray  # (n_times, N)
    l2: np.ndarray
    tail: np.ndarray
    meta: dict = field(default_factory=dict)


def run_sqg(state: SqgState, T: float, dt: float, every: int = 1) -> SqgRun:
    """Integrate to time T, recording every ``every`` steps (and the final state)."""
    n = int(round(T / dt))
    if n * dt < T - 1e-12 * max(1.0, T):
        n += 1
    mask = dealias_mask(state.hbasis)
    spacing = min(state.hbasis.domain.diameter / max(state.hbasis.grid_shape), 1.0)
    times, coeffs, l2, tail = [state.time], [state.a.copy()], [state.l2()], [state.tail_fraction()]
    s = state
    for k in range(1, n + 1):
        s = sqg_step(s, dt, mask)
        if k % every == 0 or k == n:
            times.append(s.time)
            coeffs.append(s.a.copy())
            l2.append(s.l2())
            tail.append(s.tail_fraction())
    return SqgRun(np.array(times), np.array(coeffs), np.array(l2), np.array(tail),
                  {"dt": dt, "steps": n, "cfl": dt * max_velocity(state) / spacing})


def extension_circulation(hbasis, coeffs: np.ndarray, z) -> np.ndarray:
    """Circulation of the harmonic extension at heights z; coeffs (..., N) -> (..., n_z)."""
    s = np.sqrt(hbasis.eigenvalues)
    decay = np.exp(-np.outer(np.atleast_1d(z), s))  # (n_z, N)
    return -(np.asarray(coeffs) * (s * hbasis.means)) @ decay.T


def _time_derivative(times, coeffs):
    """Centred differences in the interior, one-sided second order at the ends."""
    return np.gradient(coeffs, times, axis=0, edge_order=2 if len(times) > 2 else 1)


@dataclass
class ExtensionCirculation:
    times: np.ndarray
    z: np.ndarray
    circulation: np.ndarray  # (n_times, n_z)
    drift: np.ndarray  # circulation - circulation at t0
    obstruction: np.ndarray  # sum_n a_n' exp(-z sqrt(lambda_n)) sqrt(lambda_n) mu_n

    def relative_drift(self) -> float:
        ref = np.max(np.abs(self.circulation[0]))
        return float(np.max(np.abs(self.drift)) / ref) if ref > 0 else float(np.max(np.abs(self.drift)))

    def rows(self):
        for k, t in enumerate(self.times):
            row = {"time": float(t)}
            row.update({f"drift_{i}": float(v) for i, v in enumerate(self.drift[k])})
            row.update({f"obstruction_{i}": float(v) for i, v in enumerate(self.obstruction[k])})
            yield row


def harmonic_extension_circulation(run: SqgRun, hbasis, z) -> ExtensionCirculation:
    z = np.atleast_1d(np.asarray(z, dtype=float))
    circ = extension_circulation(hbasis, run.coeffs, z)
    da = _time_derivative(run.times, run.coeffs)
    s = np.sqrt(hbasis.eigenvalues)
    obstruction = (da * (s * hbasis.means)) @ np.exp(-np.outer(z, s)).T
    return ExtensionCirculation(run.times, z, circ, circ - circ[0], obstruction)


def initial_profile(hbasis, a0, vbasis) -> CirculationProfile:
    """Circulation of the harmonic extension of theta_0 at the collocation levels."""
    return CirculationProfile(vbasis, extension_circulation(hbasis, a0, vbasis.levels))
