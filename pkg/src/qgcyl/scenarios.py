"""Built-in scenarios: closed-form data that evaluate at any resolution.

Each scenario carries expected diagnostics as ``(value, tolerance, tag)``,
where the tag records where the number comes from: ``exact`` (holds by
construction), ``derived`` (a property of the continuous model) or
``measured`` (observed once with this code and pinned).
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .geometry import DomainSpec


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    description: str
    domain: DomainSpec
    f0: Callable | None = None
    g0: tuple | None = None
    j0: object = "balanced"
    a_L: Callable | None = None
    a_nu: tuple | None = None
    beta0: float = 0.0
    expected: dict = field(default_factory=dict)

    def run_kwargs(self) -> dict:
        return dict(domain=self.domain, f0=self.f0, g0=self.g0, j0=self.j0, a_L=self.a_L, a_nu=self.a_nu,
                    beta0=self.beta0)


def bump(x, y, cx, cy, s):
    """C-infinity bump of radius s and peak 1."""
    r2 = ((np.asarray(x) - cx) ** 2 + (np.asarray(y) - cy) ** 2) / s**2
    out = np.zeros(np.broadcast(x, y).shape)
    m = r2 < 1.0
    out[m] = np.exp(1.0 - 1.0 / (1.0 - r2[m]))
    return out


def _zeros2(x, y):
    return np.zeros(np.broadcast(x, y).shape)


def zero(domain: DomainSpec | None = None, **_) -> ScenarioSpec:
    return ScenarioSpec("zero", "all data and forcing vanish", domain or DomainSpec(),
                        expected={"H_norm": (0.0, 0.0, "exact"), "circulation_max_dev": (0.0, 0.0, "exact")})


def baroclinic(domain: DomainSpec | None = None, amplitude: float = 1.0, **_) -> ScenarioSpec:
    """Two counter-signed vortices whose strength varies with height, plus plate anomalies."""
    dom = domain or DomainSpec()
    Lx, Ly = dom.Lx, dom.Ly
    h = dom.height
    A = amplitude

    def f0(x, y, z):
        cz = np.cos(np.pi * np.asarray(z) / h)
        return A * (bump(x, y, 0.4 * Lx, 0.5 * Ly, 0.27 * Lx) * (1 + 0.5 * cz)
                    - bump(x, y, 0.67 * Lx, 0.57 * Ly, 0.23 * Lx) * (1 - 0.5 * cz))

    g0 = (lambda x, y: 0.5 * A * bump(x, y, 0.53 * Lx, 0.4 * Ly, 0.23 * Lx),
          lambda x, y: -0.5 * A * bump(x, y, 0.5 * Lx, 0.67 * Ly, 0.2 * Lx))
    return ScenarioSpec("baroclinic", "unforced interacting vortices on the rectangle", dom, f0, g0,
                        expected={"norm_drift_per_time": (0.0, 1e-3, "derived"),
                                  "circulation_max_dev": (0.0, 1e-6, "derived")})


def forced_compatible(domain: DomainSpec | None = None, amplitude: float = 1.0, **_) -> ScenarioSpec:
    """Baroclinic data plus forcing with zero net source on every level and plate."""
    base = baroclinic(domain, amplitude)
    dom = base.domain
    Lx, Ly = dom.Lx, dom.Ly
    h = dom.height
    A = amplitude

    def a_L(t, x, y, z):
        # equal and opposite bumps of one shape: zero horizontal mass at every z
        s = 0.5 * A * np.cos(2 * t) * (1 + 0.3 * np.sin(np.pi * np.asarray(z) / h))
        return s * (bump(x, y, 0.3 * Lx, 0.33 * Ly, 0.17 * Lx) - bump(x, y, 0.7 * Lx, 0.67 * Ly, 0.17 * Lx))

    def nu_b(t, x, y):
        return 0.3 * A * np.sin(t) * (bump(x, y, 0.3 * Lx, 0.67 * Ly, 0.17 * Lx)
                                      - bump(x, y, 0.7 * Lx, 0.33 * Ly, 0.17 * Lx))

    return replace(base, name="forced_compatible", description="baroclinic data with mass-free forcing",
                   a_L=a_L, a_nu=(nu_b, lambda t, x, y: _zeros2(x, y)),
                   expected={"compatibility_defect": (0.0, 1e-6, "derived")})


def steady_disk(domain: DomainSpec | None = None, amplitude: float = 1.0, **_) -> ScenarioSpec:
    """Radially symmetric data supported away from the wall: the flow is a differential rotation."""
    dom = domain or DomainSpec(shape="disk", R=1.0)
    if dom.shape != "disk":
        raise ValueError("steady_disk needs a disk domain")
    R, h = dom.R, dom.height
    A = amplitude

    def f0(x, y, z):
        return A * bump(x, y, 0.0, 0.0, 0.75 * R) * (1.0 + 0.3 * np.cos(np.pi * np.asarray(z) / h))

    def gb(x, y):
        return 0.3 * A * bump(x, y, 0.0, 0.0, 0.6 * R)

    return ScenarioSpec("steady_disk", "radial vortex on the disk", dom, f0, (gb, _zeros2),
                        expected={"psi_drift": (0.0, 1e-6, "derived")})


def beta_plane(domain: DomainSpec | None = None, amplitude: float = 1.0, beta0: float = 2.0, **_) -> ScenarioSpec:
    """Baroclinic data drifting on a beta plane."""
    base = baroclinic(domain, amplitude)
    return replace(base, name="beta_plane", description="baroclinic data with planetary vorticity gradient",
                   beta0=beta0, expected={"norm_drift_per_time": (0.0, 1e-3, "derived")})


def sqg_two_mode(domain: DomainSpec | None = None, amplitude: float = 1.0, modes=((1, 1), (3, 1)),
                 weights=(1.0, 0.7), **_) -> ScenarioSpec:
    """theta_0 = sum of two rectangle eigenmodes with nonzero means, placed on the bottom plate."""
    dom = domain or DomainSpec()
    if dom.shape != "rectangle":
        raise ValueError("sqg_two_mode is defined on the rectangle")
    Lx, Ly = dom.Lx, dom.Ly

    def theta(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        out = np.zeros(np.broadcast(x, y).shape)
        for (j, k), w in zip(modes, weights):
            out += amplitude * w * (2.0 / np.sqrt(Lx * Ly)) * np.sin(j * np.pi * x / Lx) * np.sin(k * np.pi * y / Ly)
        inside = (x >= 0) & (x <= Lx) & (y >= 0) & (y <= Ly)
        return np.where(inside, out, 0.0)

    return ScenarioSpec("sqg_two_mode", "surface anomaly from two mean-carrying modes", dom, None,
                        (theta, _zeros2), expected={"sqg_relative_drift": (1e-3, None, "measured")})


def sqg_coefficients(spec: ScenarioSpec, hbasis) -> np.ndarray:
    """Project the bottom datum of a scenario onto the horizontal modes."""
    from .fields import surface_to_spectral

    if hbasis.shape == "rectangle":
        X, Y = np.meshgrid(hbasis.x, hbasis.y)
    else:
        X, Y = hbasis.xq, hbasis.yq
    vals = spec.g0[0](X, Y)
    pair = surface_to_spectral(vals, np.zeros_like(vals), hbasis)
    return pair.bottom


def manufactured_stream(hbasis, vbasis, rng: np.random.Generator, n_modes: int | None = None,
                        decay: float = 1.0):
    """Random StreamState in the Galerkin span with smooth spectral decay."""
    from .fields import StreamState

    N = hbasis.N if n_modes is None else min(n_modes, hbasis.N)
    M = vbasis.M
    lam = hbasis.eigenvalues
    U = np.zeros((hbasis.N, M + 1))
    scale = (1.0 + lam[:N, None]) ** (-decay) * (1.0 + np.arange(M + 1)[None, :]) ** (-2.0)
    U[:N] = rng.standard_normal((N, M + 1)) * scale
    V = rng.standard_normal(M + 1) * (1.0 + np.arange(M + 1)) ** (-2.0)
    return StreamState(hbasis, vbasis, U, V).normalized()


def manufactured(domain: DomainSpec | None = None, **_) -> ScenarioSpec:
    """Elliptic-only scenario; data are built from a random stream function at solve time."""
    return ScenarioSpec("manufactured", "Galerkin-span stream function with derived data", domain or DomainSpec(),
                        expected={"H_error": (0.0, 1e-10, "exact")})


SCENARIOS = {
    "zero": zero,
    "baroclinic": baroclinic,
    "forced_compatible": forced_compatible,
    "beta_plane": beta_plane,
    "steady_disk": steady_disk,
    "sqg_two_mode": sqg_two_mode,
    "manufactured": manufactured,
}


def get_scenario(name: str, domain: DomainSpec | None = None, **kw) -> ScenarioSpec:
    try:
        factory = SCENARIOS[name]
    except KeyError:
        raise ValueError(f"unknown scenario {name!r}; choose from {sorted(SCENARIOS)}") from None
    return factory(domain, **kw)
