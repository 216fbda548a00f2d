"""INI configuration with typed defaults and environment overrides.

Every key has a default, so a file may contain only the keys that differ.
An environment variable QGCYL_<SECTION>_<KEY> (upper case) overrides the
file.  Unknown sections or keys are errors.
"""
from __future__ import annotations

import configparser
import math
import os
import re
from dataclasses import dataclass, field

import numpy as np

from .geometry import DomainSpec, GeometryError

ENV_PREFIX = "QGCYL_"

# section -> key -> (default, type, help)
SCHEMA: dict[str, dict[str, tuple]] = {
    "domain": {
        "shape": ("rectangle", str, "rectangle or disk"),
        "height": (1.0, float, "layer depth h"),
        "lx": (math.pi, float, "rectangle side along x"),
        "ly": (math.pi, float, "rectangle side along y"),
        "radius": (1.0, float, "disk radius"),
        "stratification": (1.0, float, "constant lambda"),
        "lambda_bound": (10.0, float, "ellipticity bound Lambda"),
    },
    "resolution": {
        "modes": ("32x32", str, "horizontal modes: JxK on the rectangle or a count"),
        "vertical_degree": (16, int, "vertical basis degree M"),
        "grid": ("", str, "quadrature grid override, P or PxQ"),
        "box_points": ("", str, "disk box intervals across the diameter"),
        "levels": ("", str, "number of collocation levels (default M+1)"),
        "vertical_kind": ("legendre", str, "legendre or cosine"),
    },
    "mollifier": {
        "epsilon": ("", str, "mollification scale (default 4 box spacings)"),
        "kernel": ("bspline", str, "bspline or bump"),
    },
    "time": {
        "dt": (0.05, float, "time step"),
        "final_time": (1.0, float, "end time T"),
        "window_steps": (10, int, "steps per Picard window"),
    },
    "picard": {
        "tol": (1e-8, float, "fixed-point tolerance"),
        "max_iter": (40, int, "iterations per window"),
    },
    "physics": {
        "beta0": (0.0, float, "beta-plane coefficient"),
        "monotone": (False, bool, "clip interpolation to the local range"),
    },
    "scenario": {
        "name": ("baroclinic", str, "built-in scenario"),
        "amplitude": (1.0, float, "data amplitude"),
    },
    "output": {
        "snapshot_every": (0, int, "snapshot cadence in steps (0 = off)"),
        "delimiter": (",", str, "diagnostics column separator"),
    },
    "run": {
        "seed": (0, int, "seed for randomised scenarios"),
        "threads": (1, int, "compiled-kernel threads"),
    },
    "sqg": {
        "dt": (0.005, float, "SQG time step"),
        "heights": ("0.0,0.25,0.5", str, "heights for the extension circulation"),
        "every": (10, int, "record cadence in SQG steps"),
    },
    "convergence": {
        "resolutions": ("16,24,32", str, "mode counts J (rectangle JxJ) or N (disk)"),
        "final_time": (0.5, float, "end time per resolution"),
    },
    "tolerances": {
        "elliptic_rtol": (1e-10, float, "Galerkin residual acceptance"),
        "manufactured": (1e-10, float, "manufactured-solution H error"),
        "circulation": (1e-6, float, "circulation deviation, times (1 + |j0|)"),
        "norm_drift": (1e-3, float, "norm drift per unit time"),
        "defect": (1e-6, float, "compatibility defect"),
        "steady_drift": (1e-6, float, "steady-state stream drift"),
        "sqg_drift": (1e-3, float, "minimum relative SQG circulation drift"),
        "lateral_trace": (1e-10, float, "spread of the lateral trace"),
    },
}


class ConfigError(ValueError):
    pass


def _parse_bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _convert(section, key, raw):
    default, typ, _ = SCHEMA[section][key]
    try:
        if typ is bool:
            return _parse_bool(raw)
        return typ(raw.strip()) if typ is not str else raw.strip()
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}: cannot read {raw!r} as {typ.__name__}") from exc


def _line_of(text: str, section: str, key: str) -> int | None:
    cur = None
    for i, line in enumerate(text.splitlines(), 1):
        m = re.match(r"\s*\[([^\]]+)\]", line)
        if m:
            cur = m.group(1).strip()
            continue
        m = re.match(r"\s*([^=:#;\s][^=:]*?)\s*[=:]", line)
        if m and cur == section and m.group(1).strip().lower() == key:
            return i
    return None


def describe_defaults() -> str:
    lines = []
    for sec, keys in SCHEMA.items():
        lines.append(f"[{sec}]")
        for k, (d, _, h) in keys.items():
            lines.append(f"  {k} = {d!s:<14} {h}")
    return "\n".join(lines)


@dataclass
class Settings:
    values: dict = field(default_factory=dict)
    source: str | None = None

    def get(self, section, key):
        return self.values[section][key]

    def set(self, section, key, value):
        self.values[section][key] = value

    # -- derived objects ----------------------------------------------------------
    def domain(self) -> DomainSpec:
        d = self.values["domain"]
        try:
            return DomainSpec(shape=d["shape"], height=d["height"], Lx=d["lx"], Ly=d["ly"], R=d["radius"],
                              stratification=d["stratification"], Lambda_bound=d["lambda_bound"])
        except GeometryError as exc:
            raise ConfigError(f"[domain] {exc}") from exc

    def modes(self, override=None):
        raw = str(override if override is not None else self.values["resolution"]["modes"]).lower()
        if "x" in raw:
            j, k = raw.split("x", 1)
            return (int(j), int(k))
        n = int(raw)
        return (n, n) if self.values["domain"]["shape"] == "rectangle" and override is not None else n

    def _opt_int(self, section, key):
        s = self.values[section][key]
        return int(s) if str(s).strip() else None

    def grid(self):
        s = str(self.values["resolution"]["grid"]).strip().lower()
        if not s:
            return None
        if "x" in s:
            return tuple(int(v) for v in s.split("x", 1))
        return int(s)

    def epsilon(self):
        s = str(self.values["mollifier"]["epsilon"]).strip()
        return float(s) if s else None

    def heights(self):
        return np.array([float(v) for v in str(self.values["sqg"]["heights"]).split(",") if v.strip()])

    def resolutions(self):
        return [v.strip() for v in str(self.values["convergence"]["resolutions"]).split(",") if v.strip()]

    def run_config(self, scenario=None, modes=None, out_dir=None, **over):
        from .scenarios import get_scenario
        from .solver import RunConfig

        dom = self.domain()
        sc = scenario or get_scenario(self.values["scenario"]["name"], dom,
                                      amplitude=self.values["scenario"]["amplitude"])
        v = self.values
        kw = dict(
            N=self.modes(modes),
            M=v["resolution"]["vertical_degree"],
            grid=self.grid(),
            box_points=self._opt_int("resolution", "box_points"),
            vertical_kind=v["resolution"]["vertical_kind"],
            n_levels=self._opt_int("resolution", "levels"),
            epsilon=self.epsilon(),
            kernel=v["mollifier"]["kernel"],
            dt=v["time"]["dt"],
            T=v["time"]["final_time"],
            window_steps=v["time"]["window_steps"],
            picard_tol=v["picard"]["tol"],
            picard_max_iter=v["picard"]["max_iter"],
            monotone=v["physics"]["monotone"],
            snapshot_every=v["output"]["snapshot_every"],
            out_dir=out_dir,
            elliptic_rtol=v["tolerances"]["elliptic_rtol"],
        )
        if kw["epsilon"] is not None:
            from .geometry import build_basis
            from .mollify import box_spacing, clamp_epsilon

            hb, _ = build_basis(dom, kw["N"], kw["M"], kw["grid"], kw["vertical_kind"], kw["n_levels"])
            kw["epsilon"] = clamp_epsilon(kw["epsilon"], box_spacing(hb, kw["box_points"]))
        kw.update(sc.run_kwargs())
        if v["physics"]["beta0"]:
            kw["beta0"] = v["physics"]["beta0"]
        kw.update(over)
        return RunConfig(**kw)


def _validate(values):
    d = values["domain"]
    if not d["height"] > 0:
        raise ConfigError(f"[domain] height must be positive, got {d['height']}")
    for key in ("lx", "ly", "radius"):
        if not d[key] > 0:
            raise ConfigError(f"[domain] {key} must be positive, got {d[key]}")
    if d["shape"] not in ("rectangle", "disk"):
        raise ConfigError(f"[domain] shape must be rectangle or disk, got {d['shape']!r}")
    if values["resolution"]["vertical_degree"] < 1:
        raise ConfigError("[resolution] vertical_degree must be >= 1")
    if values["resolution"]["vertical_kind"] not in ("legendre", "cosine"):
        raise ConfigError("[resolution] vertical_kind must be legendre or cosine")
    if values["mollifier"]["kernel"] not in ("bspline", "bump"):
        raise ConfigError("[mollifier] kernel must be bspline or bump")
    for sec, key in (("time", "dt"), ("picard", "tol"), ("sqg", "dt")):
        if not values[sec][key] > 0:
            raise ConfigError(f"[{sec}] {key} must be positive, got {values[sec][key]}")
    for sec, key in (("time", "final_time"), ("convergence", "final_time"), ("output", "snapshot_every")):
        if values[sec][key] < 0:
            raise ConfigError(f"[{sec}] {key} must be non-negative")
    for sec, key in (("time", "window_steps"), ("picard", "max_iter"), ("run", "threads"), ("sqg", "every")):
        if values[sec][key] < 1:
            raise ConfigError(f"[{sec}] {key} must be >= 1")
    eps = str(values["mollifier"]["epsilon"]).strip()
    if eps:
        try:
            e = float(eps)
        except ValueError:
            raise ConfigError(f"[mollifier] epsilon: cannot read {eps!r} as float") from None
        if not e > 0:
            raise ConfigError("[mollifier] epsilon must be positive")
    for key in ("box_points", "levels"):
        s = str(values["resolution"][key]).strip()
        if s and (not s.isdigit() or int(s) < 1):
            raise ConfigError(f"[resolution] {key} must be a positive integer")


def load_settings(path=None, env=None) -> Settings:
    """Defaults, then the file (if any), then QGCYL_* environment variables."""
    values = {sec: {k: spec[0] for k, spec in keys.items()} for sec, keys in SCHEMA.items()}
    text = ""
    if path is not None:
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
        try:
            cp.read_string(text, source=str(path))
        except configparser.Error as exc:
            raise ConfigError(f"parse error in {path}: {exc}") from exc
        for sec in cp.sections():
            if sec not in SCHEMA:
                raise ConfigError(f"unknown section [{sec}] at line {_line_of_section(text, sec)}")
            for key, raw in cp.items(sec):
                if key not in SCHEMA[sec]:
                    raise ConfigError(f"unknown key {key!r} in [{sec}] at line {_line_of(text, sec, key)}")
                values[sec][key] = _convert(sec, key, raw)
    env = os.environ if env is None else env
    for name, raw in env.items():
        if not name.startswith(ENV_PREFIX):
            continue
        rest = name[len(ENV_PREFIX):].lower()
        match = [(s, rest[len(s) + 1:]) for s in SCHEMA if rest.startswith(s + "_")]
        if not match or match[0][1] not in SCHEMA[match[0][0]]:
            raise ConfigError(f"environment variable {name} does not name a config key")
        sec, key = match[0]
        values[sec][key] = _convert(sec, key, raw)
    _validate(values)
    return Settings(values, str(path) if path is not None else None)


def _line_of_section(text, sec):
    for i, line in enumerate(text.splitlines(), 1):
        if re.match(rf"\s*\[{re.escape(sec)}\]", line):
            return i
    return None


def parse_config(path, env=None):
    """RunConfig for the configured scenario."""
    return load_settings(path, env).run_config()
