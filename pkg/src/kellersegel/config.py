"""Run configuration: a flat ``key = value`` file with ``#`` comments.

Required keys are ``a b c d k alpha beta f``.  Everything else has a
default:

    n = 256               delta = f/2            ic = cosine_perturbation
    eps_u = 0.2           eps_rho = 0.1          m_u = 1, m_rho = 1
    ic_file = (none)      dt = dt_max            dt_max = 1e-2
    dt_min = 1e-10        cfl_safety = 0.5       t_end = 200
    snapshot_stride = 1   outputs = (none)       formats = csv,json
    seed = 0

The cosine initial condition is ``u0 = f (1 + eps_u cos(m_u pi (x - alpha)/l))``
and ``rho0 = (c f / d)(1 + eps_rho cos(m_rho pi (x - alpha)/l))``.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import StepControl
from .errors import ConfigError
from .grid import MIN_MODES, make_grid
from .model import Params, State

REQUIRED = ("a", "b", "c", "d", "k", "alpha", "beta", "f")
IC_KINDS = ("cosine_perturbation", "from_file")
FORMATS = ("csv", "json")

_FLOAT_KEYS = {"a", "b", "c", "d", "k", "alpha", "beta", "f", "delta", "eps_u", "eps_rho",
               "dt", "dt_max", "dt_min", "cfl_safety", "t_end"}
INT_KEYS = {"n", "m_u", "m_rho", "snapshot_stride", "seed"}
_STR_KEYS = {"ic", "ic_file", "outputs", "formats"}
KNOWN_KEYS = _FLOAT_KEYS | INT_KEYS | _STR_KEYS


@dataclass(frozen=True)
class InitialCondition:
    kind: str = "cosine_perturbation"
    eps_u: float = 0.2
    eps_rho: float = 0.1
    m_u: int = 1
    m_rho: int = 1
    path: str | None = None


@dataclass
class RunConfig:
    a: float
    b: float
    c: float
    d: float
    k: float
    alpha: float
    beta: float
    f: float
    delta: float | None = None
    n: int = 256
    ic: InitialCondition = field(default_factory=InitialCondition)
    control: StepControl = field(default_factory=StepControl)
    outputs: str | None = None
    formats: tuple = FORMATS
    seed: int = 0

    def grid(self):
        return make_grid(self.alpha, self.beta, self.n)

    def params(self):
        return Params(self.a, self.b, self.c, self.d, self.k, self.grid(), self.f, self.delta)

    def initial_state(self, params=None):
        params = params or self.params()
        if self.ic.kind == "from_file":
            from .output import read_state
            state = read_state(self.ic.path)
            if state.grid != params.grid:
                raise ConfigError("invalid-value", "ic_file",
                                  f"grid in {self.ic.path} does not match the configured grid")
            return state
        grid = params.grid
        s = (grid.nodes - grid.alpha) * math.pi / grid.length
        u0 = params.f * (1 + self.ic.eps_u * np.cos(self.ic.m_u * s))
        rho0 = params.rho_const * (1 + self.ic.eps_rho * np.cos(self.ic.m_rho * s))
        return State.from_density(params, u0, rho0)

    def as_dict(self):
        """Flat echo of every key, suitable for JSON."""
        out = {name: getattr(self, name) for name in REQUIRED}
        out.update(delta=self.params().delta, n=self.n, ic=self.ic.kind, eps_u=self.ic.eps_u,
                   eps_rho=self.ic.eps_rho, m_u=self.ic.m_u, m_rho=self.ic.m_rho,
                   ic_file=self.ic.path, outputs=self.outputs,
                   formats=",".join(self.formats), seed=self.seed)
        out.update(dataclasses.asdict(self.control))
        return out

    def replace(self, **changes):
        """Copy with flat keys changed (used by parameter sweeps)."""
        values = self.as_dict()
        values.update(changes)
        if "f" in changes and "delta" not in changes:
            values["delta"] = None
        return from_mapping(values)


def _convert(key, raw, line):
    try:
        if key in INT_KEYS:
            value = float(raw)
            if not value.is_integer():
                raise ValueError
            return int(value)
        if key in _FLOAT_KEYS:
            value = float(raw)
            if not math.isfinite(value):
                raise ValueError
            return value
    except ValueError:
        raise ConfigError("invalid-value", key, f"cannot read {raw!r} as a number", line) from None
    return raw


def _require(cond, key, message, lines):
    if not cond:
        raise ConfigError("invalid-value", key, message, lines.get(key))


def from_mapping(values, lines=None):
    """Validate a flat mapping of already-typed values into a :class:`RunConfig`."""
    lines = lines or {}
    values = {k: v for k, v in values.items() if v is not None}
    for key in values:
        if key not in KNOWN_KEYS:
            raise ConfigError("unknown-key", key, "not a recognised setting", lines.get(key))
    for key in REQUIRED:
        if key not in values:
            raise ConfigError("missing-required", key, "this key has no default")
    for key in ("a", "b", "c", "d", "k", "f"):
        _require(values[key] > 0, key, f"must be positive, got {values[key]!r}", lines)
    _require(values["beta"] > values["alpha"], "beta", "need beta > alpha", lines)
    n = values.get("n", 256)
    _require(n >= MIN_MODES, "n", f"need n >= {MIN_MODES}", lines)
    if "delta" in values:
        _require(0 < values["delta"] <= values["f"], "delta", "need 0 < delta <= f", lines)

    kind = values.get("ic", "cosine_perturbation")
    _require(kind in IC_KINDS, "ic", f"must be one of {', '.join(IC_KINDS)}", lines)
    ic = InitialCondition(kind=kind, eps_u=values.get("eps_u", 0.2),
                          eps_rho=values.get("eps_rho", 0.1), m_u=values.get("m_u", 1),
                          m_rho=values.get("m_rho", 1), path=values.get("ic_file"))
    _require(0 <= ic.eps_u < 1, "eps_u", "need 0 <= eps_u < 1 so that u0 > 0", lines)
    _require(abs(ic.eps_rho) < 1, "eps_rho", "need |eps_rho| < 1", lines)
    _require(0 <= ic.m_u < n, "m_u", "mode number out of range", lines)
    _require(0 <= ic.m_rho < n, "m_rho", "mode number out of range", lines)
    _require(kind != "from_file" or ic.path, "ic_file", "needed when ic = from_file", lines)

    dt_max = values.get("dt_max", 1e-2)
    dt_min = values.get("dt_min", 1e-10)
    dt = values.get("dt", dt_max)
    _require(dt_max > 0, "dt_max", "must be positive", lines)
    _require(0 < dt_min <= dt_max, "dt_min", "need 0 < dt_min <= dt_max", lines)
    _require(dt_min <= dt <= dt_max, "dt", "need dt_min <= dt <= dt_max", lines)
    cfl = values.get("cfl_safety", 0.5)
    _require(0 < cfl <= 1, "cfl_safety", "must lie in (0, 1]", lines)
    t_end = values.get("t_end", 200.0)
    _require(t_end > 0, "t_end", "must be positive", lines)
    stride = values.get("snapshot_stride", 1)
    _require(stride >= 1, "snapshot_stride", "must be a positive integer", lines)
    control = StepControl(dt=dt, dt_min=dt_min, dt_max=dt_max, cfl_safety=cfl,
                          t_end=t_end, snapshot_stride=stride)

    formats = values.get("formats", ",".join(FORMATS))
    if isinstance(formats, str):
        formats = tuple(s.strip() for s in formats.split(",") if s.strip())
    for fmt in formats:
        _require(fmt in FORMATS, "formats", f"unknown format {fmt!r}", lines)

    return RunConfig(a=values["a"], b=values["b"], c=values["c"], d=values["d"],
                     k=values["k"], alpha=values["alpha"], beta=values["beta"],
                     f=values["f"], delta=values.get("delta"), n=n, ic=ic,
                     control=control, outputs=values.get("outputs"),
                     formats=tuple(formats), seed=values.get("seed", 0))


def parse_config(text):
    """Parse configuration text.  Raises :class:`ConfigError` naming the key and line."""
    values = {}
    lines = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError("invalid-value", body, "expected 'key = value'", lineno)
        key, _, value = (part.strip() for part in body.partition("="))
        if not key or not value:
            raise ConfigError("invalid-value", key or "?", "expected 'key = value'", lineno)
        if key not in KNOWN_KEYS:
            raise ConfigError("unknown-key", key, "not a recognised setting", lineno)
        if key in values:
            raise ConfigError("invalid-value", key, "given more than once", lineno)
        values[key] = _convert(key, value, lineno)
        lines[key] = lineno
    return from_mapping(values, lines)


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
