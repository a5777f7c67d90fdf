"""Registry of built-in coefficients, drivers and terminals, and the scenario file format.

A scenario is a JSON object::

    {
      "name": "quadratic-steering",
      "grid": {"t0": 0.0, "T": 1.0, "delta": 0.0, "h": 0.05},
      "coefficients": {"kind": "steering", "sigma": 0.0},
      "generator": {"kind": "zero"},
      "terminal": {"kind": "neg_square"},
      "constants": {"L": 1.0, "mu": 0.0},
      "init": {"kind": "constant", "value": -1.0},
      "lattice": {"u_values": [[0.0], [1.0]], "switch_times": [0.0]},
      "basis": {"degree": 2, "use_lag": true},
      "mc": {"n_paths": 1, "seed": 0, "outer_paths": 1000, "inner_paths": 100},
      "dpp": {"tau": 0.5}
    }

``constants`` overrides the declared regularity metadata (``L``, ``Ltilde``,
``mu``, ``M``, ``p``) of the built-ins. Unknown keys are errors.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Union

import numpy as np

from .bsde import SegmentBasis
from .control import ControlProblem, MCConfig, config_hash
from .core import CoefficientSpec, ControlLattice, GeneratorSpec, PathSegment, make_grid
from .ezapp import EPS_DOM, EzParams, RamseyModel, ez_dg_du, ez_generator


class ConfigError(ValueError):
    """Scenario file is malformed or references unknown built-ins."""


def _cur(w):
    return w[:, -1]


def _lag(w):
    return w[:, 0]


# ---------------------------------------------------------------------------
# coefficients: builder(n, d, m, **params) -> CoefficientSpec

def coeff_zero(n=1, d=1, m=1):
    return CoefficientSpec(lambda t, w, v: np.zeros((w.shape[0], n)),
                           lambda t, w, v: np.zeros((w.shape[0], n, d)), 0.0, n, d, m, "zero")


def coeff_gbm(a=0.05, sigma=0.2):
    """``b = a x(t)``, ``sigma = sigma x(t)``."""
    return CoefficientSpec(lambda t, w, v: a * _cur(w),
                           lambda t, w, v: sigma * _cur(w)[:, :, None],
                           abs(a) + abs(sigma), 1, 1, 1, "gbm")


def coeff_linear_delay(a=0.0, b=1.0, c=1.0, sigma=0.0):
    """``b = a x(t) + b x(t - delta) + c v``, constant ``sigma``."""
    def drift(t, w, v):
        return a * _cur(w) + b * _lag(w) + c * v[0]

    def diffusion(t, w, v):
        return np.full((w.shape[0], 1, 1), float(sigma))

    return CoefficientSpec(drift, diffusion, abs(a) + abs(b) + abs(c), 1, 1, 1, "linear_delay")


def coeff_steering(sigma=0.0):
    """``b = v``, constant ``sigma``."""
    return CoefficientSpec(lambda t, w, v: np.broadcast_to(v[:1], (w.shape[0], 1)).copy(),
                           lambda t, w, v: np.full((w.shape[0], 1, 1), float(sigma)),
                           1.0, 1, 1, 1, "steering")


def coeff_state_vol(a=0.0, sigma=0.3):
    """``b = v + a tanh(x(t - delta))``, ``sigma = sigma (1 + sin x(t)) / 2``; bounded and Lipschitz."""
    def drift(t, w, v):
        return v[0] + a * np.tanh(_lag(w))

    def diffusion(t, w, v):
        return (0.5 * sigma * (1.0 + np.sin(_cur(w))))[:, :, None]

    return CoefficientSpec(drift, diffusion, 1.0 + abs(a) + 0.5 * abs(sigma), 1, 1, 1, "state_vol")


def coeff_ramsey(regime="i", K=0.3, F_max=2.0, sigma0=0.2, a=(0.0, 1.0), b=(0.1, 1.0)):
    return RamseyModel.demo(regime, K, F_max, sigma0, tuple(a), tuple(b)).coefficients()


COEFFICIENTS: dict[str, Callable[..., CoefficientSpec]] = {
    "zero": coeff_zero,
    "gbm": coeff_gbm,
    "linear_delay": coeff_linear_delay,
    "steering": coeff_steering,
    "state_vol": coeff_state_vol,
    "ramsey": coeff_ramsey,
}


# ---------------------------------------------------------------------------
# terminals: builder(**params) -> Phi(windows) -> (P,)

def term_constant(c=1.0):
    return lambda w: np.full(w.shape[0], float(c))


def term_identity():
    return lambda w: w[:, -1, 0].copy()


def term_neg_square():
    return lambda w: -w[:, -1, 0] ** 2


def term_clamp(m=1.0):
    return lambda w: np.clip(w[:, -1, 0], -m, m)


def term_tanh(scale=1.0, shift=0.0):
    return lambda w: shift + scale * np.tanh(w[:, -1, 0])


def term_lagged():
    return lambda w: w[:, 0, 0].copy()


def term_ramsey(regime="i"):
    base = -1.5 if regime == "i" else 1.0
    return lambda w: base + 0.5 * np.tanh(w[:, -1, 0])


TERMINALS: dict[str, Callable[..., Callable]] = {
    "constant": term_constant,
    "identity": term_identity,
    "neg_square": term_neg_square,
    "clamp": term_clamp,
    "tanh": term_tanh,
    "lagged": term_lagged,
    "ramsey": term_ramsey,
}


# ---------------------------------------------------------------------------
# drivers: builder(terminal, **params) -> GeneratorSpec

def gen_zero(terminal):
    return GeneratorSpec(lambda t, w, y, z, v: np.zeros_like(y), terminal, 0.0, 0.0, 0.0, 1.0,
                         dg_dy=lambda t, w, y, z, v: np.zeros_like(y), name="zero")


def gen_linear(terminal, mu=0.0, c=0.0):
    """``g = mu y + c``."""
    return GeneratorSpec(lambda t, w, y, z, v: mu * y + c, terminal, 0.0, mu, abs(mu), 1.0,
                         dg_dy=lambda t, w, y, z, v: np.full_like(y, mu), name="linear")


def gen_linear_state(terminal, mu=-0.5, k=0.2, lam=0.0):
    """``g = mu y + k tanh(x(t)) - lam v^2``: running reward in the state, quadratic control cost."""
    def g(t, w, y, z, v):
        return mu * y + k * np.tanh(w[:, -1, 0]) - lam * float(v[0]) ** 2

    return GeneratorSpec(g, terminal, abs(k), mu, abs(mu), 1.0,
                         dg_dy=lambda t, w, y, z, v: np.full_like(y, mu), name="linear_state")


def gen_cubic(terminal, k=1.0, c=0.0):
    """``g = -k y^3 + c``: monotone with ``mu = 0``, growth ``p = 3``."""
    return GeneratorSpec(lambda t, w, y, z, v: -k * y ** 3 + c, terminal, 0.0, 0.0, k, 3.0,
                         dg_dy=lambda t, w, y, z, v: -3 * k * y ** 2, name="cubic")


def gen_cubic_linear(terminal, k=1.0, mu=0.5):
    """``g = mu y - k y^3``."""
    return GeneratorSpec(lambda t, w, y, z, v: mu * y - k * y ** 3, terminal, 0.0, mu,
                         abs(mu) + k, 3.0, dg_dy=lambda t, w, y, z, v: mu - 3 * k * y ** 2,
                         name="cubic_linear")


def gen_abs(terminal, scale=1.0):
    """``g = scale |y|``; kinked at 0."""
    return GeneratorSpec(lambda t, w, y, z, v: scale * np.abs(y), terminal, 0.0, abs(scale),
                         abs(scale), 1.0, name="abs")


def gen_linear_z(terminal, mu=-0.5, beta=0.3, c=0.0):
    """``g = mu y + beta . z + c`` (z-dependent)."""
    def g(t, w, y, z, v):
        return mu * y + z @ np.full(z.shape[1], beta) + c

    return GeneratorSpec(g, terminal, abs(beta), mu, abs(mu), 1.0, z_dependent=True,
                         dg_dy=lambda t, w, y, z, v: np.full_like(y, mu), name="linear_z")


def gen_ez(terminal, vartheta=0.1, psi=2.0, r=2.0, c_index=1, c_max=1.0, eps_dom=1e-8):
    """Epstein-Zin aggregator reading consumption from control component ``c_index``."""
    p = EzParams(vartheta, psi, r)
    eps = eps_dom or EPS_DOM
    mu = p.mu_bound()
    M = abs(p.scale) * (c_max ** p.q * abs(1 - p.r) ** p.e + abs(1 - p.r))
    return GeneratorSpec(lambda t, w, y, z, v: ez_generator(p, y, v[c_index], eps),
                         terminal, 0.0, mu if math.isfinite(mu) else 1e300, M, max(1.0, p.e),
                         dg_dy=lambda t, w, y, z, v: ez_dg_du(p, y, v[c_index], eps),
                         y_domain=p.y_domain(eps), name="ez")


GENERATORS: dict[str, Callable[..., GeneratorSpec]] = {
    "zero": gen_zero,
    "linear": gen_linear,
    "linear_state": gen_linear_state,
    "cubic": gen_cubic,
    "cubic_linear": gen_cubic_linear,
    "abs": gen_abs,
    "linear_z": gen_linear_z,
    "ez": gen_ez,
}


def _build(table: dict, spec: dict, what: str, *args):
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigError(f"{what} must be an object with a 'kind' field")
    params = {k: v for k, v in spec.items() if k != "kind"}
    kind = spec["kind"]
    if kind not in table:
        raise ConfigError(f"unknown {what} {kind!r}; built-ins: {', '.join(sorted(table))}")
    try:
        return table[kind](*args, **params)
    except TypeError as e:
        raise ConfigError(f"bad parameters for {what} {kind!r}: {e}") from None


def build_coefficients(spec: dict) -> CoefficientSpec:
    return _build(COEFFICIENTS, spec, "coefficients")


def build_terminal(spec: dict):
    return _build(TERMINALS, spec, "terminal")


def build_generator(spec: dict, terminal) -> GeneratorSpec:
    return _build(GENERATORS, spec, "generator", terminal)


# ---------------------------------------------------------------------------
# scenarios

_TOP_KEYS = {"name", "grid", "coefficients", "generator", "terminal", "constants", "init",
             "lattice", "basis", "mc", "dpp", "tolerances", "projection", "notes"}


@dataclass
class Scenario:
    name: str
    problem: ControlProblem
    init: PathSegment
    lattice: ControlLattice
    mc: MCConfig
    t0: float
    raw: dict = field(repr=False)
    extra: dict = field(default_factory=dict)

    @property
    def hash(self) -> str:
        raw = dict(self.raw)
        # thread count never changes results
        raw["mc"] = {k: v for k, v in raw.get("mc", {}).items() if k != "workers"}
        return config_hash(raw)

    def with_mc(self, **kw) -> "Scenario":
        raw = json.loads(json.dumps(self.raw))
        raw.setdefault("mc", {}).update(kw)
        return scenario_from_dict(raw)


def _init_segment(spec: dict, t0: float, lag_steps: int, h: float) -> PathSegment:
    kind = spec.get("kind", "constant")
    if kind == "constant":
        return PathSegment.constant(t0, spec.get("value", 0.0), lag_steps, h)
    if kind == "values":
        vals = np.asarray(spec["values"], dtype=float)
        if vals.shape[0] != lag_steps + 1:
            raise ConfigError(f"init needs {lag_steps + 1} samples, got {vals.shape[0]}")
        return PathSegment(t0, vals, h)
    if kind == "linear":
        # x(s) = value + slope (s - t0) on the history nodes
        ts = t0 + (np.arange(lag_steps + 1) - lag_steps) * h
        return PathSegment(t0, spec.get("value", 0.0) + spec.get("slope", 0.0) * (ts - t0), h)
    raise ConfigError(f"unknown init kind {kind!r}")


def scenario_from_dict(raw: dict) -> Scenario:
    if not isinstance(raw, dict):
        raise ConfigError("scenario must be a JSON object")
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown scenario keys: {sorted(unknown)}")
    for k in ("grid", "coefficients", "generator", "terminal"):
        if k not in raw:
            raise ConfigError(f"scenario is missing {k!r}")
    g = raw["grid"]
    try:
        t0, T, delta = float(g.get("t0", 0.0)), float(g["T"]), float(g.get("delta", 0.0))
        h = float(g["h"])
        grid = make_grid(t0, T, delta, h=h)
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"bad grid: {e}") from None
    coeffs = build_coefficients(raw["coefficients"])
    gen = build_generator(raw["generator"], build_terminal(raw["terminal"]))
    consts = dict(raw.get("constants", {}))
    bad = set(consts) - {"L", "Ltilde", "mu", "M", "p"}
    if bad:
        raise ConfigError(f"unknown constants {sorted(bad)}")
    if "L" in consts:
        coeffs = replace(coeffs, lipschitz_L=float(consts["L"]))
    gen = replace(gen, **{f: float(consts[k]) for k, f in
                          (("Ltilde", "lipschitz_Ltilde"), ("mu", "monotone_mu"), ("M", "growth_M"),
                           ("p", "growth_p")) if k in consts})
    b = raw.get("basis", {})
    basis = SegmentBasis(int(b.get("degree", 2)), bool(b.get("use_lag", True)))
    lat = raw.get("lattice", {"u_values": [[0.0] * coeffs.m]})
    try:
        lattice = ControlLattice(np.asarray(lat["u_values"], float), tuple(lat.get("switch_times", [t0])),
                                 lat.get("box_lo"), lat.get("box_hi"))
    except (KeyError, ValueError) as e:
        raise ConfigError(f"bad lattice: {e}") from None
    if lattice.m != coeffs.m:
        raise ConfigError(f"lattice controls have dimension {lattice.m}, coefficients expect {coeffs.m}")
    mc_raw = raw.get("mc", {})
    try:
        mc = MCConfig(**mc_raw)
    except TypeError as e:
        raise ConfigError(f"bad mc block: {e}") from None
    init = _init_segment(raw.get("init", {}), t0, grid.lag_steps, grid.h)
    name = str(raw.get("name", "scenario"))
    params = tuple(sorted((k, json.dumps(raw[k], sort_keys=True))
                          for k in ("coefficients", "generator", "terminal", "constants") if k in raw))
    problem = ControlProblem(coeffs, gen, T, delta, h, basis, name, params)
    extra = {k: raw[k] for k in ("dpp", "tolerances", "projection") if k in raw}
    return Scenario(name, problem, init, lattice, mc, t0, raw, extra)


def load_scenario(source: Union[str, Path, dict], overrides: dict | None = None) -> Scenario:
    """Read a scenario file (or bundled name) and apply dotted-key overrides like ``{"mc.seed": 3}``."""
    if isinstance(source, dict):
        raw = json.loads(json.dumps(source))
    else:
        path = Path(source)
        if not path.exists() and (SCENARIO_DIR / f"{source}.json").exists():
            path = SCENARIO_DIR / f"{source}.json"
        try:
            raw = json.loads(path.read_text())
        except FileNotFoundError:
            raise ConfigError(f"scenario file {str(source)!r} not found") from None
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: {e}") from None
    for key, val in (overrides or {}).items():
        node = raw
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {key!r} does not address an object")
        node[parts[-1]] = val
    return scenario_from_dict(raw)


SCENARIO_DIR = Path(__file__).with_name("scenarios")


def bundled_scenarios() -> list[str]:
    return sorted(p.stem for p in SCENARIO_DIR.glob("*.json"))
