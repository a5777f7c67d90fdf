"""Shared domain types: time grids, path segments, coefficient/generator specs,
control lattices and the segment sup-norm.

Batched callables
-----------------
Coefficients and generators are evaluated on a batch of paths at a single time:
``windows`` has shape ``(P, L + 1, n)`` where ``L = lag_steps`` and the last
sample ``windows[:, -1]`` is the current state, the first ``windows[:, 0]`` the
lagged state ``x(t - delta)``. Controls are a single ``(m,)`` vector shared by
the whole batch. All callables must act path-wise (no reductions across the
batch axis), which is what makes chunked and serial evaluation agree bit for bit.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional, Sequence

import numpy as np


class GridError(ValueError):
    """Time grid parameters are inconsistent."""


class BudgetError(RuntimeError):
    """A requested enumeration or nested simulation exceeds its declared budget."""

    def __init__(self, message: str, estimate: float):
        super().__init__(message)
        self.estimate = estimate


_EXACT = 1e-9


def _as_count(x: float, what: str) -> int:
    k = round(x)
    if abs(x - k) > _EXACT * max(1.0, abs(x)):
        raise GridError(f"{what} = {x!r} is not an integer (remainder {x - math.floor(x):.6g})")
    return int(k)


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid on ``[t0 - delta, T]`` with step ``h`` dividing ``delta``.

    Node ``k`` (``0 <= k <= lag_steps + n_steps``) sits at ``t0 + (k - lag_steps) * h``;
    the solver step ``j`` runs from node ``lag_steps + j`` to ``lag_steps + j + 1``.
    """

    t0: float
    T: float
    delta: float
    h: float
    n_steps: int
    lag_steps: int

    @property
    def n_nodes(self) -> int:
        return self.lag_steps + self.n_steps + 1

    def node_time(self, k: int) -> float:
        return self.t0 + (k - self.lag_steps) * self.h

    @property
    def nodes(self) -> np.ndarray:
        k = np.arange(self.n_nodes)
        return self.t0 + (k - self.lag_steps) * self.h

    def step_time(self, j: int) -> float:
        """Left endpoint of solver step ``j`` (``t0 + j h``)."""
        return self.t0 + j * self.h

    def step_of(self, t: float) -> int:
        """Solver step index of time ``t`` in ``[t0, T]``; ``t`` must be a grid node."""
        j = _as_count((t - self.t0) / self.h, f"(t - t0)/h for t={t}")
        if not 0 <= j <= self.n_steps:
            raise GridError(f"time {t} outside [{self.t0}, {self.T}]")
        return j

    def shifted(self, t0: float) -> "TimeGrid":
        """Same step and delay, started at a later node ``t0``."""
        return make_grid(t0, self.T, self.delta, lag_steps=self.lag_steps, h=self.h)


def make_grid(t0: float, T: float, delta: float, lag_steps: Optional[int] = None,
              h: Optional[float] = None) -> TimeGrid:
    """Build a :class:`TimeGrid`.

    With ``delta > 0`` either ``lag_steps`` (then ``h = delta / lag_steps``) or ``h``
    (then ``delta / h`` must be integral) is required. With ``delta == 0`` only ``h``
    is meaningful and ``lag_steps`` is 0.
    """
    if not T > t0:
        raise GridError(f"need T > t0, got t0={t0}, T={T}")
    if delta < 0:
        raise GridError(f"delay must be nonnegative, got {delta}")
    if delta == 0:
        if h is None or h <= 0:
            raise GridError("delta = 0 requires a positive step h")
        if lag_steps not in (None, 0):
            raise GridError("delta = 0 forces lag_steps = 0")
        lag = 0
    elif lag_steps is not None and h is not None:
        lag = int(lag_steps)
        if lag < 1 or abs(delta / lag - h) > _EXACT * h:
            raise GridError(f"h={h} inconsistent with delta/lag_steps={delta}/{lag_steps}")
    elif lag_steps is not None:
        lag = int(lag_steps)
        if lag < 1:
            raise GridError("delta > 0 requires lag_steps >= 1")
        h = delta / lag
    elif h is not None:
        if h <= 0:
            raise GridError("h must be positive")
        lag = _as_count(delta / h, "delta/h")
        if lag < 1:
            raise GridError("h larger than the delay")
    else:
        raise GridError("give lag_steps or h")
    n = (T - t0) / h
    n_steps = round(n)
    if n_steps < 1 or abs(n - n_steps) > _EXACT * max(1.0, n):
        raise GridError(
            f"horizon T - t0 = {T - t0} is not a multiple of h = {h} "
            f"(ratio {n:.9g}, remainder {(T - t0) - math.floor(n) * h:.6g})")
    return TimeGrid(float(t0), float(T), float(delta), float(h), int(n_steps), int(lag))


@dataclass(frozen=True, eq=False)
class PathSegment:
    """Node samples of a path on ``[anchor - delta, anchor]``; ``values`` is ``(L + 1, n)``."""

    anchor: float
    values: np.ndarray
    h: float = 0.0

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or v.shape[0] < 1:
            raise ValueError(f"segment values must be (L+1, n), got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("segment values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def lag_steps(self) -> int:
        return self.values.shape[0] - 1

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def current(self) -> np.ndarray:
        return self.values[-1]

    @property
    def lagged(self) -> np.ndarray:
        return self.values[0]

    def sup_norm(self) -> float:
        return float(np.max(_row_norms(self.values)))

    def batch(self, n_paths: int = 1) -> np.ndarray:
        """Broadcast to a ``(n_paths, L + 1, n)`` window batch."""
        return np.broadcast_to(self.values, (n_paths,) + self.values.shape)

    @classmethod
    def constant(cls, anchor: float, value, lag_steps: int, h: float = 0.0) -> "PathSegment":
        v = np.atleast_1d(np.asarray(value, dtype=float))
        return cls(anchor, np.tile(v, (lag_steps + 1, 1)), h)

    @classmethod
    def on_grid(cls, grid: TimeGrid, fn: Callable[[np.ndarray], np.ndarray]) -> "PathSegment":
        """Sample ``fn`` at the history nodes ``t0 - delta, ..., t0`` of ``grid``."""
        ts = grid.nodes[: grid.lag_steps + 1]
        vals = np.asarray([np.atleast_1d(fn(t)) for t in ts], dtype=float)
        return cls(grid.t0, vals, grid.h)


def _row_norms(x: np.ndarray) -> np.ndarray:
    """Euclidean norm along the last axis, scaled so tiny or huge entries neither underflow nor overflow."""
    x = np.asarray(x, dtype=float)
    m = np.max(np.abs(x), axis=-1, keepdims=True)
    safe = np.where(m > 0, m, 1.0)
    return m[..., 0] * np.sqrt(np.sum((x / safe) ** 2, axis=-1))


def sup_norm_distance(a: PathSegment, b: PathSegment) -> float:
    """Node-wise sup distance; different anchors are compared with index clamping."""
    if a.lag_steps != b.lag_steps or a.dim != b.dim:
        raise ValueError(
            f"segments differ in shape: {a.values.shape} vs {b.values.shape}")
    if a.anchor == b.anchor:
        return float(np.max(_row_norms(a.values - b.values)))
    h = a.h or b.h
    if h <= 0:
        raise ValueError("cross-anchor distance needs the grid step h")
    m = _as_count((b.anchor - a.anchor) / h, "anchor offset / h")
    L = a.lag_steps
    j = np.arange(min(0, m), L + max(0, m) + 1)
    ia = np.clip(j, 0, L)
    ib = np.clip(j - m, 0, L)
    return float(np.max(_row_norms(a.values[ia] - b.values[ib])))


DriftFn = Callable[[float, np.ndarray, np.ndarray], np.ndarray]
GenFn = Callable[[float, np.ndarray, np.ndarray, np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class CoefficientSpec:
    """Drift ``b(t, windows, v) -> (P, n)`` and diffusion ``sigma(t, windows, v) -> (P, n, d)``."""

    drift: DriftFn
    diffusion: DriftFn
    lipschitz_L: float
    n: int = 1
    d: int = 1
    m: int = 1
    name: str = "custom"


@dataclass(frozen=True)
class GeneratorSpec:
    """Driver ``g(t, windows, y, z, v) -> (P,)`` and terminal ``Phi(windows) -> (P,)``.

    ``y_domain`` is the closed interval on which ``g`` may be evaluated without
    clamping; the implicit solver keeps its brackets inside it. ``dg_dy`` is an
    optional analytic y-derivative used by Newton.
    """

    g: GenFn
    terminal: Callable[[np.ndarray], np.ndarray]
    lipschitz_Ltilde: float
    monotone_mu: float
    growth_M: float
    growth_p: float = 1.0
    z_dependent: bool = False
    dg_dy: Optional[GenFn] = None
    y_domain: tuple = (-math.inf, math.inf)
    smooth_in_y: bool = False
    name: str = "custom"

    def __post_init__(self):
        if self.growth_p < 1:
            raise ValueError("growth exponent p must be >= 1")
        if self.growth_M < 0 or self.lipschitz_Ltilde < 0:
            raise ValueError("growth_M and lipschitz_Ltilde must be nonnegative")

    def with_terminal(self, terminal, name: Optional[str] = None) -> "GeneratorSpec":
        from dataclasses import replace
        return replace(self, terminal=terminal, name=name or self.name)


@dataclass(frozen=True)
class ControlLattice:
    """Finite control values ``u_values`` (``K x m``) and switch times.

    A lattice control is constant on each interval between consecutive switch
    times (the last interval ends at the horizon). Enumeration order is
    lexicographic in the value indices, first interval most significant.
    """

    u_values: np.ndarray
    switch_times: tuple = (0.0,)
    box_lo: Optional[np.ndarray] = None
    box_hi: Optional[np.ndarray] = None

    def __post_init__(self):
        u = np.array(self.u_values, dtype=float)
        if u.ndim == 1:
            u = u[:, None]
        if u.size == 0:
            raise ValueError("control lattice must be nonempty")
        lo = u.min(axis=0) if self.box_lo is None else np.atleast_1d(np.asarray(self.box_lo, float))
        hi = u.max(axis=0) if self.box_hi is None else np.atleast_1d(np.asarray(self.box_hi, float))
        if np.any(u < lo - 1e-12) or np.any(u > hi + 1e-12):
            raise ValueError("lattice values leave the declared control box")
        u.setflags(write=False)
        object.__setattr__(self, "u_values", u)
        object.__setattr__(self, "box_lo", lo)
        object.__setattr__(self, "box_hi", hi)
        object.__setattr__(self, "switch_times", tuple(sorted(float(s) for s in self.switch_times)))

    @property
    def m(self) -> int:
        return self.u_values.shape[1]

    def with_switch(self, t: float) -> "ControlLattice":
        if any(abs(t - s) < 1e-12 for s in self.switch_times):
            return self
        return ControlLattice(self.u_values, self.switch_times + (t,), self.box_lo, self.box_hi)

    def intervals(self, grid: TimeGrid) -> list[tuple[int, int]]:
        """Step ranges ``[j0, j1)`` on ``grid`` where the control is constant."""
        cuts = {0, grid.n_steps}
        for s in self.switch_times:
            if grid.t0 < s < grid.T:
                cuts.add(grid.step_of(s))
        c = sorted(cuts)
        return list(zip(c[:-1], c[1:]))

    def count(self, grid: TimeGrid) -> int:
        return len(self.u_values) ** len(self.intervals(grid))

    def enumerate(self, grid: TimeGrid) -> Iterator[tuple[tuple[int, ...], np.ndarray]]:
        """Yield ``(value indices, control path (n_steps, m))`` in lattice order."""
        ivs = self.intervals(grid)
        for combo in itertools.product(range(len(self.u_values)), repeat=len(ivs)):
            path = np.empty((grid.n_steps, self.m))
            for (j0, j1), i in zip(ivs, combo):
                path[j0:j1] = self.u_values[i]
            yield combo, path


def constant_control(grid: TimeGrid, v) -> np.ndarray:
    v = np.atleast_1d(np.asarray(v, dtype=float))
    return np.tile(v, (grid.n_steps, 1))


def as_control_path(grid: TimeGrid, control, offset: int = 0) -> np.ndarray:
    """Normalize a control (constant vector or per-step array) to ``(n_steps, m)``.

    ``offset`` drops the first steps of a longer path, so a control built for a
    grid started earlier can be reused on a shifted grid.
    """
    c = np.asarray(control, dtype=float)
    if c.ndim <= 1:
        return constant_control(grid, c)
    c = c[offset:]
    if c.shape[0] != grid.n_steps:
        raise ValueError(f"control has {c.shape[0]} steps, grid needs {grid.n_steps}")
    return c


# ---------------------------------------------------------------------------
# sample audits of declared regularity constants

@dataclass
class AuditReport:
    name: str
    n_draws: int
    violations: int
    worst: float
    bound: float

    @property
    def ok(self) -> bool:
        return self.violations == 0


def random_windows(rng: np.random.Generator, n_draws: int, lag_steps: int, n: int,
                   scale: float = 2.0) -> np.ndarray:
    return rng.uniform(-scale, scale, size=(n_draws, lag_steps + 1, n))


def _seg_dist(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.max(_row_norms(a - b), axis=1)


def audit_coefficients(coeffs: CoefficientSpec, lattice: ControlLattice, lag_steps: int,
                       rng: np.random.Generator, n_draws: int = 1000, t: float = 0.0,
                       slack: float = 1e-9, scale: float = 2.0) -> AuditReport:
    """Spot-check ``|b - b'| + |sigma - sigma'| <= L (||g - g'|| + |v - v'|)``."""
    w1 = random_windows(rng, n_draws, lag_steps, coeffs.n, scale)
    w2 = random_windows(rng, n_draws, lag_steps, coeffs.n, scale)
    i1 = rng.integers(len(lattice.u_values), size=n_draws)
    i2 = rng.integers(len(lattice.u_values), size=n_draws)
    worst, bad = 0.0, 0
    for k in range(n_draws):
        v1, v2 = lattice.u_values[i1[k]], lattice.u_values[i2[k]]
        a, b = w1[k:k + 1], w2[k:k + 1]
        lhs = (np.linalg.norm(coeffs.drift(t, a, v1) - coeffs.drift(t, b, v2))
               + np.linalg.norm(coeffs.diffusion(t, a, v1) - coeffs.diffusion(t, b, v2)))
        rhs = coeffs.lipschitz_L * (_seg_dist(a, b)[0] + np.linalg.norm(v1 - v2))
        worst = max(worst, lhs - rhs)
        bad += lhs > rhs + slack
    return AuditReport(coeffs.name + ":lipschitz", n_draws, int(bad), worst, coeffs.lipschitz_L)


def audit_generator(gen: GeneratorSpec, lattice: ControlLattice, lag_steps: int, n: int, d: int,
                    rng: np.random.Generator, n_draws: int = 1000, y_box: float = 3.0,
                    t: float = 0.0, slack: float = 1e-9) -> list[AuditReport]:
    """Sample-check monotonicity (mu), growth (M, p) and z-independence of ``gen``.

    y probes are drawn from ``y_box`` intersected with ``gen.y_domain``.
    """
    lo = max(-y_box, gen.y_domain[0])
    hi = min(y_box, gen.y_domain[1])
    w = random_windows(rng, n_draws, lag_steps, n)
    y1 = rng.uniform(lo, hi, n_draws)
    y2 = rng.uniform(lo, hi, n_draws)
    z = rng.normal(size=(n_draws, d))
    z2 = rng.normal(size=(n_draws, d))
    vi = rng.integers(len(lattice.u_values), size=n_draws)
    mono_bad = grow_bad = z_bad = 0
    mono_worst = grow_worst = z_worst = -math.inf
    y0 = min(max(0.0, gen.y_domain[0]), gen.y_domain[1])
    for k in range(n_draws):
        v = lattice.u_values[vi[k]]
        wk = w[k:k + 1]
        g1 = gen.g(t, wk, y1[k:k + 1], z[k:k + 1], v)[0]
        g2 = gen.g(t, wk, y2[k:k + 1], z[k:k + 1], v)[0]
        dy = y1[k] - y2[k]
        m_ex = dy * (g1 - g2) - gen.monotone_mu * dy * dy
        mono_worst = max(mono_worst, m_ex)
        mono_bad += m_ex > slack * (1 + abs(g1) + abs(g2))
        g0 = gen.g(t, wk, np.array([y0]), z[k:k + 1], v)[0]
        gr_ex = abs(g1 - g0) - gen.growth_M * (1 + abs(y1[k]) ** gen.growth_p)
        grow_worst = max(grow_worst, gr_ex)
        grow_bad += gr_ex > slack
        if not gen.z_dependent:
            gz = gen.g(t, wk, y1[k:k + 1], z2[k:k + 1], v)[0]
            z_worst = max(z_worst, abs(gz - g1))
            z_bad += gz != g1
    return [
        AuditReport(gen.name + ":monotone", n_draws, mono_bad, mono_worst, gen.monotone_mu),
        AuditReport(gen.name + ":growth", n_draws, grow_bad, grow_worst, gen.growth_M),
        AuditReport(gen.name + ":z-free", n_draws if not gen.z_dependent else 0, z_bad,
                    max(z_worst, 0.0), 0.0),
    ]
