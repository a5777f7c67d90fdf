"""Hamiltonian, ellipticity audits and viscosity-inequality checks on lagged projections.

Path-space derivatives are replaced by derivatives in ``k`` lagged coordinates
``(x(t - o_1 h), ..., x(t - o_k h))``. Drift and diffusion act on the current
coordinate (offset 0) only; lagged coordinates carry no instantaneous dynamics.
With ``delta = 0`` and the single offset 0 this is the classical HJB operator.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .control import ControlProblem
from .core import PathSegment


@dataclass(frozen=True)
class Projection:
    """Sampling offsets (in grid steps back from the anchor) of a ``lag_steps + 1`` window."""

    offsets: tuple = (0,)
    lag_steps: int = 0
    h: float = 0.0

    def __post_init__(self):
        offs = tuple(sorted(int(o) for o in self.offsets))
        if 0 not in offs:
            raise ValueError("projection must include the current state (offset 0)")
        if offs[-1] > self.lag_steps or offs[0] < 0 or len(set(offs)) != len(offs):
            raise ValueError(f"offsets {offs} invalid for lag_steps={self.lag_steps}")
        object.__setattr__(self, "offsets", offs)

    @property
    def k(self) -> int:
        return len(self.offsets)

    def project(self, seg: PathSegment) -> np.ndarray:
        """Coordinates ``(k, n)``; row ``i`` is the value at offset ``offsets[i]``."""
        L = seg.lag_steps
        return np.array([seg.values[L - o] for o in self.offsets])

    def embed(self, coords, anchor: float) -> PathSegment:
        """Piecewise-linear fill between offsets, constant beyond the largest offset."""
        c = np.asarray(coords, dtype=float).reshape(self.k, -1)
        pos = np.arange(self.lag_steps + 1)[::-1]  # offset of each window row
        vals = np.empty((self.lag_steps + 1, c.shape[1]))
        for j in range(c.shape[1]):
            vals[:, j] = np.interp(pos, np.array(self.offsets, float), c[:, j])
        return PathSegment(anchor, vals, self.h)


@dataclass(frozen=True)
class ProjectedState:
    coords: np.ndarray
    projection: Projection

    def segment(self, anchor: float) -> PathSegment:
        return self.projection.embed(self.coords, anchor)

    @property
    def flat(self) -> np.ndarray:
        return np.asarray(self.coords, dtype=float).reshape(-1)


@dataclass(frozen=True)
class TestFunction:
    """Smooth ``phi(t, x)`` on flattened projected coordinates with its derivatives."""

    __test__ = False  # not a pytest class

    phi: Callable[[float, np.ndarray], float]
    dt: Callable[[float, np.ndarray], float]
    grad: Callable[[float, np.ndarray], np.ndarray]
    hess: Callable[[float, np.ndarray], np.ndarray]

    @classmethod
    def from_callable(cls, phi, step: float = 1e-4) -> "TestFunction":
        """Derivatives by central differences; for candidates without closed forms."""
        def dt(t, x):
            return (phi(t + step, x) - phi(t - step, x)) / (2 * step)

        def grad(t, x):
            x = np.asarray(x, float)
            e = np.eye(x.size) * step
            return np.array([(phi(t, x + e[i]) - phi(t, x - e[i])) / (2 * step) for i in range(x.size)])

        def hess(t, x):
            x = np.asarray(x, float)
            k = x.size
            e = np.eye(k) * step
            H = np.empty((k, k))
            for i in range(k):
                for j in range(k):
                    H[i, j] = (phi(t, x + e[i] + e[j]) - phi(t, x + e[i] - e[j])
                               - phi(t, x - e[i] + e[j]) + phi(t, x - e[i] - e[j])) / (4 * step * step)
            return 0.5 * (H + H.T)

        return cls(phi, dt, grad, hess)

    def self_audit(self, points, rel: float = 1e-6, step: float = 1e-4) -> float:
        """Largest relative mismatch between supplied and finite-difference derivatives."""
        fd = TestFunction.from_callable(self.phi, step)
        worst = 0.0
        for t, x in points:
            for a, b in ((self.dt(t, x), fd.dt(t, x)), (self.grad(t, x), fd.grad(t, x)),
                         (self.hess(t, x), fd.hess(t, x))):
                a, b = np.asarray(a, float), np.asarray(b, float)
                worst = max(worst, float(np.max(np.abs(a - b) / (1.0 + np.abs(b)))))
        return worst


def hamiltonian_terms(t: float, seg: PathSegment, r: float, p, A, problem: ControlProblem,
                      u_values, projection: Optional[Projection] = None, g=None) -> np.ndarray:
    """Per-control values ``<p, b> + tr(s s^T A) / 2 + g(t, seg, r, v)`` in projected coordinates."""
    proj = projection or Projection((0,), seg.lag_steps, seg.h)
    gen = problem.gen
    if gen.z_dependent:
        raise ValueError("Hamiltonian requires a z-independent driver")
    n = seg.dim
    dim = proj.k * n
    p = np.asarray(p, dtype=float).reshape(dim)
    A = np.asarray(A, dtype=float).reshape(dim, dim)
    if not np.allclose(A, A.T, rtol=0, atol=1e-12 * (1 + np.abs(A).max())):
        raise ValueError("A must be symmetric")
    gfun = g or gen.g
    w = seg.batch(1)
    d = problem.coeffs.d
    out = []
    for v in np.atleast_2d(np.asarray(u_values, dtype=float)):
        b = problem.coeffs.drift(t, w, v)[0]
        s = problem.coeffs.diffusion(t, w, v)[0]
        # current coordinate is row block 0 (offset 0 sorts first)
        pb = float(p[:n] @ b)
        trace = 0.5 * float(np.sum((s @ s.T) * A[:n, :n]))
        gv = float(gfun(t, w, np.array([r], float), np.zeros((1, d)), v)[0])
        out.append(pb + trace + gv)
    return np.array(out)


def hamiltonian(t: float, seg: PathSegment, r: float, p, A, problem: ControlProblem, u_values,
                projection: Optional[Projection] = None, g=None) -> float:
    """``max_v { <p, b(t, seg, v)> + tr(sigma sigma^T A) / 2 + g(t, seg, r, v) }`` over ``u_values``."""
    return float(np.max(hamiltonian_terms(t, seg, r, p, A, problem, u_values, projection, g)))


@dataclass(frozen=True)
class OrderedPair:
    t: float
    seg: PathSegment
    r: float
    p: np.ndarray
    X: np.ndarray
    Y: np.ndarray


def random_ordered_pairs(rng: np.random.Generator, n_probes: int, dim: int, lag_steps: int = 0,
                         n: int = 1, h: float = 0.0, T: float = 1.0, scale: float = 2.0) -> list:
    """Probe pairs with ``X`` symmetric and ``Y = X + B^T B`` (so ``X <= Y``)."""
    out = []
    for _ in range(n_probes):
        t = float(rng.uniform(0, T))
        seg = PathSegment(t, rng.uniform(-scale, scale, (lag_steps + 1, n)), h)
        M = rng.normal(size=(dim, dim))
        X = 0.5 * (M + M.T)
        B = rng.normal(size=(dim, dim))
        out.append(OrderedPair(t, seg, float(rng.uniform(-scale, scale)), rng.normal(size=dim),
                               X, X + B.T @ B))
    return out


def ellipticity_audit(hamiltonian_like: Callable, probes: Iterable[OrderedPair], tol: float = 1e-10) -> int:
    """Number of probes with ``H(..., X) > H(..., Y) + tol`` although ``X <= Y``."""
    bad = 0
    for pr in probes:
        hx = hamiltonian_like(pr.t, pr.seg, pr.r, pr.p, pr.X)
        hy = hamiltonian_like(pr.t, pr.seg, pr.r, pr.p, pr.Y)
        bad += hx > hy + tol * (1 + abs(hx) + abs(hy))
    return int(bad)


@dataclass
class ViscosityCheck:
    residual: float
    applicable: bool
    passed: bool
    side: str
    reason: str = ""


def _neighborhood(t: float, x: np.ndarray, radius_t: float, radius_x: float, n: int, T: float):
    ts = np.linspace(max(0.0, t - radius_t), min(T, t + radius_t), 2 * n + 1)
    axes = [np.linspace(xi - radius_x, xi + radius_x, 2 * n + 1) for xi in x]
    for tt in ts:
        for pt in itertools.product(*axes):
            yield tt, np.array(pt)


def viscosity_inequality_check(candidate: Callable[[float, np.ndarray], float], phi: TestFunction,
                               t: float, state: ProjectedState, side: str, problem: ControlProblem,
                               u_values, tol: float = 1e-4, radius_t: float = 0.05,
                               radius_x: float = 0.25, n_probe: int = 3, g=None) -> ViscosityCheck:
    """Signed residual ``phi_t + H(t, seg, phi, D phi, D^2 phi)`` at a touching point.

    ``side="sub"`` needs ``phi - u`` minimal at the point over the probe
    neighbourhood and passes when the residual is ``>= -tol``; ``side="super"``
    needs a maximum and passes when ``<= tol``.
    """
    if side not in ("sub", "super"):
        raise ValueError("side must be 'sub' or 'super'")
    x0 = state.flat
    d0 = phi.phi(t, x0) - candidate(t, x0)
    slack = 1e-12 * (1 + abs(d0))
    for tt, xx in _neighborhood(t, x0, radius_t, radius_x, n_probe, problem.T):
        dd = phi.phi(tt, xx) - candidate(tt, xx)
        if (side == "sub" and dd < d0 - slack) or (side == "super" and dd > d0 + slack):
            return ViscosityCheck(math.nan, False, False, side,
                                  f"phi - u not extremal: {dd - d0:+.3g} at t={tt:.4g}, x={xx.tolist()}")
    seg = state.segment(t)
    res = phi.dt(t, x0) + hamiltonian(t, seg, phi.phi(t, x0), phi.grad(t, x0), phi.hess(t, x0),
                                      problem, u_values, state.projection, g)
    ok = res >= -tol if side == "sub" else res <= tol
    return ViscosityCheck(float(res), True, bool(ok), side)


@dataclass
class HamiltonianRow:
    n: int
    h_error: float
    g_error: float
    exceptions: int


def hamiltonian_convergence_audit(problem: ControlProblem, u_values, approx_family: Callable[[int], object],
                                  schedule: Sequence[int], probes: Sequence[tuple],
                                  projection: Optional[Projection] = None) -> list[HamiltonianRow]:
    """Row per ``n``: max ``|H_n - H|``, max ``sup_v |g_n - g|`` and probe-wise breaches of the transfer bound.

    ``probes`` are ``(t, seg, r, p, A)``; ``approx_family(n)`` returns the
    approximating generator spec.
    """
    rows = []
    d = problem.coeffs.d
    U = np.atleast_2d(np.asarray(u_values, dtype=float))
    for n in schedule:
        gn = approx_family(n).g
        h_err = g_err = 0.0
        exc = 0
        for t, seg, r, p, A in probes:
            H = hamiltonian(t, seg, r, p, A, problem, U, projection)
            Hn = hamiltonian(t, seg, r, p, A, problem, U, projection, g=gn)
            w = seg.batch(1)
            y = np.array([r], float)
            z = np.zeros((1, d))
            ge = max(abs(float(gn(t, w, y, z, v)[0] - problem.gen.g(t, w, y, z, v)[0])) for v in U)
            he = abs(Hn - H)
            exc += he > ge + 1e-12 * (1 + abs(H))
            h_err, g_err = max(h_err, he), max(g_err, ge)
        rows.append(HamiltonianRow(n, h_err, g_err, int(exc)))
    return rows
