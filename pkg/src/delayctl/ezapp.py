"""Delayed Ramsey capital dynamics under Epstein-Zin stochastic differential utility.

Aggregator, with ``w = (1 - r) u`` and ``q = 1 - 1/psi``::

    g(u, c) = vartheta / q * w * [ (c / w^(1/(1-r)))^q - 1 ]
            = vartheta / q * ( c^q * w^e - w ),        e = 1 - q / (1 - r)

It is defined for ``w > 0`` only; evaluations below ``eps_dom`` are clamped and
counted.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .bsde import SegmentBasis, solve
from .control import ControlProblem, MCConfig, ValueEstimate, value_function
from .core import ControlLattice, CoefficientSpec, GeneratorSpec, PathSegment
from .hjb import Projection, TestFunction, hamiltonian
from .sdde import simulate

EPS_DOM = 1e-8


class EzDomainError(ValueError):
    pass


@dataclass(frozen=True)
class EzParams:
    """Rate of time preference ``vartheta``, EIS ``psi``, relative risk aversion ``r``."""

    vartheta: float
    psi: float
    r: float

    def __post_init__(self):
        if self.vartheta <= 0 or self.psi <= 0 or self.r <= 0:
            raise ValueError("vartheta, psi and r must be positive")
        if self.psi == 1 or self.r == 1:
            raise ValueError("psi = 1 and r = 1 are excluded")

    @property
    def regime(self) -> str:
        if self.r > 1 and self.psi > 1:
            return "i"
        if self.r < 1 and self.psi < 1:
            return "ii"
        return "other"

    @property
    def q(self) -> float:
        return 1.0 - 1.0 / self.psi

    @property
    def e(self) -> float:
        return 1.0 - self.q / (1.0 - self.r)

    @property
    def scale(self) -> float:
        return self.vartheta / self.q

    def y_domain(self, eps: float = EPS_DOM) -> tuple:
        """Utilities with ``(1 - r) u >= eps``."""
        b = eps / (1.0 - self.r)
        return (b, math.inf) if self.r < 1 else (-math.inf, b)

    def mu_bound(self) -> float:
        """One-sided Lipschitz constant in ``u``; ``inf`` when the aggregator is not monotone."""
        base = -(1.0 - self.r) * self.scale
        return base if (1.0 - self.r) * self.scale * self.e <= 0 else math.inf


class DomainGuard:
    """Thread-safe count of clamped aggregator evaluations."""

    def __init__(self):
        self._lock = threading.Lock()
        self.count = 0

    def add(self, k: int):
        with self._lock:
            self.count += k


def ez_generator(params: EzParams, u, c, eps_dom: float = EPS_DOM, clamp: bool = True,
                 guard: Optional[DomainGuard] = None) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    c = np.asarray(c, dtype=float)
    w = (1.0 - params.r) * u
    low = w < eps_dom
    if np.any(low):
        if not clamp:
            i = int(np.argmax(np.ravel(low)))
            raise EzDomainError(f"(1 - r) u = {np.ravel(w)[i]!r} below {eps_dom} (u={np.ravel(u)[i]!r})")
        if guard is not None:
            guard.add(int(np.count_nonzero(low)))
        w = np.maximum(w, eps_dom)
    if np.any(c < 0) or (params.q < 0 and np.any(c == 0)):
        raise EzDomainError("consumption must be positive (nonnegative when 1 - 1/psi > 0)")
    return params.scale * (c ** params.q * w ** params.e - w)


def ez_dg_du(params: EzParams, u, c, eps_dom: float = EPS_DOM) -> np.ndarray:
    w = np.maximum((1.0 - params.r) * np.asarray(u, dtype=float), eps_dom)
    c = np.asarray(c, dtype=float)
    return (1.0 - params.r) * params.scale * (params.e * c ** params.q * w ** (params.e - 1.0) - 1.0)


@dataclass
class RegimeAudit:
    mu_hat: float
    mu_declared: float
    violations: int
    n_pairs: int
    regime: str


def monotonicity_regime_audit(params: EzParams, u_box: tuple, c_box: tuple, n_u: int = 200,
                              n_c: int = 20) -> RegimeAudit:
    """Best empirical ``mu`` and breaches of the declared bound on a ``(u, c)`` lattice."""
    us = np.linspace(u_box[0], u_box[1], n_u)
    cs = np.linspace(c_box[0], c_box[1], n_c)
    if np.any((1 - params.r) * us <= 0):
        raise ValueError("probe box leaves the aggregator domain")
    mu_decl = params.mu_bound()
    mu_hat = -math.inf
    bad = 0
    i, j = np.triu_indices(n_u, 1)
    for c in cs:
        g = ez_generator(params, us, c, clamp=False)
        du = us[i] - us[j]
        ratio = (g[i] - g[j]) / du
        mu_hat = max(mu_hat, float(ratio.max()))
        bad += int(np.count_nonzero(ratio > mu_decl + 1e-9 * (1 + abs(mu_decl))))
    return RegimeAudit(mu_hat, mu_decl, bad, len(cs) * len(i), params.regime)


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


@dataclass(frozen=True)
class RamseyModel:
    """``dX = [K pi f(X_t) - c] dt + sigma(X_t) dW`` with terminal utility ``h(X_T)``.

    Callables take window batches ``(P, L + 1, 1)`` and return ``(P,)``.
    Controls ``(pi, c)`` live in ``[a1, a2] x [b1, b2]``.
    """

    K: float
    f: Callable
    sigma: Callable
    h_terminal: Callable
    a1: float
    a2: float
    b1: float
    b2: float
    lipschitz_L: float
    h_lipschitz: float
    name: str = "ramsey"

    @classmethod
    def demo(cls, regime: str = "i", K: float = 0.3, F_max: float = 2.0, sigma0: float = 0.2,
             a=(0.0, 1.0), b=(0.1, 1.0)) -> "RamseyModel":
        """Lagged production ``f = clip(x(t - delta), 0, F_max)``, bounded volatility, tanh utility."""
        if regime not in ("i", "ii"):
            raise ValueError("demo regime must be 'i' or 'ii'")
        base = -1.5 if regime == "i" else 1.0

        def f(w):
            return np.clip(w[:, 0, 0], 0.0, F_max)

        def sigma(w):
            return sigma0 * _sigmoid(w[:, -1, 0])

        def h_terminal(w):
            return base + 0.5 * np.tanh(w[:, -1, 0])

        amax = max(abs(a[0]), abs(a[1]))
        L = K * amax + K * F_max + 1.0 + sigma0 / 4.0
        return cls(K, f, sigma, h_terminal, a[0], a[1], b[0], b[1], L, 0.5, f"ramsey-{regime}")

    def coefficients(self) -> CoefficientSpec:
        K, f, sig = self.K, self.f, self.sigma

        def drift(t, w, v):
            return (K * v[0] * f(w) - v[1])[:, None]

        def diffusion(t, w, v):
            return sig(w)[:, None, None]

        return CoefficientSpec(drift, diffusion, self.lipschitz_L, 1, 1, 2, self.name)

    def generator(self, params: EzParams, guard: Optional[DomainGuard] = None,
                  eps_dom: float = EPS_DOM) -> GeneratorSpec:
        def g(t, w, y, z, v):
            return ez_generator(params, y, v[1], eps_dom, True, guard)

        def dg(t, w, y, z, v):
            return ez_dg_du(params, y, v[1], eps_dom)

        cmax = max(self.b1, self.b2) if params.q > 0 else min(self.b1, self.b2)
        p = max(1.0, params.e)
        M = abs(params.scale) * (cmax ** params.q * abs(1 - params.r) ** params.e + abs(1 - params.r))
        mu = params.mu_bound()
        return GeneratorSpec(g, self.h_terminal, self.h_lipschitz,
                             mu if math.isfinite(mu) else 1e300, M, p,
                             z_dependent=False, dg_dy=dg, y_domain=params.y_domain(eps_dom),
                             name=f"ez(r={params.r:g},psi={params.psi:g})")

    def problem(self, params: EzParams, T: float, delta: float, h: float,
                guard: Optional[DomainGuard] = None) -> ControlProblem:
        return ControlProblem(self.coefficients(), self.generator(params, guard), T, delta, h,
                              SegmentBasis(2), self.name,
                              (("K", self.K), ("vartheta", params.vartheta), ("psi", params.psi),
                               ("r", params.r)))

    def lattice(self, pis, cs, switch_times=(0.0,)) -> ControlLattice:
        pis = np.atleast_1d(np.asarray(pis, float))
        cs = np.atleast_1d(np.asarray(cs, float))
        u = np.array([(p, c) for p in pis for c in cs])
        return ControlLattice(u, tuple(switch_times), np.array([self.a1, self.b1]),
                              np.array([self.a2, self.b2]))


@dataclass
class EzResult:
    value: ValueEstimate
    policy: list
    clamps: int
    sign_constant: bool
    regime: str

    def record(self) -> dict:
        rec = self.value.record()
        rec.update(policy=self.policy, domain_clamps=self.clamps, sign_constant=self.sign_constant,
                   regime=self.regime)
        return rec


def solve_ez(model: RamseyModel, params: EzParams, lattice: ControlLattice, init: PathSegment,
             T: float, delta: float, h: float, mc: MCConfig, clean: bool = True,
             allow_other_regime: bool = False) -> EzResult:
    """Maximize ``V(0)`` over the lattice; reports the per-interval policy and clamp statistics."""
    if params.regime == "other" and not allow_other_regime:
        raise ValueError(f"parameters r={params.r}, psi={params.psi} are outside regimes i/ii")
    if params.regime == "ii" and min(lattice.u_values[:, 1]) <= 0:
        raise ValueError("regime ii needs strictly positive consumption (b1 > 0)")
    guard = DomainGuard()
    problem = model.problem(params, T, delta, h, guard)
    ve = value_function(init.anchor, init, problem, lattice, mc)
    grid = problem.grid(init.anchor)
    ivs = lattice.intervals(grid)
    combo = list(lattice.enumerate(grid))[ve.argmax_control]
    policy = [dict(start=grid.step_time(j0), end=grid.step_time(j1),
                   pi=float(lattice.u_values[i][0]), c=float(lattice.u_values[i][1]))
              for (j0, j1), i in zip(ivs, combo[0])]
    ens = simulate(problem.coeffs, init, combo[1], grid, mc.n_paths, mc.seed, mc.workers)
    sol = solve(ens, problem.gen, combo[1], problem.basis)
    sign_constant = bool(np.all((1 - params.r) * sol.Y > 0))
    if clean and guard.count:
        raise EzDomainError(f"{guard.count} aggregator evaluations were clamped in a clean run")
    return EzResult(ve, policy, guard.count, sign_constant, params.regime)


def ez_hjb_residual(model: RamseyModel, params: EzParams, candidate: TestFunction, points,
                    u_values, T: float, projection: Projection) -> list[dict]:
    """HJB residual ``phi_t + H`` of a candidate at projected grid points ``(t, coords)``.

    At ``t = T`` the row also carries ``terminal_gap = phi(T, x) - h(embed(x))``.
    """
    problem = model.problem(params, T, projection.h * projection.lag_steps, projection.h or 1.0)
    rows = []
    for t, coords in points:
        x = np.asarray(coords, float).reshape(-1)
        seg = projection.embed(x, t)
        u = candidate.phi(t, x)
        res = candidate.dt(t, x) + hamiltonian(t, seg, u, candidate.grad(t, x), candidate.hess(t, x),
                                               problem, u_values, projection)
        row = dict(t=float(t), x=x.tolist(), value=float(u), residual=float(res))
        if abs(t - T) < 1e-12:
            row["terminal_gap"] = float(u - model.h_terminal(seg.batch(1))[0])
        rows.append(row)
    return rows
