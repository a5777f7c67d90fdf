"""Cost functional, lattice value function, backward semigroup and the DPP residual."""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .bsde import BsdeSolution, SegmentBasis, solve
from .core import (BudgetError, CoefficientSpec, ControlLattice, GeneratorSpec, PathSegment,
                   TimeGrid, as_control_path, make_grid, sup_norm_distance)
from .rng import substream
from .sdde import PathEnsemble, simulate


@dataclass(frozen=True)
class ControlProblem:
    """State coefficients, recursive cost driver and the time discretization."""

    coeffs: CoefficientSpec
    gen: GeneratorSpec
    T: float
    delta: float
    h: float
    basis: SegmentBasis = SegmentBasis()
    name: str = "problem"
    params: tuple = ()

    def grid(self, t: float, until: Optional[float] = None) -> TimeGrid:
        return make_grid(t, self.T if until is None else until, self.delta, h=self.h)

    @property
    def lag_steps(self) -> int:
        return 0 if self.delta == 0 else round(self.delta / self.h)


@dataclass(frozen=True)
class MCConfig:
    n_paths: int = 1000
    seed: int = 0
    outer_paths: int = 1000
    inner_paths: int = 100
    budget: float = 2e9
    workers: int = 1


def config_hash(*parts) -> str:
    def default(o):
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, PathSegment):
            return dict(anchor=o.anchor, values=o.values.tolist())
        if isinstance(o, ControlLattice):
            return dict(u=o.u_values.tolist(), s=list(o.switch_times))
        if hasattr(o, "__dataclass_fields__"):
            return {k: getattr(o, k) for k in o.__dataclass_fields__
                    if not callable(getattr(o, k))}
        return repr(o)

    blob = json.dumps(parts, sort_keys=True, default=default)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _problem_key(problem: ControlProblem):
    return dict(name=problem.name, params=list(problem.params), T=problem.T,
                delta=problem.delta, h=problem.h, basis=problem.basis.describe())


def _mc_key(mc: MCConfig) -> dict:
    # parallelism never changes results, so it stays out of the hash
    return {k: v for k, v in asdict(mc).items() if k != "workers"}


@dataclass
class CostEstimate:
    value: float
    stderr: float
    solution: Optional[BsdeSolution] = field(default=None, repr=False)


def cost_functional(t: float, seg: PathSegment, control, problem: ControlProblem,
                    mc: MCConfig) -> CostEstimate:
    """``J(t, seg; v)``: simulate forward from ``(t, seg)``, solve backward, average ``Y(t)``."""
    if abs(seg.anchor - t) > 1e-9:
        raise ValueError(f"segment anchored at {seg.anchor}, expected {t}")
    grid = problem.grid(t)
    ens = simulate(problem.coeffs, seg, control, grid, mc.n_paths, mc.seed, mc.workers)
    sol = solve(ens, problem.gen, control, problem.basis)
    return CostEstimate(sol.y0_mean(), sol.y0_stderr(), sol)


@dataclass
class ValueEstimate:
    t: float
    segment: PathSegment
    value: float
    argmax_control: int
    stderr: float
    config_hash: str
    costs: np.ndarray = field(default_factory=lambda: np.empty(0))
    controls: list = field(default_factory=list)

    def record(self) -> dict:
        return dict(t=self.t, value=self.value, argmax=self.argmax_control,
                    argmax_values=list(self.controls[self.argmax_control]) if self.controls else None,
                    stderr=self.stderr, config_hash=self.config_hash)


@dataclass
class LatticeValues:
    """Per-branch lattice maximization: ``costs`` and ``stderr`` are ``(C, G)``."""

    costs: np.ndarray
    stderr: np.ndarray
    combos: list

    @property
    def best(self) -> np.ndarray:
        return self.costs.max(axis=0)

    @property
    def argmax(self) -> np.ndarray:
        # np.argmax returns the first maximizer: lowest lattice index wins ties
        return self.costs.argmax(axis=0)


def lattice_values(t: float, segs: Sequence[PathSegment], problem: ControlProblem,
                   lattice: ControlLattice, n_paths: int, seed: int, workers: int = 1,
                   budget: float = math.inf) -> LatticeValues:
    """Cost of every lattice control from each segment, common random numbers throughout."""
    grid = problem.grid(t)
    n_ctrl = lattice.count(grid)
    work = float(n_ctrl) * n_paths * len(segs) * grid.n_steps
    if work > budget:
        raise BudgetError(f"lattice enumeration of {n_ctrl} controls x {len(segs)} segments x "
                          f"{n_paths} paths x {grid.n_steps} steps = {work:.3g} path-steps exceeds "
                          f"budget {budget:.3g}", work)
    controls = list(lattice.enumerate(grid))

    def run(item):
        _, path = item
        ens = simulate(problem.coeffs, list(segs), path, grid, n_paths, seed)
        sol = solve(ens, problem.gen, path, problem.basis)
        return sol.branch_means(len(segs)), sol.branch_stderr(len(segs))

    if workers > 1 and len(controls) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            res = list(ex.map(run, controls))
    else:
        res = [run(c) for c in controls]
    costs = np.array([r[0] for r in res])
    se = np.array([r[1] for r in res])
    return LatticeValues(costs, se, [c for c, _ in controls])


def value_function(t: float, seg: PathSegment, problem: ControlProblem, lattice: ControlLattice,
                   mc: MCConfig) -> ValueEstimate:
    """Max of the cost functional over all enumerated lattice controls (ties: lowest index)."""
    lv = lattice_values(t, [seg], problem, lattice, mc.n_paths, mc.seed, mc.workers, mc.budget)
    k = int(lv.argmax[0])
    combos = [tuple(lattice.u_values[i].tolist() for i in c) for c in lv.combos]
    return ValueEstimate(t, seg, float(lv.best[0]), k, float(lv.stderr[k, 0]),
                         config_hash(_problem_key(problem), t, seg, lattice, _mc_key(mc)),
                         lv.costs[:, 0], combos)


def backward_semigroup(t: float, theta: float, s: float, seg: PathSegment, control,
                       problem: ControlProblem, xi, mc: Optional[MCConfig] = None,
                       ens: Optional[PathEnsemble] = None) -> np.ndarray:
    """Per-path ``G_{theta,s}[xi]``: the BSDE on ``[theta, s]`` with terminal data ``xi``.

    ``xi`` is a ``(P,)`` array on the forward ensemble, or a callable
    ``xi(ens, step) -> (P,)``. The forward ensemble starts at ``(t, seg)``; pass
    ``ens`` to reuse one.
    """
    if not t <= theta <= s <= problem.T + 1e-12:
        raise ValueError(f"need t <= theta <= s <= T, got {t}, {theta}, {s}")
    if ens is None:
        mc = mc or MCConfig()
        ens = simulate(problem.coeffs, seg, control, problem.grid(t), mc.n_paths, mc.seed, mc.workers)
    grid = ens.grid
    j_theta, j_s = grid.step_of(theta), grid.step_of(s)
    data = xi(ens, j_s) if callable(xi) else xi
    data = np.broadcast_to(np.asarray(data, dtype=float), (ens.n_paths,))
    if not np.all(np.isfinite(data)):
        raise ValueError("terminal data xi must be finite")
    if j_theta == j_s:
        return data.copy()
    sol = solve(ens, problem.gen, control, problem.basis, terminal=data,
                start_step=j_theta, end_step=j_s)
    return sol.Y[:, 0]


@dataclass
class DppResult:
    residual: float
    lhs: float
    rhs: float
    lhs_stderr: float
    rhs_stderr: float
    budget: float
    lhs_argmax: int
    rhs_argmax: int
    n_inner_segments: int = 0

    def record(self) -> dict:
        return asdict(self)


def dpp_cost_estimate(t: float, tau: float, problem: ControlProblem, lattice: ControlLattice,
                      mc: MCConfig) -> float:
    """Worst-case path-steps of one DPP residual evaluation (no inner deduplication)."""
    lat = lattice.with_switch(t + tau) if tau > 0 else lattice
    full = problem.grid(t)
    lhs = lat.count(full) * mc.n_paths * full.n_steps
    if tau == 0:
        return float(lhs)
    outer = problem.grid(t, t + tau)
    n_pre = lat.count(outer)
    if t + tau >= problem.T - 1e-12:
        return float(lhs + n_pre * mc.outer_paths * outer.n_steps)
    inner = problem.grid(t + tau)
    return float(lhs + n_pre * (mc.outer_paths * outer.n_steps
                                + mc.outer_paths * lat.count(inner) * mc.inner_paths * inner.n_steps))


def dpp_residual(t: float, seg: PathSegment, tau: float, problem: ControlProblem,
                 lattice: ControlLattice, mc: MCConfig) -> DppResult:
    """``|u(t, seg) - max_v mean G_{t,t+tau}[u(t+tau, X_{t+tau})]|`` by nested Monte Carlo.

    ``t + tau`` is added to the lattice switch times on both sides, so the
    lattice control class splits exactly at ``t + tau``. The inner value is a
    fresh lattice maximization from every distinct realized segment with
    ``mc.inner_paths`` paths on an independent stream.
    """
    if tau < 0 or t + tau > problem.T + 1e-12:
        raise ValueError(f"need 0 <= tau <= T - t, got tau={tau}")
    if tau > 0:
        problem.grid(t).step_of(t + tau)
    est = dpp_cost_estimate(t, tau, problem, lattice, mc)
    if est > mc.budget:
        raise BudgetError(f"DPP evaluation needs ~{est:.3g} path-steps, budget {mc.budget:.3g}", est)
    lat = lattice.with_switch(t + tau) if tau > 0 else lattice
    lhs = value_function(t, seg, problem, lat, mc)
    if tau == 0:
        return DppResult(0.0, lhs.value, lhs.value, lhs.stderr, lhs.stderr, est,
                         lhs.argmax_control, lhs.argmax_control)
    outer_grid = problem.grid(t, t + tau)
    at_end = t + tau >= problem.T - 1e-12
    inner_seed = substream(mc.seed, 1)
    best, best_se, best_k, n_inner = -math.inf, 0.0, 0, 0
    for k, (_, path) in enumerate(lat.enumerate(outer_grid)):
        ens = simulate(problem.coeffs, seg, path, outer_grid, mc.outer_paths, mc.seed, mc.workers)
        last = ens.windows(outer_grid.n_nodes - 1)
        if at_end:
            xi = problem.gen.terminal(last)
        else:
            flat = np.ascontiguousarray(last).reshape(last.shape[0], -1)
            uniq, inv = np.unique(flat, axis=0, return_inverse=True)
            segs = [PathSegment(t + tau, u.reshape(last.shape[1:]), problem.h) for u in uniq]
            n_inner = max(n_inner, len(segs))
            lv = lattice_values(t + tau, segs, problem, lat, mc.inner_paths, inner_seed, mc.workers)
            xi = lv.best[np.asarray(inv).reshape(-1)]
        sol = solve(ens, problem.gen, path, problem.basis, terminal=xi)
        val = sol.y0_mean()
        if val > best:
            best, best_se, best_k = val, sol.y0_stderr(), k
    return DppResult(abs(lhs.value - best), lhs.value, best, lhs.stderr, best_se, est,
                     lhs.argmax_control, best_k, n_inner)


@dataclass
class RegularityReport:
    lipschitz_ratio: float
    growth_ratio: float
    skipped: int
    values: list


def value_regularity_probe(t: float, pairs, problem: ControlProblem, lattice: ControlLattice,
                           mc: MCConfig) -> RegularityReport:
    """Max ``|u(g) - u(g')| / ||g - g'||`` and max ``|u(g)| / (1 + ||g||)`` over segment pairs."""
    segs: list[PathSegment] = []
    for a, b in pairs:
        if a.anchor != t or b.anchor != t:
            raise ValueError("probe pairs must be anchored at t")
        segs.extend([a, b])
    lv = lattice_values(t, segs, problem, lattice, mc.n_paths, mc.seed, mc.workers, mc.budget)
    u = lv.best
    lip, grow, skipped = 0.0, 0.0, 0
    for i, (a, b) in enumerate(pairs):
        ua, ub = u[2 * i], u[2 * i + 1]
        grow = max(grow, abs(ua) / (1 + a.sup_norm()), abs(ub) / (1 + b.sup_norm()))
        dist = sup_norm_distance(a, b)
        if dist == 0:
            skipped += 1
            continue
        lip = max(lip, abs(ua - ub) / dist)
    return RegularityReport(lip, grow, skipped, u.tolist())
