"""Acceptance criteria as runnable checks; ``repro-all`` and ``tests/test_acceptance.py`` call these.

Each check returns a :class:`Criterion` whose ``measured`` block is fully
deterministic for a given seed (no timings), so summaries can be compared
byte for byte. Runtime limits are reported as booleans.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Callable

import numpy as np

from . import oracles
from .bsde import comparison_check, solve
from .control import ControlProblem, MCConfig, backward_semigroup, dpp_residual, value_function, value_regularity_probe
from .core import ControlLattice, PathSegment, make_grid
from .ezapp import (EzParams, RamseyModel, ez_generator, monotonicity_regime_audit, solve_ez)
from .hjb import (Projection, ProjectedState, TestFunction, ellipticity_audit, hamiltonian,
                  hamiltonian_convergence_audit, random_ordered_pairs, viscosity_inequality_check)
from .models import (bundled_scenarios, coeff_linear_delay, coeff_state_vol, coeff_steering, coeff_zero,
                     gen_abs, gen_cubic, gen_cubic_linear, gen_linear, gen_linear_state, gen_linear_z,
                     load_scenario, term_constant, term_tanh)
from .mollify import ProbeBox, mollify, sup_error, uniform_convergence_audit
from .rng import substream
from .sdde import simulate


@dataclass
class Criterion:
    id: int
    name: str
    passed: bool
    tolerance: str
    measured: dict = field(default_factory=dict)

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.id:>2} {self.name} (tol {self.tolerance})"


def _r(x, digits: int = 12):
    """Round for stable, readable summaries."""
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    x = float(x)
    if not math.isfinite(x):
        return repr(x)
    return float(f"{x:.{digits}g}")


def _seed(seed: int, k: int) -> int:
    return substream(seed, 1000 + k)


# ---------------------------------------------------------------------------

def criterion_1(seed: int = 42, workers: int = 1) -> Criterion:
    out, ok = {}, True
    for mu in (-1.0, 0.5):
        t0 = time.perf_counter()
        grid = make_grid(0.0, 1.0, 0.1, h=1e-3)
        init = PathSegment.constant(0.0, 0.3, grid.lag_steps, grid.h)
        ens = simulate(coeff_linear_delay(a=-0.2, b=0.5, c=1.0, sigma=0.0), init, [1.0], grid, 16,
                       _seed(seed, 1), workers)
        sol = solve(ens, gen_linear(term_constant(1.0), mu=mu), [1.0])
        err = float(np.max(np.abs(sol.Y[:, 0] - math.exp(mu))))
        fast = time.perf_counter() - t0 < 10
        ok &= err <= 5e-3 and fast
        out[f"mu={mu:g}"] = dict(abs_error=_r(err, 6), under_10s=fast)
    return Criterion(1, "BSDE linear oracle", ok, "5e-3, <10 s", out)


def criterion_2(seed: int = 42, workers: int = 1) -> Criterion:
    grid = make_grid(0.0, 1.0, 0.0, h=1e-3)
    init = PathSegment.constant(0.0, 0.0, 0)
    ens = simulate(coeff_zero(), init, [0.0], grid, 1, _seed(seed, 2))
    y_imp = solve(ens, gen_cubic(term_constant(2.0)), [0.0]).Y[0, 0]
    ref = oracles.backward_ode(lambda t, y: -y ** 3, 2.0, 1.0)
    rel = abs(y_imp - ref) / abs(ref)
    # negative controls: the explicit variant on a coarse step and on a steep terminal value
    coarse = make_grid(0.0, 1.0, 0.0, h=0.5)
    ens_c = simulate(coeff_zero(), init, [0.0], coarse, 1, 0)
    y_exp_c = solve(ens_c, gen_cubic(term_constant(2.0)), [0.0], scheme="explicit").Y[0]
    y_imp_c = solve(ens_c, gen_cubic(term_constant(2.0)), [0.0]).Y[0, 0]
    with np.errstate(over="ignore", invalid="ignore"):
        try:
            y_exp_steep = solve(ens, gen_cubic(term_constant(50.0)), [0.0], scheme="explicit").Y[0, 0]
        except FloatingPointError:
            y_exp_steep = math.nan
    y_imp_steep = solve(ens, gen_cubic(term_constant(50.0)), [0.0]).Y[0, 0]
    ref_steep = oracles.cubic_decay_value(50.0, 1.0)
    oscillates = bool(np.all(np.sign(y_exp_c[:-1]) != np.sign(y_exp_c[1:])))
    steep_unstable = not (math.isfinite(y_exp_steep) and abs(y_exp_steep - ref_steep) < 0.1 * ref_steep)
    steep_implicit_rel = abs(y_imp_steep - ref_steep) / ref_steep
    ok = rel <= 1e-3 and oscillates and steep_unstable
    return Criterion(2, "Non-Lipschitz monotone driver", ok, "1e-3 rel + unstable explicit control", dict(
        implicit_y0=_r(y_imp), oracle_y0=_r(ref), rel_error=_r(rel, 6),
        explicit_h0_5_path=[_r(v, 6) for v in y_exp_c], explicit_oscillates=oscillates,
        implicit_h0_5_y0=_r(y_imp_c, 6),
        steep_terminal_50=dict(explicit=_r(y_exp_steep, 6), implicit=_r(y_imp_steep, 8),
                               oracle=_r(ref_steep, 8), implicit_rel_error=_r(steep_implicit_rel, 6),
                               explicit_unstable=steep_unstable)))


def comparison_pairs():
    """Five driver/terminal pairs with ``g1 <= g2`` and ``Phi1 <= Phi2``."""
    tanh = term_tanh()
    shifted = term_tanh(shift=0.3)
    return [
        ("linear+source", gen_linear(tanh, mu=-0.5), gen_linear(tanh, mu=-0.5, c=0.5)),
        ("cubic+source", gen_cubic(tanh), gen_cubic(tanh, c=0.2)),
        ("terminal-shift", gen_linear_state(tanh, mu=-0.5, k=0.2), gen_linear_state(shifted, mu=-0.5, k=0.2)),
        ("control-cost", gen_linear_state(tanh, mu=-0.5, k=0.2, lam=0.5),
         gen_linear_state(tanh, mu=-0.5, k=0.2, lam=0.1)),
        ("z-driver+source", gen_linear_z(tanh, mu=-0.5, beta=0.3), gen_linear_z(tanh, mu=-0.5, beta=0.3, c=0.1)),
    ]


def criterion_3(seed: int = 42, workers: int = 1, n_paths: int = 10_000, h: float = 1e-2,
                c_cmp: float = 1.0) -> Criterion:
    grid = make_grid(0.0, 1.0, 0.1, h=h)
    init = PathSegment.constant(0.0, 0.2, grid.lag_steps, grid.h)
    coeffs = coeff_linear_delay(a=-0.5, b=0.5, c=1.0, sigma=0.3)
    ens = simulate(coeffs, init, [0.5], grid, n_paths, _seed(seed, 3), workers)
    out, ok = {}, True
    for name, g1, g2 in comparison_pairs():
        s1 = solve(ens, g1, [0.5])
        s2 = solve(ens, g2, [0.5])
        rep = comparison_check(s1, s2, g1, g2, ens, [0.5], slack=c_cmp * h)
        ok &= rep.passed(1e-3)
        out[name] = dict(applicable=rep.applicable, violation_fraction=_r(rep.violation_fraction, 6),
                         max_excess=_r(rep.max_excess, 6))
    same = comparison_check(s1, s1, g1, g1, ens, [0.5])
    out["identical"] = dict(violations=same.n_violations)
    ok &= same.n_violations == 0
    return Criterion(3, "Comparison theorem", ok, "violation fraction <= 1e-3 beyond C*h", out)


def abs_probe_box(lag_steps: int = 0, n_y: int = 2001) -> ProbeBox:
    w = np.zeros((1, lag_steps + 1, 1))
    return ProbeBox((0.0,), w, np.linspace(-1.0, 1.0, n_y), np.zeros((1, 1)))


def mollifier_table(schedule=(5, 10, 20, 40), gen=None, box=None) -> list[dict]:
    gen = gen or gen_abs(term_constant(0.0))
    box = box or abs_probe_box()
    rows = []
    for n in schedule:
        err, where = sup_error(gen, mollify(gen, n), box)
        rows.append(dict(n=n, sup_error=err, bound=1.0 / n, kink_oracle=oracles.kink_error(n),
                         worst_y=where["y"]))
    return rows


def criterion_4(seed: int = 42, workers: int = 1) -> Criterion:
    rows = mollifier_table()
    ok = all(r["sup_error"] <= 1.0 / r["n"] + 1e-8 for r in rows)
    audit = uniform_convergence_audit(gen_abs(term_constant(0.0)), lambda n: mollify(gen_abs(term_constant(0.0)), n),
                                      abs_probe_box(), 0.05, [5, 10, 20, 40])
    return Criterion(4, "Mollifier convergence", ok, "1/n + 1e-8", dict(
        table=[dict(n=r["n"], sup_error=_r(r["sup_error"], 10), kink_oracle=_r(r["kink_oracle"], 10))
               for r in rows], audit_n_at_eps_0_05=audit.n))


def hamiltonian_probes(rng, n_probes: int, lag_steps: int, h: float, k: int, y_box=(-1.0, 1.0)):
    out = []
    for _ in range(n_probes):
        t = float(rng.uniform(0, 1))
        seg = PathSegment(t, rng.uniform(-2, 2, (lag_steps + 1, 1)), h)
        M = rng.normal(size=(k, k))
        out.append((t, seg, float(rng.uniform(*y_box)), rng.normal(size=k), 0.5 * (M + M.T)))
    return out


def _abs_problem(delta=0.2, h=0.1):
    return ControlProblem(coeff_state_vol(a=0.5, sigma=0.4), gen_abs(term_constant(0.0)), 1.0, delta, h)


def criterion_5(seed: int = 42, workers: int = 1, schedule=(5, 10, 20, 40)) -> Criterion:
    problem = _abs_problem()
    L = problem.lag_steps
    proj = Projection((0, L), L, problem.h)
    rng = np.random.default_rng(_seed(seed, 5))
    probes = hamiltonian_probes(rng, 200, L, problem.h, proj.k)
    U = np.array([[-1.0], [0.0], [1.0]])
    rows = hamiltonian_convergence_audit(problem, U, lambda n: mollify(problem.gen, n), schedule, probes, proj)
    single = hamiltonian_convergence_audit(problem, U[1:2], lambda n: mollify(problem.gen, n), schedule,
                                           probes[:50], proj)
    exc = sum(r.exceptions for r in rows)
    return Criterion(5, "Hamiltonian transfer", exc == 0, "zero exceptions", dict(
        table=[dict(n=r.n, h_error=_r(r.h_error, 10), g_error=_r(r.g_error, 10), exceptions=r.exceptions)
               for r in rows],
        singleton_gap=_r(max(abs(r.h_error - r.g_error) for r in single), 6)))


def scenario_projection(sc) -> Projection:
    L = sc.problem.lag_steps
    offs = (0, L) if L and sc.extra.get("projection", {}).get("offsets") == "lag" else (0,)
    return Projection(offs, L, sc.problem.h)


def _scenario_hamiltonian(sc, negate: bool = False):
    proj = scenario_projection(sc)
    U = sc.lattice.u_values

    def H(t, seg, r, p, A):
        A = -A if negate else A
        return hamiltonian(t, seg, r, p, A, sc.problem, U, proj)

    return H, proj


def _r_box(sc):
    lo, hi = sc.problem.gen.y_domain
    if math.isfinite(lo):
        return (lo + 0.1, lo + 2.0)
    if math.isfinite(hi):
        return (hi - 2.0, hi - 0.1)
    return (-2.0, 2.0)


def ordered_probes(sc, rng, n_probes: int):
    H, proj = _scenario_hamiltonian(sc)
    L = sc.problem.lag_steps
    pairs = random_ordered_pairs(rng, n_probes, proj.k * sc.problem.coeffs.n, L, sc.problem.coeffs.n,
                                 sc.problem.h, sc.problem.T)
    lo, hi = _r_box(sc)
    rs = rng.uniform(lo, hi, n_probes)
    return [replace(p, r=float(r)) for p, r in zip(pairs, rs)]


def criterion_6(seed: int = 42, workers: int = 1, n_probes: int = 1000) -> Criterion:
    out, ok = {}, True
    for i, name in enumerate(bundled_scenarios()):
        sc = load_scenario(name)
        if sc.problem.gen.z_dependent:
            continue
        rng = np.random.default_rng(_seed(seed, 60 + i))
        probes = ordered_probes(sc, rng, n_probes)
        H, _ = _scenario_hamiltonian(sc)
        v = ellipticity_audit(lambda t, s, r, p, X: H(t, s, r, p, X), probes)
        out[name] = v
        ok &= v == 0
    sc = load_scenario("state_vol")
    Hn, _ = _scenario_hamiltonian(sc, negate=True)
    neg = ellipticity_audit(Hn, ordered_probes(sc, np.random.default_rng(_seed(seed, 69)), n_probes))
    out["negated_trace_fixture"] = neg
    ok &= neg > 0
    return Criterion(6, "Ellipticity", ok, "0 violations; fixture > 0", out)


def refined_scenario(level: int, base):
    """Level ``l``: step ``h / 2^l``, ``2^l`` times the paths, scalar control values refined ``l`` times by midpoints."""
    raw = json.loads(json.dumps(base.raw))
    raw["grid"]["h"] = raw["grid"]["h"] / 2 ** level
    u = np.asarray(base.lattice.u_values)
    if u.shape[1] == 1:
        vals = np.unique(u[:, 0])
        for _ in range(level):
            vals = np.sort(np.concatenate([vals, 0.5 * (vals[1:] + vals[:-1])]))
        raw.setdefault("lattice", {})["u_values"] = [[float(x)] for x in vals]
    mc = raw.setdefault("mc", {})
    for k in ("n_paths", "outer_paths", "inner_paths"):
        mc[k] = int(mc.get(k, getattr(MCConfig(), k)) * 2 ** level)
    return load_scenario(raw)


def dpp_refinement(seed: int, workers: int = 1, levels: int = 3, name: str = "quadratic_steering"):
    base = load_scenario(name)
    rows = []
    for lvl in range(levels):
        sc = refined_scenario(lvl, base)
        mc = replace(sc.mc, seed=seed, workers=workers)
        tau = sc.extra.get("dpp", {}).get("tau", 0.5)
        res = dpp_residual(sc.t0, sc.init, tau, sc.problem, sc.lattice, mc)
        rows.append(dict(level=lvl, h=sc.problem.h, controls=len(sc.lattice.u_values),
                         residual=res.residual, stderr=math.hypot(res.lhs_stderr, res.rhs_stderr),
                         lhs=res.lhs, rhs=res.rhs))
    return rows


def criterion_7(seed: int = 42, workers: int = 1) -> Criterion:
    t_start = time.perf_counter()
    sc = load_scenario("quadratic_steering")
    mc = replace(sc.mc, seed=_seed(seed, 7), workers=workers)
    tau = sc.extra["dpp"]["tau"]
    res = dpp_residual(sc.t0, sc.init, tau, sc.problem, sc.lattice, mc)
    zero = dpp_residual(sc.t0, sc.init, 0.0, sc.problem, sc.lattice, mc)
    rows = dpp_refinement(_seed(seed, 7), workers)
    mono = all(b["residual"] <= a["residual"] + 2 * (a["stderr"] + b["stderr"]) + 1e-12
               for a, b in zip(rows, rows[1:]))
    fast = time.perf_counter() - t_start < 120
    ok = res.residual <= 1e-2 and zero.residual == 0.0 and mono and fast
    return Criterion(7, "DPP residual", ok, "1e-2; tau=0 exact; monotone; <2 min", dict(
        residual=_r(res.residual), lhs=_r(res.lhs), rhs=_r(res.rhs), oracle=oracles.steering_value(-1.0, 1.0),
        tau0_residual=zero.residual, budget=_r(res.budget),
        refinement=[dict(level=r["level"], h=_r(r["h"]), controls=r["controls"], residual=_r(r["residual"]),
                         stderr=_r(r["stderr"])) for r in rows],
        monotone=mono, under_2min=fast))


def criterion_8(seed: int = 42, workers: int = 1, n_configs: int = 10, tol: float = 1e-12) -> Criterion:
    rng = np.random.default_rng(_seed(seed, 8))
    gens = [lambda tm: gen_linear(tm, mu=-0.7), lambda tm: gen_cubic(tm),
            lambda tm: gen_linear_state(tm, mu=0.3, k=0.5), lambda tm: gen_cubic_linear(tm)]
    worst, worst_full = 0.0, 0.0
    for i in range(n_configs):
        delta = float(rng.choice([0.0, 0.1, 0.2]))
        h = 0.05
        coeffs = coeff_linear_delay(a=float(rng.uniform(-1, 0.5)), b=float(rng.uniform(-0.5, 0.5)),
                                    c=1.0, sigma=float(rng.uniform(0.1, 0.5)))
        gen = gens[i % len(gens)](term_tanh())
        problem = ControlProblem(coeffs, gen, 1.0, delta, h)
        L = problem.lag_steps
        init = PathSegment.constant(0.0, float(rng.uniform(-1, 1)), L, h)
        grid = problem.grid(0.0)
        ens = simulate(coeffs, init, [0.3], grid, 500, _seed(seed, 80 + i), workers)
        js = sorted(rng.choice(np.arange(1, grid.n_steps + 1), size=2, replace=False))
        theta, s = grid.step_time(int(js[0])), grid.step_time(int(js[1]))
        xi = np.tanh(ens.step_windows(int(js[1]))[:, -1, 0])
        inner = backward_semigroup(0.0, theta, s, init, [0.3], problem, xi, ens=ens)
        nested = backward_semigroup(0.0, 0.0, theta, init, [0.3], problem, inner, ens=ens)
        direct = backward_semigroup(0.0, 0.0, s, init, [0.3], problem, xi, ens=ens)
        worst = max(worst, float(np.max(np.abs(nested - direct) / (1 + np.abs(direct)))))
        full = solve(ens, gen, [0.3], problem.basis)
        ys = full.Y[:, int(js[1])]
        again = backward_semigroup(0.0, 0.0, s, init, [0.3], problem, ys, ens=ens)
        worst_full = max(worst_full, float(np.max(np.abs(again - full.Y[:, 0]) / (1 + np.abs(full.Y[:, 0])))))
    ok = worst <= 10 * tol and worst_full <= 10 * tol
    return Criterion(8, "Semigroup flow", ok, "10 x 1e-12", dict(
        max_rel_gap_nested=_r(worst, 6), max_rel_gap_restart=_r(worst_full, 6), configs=n_configs))


def regularity_pairs(t0: float, lag_steps: int, h: float):
    pairs = []
    ts = t0 + (np.arange(lag_steps + 1) - lag_steps) * h
    for c in (-1.0, 0.0, 0.5, 1.0):
        pairs.append((PathSegment.constant(t0, c, lag_steps, h), PathSegment.constant(t0, c + 0.25, lag_steps, h)))
    for slope in (-1.0, 2.0):
        a = PathSegment(t0, 0.2 + slope * (ts - t0), h)
        b = PathSegment(t0, 0.2 + slope * (ts - t0) + 0.1 * np.cos(5 * ts), h)
        pairs.append((a, b))
    return pairs


def criterion_9(seed: int = 42, workers: int = 1, levels=(0.1, 0.05, 0.025)) -> Criterion:
    base = load_scenario("delayed_linear")
    lips, grows = [], []
    for h in levels:
        sc = load_scenario(json.loads(json.dumps(base.raw)) | {"grid": dict(base.raw["grid"], h=h)})
        pairs = regularity_pairs(sc.t0, sc.problem.lag_steps, h)
        rep = value_regularity_probe(sc.t0, pairs, sc.problem, sc.lattice,
                                     replace(sc.mc, seed=_seed(seed, 9), workers=workers))
        lips.append(rep.lipschitz_ratio)
        grows.append(rep.growth_ratio)
    spread = lambda xs: (max(xs) - min(xs)) / min(xs)
    ok = spread(lips) <= 0.2 and spread(grows) <= 0.2 and all(math.isfinite(x) for x in lips + grows)
    return Criterion(9, "Value regularity", ok, "ratios within 20% across 3 levels", dict(
        h=list(levels), lipschitz=[_r(x, 6) for x in lips], growth=[_r(x, 6) for x in grows],
        lipschitz_spread=_r(spread(lips), 4), growth_spread=_r(spread(grows), 4)))


def heat_problem(T: float = 1.0):
    coeffs = coeff_steering(sigma=1.0)
    zero = lambda t, w, v: np.zeros((w.shape[0], 1))
    coeffs = replace(coeffs, drift=zero, name="heat")
    from .models import gen_zero
    return ControlProblem(coeffs, gen_zero(term_constant(0.0)), T, 0.0, 0.01)


def heat_test_function(k: float, T: float, source: float = 0.0) -> TestFunction:
    u, ut, ux, uxx = oracles.heat_solution(k, T)
    return TestFunction(lambda t, x: u(t, x[0]) - source * (T - t),
                        lambda t, x: ut(t, x[0]) + source,
                        lambda t, x: np.array([ux(t, x[0])]),
                        lambda t, x: np.array([[uxx(t, x[0])]]))


def criterion_10(seed: int = 42, workers: int = 1, k: float = 0.7, source: float = 0.3) -> Criterion:
    T = 1.0
    problem = heat_problem(T)
    proj = Projection((0,), 0, problem.h)
    U = np.zeros((1, 1))
    pts = [(t, x) for t in (0.2, 0.5, 0.8) for x in (-0.5, 0.0, 0.5)]
    clean, viol, fd = [], [], []
    phi = heat_test_function(k, T)
    bad = heat_test_function(k, T, source)
    fd_phi = TestFunction.from_callable(bad.phi, 1e-3)
    for t, x in pts:
        st = ProjectedState(np.array([x]), proj)
        for side in ("sub", "super"):
            c = viscosity_inequality_check(phi.phi, phi, t, st, side, problem, U, tol=1e-6)
            clean.append(c.residual if c.applicable else math.inf)
        v = viscosity_inequality_check(bad.phi, bad, t, st, "sub", problem, U)
        viol.append(v.residual)
        f = viscosity_inequality_check(bad.phi, fd_phi, t, st, "sub", problem, U)
        fd.append(f.residual)
    clean_max = float(np.max(np.abs(clean)))
    viol_gap = float(np.max(np.abs(np.array(viol) - source)))
    fd_gap = float(np.max(np.abs(np.array(fd) - source)))
    ok = clean_max <= 1e-6 and viol_gap <= 1e-4
    return Criterion(10, "Viscosity fixture", ok, "1e-6 clean; source to 1e-4", dict(
        clean_max_abs_residual=_r(clean_max, 6), violation_source=source,
        violation_max_gap=_r(viol_gap, 6), finite_difference_max_gap=_r(fd_gap, 6), points=len(pts)))


def crra_reduction_error(seed: int, n: int = 10_000) -> float:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n // 100):
        r = float(rng.choice([rng.uniform(0.2, 0.9), rng.uniform(1.1, 4.0)]))
        p = EzParams(float(rng.uniform(0.01, 1.0)), 1.0 / r, r)
        mag = rng.uniform(0.1, 3.0, 100)
        u = mag if r < 1 else -mag
        c = rng.uniform(0.1, 2.0, 100)
        g = ez_generator(p, u, c, clamp=False)
        ref = p.vartheta * (c ** (1 - r) / (1 - r) - u)
        worst = max(worst, float(np.max(np.abs(g - ref) / (1 + np.abs(ref)))))
    return worst


def ez_ode_check(params: EzParams, c: float = 0.5, x0: float = 1.0, T: float = 1.0, h: float = 0.01,
                 regime: str = "i"):
    """Zero volatility, ``pi = 0``: ``X_T = x0 - c T`` and ``V`` solves a scalar ODE."""
    model = replace(RamseyModel.demo(regime, sigma0=0.0), name=f"ramsey-{regime}-det")
    lattice = model.lattice([0.0], [c])
    grid = make_grid(0.0, T, 0.2, h=h)
    init = PathSegment.constant(0.0, x0, grid.lag_steps, h)
    res = solve_ez(model, params, lattice, init, T, 0.2, h, MCConfig(n_paths=4, seed=0))
    terminal = float(model.h_terminal(PathSegment.constant(T, x0 - c * T, grid.lag_steps, h).batch(1))[0])
    ref = oracles.backward_ode(lambda t, v: oracles.ez_direct(params.vartheta, params.psi, params.r, v, c),
                               terminal, T)
    return res.value.value, ref


def ez_demo_run(params: EzParams, regime: str, seed: int, workers: int = 1, n_paths: int = 2000):
    """Clean demo run plus the lattice-monotonicity comparison ``{0.5}`` vs ``{0.3, 0.5, 0.8}``."""
    model = RamseyModel.demo(regime)
    grid = make_grid(0.0, 1.0, 0.2, h=0.05)
    init = PathSegment.constant(0.0, 1.0, grid.lag_steps, grid.h)
    mc = MCConfig(n_paths=n_paths, seed=seed, workers=workers)
    small = solve_ez(model, params, model.lattice([0.0, 1.0], [0.5], (0.0, 0.5)), init, 1.0, 0.2, 0.05, mc)
    big = solve_ez(model, params, model.lattice([0.0, 1.0], [0.3, 0.5, 0.8], (0.0, 0.5)), init, 1.0, 0.2,
                   0.05, mc)
    return small, big


def criterion_11(seed: int = 42, workers: int = 1) -> Criterion:
    crra = crra_reduction_error(_seed(seed, 110))
    a_ok = crra <= 1e-12
    aud_i = monotonicity_regime_audit(EzParams(0.1, 2.0, 2.0), (-2.0, -0.1), (0.1, 1.0))
    aud_ii = monotonicity_regime_audit(EzParams(0.1, 0.5, 0.5), (0.1, 2.0), (0.5, 1.0))
    aud_mix = monotonicity_regime_audit(EzParams(0.1, 0.5, 2.0), (-2.0, -0.1), (0.1, 1.0))
    b_ok = aud_i.violations == 0 and aud_ii.violations == 0
    v_i, ref_i = ez_ode_check(EzParams(0.1, 2.0, 2.0), regime="i")
    v_ii, ref_ii = ez_ode_check(EzParams(0.1, 0.5, 0.5), regime="ii")
    rel_i, rel_ii = abs(v_i - ref_i) / abs(ref_i), abs(v_ii - ref_ii) / abs(ref_ii)
    c_ok = rel_i <= 1e-3 and rel_ii <= 1e-3
    demo = {}
    d_ok = True
    for regime, p in (("i", EzParams(0.1, 2.0, 2.0)), ("ii", EzParams(0.1, 0.5, 0.5))):
        small, big = ez_demo_run(p, regime, _seed(seed, 111), workers)
        mono = big.value.value >= small.value.value
        clean = big.clamps == 0 and small.clamps == 0 and big.sign_constant
        d_ok &= mono and clean
        demo[regime] = dict(V_small=_r(small.value.value, 10), V_big=_r(big.value.value, 10), monotone=mono,
                            clamps=big.clamps + small.clamps, sign_constant=big.sign_constant)
    return Criterion(11, "Epstein-Zin", a_ok and b_ok and c_ok and d_ok, "1e-12 / 0 / 1e-3 rel / clean", dict(
        a_crra_max_rel=_r(crra, 4),
        b_violations=dict(i=aud_i.violations, ii=aud_ii.violations, mixed_info=aud_mix.violations),
        b_mu_hat=dict(i=_r(aud_i.mu_hat, 8), ii=_r(aud_ii.mu_hat, 8), mixed=_r(aud_mix.mu_hat, 8)),
        c_ode=dict(i=[_r(v_i, 10), _r(ref_i, 10), _r(rel_i, 4)], ii=[_r(v_ii, 10), _r(ref_ii, 10), _r(rel_ii, 4)]),
        d_demo=demo))


def determinism_probe(seed: int, workers: int) -> str:
    """Serialized results of a parallel-sensitive workload (chunked paths, threaded lattice)."""
    sc = load_scenario("delayed_linear")
    mc = replace(sc.mc, n_paths=5000, seed=seed, workers=workers)
    v = value_function(sc.t0, sc.init, sc.problem, sc.lattice, mc)
    ns = load_scenario("noisy_steering")
    d = dpp_residual(ns.t0, ns.init, 0.5, ns.problem, ns.lattice,
                     replace(ns.mc, seed=seed, workers=workers, outer_paths=50, inner_paths=50))
    return json.dumps(dict(value=v.record(), costs=[repr(float(c)) for c in v.costs],
                           dpp=d.record()), sort_keys=True, default=repr)


def criterion_12(seed: int = 42, workers: int = 1) -> Criterion:
    a = determinism_probe(_seed(seed, 12), 1)
    b = determinism_probe(_seed(seed, 12), 1)
    c = determinism_probe(_seed(seed, 12), 4)
    ok = a == b == c
    return Criterion(12, "Determinism", ok, "byte-identical", dict(
        repeat_identical=a == b, workers_1_vs_4_identical=a == c))


CRITERIA: dict[int, Callable[..., Criterion]] = {
    1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5, 6: criterion_6,
    7: criterion_7, 8: criterion_8, 9: criterion_9, 10: criterion_10, 11: criterion_11, 12: criterion_12,
}


def run_all(seed: int = 42, workers: int = 1, only=None) -> list[Criterion]:
    ids = sorted(CRITERIA) if not only else sorted(only)
    return [CRITERIA[i](seed, workers) for i in ids]
