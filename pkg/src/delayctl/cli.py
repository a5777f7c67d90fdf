"""Command-line entry point: ``delayctl <subcommand> [options]``.

Exit codes: 0 ok, 2 usage/config error, 3 numerical failure (or failed
acceptance criteria), 4 budget gate. Outputs are assembled in memory and
written only after the run succeeds, so a failing run leaves no partial files.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import struct
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import acceptance, oracles
from .bsde import NewtonError, RegressionError, solve
from .control import config_hash, dpp_residual, value_function
from .core import BudgetError, GridError, PathSegment, as_control_path, make_grid
from .ezapp import EzDomainError, EzParams, RamseyModel, ez_hjb_residual, monotonicity_regime_audit, solve_ez
from .hjb import (Projection, ProjectedState, TestFunction, ellipticity_audit, hamiltonian_convergence_audit,
                  viscosity_inequality_check)
from .models import ConfigError, bundled_scenarios, load_scenario
from .mollify import mollify
from .sdde import SimulationError, simulate

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_BUDGET = 0, 2, 3, 4

PATH_MAGIC = b"DCPATHS1"
# magic, version, header bytes, n_paths, n_nodes, n, seed, config hash, t0, h, delta
PATH_HEADER = struct.Struct("<8sIIQQQQ16sddd")


class UsageError(Exception):
    pass


def _num(x):
    if isinstance(x, (np.floating, float)):
        return repr(float(x))
    return x


def csv_bytes(header, rows, chash: str, seed: int) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(header) + ["config_hash", "seed"])
    for r in rows:
        w.writerow([_num(x) for x in r] + [chash, seed])
    return buf.getvalue().encode()


def _clean(o):
    if isinstance(o, dict):
        return {str(k): _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    if isinstance(o, np.ndarray):
        return _clean(o.tolist())
    if isinstance(o, (np.bool_,)):
        return bool(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (float, np.floating)):
        f = float(o)
        return f if math.isfinite(f) else repr(f)
    return o


def json_bytes(record: dict, chash: str, seed: int) -> bytes:
    rec = dict(_clean(record), config_hash=chash, seed=seed)
    return (json.dumps(rec, indent=2, sort_keys=True) + "\n").encode()


def path_dump_bytes(states: np.ndarray, seed: int, chash: str, t0: float, h: float, delta: float) -> bytes:
    """Little-endian header then ``states`` as row-major float64 ``(path, node, component)``."""
    P, N, n = states.shape
    head = PATH_HEADER.pack(PATH_MAGIC, 1, PATH_HEADER.size, P, N, n, seed & 0xFFFFFFFFFFFFFFFF,
                            chash.encode()[:16].ljust(16, b"0"), t0, h, delta)
    return head + np.ascontiguousarray(states, dtype="<f8").tobytes()


def read_path_dump(data: bytes):
    magic, ver, hb, P, N, n, seed, chash, t0, h, delta = PATH_HEADER.unpack_from(data)
    if magic != PATH_MAGIC:
        raise ValueError("not a path dump")
    arr = np.frombuffer(data, dtype="<f8", offset=hb).reshape(P, N, n)
    return dict(version=ver, seed=seed, config_hash=chash.decode(), t0=t0, h=h, delta=delta), arr


def _write_all(out: Path, files: dict):
    out.mkdir(parents=True, exist_ok=True)
    for name, data in files.items():
        target = out / name
        tmp = target.with_name(target.name + ".tmp")
        tmp.write_bytes(data)
        tmp.replace(target)


def _parse_sets(items) -> dict:
    out = {}
    for it in items or ():
        if "=" not in it:
            raise UsageError(f"--set expects KEY=VALUE, got {it!r}")
        k, v = it.split("=", 1)
        try:
            out[k] = json.loads(v)
        except json.JSONDecodeError:
            out[k] = v
    return out


def _scenario(args, default: str):
    over = _parse_sets(getattr(args, "set", None))
    if args.seed is not None:
        over["mc.seed"] = args.seed
    if args.workers is not None:
        over["mc.workers"] = args.workers
    return load_scenario(args.config or default, over)


def _control_from(args, sc):
    grid = sc.problem.grid(sc.t0)
    if not getattr(args, "control", None):
        return next(iter(sc.lattice.enumerate(grid)))[1], dict(lattice_index=0)
    try:
        spec = json.loads(Path(args.control).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"control file: {e}") from None
    if "lattice_index" in spec:
        k = int(spec["lattice_index"])
        ctrls = list(sc.lattice.enumerate(grid))
        if not 0 <= k < len(ctrls):
            raise ConfigError(f"lattice_index {k} outside [0, {len(ctrls) - 1}]")
        return ctrls[k][1], spec
    if "constant" in spec:
        return as_control_path(grid, spec["constant"]), spec
    if "steps" in spec:
        try:
            return as_control_path(grid, np.asarray(spec["steps"], float)), spec
        except ValueError as e:
            raise ConfigError(str(e)) from None
    raise ConfigError("control file needs 'lattice_index', 'constant' or 'steps'")


# ---------------------------------------------------------------------------
# subcommands: each returns {filename: bytes}

def cmd_simulate(args):
    sc = _scenario(args, "gbm")
    ctrl, _ = _control_from(args, sc)
    grid = sc.problem.grid(sc.t0)
    ens = simulate(sc.problem.coeffs, sc.init, ctrl, grid, sc.mc.n_paths, sc.mc.seed, sc.mc.workers)
    n = ens.states.shape[2]
    mean = ens.states.mean(axis=0)
    var = ens.states.var(axis=0, ddof=1) if ens.n_paths > 1 else np.zeros_like(mean)
    header = ["node", "t"] + [f"mean_{i}" for i in range(n)] + [f"var_{i}" for i in range(n)]
    rows = [[k, grid.node_time(k)] + list(mean[k]) + list(var[k]) for k in range(grid.n_nodes)]
    files = {"simulate.csv": csv_bytes(header, rows, sc.hash, sc.mc.seed)}
    if args.dump:
        files["paths.bin"] = path_dump_bytes(ens.states, sc.mc.seed, sc.hash, grid.t0, grid.h, grid.delta)
    return files


def cmd_solve_bsde(args):
    sc = _scenario(args, "delayed_linear")
    ctrl, cspec = _control_from(args, sc)
    grid = sc.problem.grid(sc.t0)
    ens = simulate(sc.problem.coeffs, sc.init, ctrl, grid, sc.mc.n_paths, sc.mc.seed, sc.mc.workers)
    sol = solve(ens, sc.problem.gen, ctrl, sc.problem.basis, scheme=args.scheme)
    L = grid.lag_steps
    rows = []
    for jj in range(sol.Y.shape[1]):
        y = sol.Y[:, jj]
        rows.append([L + jj, sol.times[jj], y.mean(), y.std(ddof=1) if len(y) > 1 else 0.0,
                     np.linalg.norm(sol.Z[:, jj], axis=1).mean()])
    chash = config_hash(sc.raw, cspec, args.scheme)
    diag = dict(scenario=sc.name, y0=sol.y0_mean(), y0_stderr=sol.y0_stderr(), scheme=sol.scheme,
                condition_numbers=sol.regression_condition_numbers, max_condition_number=float(
                    sol.regression_condition_numbers.max(initial=1.0)), newton=sol.newton, control=cspec)
    return {"bsde.csv": csv_bytes(["node", "t", "mean_Y", "std_Y", "mean_abs_Z"], rows, chash, sc.mc.seed),
            "bsde.json": json_bytes(diag, chash, sc.mc.seed)}


def cmd_mollify_audit(args):
    schedule = [int(x) for x in args.schedule.split(",")]
    if args.config:
        sc = _scenario(args, "")
        gen, seed, chash = sc.problem.gen, sc.mc.seed, config_hash(sc.raw, schedule, args.eps)
        box = acceptance.abs_probe_box(sc.problem.lag_steps)
        box = replace(box, windows=sc.init.batch(1).copy(), v_values=sc.lattice.u_values)
        rows_raw = acceptance.mollifier_table(schedule, gen, box)
    else:
        seed = args.seed or 0
        chash = config_hash("abs", schedule, args.eps)
        rows_raw = acceptance.mollifier_table(schedule)
    rows = [[r["n"], r["sup_error"], r["bound"], r["kink_oracle"], r["worst_y"]] for r in rows_raw]
    first = next((r["n"] for r in rows_raw if r["sup_error"] <= args.eps), None)
    summary = dict(schedule=schedule, eps=args.eps, n_at_eps=first,
                   within_bound=all(r["sup_error"] <= r["bound"] + 1e-8 for r in rows_raw))
    return {"mollify.csv": csv_bytes(["n", "sup_error", "bound_1_over_n", "kink_oracle", "worst_y"], rows,
                                     chash, seed),
            "mollify.json": json_bytes(summary, chash, seed)}


def cmd_value(args):
    sc = _scenario(args, "delayed_linear")
    ve = value_function(sc.t0, sc.init, sc.problem, sc.lattice, sc.mc)
    rows = [[k, json.dumps(c), ve.costs[k]] for k, c in enumerate(ve.controls)]
    rec = dict(ve.record(), scenario=sc.name, budget=sc.mc.budget)
    return {"value.json": json_bytes(rec, ve.config_hash, sc.mc.seed),
            "value_costs.csv": csv_bytes(["control", "values", "cost"], rows, ve.config_hash, sc.mc.seed)}


def cmd_dpp_check(args):
    sc = _scenario(args, "quadratic_steering")
    tau = args.tau if args.tau is not None else sc.extra.get("dpp", {}).get("tau", 0.0)
    res = dpp_residual(sc.t0, sc.init, tau, sc.problem, sc.lattice, sc.mc)
    chash = config_hash(sc.raw, tau)
    ve_value = res.lhs
    rec = dict(res.record(), t=sc.t0, tau=tau, value=ve_value, argmax=res.lhs_argmax,
               stderr=res.lhs_stderr, scenario=sc.name)
    files = {"dpp.json": json_bytes(rec, chash, sc.mc.seed)}
    if args.refine:
        rows = acceptance.dpp_refinement(sc.mc.seed, sc.mc.workers, args.refine, args.config or "quadratic_steering")
        files["dpp_refinement.csv"] = csv_bytes(
            ["level", "h", "controls", "residual", "stderr", "lhs", "rhs"],
            [[r[k] for k in ("level", "h", "controls", "residual", "stderr", "lhs", "rhs")] for r in rows],
            chash, sc.mc.seed)
    return files


def cmd_hamiltonian_audit(args):
    sc = _scenario(args, "state_vol")
    if sc.problem.gen.z_dependent:
        raise ConfigError("Hamiltonian audits need a z-independent driver")
    schedule = [int(x) for x in args.schedule.split(",")]
    proj = acceptance.scenario_projection(sc)
    rng = np.random.default_rng(sc.mc.seed)
    probes = acceptance.hamiltonian_probes(rng, args.probes, sc.problem.lag_steps, sc.problem.h, proj.k,
                                           acceptance._r_box(sc))
    rows = hamiltonian_convergence_audit(sc.problem, sc.lattice.u_values, lambda n: mollify(sc.problem.gen, n),
                                         schedule, probes, proj)
    H, _ = acceptance._scenario_hamiltonian(sc)
    ell = ellipticity_audit(H, acceptance.ordered_probes(sc, rng, args.probes))
    chash = config_hash(sc.raw, schedule, args.probes)
    summary = dict(scenario=sc.name, projection_offsets=list(proj.offsets), ellipticity_violations=ell,
                   transfer_exceptions=sum(r.exceptions for r in rows), probes=args.probes)
    return {"hamiltonian.csv": csv_bytes(["n", "h_error", "g_error", "exceptions"],
                                         [[r.n, r.h_error, r.g_error, r.exceptions] for r in rows],
                                         chash, sc.mc.seed),
            "hamiltonian.json": json_bytes(summary, chash, sc.mc.seed)}


def cmd_viscosity_check(args):
    seed = args.seed or 0
    T = 1.0
    problem = acceptance.heat_problem(T)
    proj = Projection((0,), 0, problem.h)
    U = np.zeros((1, 1))
    rows = []
    fixtures = [("heat", acceptance.heat_test_function(args.k, T), 0.0),
                ("manufactured-source", acceptance.heat_test_function(args.k, T, args.source), args.source)]
    for name, phi, src in fixtures:
        for t in (0.2, 0.5, 0.8):
            for x in (-0.5, 0.0, 0.5):
                for side in ("sub", "super"):
                    c = viscosity_inequality_check(phi.phi, phi, t, ProjectedState(np.array([x]), proj), side,
                                                   problem, U, tol=args.tol)
                    rows.append([name, t, x, side, c.residual, src, c.applicable, c.passed])
    chash = config_hash("heat", args.k, args.source, args.tol)
    return {"viscosity.csv": csv_bytes(["fixture", "t", "x", "side", "residual", "injected_source", "applicable",
                                        "passed"], rows, chash, seed)}


def cmd_ez_demo(args):
    p = EzParams(args.vartheta, args.psi, args.r)
    regime = p.regime
    seed = args.seed if args.seed is not None else 0
    workers = args.workers or 1
    audit = None
    if args.regime_check:
        box = (-2.0, -0.1) if p.r > 1 else (0.1, 2.0)
        a = monotonicity_regime_audit(p, box, (0.1, 1.0))
        audit = dict(mu_hat=a.mu_hat, mu_declared=a.mu_declared, violations=a.violations, regime=a.regime)
    if regime == "other":
        raise UsageError(f"r={p.r}, psi={p.psi} lie outside regimes i/ii; the demo needs one of them")
    small, big = acceptance.ez_demo_run(p, regime, seed, workers, args.paths)
    model = RamseyModel.demo(regime)
    L = 4
    proj = Projection((0, L), L, 0.05)
    hT = model.h_terminal
    # candidate: terminal utility frozen in time, lifted through the lagged projection
    cand = TestFunction.from_callable(lambda t, x: float(hT(proj.embed(x, t).batch(1))[0]))
    pts = [(t, (x, xl)) for t in (0.0, 0.5, 1.0) for x in (0.5, 1.0, 1.5) for xl in (0.5, 1.0)]
    res = ez_hjb_residual(model, p, cand, pts, model.lattice([0.0, 1.0], [0.3, 0.5, 0.8]).u_values, 1.0, proj)
    chash = config_hash("ez-demo", args.vartheta, args.psi, args.r, args.paths)
    rec = dict(params=dict(vartheta=p.vartheta, psi=p.psi, r=p.r, regime=regime), mu_bound=p.mu_bound(),
               value=big.record(), value_singleton_c=small.value.value,
               lattice_monotone=big.value.value >= small.value.value, regime_audit=audit)
    rows = [[r["t"], r["x"][0], r["x"][1], r["value"], r["residual"], r.get("terminal_gap", "")] for r in res]
    return {"ez_demo.json": json_bytes(rec, chash, seed),
            "ez_residual.csv": csv_bytes(["t", "x", "x_lag", "candidate", "residual", "terminal_gap"], rows,
                                         chash, seed)}


def cmd_repro_all(args):
    seed = 42 if args.seed is None else args.seed
    only = [int(x) for x in args.only.split(",")] if args.only else None
    results = acceptance.run_all(seed, args.workers or 1, only)
    for c in results:
        print(c.line(), file=sys.stderr)
    chash = config_hash("repro-all", sorted(r.id for r in results))
    rows = [[c.id, c.name, "PASS" if c.passed else "FAIL", c.tolerance,
             json.dumps(_clean(c.measured), sort_keys=True)] for c in results]
    summary = dict(criteria=[dict(id=c.id, name=c.name, passed=c.passed, tolerance=c.tolerance,
                                  measured=c.measured) for c in results],
                   all_passed=all(c.passed for c in results))
    files = {"summary.csv": csv_bytes(["id", "name", "status", "tolerance", "measured"], rows, chash, seed),
             "summary.json": json_bytes(summary, chash, seed)}
    return files, (EXIT_OK if summary["all_passed"] else EXIT_NUMERIC)


COMMANDS = {
    "simulate": cmd_simulate, "solve-bsde": cmd_solve_bsde, "mollify-audit": cmd_mollify_audit,
    "value": cmd_value, "dpp-check": cmd_dpp_check, "hamiltonian-audit": cmd_hamiltonian_audit,
    "viscosity-check": cmd_viscosity_check, "ez-demo": cmd_ez_demo, "repro-all": cmd_repro_all,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="delayctl", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, help_, scenario=True):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--out", default=None, help="output directory (default: out/<command>)")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--workers", type=int, default=None, help="threads; never changes results")
        if scenario:
            p.add_argument("--config", default=None,
                           help=f"scenario JSON file or bundled name ({', '.join(bundled_scenarios())})")
            p.add_argument("--set", action="append", metavar="KEY=VALUE",
                           help="override a scenario field, e.g. --set mc.n_paths=500")
        return p

    p = add("simulate", "forward Euler-Maruyama ensemble; per-node mean/variance CSV")
    p.add_argument("--control", help="control JSON: {lattice_index|constant|steps}")
    p.add_argument("--dump", action="store_true", help="also write the raw paths binary")
    p = add("solve-bsde", "backward solve for one control; CSV per node plus diagnostics JSON")
    p.add_argument("--control")
    p.add_argument("--scheme", choices=("implicit", "explicit"), default="implicit")
    p = add("mollify-audit", "(n, sup-error) table of mollified drivers")
    p.add_argument("--schedule", default="5,10,20,40")
    p.add_argument("--eps", type=float, default=0.05)
    add("value", "lattice value function at the scenario's initial segment")
    p = add("dpp-check", "nested Monte Carlo DPP residual")
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--refine", type=int, default=0, help="also emit a refinement table with this many levels")
    p = add("hamiltonian-audit", "H_n vs H transfer table and ellipticity count")
    p.add_argument("--schedule", default="5,10,20,40")
    p.add_argument("--probes", type=int, default=200)
    p = add("viscosity-check", "viscosity inequality residuals on manufactured fixtures", scenario=False)
    p.add_argument("--k", type=float, default=0.7)
    p.add_argument("--source", type=float, default=0.3)
    p.add_argument("--tol", type=float, default=1e-6)
    p = add("ez-demo", "delayed Ramsey model with Epstein-Zin utility", scenario=False)
    p.add_argument("--r", type=float, default=2.0)
    p.add_argument("--psi", type=float, default=2.0)
    p.add_argument("--vartheta", type=float, default=0.1)
    p.add_argument("--paths", type=int, default=2000)
    p.add_argument("--regime-check", action="store_true", help="run the monotonicity audit on a probe box")
    p = add("repro-all", "run every acceptance criterion and write a summary table", scenario=False)
    p.add_argument("--only", default=None, help="comma-separated criterion ids")
    return ap


def _fail(code: int, kind: str, err: Exception, **extra) -> int:
    rec = dict(error=kind, type=type(err).__name__, message=str(err), **extra)
    print(json.dumps(_clean(rec), sort_keys=True), file=sys.stderr)
    return code


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        result = COMMANDS[args.command](args)
    except (ConfigError, UsageError, GridError) as e:
        return _fail(EXIT_USAGE, "usage", e)
    except BudgetError as e:
        return _fail(EXIT_BUDGET, "budget", e, estimate=e.estimate)
    except (SimulationError, NewtonError, RegressionError, EzDomainError, FloatingPointError) as e:
        return _fail(EXIT_NUMERIC, "numeric", e, step=getattr(e, "step", None), path=getattr(e, "path", None),
                     condition_number=getattr(e, "condition_number", None))
    except ValueError as e:
        return _fail(EXIT_USAGE, "usage", e)
    files, code = result if isinstance(result, tuple) else (result, EXIT_OK)
    out = Path(args.out or Path("out") / args.command)
    _write_all(out, files)
    for name in files:
        print(out / name)
    return code


if __name__ == "__main__":
    sys.exit(main())
