"""Backward solver for the recursive cost BSDE with a monotone driver.

Scheme per step ``j`` (left node ``t_j``), explicit in Z and implicit in Y::

    Z_j = E_j[Y_{j+1} dW_j] / h
    Y_j = E_j[Y_{j+1}] + h g(t_j, X_{t_j}, Y_j, Z_j, v_j)

``E_j`` is a least-squares projection on polynomial features of the segment
(current value and lagged value), fitted separately on each initial-segment
branch of the ensemble. Noise-free ensembles use the path values directly.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import GeneratorSpec, PathSegment, as_control_path, sup_norm_distance
from .sdde import PathEnsemble


class NewtonError(FloatingPointError):
    def __init__(self, message: str, step: Optional[int] = None):
        super().__init__(message)
        self.step = step


class RegressionError(np.linalg.LinAlgError):
    def __init__(self, message: str, condition_number: float, step: Optional[int] = None):
        super().__init__(message)
        self.condition_number = condition_number
        self.step = step


@dataclass(frozen=True)
class SegmentBasis:
    """Regression features of a segment: current value, lagged value, monomials up to ``degree``."""

    degree: int = 2
    use_lag: bool = True

    def coords(self, windows: np.ndarray) -> np.ndarray:
        cur = windows[:, -1]
        if self.use_lag and windows.shape[1] > 1:
            return np.concatenate([cur, windows[:, 0]], axis=1)
        return cur

    def describe(self) -> str:
        return f"poly{self.degree}" + ("+lag" if self.use_lag else "")


def _standardize(x: np.ndarray):
    # x: (G, p, k); degenerate columns are zeroed and flagged inactive
    mean = x.mean(axis=1, keepdims=True)
    xc = x - mean
    std = np.sqrt(np.mean(xc * xc, axis=1, keepdims=True))
    active = std > 1e-10 * (1.0 + np.abs(mean))
    xs = np.where(active, xc / np.where(active, std, 1.0), 0.0)
    return xs, active[:, 0, :]


def _design(coords: np.ndarray, degree: int):
    xs, _ = _standardize(coords)
    k = xs.shape[2]
    cols = [xs[..., i] for i in range(k)]
    for deg in range(2, degree + 1):
        for combo in itertools.combinations_with_replacement(range(k), deg):
            c = np.ones(xs.shape[:2])
            for i in combo:
                c = c * xs[..., i]
            cols.append(c)
    return _standardize(np.stack(cols, axis=2))


def regress(coords: np.ndarray, targets: np.ndarray, n_groups: int, degree: int,
            cond_max: float = 1e12):
    """Group-wise least-squares fitted values of ``targets`` ``(P, J)`` on polynomial features.

    Returns ``(fitted, condition_number)``; the condition number is that of the
    feature correlation matrix over active (non-constant) features, worst group.
    """
    P, J = targets.shape
    p = P // n_groups
    c = coords.reshape(n_groups, p, -1)
    t = targets.reshape(n_groups, p, J)
    mean_t = t.mean(axis=1, keepdims=True)
    if p < 2 or c.shape[2] == 0:
        return np.broadcast_to(mean_t, t.shape).reshape(P, J).copy(), 1.0
    X, active = _design(c, degree)
    K = X.shape[2]
    C = np.einsum("gpk,gpl->gkl", X, X) / p
    idx = np.arange(K)
    C[:, idx, idx] = np.where(active, C[:, idx, idx], 1.0)
    ev = np.linalg.eigvalsh(C)
    lo = ev[:, 0]
    cond = float(np.max(np.where(lo > 0, ev[:, -1] / np.where(lo > 0, lo, 1.0), np.inf)))
    if not cond <= cond_max:
        raise RegressionError(f"regression design is rank deficient (condition number {cond:.3g})", cond)
    rhs = np.einsum("gpk,gpj->gkj", X, t - mean_t) / p
    beta = np.linalg.solve(C, rhs)
    fitted = mean_t + np.einsum("gpk,gkj->gpj", X, beta)
    return fitted.reshape(P, J), cond


def _dg_dy(gen: GeneratorSpec, t, windows, y, z, v):
    if gen.dg_dy is not None:
        return gen.dg_dy(t, windows, y, z, v)
    eps = 1e-7 * (1.0 + np.abs(y))
    lo, hi = gen.y_domain
    yp = np.minimum(y + eps, hi)
    ym = np.maximum(y - eps, lo)
    return (gen.g(t, windows, yp, z, v) - gen.g(t, windows, ym, z, v)) / (yp - ym)


@dataclass
class NewtonStats:
    calls: int = 0
    max_iterations: int = 0
    total_iterations: int = 0
    bisection_steps: int = 0

    def as_dict(self) -> dict:
        return dict(calls=self.calls, max_iterations=self.max_iterations,
                    total_iterations=self.total_iterations, bisection_steps=self.bisection_steps)


def solve_implicit(a: np.ndarray, t: float, windows: np.ndarray, z: np.ndarray, v: np.ndarray,
                   gen: GeneratorSpec, h: float, tol: float = 1e-12, max_iter: int = 100,
                   stats: Optional[NewtonStats] = None) -> np.ndarray:
    """Path-wise root of ``y - h g(t, seg, y, z, v) = a``.

    Safeguarded Newton inside a sign-change bracket, bisection whenever the
    Newton step leaves the bracket. Under ``h * max(mu, 0) < 1`` the left-hand
    side is strictly increasing in ``y``, so the root is unique. Brackets never
    leave ``gen.y_domain``.
    """
    if h * max(gen.monotone_mu, 0.0) >= 1:
        raise ValueError(f"h * mu = {h * gen.monotone_mu} >= 1: implicit step not well posed")
    a = np.asarray(a, dtype=float)
    dlo, dhi = gen.y_domain

    def F(y):
        return y - h * gen.g(t, windows, y, z, v) - a

    y = np.clip(a, dlo, dhi)
    f = F(y)
    if not np.all(np.isfinite(f)):
        raise NewtonError(f"driver is not finite at the starting point (path {int(np.argmax(~np.isfinite(f)))})")
    lo =np.where(f <= 0, y, np.nan)
    hi = np.where(f >= 0, y, np.nan)
    step = 1.0 + np.abs(a)
    for _ in range(200):
        need_hi = np.isnan(hi)
        need_lo = np.isnan(lo)
        if not (need_hi.any() or need_lo.any()):
            break
        cand = np.where(need_hi, np.minimum(y + step, dhi), np.maximum(y - step, dlo))
        fc = F(cand)
        at_edge = np.where(need_hi, cand >= dhi, cand <= dlo)
        up = need_hi & (fc >= 0)
        dn = need_lo & (fc <= 0)
        hi = np.where(up, cand, hi)
        lo = np.where(need_hi & ~up, cand, lo)
        lo = np.where(dn, cand, lo)
        hi = np.where(need_lo & ~dn, cand, hi)
        stuck = (need_hi & ~up | need_lo & ~dn) & at_edge
        if stuck.any():
            i = int(np.argmax(stuck))
            raise NewtonError(f"no root inside generator domain {gen.y_domain} (a={a[i]!r})")
        y = np.where(need_hi & ~up | need_lo & ~dn, cand, y)
        step = step * 2.0
    else:
        raise NewtonError("could not bracket the implicit root")

    y = np.clip(a, lo, hi)
    it = 0
    bis = 0
    scale = np.maximum(1.0, np.maximum(np.abs(a), np.abs(y)))
    active = np.ones(a.shape, dtype=bool)
    while True:
        f = F(y)
        done = (np.abs(f) <= tol * scale) | (hi - lo <= 4 * np.finfo(float).eps * np.maximum(1.0, np.abs(y)))
        active = ~done
        if not active.any():
            break
        if it >= max_iter:
            i = int(np.argmax(active))
            raise NewtonError(f"Newton did not converge after {max_iter} iterations "
                              f"(residual {abs(f[i]):.3g} on path {i})")
        it += 1
        lo = np.where(active & (f < 0), y, lo)
        hi = np.where(active & (f > 0), y, hi)
        dF = 1.0 - h * _dg_dy(gen, t, windows, y, z, v)
        with np.errstate(divide="ignore", invalid="ignore"):
            yn = y - f / dF
        ok = np.isfinite(yn) & (yn > lo) & (yn < hi) & (dF > 0)
        mid = 0.5 * (lo + hi)
        bis += int(np.count_nonzero(active & ~ok))
        y = np.where(active, np.where(ok, yn, mid), y)
        scale = np.maximum(1.0, np.maximum(np.abs(a), np.abs(y)))
    if stats is not None:
        stats.calls += 1
        stats.max_iterations = max(stats.max_iterations, it)
        stats.total_iterations += it
        stats.bisection_steps += bis
    return y


def implicit_scalar_step(a: float, t: float, seg: PathSegment, z, v, gen: GeneratorSpec, h: float,
                         tol: float = 1e-12) -> float:
    """Scalar front end of :func:`solve_implicit` for a single segment."""
    z = np.atleast_1d(np.asarray(z, dtype=float))[None, :]
    v = np.atleast_1d(np.asarray(v, dtype=float))
    return float(solve_implicit(np.array([a], dtype=float), t, seg.batch(1), z, v, gen, h, tol)[0])


@dataclass(eq=False)
class BsdeSolution:
    """``Y`` is ``(P, M + 1)`` over solver nodes ``first_step ... first_step + M``; ``Z`` is ``(P, M + 1, d)``.

    ``Z`` at the last node is undefined by the scheme and stored as zero.
    """

    Y: np.ndarray
    Z: np.ndarray
    regression_condition_numbers: np.ndarray
    scheme: dict
    first_step: int
    times: np.ndarray
    estimator: np.ndarray
    newton: dict = field(default_factory=dict)

    def y0_mean(self) -> float:
        return float(np.mean(self.Y[:, 0]))

    def y0_stderr(self) -> float:
        n = self.estimator.shape[0]
        return float(np.std(self.estimator) / math.sqrt(n)) if n > 1 else 0.0

    def branch_means(self, n_branches: int) -> np.ndarray:
        return self.Y[:, 0].reshape(n_branches, -1).mean(axis=1)

    def branch_stderr(self, n_branches: int) -> np.ndarray:
        e = self.estimator.reshape(n_branches, -1)
        p = e.shape[1]
        return e.std(axis=1) / math.sqrt(p) if p > 1 else np.zeros(n_branches)


def solve(ens: PathEnsemble, gen: GeneratorSpec, control, basis: Optional[SegmentBasis] = None,
          terminal: Optional[np.ndarray] = None, start_step: int = 0, end_step: Optional[int] = None,
          scheme: str = "implicit", tol: float = 1e-12, max_iter: int = 100,
          cond_max: float = 1e12) -> BsdeSolution:
    """Solve the BSDE backward on solver steps ``[start_step, end_step]`` of ``ens.grid``.

    ``terminal`` replaces ``Phi(X_T)`` by per-path values at ``end_step``
    (backward semigroup with terminal data). ``scheme="explicit"`` evaluates the
    driver at ``E_j[Y_{j+1}]`` instead of solving for ``Y_j``; it exists only as
    a stability comparison.
    """
    grid = ens.grid
    basis = basis or SegmentBasis()
    N = grid.n_steps
    end = N if end_step is None else end_step
    if not 0 <= start_step <= end <= N:
        raise ValueError(f"bad step range [{start_step}, {end}] for {N} steps")
    ctrl = as_control_path(grid, control)
    P, d = ens.n_paths, ens.brownian_increments.shape[2]
    M = end - start_step
    Y = np.empty((P, M + 1))
    Z = np.zeros((P, M + 1, d))
    if terminal is None:
        if end != N:
            raise ValueError("terminal data required when stopping before the horizon")
        yT = np.asarray(gen.terminal(ens.step_windows(N)), dtype=float)
    else:
        yT = np.broadcast_to(np.asarray(terminal, dtype=float), (P,)).copy()
    if not np.all(np.isfinite(yT)):
        raise ValueError("terminal values must be finite")
    Y[:, M] = yT
    conds = np.ones(M)
    stats = NewtonStats()
    h = grid.h
    # control-variate path estimator of Y at the first node
    est = yT.copy()
    for jj in range(M - 1, -1, -1):
        j = start_step + jj
        t = grid.step_time(j)
        w = ens.step_windows(j)
        v = ctrl[j]
        y_next = Y[:, jj + 1]
        dW = ens.brownian_increments[:, j]
        if ens.noise_free:
            cond_y = y_next
            z = np.zeros((P, d))
        else:
            targets = np.concatenate([y_next[:, None], y_next[:, None] * dW / h], axis=1)
            try:
                fitted, conds[jj] = regress(basis.coords(w), targets, ens.n_branches,
                                            basis.degree, cond_max)
            except RegressionError as e:
                e.step = j
                raise
            cond_y = fitted[:, 0]
            z = fitted[:, 1:]
        if scheme == "implicit":
            try:
                y = solve_implicit(cond_y, t, w, z, v, gen, h, tol, max_iter, stats)
            except NewtonError as e:
                e.step = j
                raise
        elif scheme == "explicit":
            with np.errstate(over="ignore", invalid="ignore"):
                y = cond_y + h * gen.g(t, w, cond_y, z, v)
        else:
            raise ValueError(f"unknown scheme {scheme!r}")
        if not np.all(np.isfinite(y)):
            raise NewtonError(f"non-finite Y at step {j}", j)
        Y[:, jj] = y
        Z[:, jj] = z
        est = est + h * gen.g(t, w, y, z, v) - np.einsum("pd,pd->p", z, dW)
    times = grid.t0 + (start_step + np.arange(M + 1)) * h
    return BsdeSolution(
        Y, Z, conds,
        dict(implicit_y=scheme == "implicit", scheme=scheme, basis=basis.describe(),
             newton_tol=tol, max_iter=max_iter, noise_free=ens.noise_free),
        start_step, times, est, stats.as_dict())


# ---------------------------------------------------------------------------
# comparison theorem and a priori estimates as executable checks

@dataclass
class ComparisonReport:
    applicable: bool
    violation_fraction: float
    n_violations: int
    n_total: int
    max_excess: float
    terminal_gap_min: float
    witness: Optional[dict] = None

    def passed(self, quantile: float = 1e-3) -> bool:
        return self.applicable and self.violation_fraction <= quantile


def comparison_check(sol1: BsdeSolution, sol2: BsdeSolution, gen1: GeneratorSpec, gen2: GeneratorSpec,
                     ens: PathEnsemble, control, slack: float = 0.0, pre_tol: float = 1e-12) -> ComparisonReport:
    """Check ``Y1 <= Y2 + slack`` path-wise after verifying the ordering preconditions on samples.

    Preconditions: ``Phi1 <= Phi2`` at the terminal node and ``g1 <= g2`` along
    ``(Y2, Z2)`` at every step. A witnessed breach makes the check inapplicable.
    """
    grid = ens.grid
    ctrl = as_control_path(grid, control)
    M = sol1.Y.shape[1] - 1
    s0 = sol1.first_step
    gap_T = sol2.Y[:, M] - sol1.Y[:, M]
    if np.any(gap_T < -pre_tol):
        i = int(np.argmin(gap_T))
        return ComparisonReport(False, math.nan, 0, 0, math.nan, float(gap_T.min()),
                                dict(kind="terminal", path=i, gap=float(gap_T[i])))
    for jj in range(M):
        j = s0 + jj
        t = grid.step_time(j)
        w = ens.step_windows(j)
        y2, z2 = sol2.Y[:, jj], sol2.Z[:, jj]
        d = gen2.g(t, w, y2, z2, ctrl[j]) - gen1.g(t, w, y2, z2, ctrl[j])
        if np.any(d < -pre_tol * (1 + np.abs(y2))):
            i = int(np.argmin(d))
            return ComparisonReport(False, math.nan, 0, 0, math.nan, float(gap_T.min()),
                                    dict(kind="driver", step=j, path=i, gap=float(d[i])))
    excess = sol1.Y - sol2.Y - slack
    bad = excess > 0
    n = bad.size
    return ComparisonReport(True, float(np.count_nonzero(bad) / n), int(np.count_nonzero(bad)), n,
                            float(excess.max()), float(gap_T.min()))


@dataclass
class EstimateReport:
    sup_second_moment: float
    continuity_ratio: float
    skipped: int


def estimate_audit(sol: BsdeSolution, init: PathSegment, probes=()) -> EstimateReport:
    """``E[sup_k |Y_k|^2]`` and ``max |Y(t0; init) - Y(t0; init')| / ||init - init'||``.

    ``probes`` is a sequence of ``(init', solution')`` pairs solved with the same
    control and random numbers as ``sol``.
    """
    m2 = float(np.mean(np.max(sol.Y ** 2, axis=1)))
    ratios, skipped = [], 0
    for seg, other in probes:
        dist = sup_norm_distance(init, seg)
        if dist == 0:
            skipped += 1
            continue
        ratios.append(abs(sol.y0_mean() - other.y0_mean()) / dist)
    return EstimateReport(m2, max(ratios) if ratios else 0.0, skipped)
