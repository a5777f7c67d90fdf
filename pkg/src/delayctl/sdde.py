"""Euler-Maruyama simulation of controlled stochastic delay equations."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .core import CoefficientSpec, PathSegment, TimeGrid, as_control_path, sup_norm_distance
from .rng import brownian_increments

CHUNK = 4096


class SimulationError(FloatingPointError):
    def __init__(self, message: str, path: int, step: int):
        super().__init__(message)
        self.path = path
        self.step = step


@dataclass(frozen=True, eq=False)
class PathEnsemble:
    """Simulated paths; ``states`` is ``(P, n_nodes, n)``, ``brownian_increments`` ``(P, n_steps, d)``.

    Paths are split into ``n_branches`` equal contiguous blocks, one per initial
    segment; branch ``b`` owns paths ``b * per_branch ... (b + 1) * per_branch - 1``.
    Path ``i`` of every branch is driven by the same Brownian increments, so
    branches are compared under common random numbers.
    """

    grid: TimeGrid
    n_paths: int
    states: np.ndarray
    brownian_increments: np.ndarray
    seed: int
    n_branches: int = 1
    noise_free: bool = False

    @property
    def per_branch(self) -> int:
        return self.n_paths // self.n_branches

    def windows(self, node: int) -> np.ndarray:
        """All path windows ending at grid node ``node``: ``(P, L + 1, n)``."""
        L = self.grid.lag_steps
        return self.states[:, node - L: node + 1]

    def step_windows(self, j: int) -> np.ndarray:
        return self.windows(self.grid.lag_steps + j)


def _simulate_chunk(coeffs, grid, control, inits, seed, p0, p1, d):
    # inits: (G, L+1, n); local paths [p0, p1) of every branch, branch-major rows
    L, N = grid.lag_steps, grid.n_steps
    G = inits.shape[0]
    P = p1 - p0
    X = np.empty((G * P, grid.n_nodes, coeffs.n))
    X[:, : L + 1] = np.repeat(inits, P, axis=0)
    dW = np.empty((P, N, d))
    noise_free = True
    for j in range(N):
        t = grid.step_time(j)
        w = X[:, j: j + L + 1]
        v = control[j]
        dw = brownian_increments(seed, j, p0, p1, d, grid.h)
        dW[:, j] = dw
        dw_all = np.tile(dw, (G, 1)) if G > 1 else dw
        # overflow is caught by the finiteness check below
        with np.errstate(over="ignore", invalid="ignore"):
            b = coeffs.drift(t, w, v)
            s = coeffs.diffusion(t, w, v)
            nxt = X[:, j + L] + b * grid.h + np.einsum("pnd,pd->pn", s, dw_all)
        if noise_free and np.any(s != 0):
            noise_free = False
        bad = ~np.isfinite(nxt)
        if bad.any():
            r = int(np.argwhere(bad.any(axis=1))[0, 0])
            g, i = divmod(r, P)
            raise SimulationError(f"non-finite state on branch {g} path {p0 + i} at step {j}", p0 + i, j)
        X[:, j + L + 1] = nxt
    return X.reshape(G, P, grid.n_nodes, coeffs.n), dW, noise_free


def simulate(coeffs: CoefficientSpec, init: Union[PathSegment, Sequence[PathSegment]], control,
             grid: TimeGrid, n_paths: int, seed: int, workers: int = 1) -> PathEnsemble:
    """Simulate ``n_paths`` Euler-Maruyama paths per initial segment.

    ``control`` is an ``(n_steps, m)`` array or a constant ``(m,)`` vector; the
    control enters through its value at the left end of each step. History nodes
    ``[t0 - delta, t0]`` are frozen to the initial segment. With several initial
    segments, each gets ``n_paths`` paths driven by the same increments. Chunks of
    ``CHUNK`` paths are independent, so ``workers`` changes speed only, never values.
    """
    inits = [init] if isinstance(init, PathSegment) else list(init)
    if not inits:
        raise ValueError("need at least one initial segment")
    for s in inits:
        if s.lag_steps != grid.lag_steps:
            raise ValueError(f"initial segment has {s.lag_steps} lag steps, grid has {grid.lag_steps}")
        if abs(s.anchor - grid.t0) > 1e-9 * max(1.0, abs(grid.t0)):
            raise ValueError(f"initial segment anchored at {s.anchor}, grid starts at {grid.t0}")
    ctrl = as_control_path(grid, control)
    G = len(inits)
    init_arr = np.stack([s.values for s in inits])
    d = coeffs.d
    chunk = max(1, CHUNK // G)
    bounds = [(a, min(a + chunk, n_paths)) for a in range(0, n_paths, chunk)]

    def job(ab):
        return _simulate_chunk(coeffs, grid, ctrl, init_arr, seed, ab[0], ab[1], d)

    if workers > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(job, bounds))
    else:
        parts = [job(ab) for ab in bounds]
    states = np.concatenate([p[0] for p in parts], axis=1).reshape(G * n_paths, grid.n_nodes, coeffs.n)
    dW = np.concatenate([p[1] for p in parts])
    if G > 1:
        dW = np.tile(dW, (G, 1, 1))
    noise_free = all(p[2] for p in parts)
    states.setflags(write=False)
    dW.setflags(write=False)
    return PathEnsemble(grid, G * n_paths, states, dW, int(seed), G, noise_free)


def segment_at(ens: PathEnsemble, path: int, node: int) -> PathSegment:
    """Window of ``lag_steps + 1`` samples of one path ending at grid node ``node``."""
    L = ens.grid.lag_steps
    if not L <= node < ens.grid.n_nodes:
        raise IndexError(f"node {node} outside [{L}, {ens.grid.n_nodes - 1}]")
    if not 0 <= path < ens.n_paths:
        raise IndexError(f"path {path} outside [0, {ens.n_paths - 1}]")
    return PathSegment(ens.grid.node_time(node), ens.states[path, node - L: node + 1], ens.grid.h)


def moment_estimate(ens: PathEnsemble, q: float) -> float:
    """Monte Carlo estimate of ``E[sup_nodes |X|^(2q)]`` over the whole stored range."""
    if q < 1:
        raise ValueError("q must be >= 1")
    if not np.all(np.isfinite(ens.states)):
        raise ValueError("ensemble contains non-finite states")
    sup = np.max(np.linalg.norm(ens.states, axis=2), axis=1)
    return float(np.mean(sup ** (2 * q)))


@dataclass
class ProbeReport:
    max_ratio: float
    ratios: list
    skipped: list


def initial_lipschitz_probe(coeffs: CoefficientSpec, grid: TimeGrid, control, pairs,
                            n_paths: int = 1000, seed: int = 0) -> ProbeReport:
    """Max over pairs of ``sqrt(E sup|X - X'|^2) / ||init - init'||`` with common random numbers."""
    ratios, skipped = [], []
    for k, (a, b) in enumerate(pairs):
        dist = sup_norm_distance(a, b)
        if dist == 0:
            skipped.append(k)
            continue
        ea = simulate(coeffs, a, control, grid, n_paths, seed)
        eb = simulate(coeffs, b, control, grid, n_paths, seed)
        diff = np.max(np.linalg.norm(ea.states - eb.states, axis=2), axis=1)
        ratios.append(float(np.sqrt(np.mean(diff ** 2)) / dist))
    return ProbeReport(max(ratios) if ratios else float("nan"), ratios, skipped)
