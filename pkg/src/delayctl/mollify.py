"""Smoothing and truncation of drivers in the ``y`` argument, with convergence audits."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .core import GeneratorSpec


def bump(x: np.ndarray) -> np.ndarray:
    """Unnormalized ``exp(-1 / (1 - x^2))`` on ``(-1, 1)``, zero elsewhere."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    inside = np.abs(x) < 1
    out[inside] = np.exp(-1.0 / (1.0 - x[inside] ** 2))
    return out


@dataclass(frozen=True)
class MollifierSpec:
    """Discrete mollifier ``rho_n``: Gauss-Legendre nodes ``a_j`` on ``[-1/n, 1/n]`` with weights ``w_j``.

    The weights already include the bump values, so ``sum_j w_j f(a_j)``
    approximates ``int f(a) rho_n(a) da``.
    """

    n: int
    quad_nodes: int = 64

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("mollifier index n must be >= 1")

    @property
    def nodes_weights(self) -> tuple[np.ndarray, np.ndarray]:
        x, w = np.polynomial.legendre.leggauss(self.quad_nodes)
        ww = w * bump(x)
        ww = ww / ww.sum()
        return x / self.n, ww

    def density(self, a: np.ndarray) -> np.ndarray:
        """Continuous ``rho_n(a)`` normalized by the same quadrature."""
        x, w = np.polynomial.legendre.leggauss(self.quad_nodes)
        mass = np.sum(w * bump(x)) / self.n
        return bump(np.asarray(a, dtype=float) * self.n) / mass


def mollify(gen: GeneratorSpec, n: int, spec: Optional[MollifierSpec] = None) -> GeneratorSpec:
    """Return ``g_n(t, seg, y, z, v) = sum_j w_j g(t, seg, y - a_j, z, v)``.

    The convolution acts on ``y`` only, so Lipschitz constants in ``(seg, z)``
    and the monotonicity constant carry over unchanged.
    """
    spec = spec or MollifierSpec(n)
    if spec.n != n:
        spec = MollifierSpec(n, spec.quad_nodes)
    a, w = spec.nodes_weights
    g = gen.g

    def g_n(t, windows, y, z, v):
        y = np.asarray(y, dtype=float)
        acc = np.zeros_like(y)
        for aj, wj in zip(a, w):
            if wj == 0.0:
                continue
            acc = acc + wj * g(t, windows, y - aj, z, v)
        return acc

    dg = None
    if gen.dg_dy is not None:
        dgy = gen.dg_dy

        def dg(t, windows, y, z, v):
            y = np.asarray(y, dtype=float)
            acc = np.zeros_like(y)
            for aj, wj in zip(a, w):
                acc = acc + wj * dgy(t, windows, y - aj, z, v)
            return acc

    lo, hi = gen.y_domain
    r = 1.0 / n
    return replace(gen, g=g_n, dg_dy=dg, y_domain=(lo + r, hi - r), smooth_in_y=True,
                   name=f"{gen.name}*rho_{n}")


def project_ball(x: np.ndarray, m: float) -> np.ndarray:
    """Radial clamp ``min(m, |x|) / |x| * x`` with the value 0 at 0."""
    x = np.asarray(x, dtype=float)
    ax = np.abs(x)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(ax > m, x * (m / np.where(ax > 0, ax, 1.0)), x)
    return out


def truncate(gen: GeneratorSpec, m: float) -> GeneratorSpec:
    """``g_m(t, seg, y, z, v) = g(t, seg, y, z, v) - g(t, seg, 0, z, v) + clamp_m(g(t, seg, 0, z, v))``."""
    if m < 1:
        raise ValueError("truncation level m must be >= 1")
    g = gen.g

    def g_m(t, windows, y, z, v):
        y = np.asarray(y, dtype=float)
        g0 = g(t, windows, np.zeros_like(y), z, v)
        return g(t, windows, y, z, v) - g0 + project_ball(g0, m)

    return replace(gen, g=g_m, name=f"{gen.name}|trunc{m:g}")


@dataclass(frozen=True)
class ProbeBox:
    """Finite lattice of driver arguments: ``(t, windows (K, L+1, n), y, z, v)`` combinations.

    ``batches()`` yields one batch per ``(t, v)`` pair where windows and y range
    over their product.
    """

    times: tuple
    windows: np.ndarray
    ys: np.ndarray
    v_values: np.ndarray
    d: int = 1

    def batches(self):
        W = self.windows.shape[0]
        Ny = len(self.ys)
        w = np.repeat(self.windows, Ny, axis=0)
        y = np.tile(np.asarray(self.ys, dtype=float), W)
        z = np.zeros((W * Ny, self.d))
        for t in self.times:
            for v in np.atleast_2d(self.v_values):
                yield t, w, y, z, v


def sup_error(gen: GeneratorSpec, approx: GeneratorSpec, box: ProbeBox):
    """Max ``|approx - gen|`` over the probe box plus the location of the worst probe."""
    worst, where = -1.0, None
    for t, w, y, z, v in box.batches():
        e = np.abs(approx.g(t, w, y, z, v) - gen.g(t, w, y, z, v))
        i = int(np.argmax(e))
        if e[i] > worst:
            worst, where = float(e[i]), dict(t=t, y=float(y[i]), v=v.tolist(), window=i // len(box.ys))
    return worst, where


@dataclass
class ConvergenceAudit:
    n: Optional[int]
    table: list
    worst_probe: Optional[dict]

    @property
    def ok(self) -> bool:
        return self.n is not None


def dyadic_schedule(start: int = 1, levels: int = 11) -> list[int]:
    return [start * 2 ** k for k in range(levels)]


def uniform_convergence_audit(gen: GeneratorSpec, approx_family: Callable[[int], GeneratorSpec],
                              box: ProbeBox, eps: float,
                              schedule: Optional[Sequence[int]] = None) -> ConvergenceAudit:
    """Smallest ``n`` in ``schedule`` with probe sup-error at most ``eps``; failure keeps the worst probe."""
    schedule = list(schedule or dyadic_schedule())
    table = []
    worst = None
    for n in schedule:
        err, where = sup_error(gen, approx_family(n), box)
        table.append((n, err))
        worst = where
        if err <= eps:
            return ConvergenceAudit(n, table, None)
    return ConvergenceAudit(None, table, worst)

