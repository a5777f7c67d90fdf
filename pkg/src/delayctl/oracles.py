"""Independent reference values: closed forms, adaptive quadrature and high-order ODE integration.

Nothing here shares code with the solvers, so agreement is evidence rather than tautology.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import integrate, optimize


def kink_error(n: int) -> float:
    """``int |a| rho_n(a) da`` for the normalized bump on ``[-1/n, 1/n]`` (adaptive quadrature)."""
    def bump(x):
        return math.exp(-1.0 / (1.0 - x * x)) if abs(x) < 1 else 0.0

    mass = integrate.quad(bump, -1, 1, epsabs=1e-14, epsrel=1e-13)[0]
    first = 2 * integrate.quad(lambda x: x * bump(x), 0, 1, epsabs=1e-14, epsrel=1e-13)[0]
    return first / mass / n


def backward_ode(g, terminal: float, T: float, t0: float = 0.0, rtol: float = 1e-12,
                 atol: float = 1e-14) -> float:
    """``Y(t0)`` for ``Y' = -g(t, Y)``, ``Y(T) = terminal``, integrated with DOP853."""
    sol = integrate.solve_ivp(lambda t, y: [-g(t, y[0])], (T, t0), [terminal], method="DOP853",
                              rtol=rtol, atol=atol)
    if not sol.success:
        raise RuntimeError(sol.message)
    return float(sol.y[0, -1])


def cubic_decay_value(terminal: float, tau: float) -> float:
    """Closed form of ``Y' = Y^3`` backward: ``Y(T - tau) = 1 / sqrt(terminal^-2 + 2 tau)``."""
    return math.copysign(1.0 / math.sqrt(terminal ** -2 + 2.0 * tau), terminal)


def implicit_cubic_root(a: float, h: float) -> float:
    """Root of ``y + h y^3 = a`` by Brent's method."""
    f = lambda y: y + h * y ** 3 - a
    b = abs(a) + 1.0
    return float(optimize.brentq(f, -b, b, xtol=1e-15, rtol=4 * np.finfo(float).eps))


def gbm_mean(x0: float, a: float, T: float) -> float:
    return x0 * math.exp(a * T)


def gbm_second_moment(x0: float, a: float, sigma: float, T: float) -> float:
    return x0 * x0 * math.exp((2 * a + sigma * sigma) * T)


def heat_solution(k: float, T: float):
    """``u(t, x) = exp(k x + k^2 (T - t) / 2)`` solves ``u_t + u_xx / 2 = 0``; returns ``(u, u_t, u_x, u_xx)``."""
    def u(t, x):
        return math.exp(k * x + 0.5 * k * k * (T - t))

    return (u, lambda t, x: -0.5 * k * k * u(t, x), lambda t, x: k * u(t, x),
            lambda t, x: k * k * u(t, x))


def ez_direct(vartheta: float, psi: float, r: float, u: float, c: float) -> float:
    """Epstein-Zin aggregator transcribed literally from its bracket form."""
    w = (1.0 - r) * u
    q = 1.0 - 1.0 / psi
    return vartheta / q * w * ((c / w ** (1.0 / (1.0 - r))) ** q - 1.0)


def crra_aggregator(vartheta: float, r: float, u: float, c: float) -> float:
    return vartheta * (c ** (1.0 - r) / (1.0 - r) - u)


def crra_value(vartheta: float, r: float, c: float, terminal: float, tau: float) -> float:
    """Solution of ``V' = -vartheta (c^(1-r)/(1-r) - V)`` a time ``tau`` before the horizon."""
    A = c ** (1.0 - r) / (1.0 - r)
    return A + (terminal - A) * math.exp(-vartheta * tau)


def steering_value(x0: float, T: float) -> float:
    """Best of ``-(x0 + v T)^2`` over constant ``v in {0, 1}`` (deterministic steering)."""
    return max(-(x0 ** 2), -((x0 + T) ** 2))
