import math

import pytest

from delayctl import oracles


def test_backward_ode_linear():
    assert oracles.backward_ode(lambda t, y: -y, 2.0, 1.0) == pytest.approx(2 * math.exp(-1), rel=1e-11)


def test_backward_ode_cubic_matches_closed_form():
    assert oracles.backward_ode(lambda t, y: -y ** 3, 1.0, 1.5) == pytest.approx(
        oracles.cubic_decay_value(1.0, 1.5), rel=1e-10)
    assert oracles.cubic_decay_value(-2.0, 0.0) == -2.0


def test_cubic_driver_value():
    # terminal 1, tau = 0.625: 1 / sqrt(1 + 1.25) = 2/3
    assert oracles.cubic_decay_value(1.0, 0.625) == pytest.approx(2 / 3, rel=1e-15)


def test_implicit_root_and_gbm():
    assert oracles.implicit_cubic_root(2.0, 0.5) == pytest.approx(1.17950902460291677, abs=1e-15)
    assert oracles.gbm_second_moment(1.0, 0.05, 0.2, 1.0) == pytest.approx(math.exp(0.14))


def test_heat_solution_solves_pde():
    u, ut, ux, uxx = oracles.heat_solution(1.3, 2.0)
    assert ut(0.4, 0.1) + 0.5 * uxx(0.4, 0.1) == pytest.approx(0.0, abs=1e-12)
    assert u(2.0, 0.5) == pytest.approx(math.exp(0.65))


def test_crra_value_and_steering():
    assert oracles.crra_value(0.2, 2.0, 1.0, -1.0, 3.0) == pytest.approx(-1.0)
    assert oracles.steering_value(-1.0, 1.0) == 0.0
    assert oracles.steering_value(0.5, 1.0) == -0.25
