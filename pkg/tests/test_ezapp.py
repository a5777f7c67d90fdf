import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from delayctl import oracles
from delayctl.control import MCConfig
from delayctl.core import PathSegment
from delayctl.ezapp import (DomainGuard, EzDomainError, EzParams, RamseyModel, ez_dg_du, ez_generator,
                            monotonicity_regime_audit, solve_ez)


def test_frozen_probe_values():
    p = EzParams(0.1, 2.0, 2.0)
    # bracket vanishes at u = -1, c = 1
    assert ez_generator(p, -1.0, 1.0, clamp=False) == 0.0
    assert float(ez_generator(p, -0.5, 0.3, clamp=False)) == pytest.approx(-0.0612701665379258, rel=1e-13)


@given(st.floats(0.01, 1.0), st.floats(0.2, 5.0), st.floats(0.2, 5.0), st.floats(0.05, 3.0),
       st.floats(0.05, 2.0))
def test_factored_form_matches_bracket_form(vt, psi, r, absu, c):
    assume(abs(psi - 1) > 0.05 and abs(r - 1) > 0.05)
    p = EzParams(vt, psi, r)
    u = absu / (1 - r)  # (1 - r) u = absu > 0
    ref = oracles.ez_direct(vt, psi, r, u, c)
    got = float(ez_generator(p, u, c, clamp=False))
    assert got == pytest.approx(ref, rel=1e-9, abs=1e-12)


@given(st.floats(0.05, 3.0), st.floats(0.05, 2.0))
def test_derivative_matches_finite_difference(absu, c):
    p = EzParams(0.2, 1.5, 3.0)
    u = absu / (1 - p.r)
    fd = (ez_generator(p, u + 1e-6, c, clamp=False) - ez_generator(p, u - 1e-6, c, clamp=False)) / 2e-6
    assert float(ez_dg_du(p, u, c)) == pytest.approx(float(fd), rel=1e-5, abs=1e-8)


def test_crra_reduction():
    # psi = 1 / r collapses the aggregator to vartheta (c^(1-r)/(1-r) - u)
    for r, u, c in [(2.0, -0.7, 0.4), (0.5, 1.3, 0.8), (3.0, -0.2, 1.0)]:
        p = EzParams(0.3, 1 / r, r)
        assert float(ez_generator(p, u, c, clamp=False)) == pytest.approx(oracles.crra_aggregator(0.3, r, u, c),
                                                                         rel=1e-12)


def test_regimes_and_bounds():
    assert EzParams(0.1, 2, 2).regime == "i"
    assert EzParams(0.1, 0.5, 0.5).regime == "ii"
    assert EzParams(0.1, 0.5, 2).regime == "other"
    assert EzParams(0.1, 2, 2).mu_bound() == pytest.approx(0.2)
    assert EzParams(0.1, 0.5, 0.5).mu_bound() == pytest.approx(0.05)
    # r = 2, psi = 0.5 makes e = 0: aggregator linear in u, mu = -(1-r) vartheta/q
    mixed = EzParams(0.1, 0.5, 2)
    assert mixed.e == 0 and mixed.mu_bound() == pytest.approx(-0.1)
    assert math.isinf(EzParams(0.1, 3, 0.2).mu_bound())
    for bad in [(0, 2, 2), (0.1, 1, 2), (0.1, 2, 1), (0.1, -1, 2)]:
        with pytest.raises(ValueError):
            EzParams(*bad)


@pytest.mark.parametrize("params,u_box", [((0.1, 2, 2), (-3, -0.05)), ((0.1, 0.5, 0.5), (0.05, 3))])
def test_monotonicity_audit_in_regimes(params, u_box):
    rep = monotonicity_regime_audit(EzParams(*params), u_box, (0.1, 1.0), n_u=60, n_c=5)
    assert rep.violations == 0 and rep.mu_hat <= rep.mu_declared + 1e-9


def test_audit_rejects_box_outside_domain():
    with pytest.raises(ValueError):
        monotonicity_regime_audit(EzParams(0.1, 2, 2), (-1, 1), (0.1, 1))


def test_domain_clamp_counts_and_strict_mode():
    p = EzParams(0.1, 2, 2)
    guard = DomainGuard()
    out = ez_generator(p, np.array([-1.0, 0.5, 1.0]), 0.5, guard=guard)
    assert guard.count == 2 and np.all(np.isfinite(out))
    with pytest.raises(EzDomainError):
        ez_generator(p, 0.5, 0.5, clamp=False)
    with pytest.raises(EzDomainError):
        ez_generator(EzParams(0.1, 0.5, 0.5), 1.0, 0.0)
    assert float(ez_generator(EzParams(0.1, 2, 2), -1.0, 0.0)) == pytest.approx(0.2 * -1.0)


def test_demo_solve_is_clean_and_monotone_in_lattice():
    model = RamseyModel.demo("i")
    params = EzParams(0.1, 2.0, 2.0)
    init = PathSegment.constant(0, 1.0, 2, 0.1)
    mc = MCConfig(n_paths=300, seed=4)
    small = solve_ez(model, params, model.lattice([0.0, 1.0], [0.5]), init, 1.0, 0.2, 0.1, mc)
    big = solve_ez(model, params, model.lattice([0.0, 0.5, 1.0], [0.25, 0.5, 1.0]), init, 1.0, 0.2, 0.1, mc)
    assert small.clamps == 0 and big.clamps == 0 and big.sign_constant
    assert big.value.value >= small.value.value
    assert len(big.policy) == 1 and 0.1 <= big.policy[0]["c"] <= 1
    rec = big.record()
    assert rec["regime"] == "i" and rec["domain_clamps"] == 0


def test_solve_rejects_other_regime():
    model = RamseyModel.demo("i")
    with pytest.raises(ValueError):
        solve_ez(model, EzParams(0.1, 0.5, 2), model.lattice([0.0], [0.5]), PathSegment.constant(0, 1.0, 2, 0.1),
                 1.0, 0.2, 0.1, MCConfig(n_paths=10))
    with pytest.raises(ValueError):
        RamseyModel.demo("iii")
