import numpy as np
import pytest
from hypothesis import given, strategies as st

from delayctl import oracles
from delayctl.mollify import (MollifierSpec, ProbeBox, dyadic_schedule, mollify, project_ball, sup_error,
                              truncate, uniform_convergence_audit)
from delayctl.models import gen_abs, gen_cubic, gen_linear, term_constant

KINK = 0.334453997709975  # int |x| rho(x) dx for the unit bump, 50-digit quadrature


def _box(ys=np.linspace(-1, 1, 401)):
    return ProbeBox((0.0, 0.5), np.zeros((1, 1, 1)), ys, np.array([[0.0]]))


def test_weights_are_a_probability():
    a, w = MollifierSpec(4).nodes_weights
    assert w.sum() == pytest.approx(1.0, abs=1e-15)
    assert np.all(w >= 0) and np.max(np.abs(a)) < 0.25
    np.testing.assert_allclose(w, w[::-1], atol=1e-16)


def test_density_integrates_to_one():
    from scipy import integrate
    s = MollifierSpec(3)
    assert integrate.quad(s.density, -1 / 3, 1 / 3)[0] == pytest.approx(1.0, rel=1e-6)


def test_affine_driver_is_reproduced():
    # odd moments of the symmetric weights vanish, so affine maps are fixed points
    gen = gen_linear(term_constant(0.0), mu=-0.7, c=0.3)
    err, _ = sup_error(gen, mollify(gen, 2), _box())
    assert err < 1e-14


def test_kink_error_matches_independent_quadrature():
    assert oracles.kink_error(1) == pytest.approx(KINK, rel=1e-12)
    gen = gen_abs(term_constant(0.0))
    for n in (1, 4, 16):
        err, where = sup_error(gen, mollify(gen, n), _box())
        assert where["y"] == 0.0
        assert err == pytest.approx(KINK / n, rel=1e-3)


def test_smooth_driver_converges_quadratically():
    gen = gen_cubic(term_constant(0.0))
    errs = [sup_error(gen, mollify(gen, n), _box())[0] for n in (4, 8, 16)]
    assert errs[0] / errs[1] == pytest.approx(4, rel=0.05)
    assert errs[1] / errs[2] == pytest.approx(4, rel=0.05)


def test_mollified_derivative_available():
    gen = gen_cubic(term_constant(0.0))
    gn = mollify(gen, 4)
    y = np.array([0.3])
    fd = (gn.g(0, None, y + 1e-6, None, None) - gn.g(0, None, y - 1e-6, None, None)) / 2e-6
    assert gn.dg_dy(0, None, y, None, None) == pytest.approx(fd, rel=1e-6)
    assert gn.smooth_in_y


def test_audit_returns_first_passing_index():
    gen = gen_abs(term_constant(0.0))
    rep = uniform_convergence_audit(gen, lambda n: mollify(gen, n), _box(), 0.05)
    assert rep.ok and rep.n == 8
    assert [n for n, _ in rep.table] == [1, 2, 4, 8]
    rep = uniform_convergence_audit(gen, lambda n: mollify(gen, n), _box(), 1e-9, schedule=[1, 2])
    assert not rep.ok and rep.worst_probe["y"] == 0.0


def test_dyadic_schedule():
    assert dyadic_schedule(1, 4) == [1, 2, 4, 8]
    assert dyadic_schedule(5, 3) == [5, 10, 20]


def test_mollify_rejects_bad_index():
    with pytest.raises(ValueError):
        mollify(gen_abs(None), 0)


@given(st.floats(-100, 100), st.floats(1, 50))
def test_projection_is_a_contraction(x, m):
    p = float(project_ball(np.array([x]), m)[0])
    assert abs(p) <= m + 1e-12
    if abs(x) <= m:
        assert p == x
    else:
        assert np.sign(p) == np.sign(x)


def test_truncation_examples():
    gen = gen_linear(term_constant(0.0), mu=-1.0, c=5.0)
    g2 = truncate(gen, 2.0)
    y = np.array([0.0, 1.0, -3.0])
    np.testing.assert_allclose(g2.g(0, None, y, None, None), 2.0 - y)
    assert truncate(gen, 10.0).g(0, None, y, None, None).tolist() == gen.g(0, None, y, None, None).tolist()
    with pytest.raises(ValueError):
        truncate(gen, 0.5)
