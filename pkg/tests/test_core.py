import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from delayctl.core import (ControlLattice, GridError, PathSegment, audit_coefficients, audit_generator,
                           make_grid, sup_norm_distance)


def test_make_grid_delay_example():
    g = make_grid(0, 1, 0.2, lag_steps=2)
    assert g.h == pytest.approx(0.1)
    assert g.lag_steps == 2 and g.n_steps == 10
    # nodes -0.2, -0.1, ..., 1.0
    assert g.n_nodes == 13
    assert g.nodes[0] == pytest.approx(-0.2) and g.nodes[-1] == pytest.approx(1.0)


def test_make_grid_no_delay():
    g = make_grid(0, 1, 0, h=0.25)
    assert g.n_nodes == 5 and g.lag_steps == 0
    np.testing.assert_allclose(g.nodes, [0, 0.25, 0.5, 0.75, 1.0])


def test_make_grid_rejects_non_divisible_horizon():
    with pytest.raises(GridError, match="remainder"):
        make_grid(0, 1, 0.3, lag_steps=2)


@pytest.mark.parametrize("kw", [dict(t0=1, T=1, delta=0.1, h=0.1), dict(t0=0, T=1, delta=-0.1, h=0.1),
                                dict(t0=0, T=1, delta=0.0), dict(t0=0, T=1, delta=0.1, h=0.03)])
def test_make_grid_rejects_bad_input(kw):
    with pytest.raises(GridError):
        make_grid(**kw)


@given(st.integers(1, 8), st.integers(1, 50))
def test_node_arithmetic_is_order_independent(lag, k_steps):
    g = make_grid(0.0, k_steps * 0.25 / lag, 0.25, lag_steps=lag)
    ks = np.arange(g.n_nodes)
    forward = [g.node_time(int(k)) for k in ks]
    backward = [g.node_time(int(k)) for k in ks[::-1]][::-1]
    assert forward == backward
    assert forward == g.nodes.tolist()


def test_sup_norm_distance_examples():
    a = PathSegment(0.0, [0.0, 1.0, 2.0])
    b = PathSegment(0.0, [0.0, 1.0, 5.0])
    assert sup_norm_distance(a, a) == 0
    assert sup_norm_distance(a, b) == 3
    z = PathSegment.constant(0.0, 0.0, 4)
    c = PathSegment.constant(0.0, [3.0, 4.0], 4)
    assert sup_norm_distance(PathSegment.constant(0.0, [0.0, 0.0], 4), c) == 5
    assert sup_norm_distance(z, PathSegment.constant(0.0, -2.5, 4)) == 2.5


def test_sup_norm_distance_rejects_mismatched_lag():
    with pytest.raises(ValueError):
        sup_norm_distance(PathSegment.constant(0, 0, 2), PathSegment.constant(0, 0, 3))


def test_cross_anchor_distance_uses_clamping():
    # a on [-0.2, 0], b on [-0.1, 0.1]; clamped extension of each to the union
    a = PathSegment(0.0, [0.0, 1.0, 2.0], 0.1)
    b = PathSegment(0.1, [1.0, 2.0, 2.0], 0.1)
    assert sup_norm_distance(a, b) == pytest.approx(1.0)
    b2 = PathSegment(0.1, [0.0, 1.0, 2.0], 0.1)
    # union nodes -0.2..0.1: a -> 0,1,2,2 ; b2 -> 0,0,1,2
    assert sup_norm_distance(a, b2) == pytest.approx(1.0)


segs = arrays(np.float64, (4, 2), elements=st.floats(-10, 10))


@given(segs, segs, segs)
def test_sup_norm_is_a_metric(x, y, z):
    a, b, c = (PathSegment(0.0, v) for v in (x, y, z))
    dab = sup_norm_distance(a, b)
    assert dab == sup_norm_distance(b, a)
    assert (dab == 0) == np.array_equal(x, y)
    assert sup_norm_distance(a, c) <= dab + sup_norm_distance(b, c) + 1e-12


def test_segment_validation():
    with pytest.raises(ValueError):
        PathSegment(0.0, [0.0, math.nan])
    s = PathSegment(0.0, [1.0, 2.0])
    assert s.values.shape == (2, 1) and s.lag_steps == 1
    assert s.sup_norm() == 2.0
    with pytest.raises(ValueError):
        s.values[0, 0] = 3.0


def test_lattice_enumeration_order_and_count():
    g = make_grid(0, 1, 0, h=0.25)
    lat = ControlLattice([[0.0], [1.0]], (0.0, 0.5))
    assert lat.intervals(g) == [(0, 2), (2, 4)]
    combos = [c for c, _ in lat.enumerate(g)]
    assert combos == [(0, 0), (0, 1), (1, 0), (1, 1)]
    assert lat.count(g) == 4
    path = list(lat.enumerate(g))[1][1]
    np.testing.assert_array_equal(path[:, 0], [0, 0, 1, 1])


def test_lattice_rejects_values_outside_box():
    with pytest.raises(ValueError):
        ControlLattice([[2.0]], box_lo=[0.0], box_hi=[1.0])
    with pytest.raises(ValueError):
        ControlLattice(np.empty((0, 1)))


def test_audits_detect_understated_constants(rng):
    from delayctl.models import coeff_linear_delay, gen_cubic, term_constant
    from dataclasses import replace
    lat = ControlLattice([[-1.0], [1.0]])
    co = coeff_linear_delay(a=1.0, b=2.0, c=1.0)
    assert audit_coefficients(co, lat, 2, rng, 500).ok
    assert not audit_coefficients(replace(co, lipschitz_L=0.5), lat, 2, rng, 500).ok
    gen = gen_cubic(term_constant(0.0))
    reps = audit_generator(gen, lat, 2, 1, 1, rng, 500)
    assert all(r.ok for r in reps)
    bad = audit_generator(replace(gen, monotone_mu=-1.0, growth_M=0.01), lat, 2, 1, 1, rng, 500)
    assert not bad[0].ok and not bad[1].ok
