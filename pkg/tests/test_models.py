import json

import numpy as np
import pytest

from delayctl.models import (COEFFICIENTS, GENERATORS, TERMINALS, ConfigError, bundled_scenarios, load_scenario,
                             scenario_from_dict)

BASE = {"grid": {"T": 1.0, "h": 0.1}, "coefficients": {"kind": "zero"}, "generator": {"kind": "zero"},
        "terminal": {"kind": "identity"}}


def test_every_bundled_scenario_loads():
    names = bundled_scenarios()
    assert {"quadratic_steering", "delayed_linear", "ramsey_i", "ramsey_ii"} <= set(names)
    for n in names:
        sc = load_scenario(n)
        assert sc.init.lag_steps == sc.problem.lag_steps
        assert sc.lattice.m == sc.problem.coeffs.m
        assert len(sc.hash) == 16


def test_registries_are_nonempty():
    assert {"gbm", "linear_delay", "ramsey"} <= set(COEFFICIENTS)
    assert {"tanh", "neg_square"} <= set(TERMINALS)
    assert {"linear", "cubic", "ez", "abs"} <= set(GENERATORS)


def test_overrides_and_hash_change():
    a = load_scenario("gbm")
    b = load_scenario("gbm", {"mc.seed": 7, "grid.h": 0.05})
    assert b.mc.seed == 7 and b.problem.h == 0.05 and a.hash != b.hash
    assert load_scenario("gbm").hash == a.hash


def test_file_roundtrip(tmp_path):
    p = tmp_path / "s.json"
    p.write_text(json.dumps(dict(BASE, init={"kind": "linear", "value": 1.0, "slope": 2.0},
                                 grid={"T": 1.0, "h": 0.1, "delta": 0.2})))
    sc = load_scenario(str(p))
    np.testing.assert_allclose(sc.init.values[:, 0], [0.6, 0.8, 1.0])


def test_constants_override():
    sc = scenario_from_dict(dict(BASE, constants={"L": 3.0, "mu": -1.0}))
    assert sc.problem.coeffs.lipschitz_L == 3.0 and sc.problem.gen.monotone_mu == -1.0


@pytest.mark.parametrize("bad", [
    {"grid": {"T": 1.0, "h": 0.1}},
    dict(BASE, extra=1),
    dict(BASE, coefficients={"kind": "nope"}),
    dict(BASE, coefficients={"kind": "gbm", "alpha": 1}),
    dict(BASE, generator={"linear": 1}),
    dict(BASE, grid={"T": 1.0, "h": 0.3}),
    dict(BASE, constants={"K": 1}),
    dict(BASE, mc={"paths": 3}),
    dict(BASE, init={"kind": "random"}),
    dict(BASE, grid={"T": 1.0, "h": 0.1, "delta": 0.2}, init={"kind": "values", "values": [1.0]}),
    dict(BASE, lattice={"u_values": [[0.0, 1.0]]}),
    dict(BASE, lattice={"u_values": [[2.0]], "box_lo": [0], "box_hi": [1]}),
    [1, 2],
])
def test_malformed_scenarios_raise_config_error(bad):
    with pytest.raises(ConfigError):
        scenario_from_dict(bad)


def test_missing_file_and_bad_json(tmp_path):
    with pytest.raises(ConfigError):
        load_scenario(str(tmp_path / "absent.json"))
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(ConfigError):
        load_scenario(str(p))


def test_with_mc_rebuilds():
    sc = load_scenario("quadratic_steering").with_mc(n_paths=7)
    assert sc.mc.n_paths == 7 and sc.raw["mc"]["n_paths"] == 7
