import csv
import json

import numpy as np
import pytest

from delayctl import cli

FAST = ["--set", "mc.n_paths=200"]


def run(tmp_path, *argv, name="out"):
    out = tmp_path / name
    code = cli.main([argv[0], "--out", str(out), *argv[1:]])
    return code, out


def _check_stamped(out):
    for f in out.iterdir():
        if f.suffix == ".csv":
            rows = list(csv.DictReader(f.open()))
            assert rows and all(r["config_hash"] and r["seed"] != "" for r in rows)
        elif f.suffix == ".json":
            rec = json.loads(f.read_text())
            assert len(rec["config_hash"]) == 16 and isinstance(rec["seed"], int)


@pytest.mark.parametrize("argv", [
    ["simulate", "--config", "delayed_linear", *FAST],
    ["solve-bsde", "--config", "delayed_linear", *FAST],
    ["solve-bsde", "--config", "cubic_driver", "--scheme", "explicit", *FAST],
    ["mollify-audit", "--config", "cubic_driver", "--schedule", "5,10"],
    ["value", "--config", "quadratic_steering"],
    ["dpp-check", "--config", "quadratic_steering", "--set", "mc.outer_paths=4", "--set", "mc.inner_paths=4"],
    ["hamiltonian-audit", "--config", "delayed_linear", "--schedule", "5,10", "--probes", "20"],
    ["viscosity-check"],
    ["ez-demo", "--paths", "200", "--regime-check"],
])
def test_subcommands_succeed_and_stamp_outputs(tmp_path, argv, capsys):
    code, out = run(tmp_path, *argv)
    assert code == 0, capsys.readouterr().err
    assert any(out.iterdir())
    _check_stamped(out)
    assert not list(out.glob("*.tmp"))


def test_value_output_matches_closed_form(tmp_path):
    code, out = run(tmp_path, "value", "--config", "quadratic_steering")
    rec = json.loads((out / "value.json").read_text())
    assert code == 0 and rec["value"] == pytest.approx(0.0, abs=1e-12)


def test_path_dump_roundtrip(tmp_path):
    code, out = run(tmp_path, "simulate", "--config", "delayed_linear", "--set", "mc.n_paths=7", "--seed", "5",
                    "--dump")
    assert code == 0
    head, arr = cli.read_path_dump((out / "paths.bin").read_bytes())
    assert arr.shape[0] == 7 and head["seed"] == 5 and head["h"] == 0.05 and head["delta"] == 0.2
    rows = list(csv.DictReader((out / "simulate.csv").open()))
    assert head["config_hash"] == rows[0]["config_hash"]
    np.testing.assert_allclose(arr[:, :, 0].mean(axis=0), [float(r["mean_0"]) for r in rows])


def test_malformed_config_exits_2_without_outputs(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"grid": {"T": 1, "h": 0.3}, "coefficients": {"kind": "gbm"},
                               "generator": {"kind": "zero"}, "terminal": {"kind": "identity"}}))
    code, out = run(tmp_path, "value", "--config", str(bad))
    assert code == 2 and not out.exists()
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "usage"
    code, out = run(tmp_path, "simulate", "--config", "no_such_scenario", name="o2")
    assert code == 2 and not out.exists()
    code, _ = run(tmp_path, "value", "--set", "novalue", name="o3")
    assert code == 2


def test_argparse_usage_error_exits_2(tmp_path):
    with pytest.raises(SystemExit) as e:
        cli.main(["simulate", "--bogus"])
    assert e.value.code == 2


def test_budget_exit_4(tmp_path, capsys):
    code, out = run(tmp_path, "value", "--config", "delayed_linear", "--set", "mc.budget=10")
    assert code == 4 and not out.exists()
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "budget" and err["estimate"] > 10


def test_numeric_exit_3(tmp_path, capsys):
    code, out = run(tmp_path, "simulate", "--config", "gbm", "--set", 'coefficients={"kind": "gbm", "a": 1e308}',
                    "--set", "mc.n_paths=4")
    assert code == 3 and not out.exists()
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "numeric" and err["step"] is not None


def test_ez_other_regime_is_usage_error(tmp_path):
    code, out = run(tmp_path, "ez-demo", "--r", "2", "--psi", "0.5", "--paths", "50")
    assert code == 2 and not out.exists()


@pytest.mark.parametrize("argv", [
    ["simulate", "--config", "delayed_linear", *FAST, "--dump"],
    ["value", "--config", "noisy_steering", *FAST],
])
def test_repeat_and_worker_runs_are_byte_identical(tmp_path, argv):
    _, a = run(tmp_path, *argv, name="a")
    _, b = run(tmp_path, *argv, name="b")
    _, c = run(tmp_path, *argv, "--workers", "4", name="c")
    for f in a.iterdir():
        assert f.read_bytes() == (b / f.name).read_bytes() == (c / f.name).read_bytes()


def test_seed_changes_output(tmp_path):
    _, a = run(tmp_path, "simulate", "--config", "gbm", *FAST, name="a")
    _, b = run(tmp_path, "simulate", "--config", "gbm", *FAST, "--seed", "99", name="b")
    assert (a / "simulate.csv").read_bytes() != (b / "simulate.csv").read_bytes()


def test_control_file_variants(tmp_path):
    for i, spec in enumerate([{"lattice_index": 1}, {"constant": [1.0]}, {"steps": [[0.0]] * 20}]):
        p = tmp_path / f"c{i}.json"
        p.write_text(json.dumps(spec))
        code, _ = run(tmp_path, "solve-bsde", "--config", "quadratic_steering", "--control", str(p), name=f"o{i}")
        assert code == 0
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"lattice_index": 9}))
    code, _ = run(tmp_path, "simulate", "--config", "quadratic_steering", "--control", str(p), name="bad")
    assert code == 2
