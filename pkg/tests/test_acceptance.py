"""End-to-end acceptance suite: one line per criterion at its pinned tolerance."""

import json

import pytest

from delayctl import cli
from delayctl.acceptance import CRITERIA

from conftest import ACCEPTANCE_LINES

SEED = 42


@pytest.fixture(scope="module")
def summary(tmp_path_factory):
    out = tmp_path_factory.mktemp("repro")
    code = cli.main(["repro-all", "--out", str(out), "--seed", str(SEED)])
    rec = json.loads((out / "summary.json").read_text())
    rec["exit_code"] = code
    rec["dir"] = out
    return rec


@pytest.mark.parametrize("cid", sorted(CRITERIA))
def test_criterion(summary, cid):
    c = next(c for c in summary["criteria"] if c["id"] == cid)
    status = "PASS" if c["passed"] else "FAIL"
    line = f"[{status}] {cid:>2} {c['name']} (tol {c['tolerance']}) measured={json.dumps(c['measured'], sort_keys=True)}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert c["passed"], line


def test_exit_code_and_stamps(summary):
    assert summary["exit_code"] == (0 if summary["all_passed"] else 3)
    assert summary["seed"] == SEED and len(summary["config_hash"]) == 16


def test_rerun_with_workers_is_byte_identical(summary, tmp_path):
    # second full run, different thread count: summary files must match byte for byte
    code = cli.main(["repro-all", "--out", str(tmp_path), "--seed", str(SEED), "--workers", "4"])
    assert code == summary["exit_code"]
    for name in ("summary.json", "summary.csv"):
        assert (tmp_path / name).read_bytes() == (summary["dir"] / name).read_bytes()
