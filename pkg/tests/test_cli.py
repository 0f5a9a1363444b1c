import json
import sys
from pathlib import Path

import pytest

from morse_pi1.cli import main

ROOT = Path(__file__).resolve().parent.parent
GOLDENS = ROOT / "tests" / "goldens"
sys.path.insert(0, str(ROOT / "scripts"))

from make_goldens import run_case  # noqa: E402

CASES = json.loads((GOLDENS / "cases.json").read_text())


@pytest.mark.parametrize("case", CASES, ids=[c["name"] for c in CASES])
def test_golden_outputs_are_byte_stable(case, tmp_path):
    out = tmp_path / case["name"]
    assert run_case(case, out) == case["exit"]
    want = sorted(p.name for p in (GOLDENS / case["name"]).iterdir())
    assert sorted(p.name for p in out.iterdir()) == want
    for name in want:
        assert (out / name).read_bytes() == (GOLDENS / case["name"] / name).read_bytes(), name


def test_outputs_carry_provenance():
    doc = json.loads((GOLDENS / "analyze_torus" / "pi1.json").read_text())
    assert {"tool", "schema", "scenario_hash", "seed", "payload"} <= set(doc)
    assert doc["schema"] == "pi1/v1"
    assert len(doc["payload"]["generators"]) == 2 and len(doc["payload"]["relators"]) == 1


def test_sphere_presentation_is_empty():
    doc = json.loads((GOLDENS / "analyze_sphere" / "pi1.json").read_text())
    assert doc["payload"]["generators"] == [] and doc["payload"]["abelianization"] == "0"


def test_degenerate_field_reports_the_point():
    doc = json.loads((GOLDENS / "analyze_degenerate" / "error.json").read_text())
    assert doc["payload"]["error"] == "DegenerateCritical"
    assert len(doc["payload"]["eigenvalues"]) == 2


def test_invalid_scenario_exits_one(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"schema": "scenario/v2", "name": "x"}))
    assert main(["analyze", "--config", str(bad), "--out", str(tmp_path / "o")]) == 1
    assert (tmp_path / "o" / "error.json").exists()


def test_plot_writes_svg(tmp_path):
    code = main(["analyze", "--config", str(ROOT / "scenarios" / "sphere.json"), "--out",
                 str(tmp_path), "--plot", "--strict-smale"])
    assert code == 0
    assert (tmp_path / "plot.svg").read_text().startswith("<svg")


def test_relative_length_above_desk_scale_is_rejected(tmp_path):
    sc = json.loads((ROOT / "scenarios" / "relative_ex3.json").read_text())
    sc["relative"]["max_len"] = 13
    p = tmp_path / "sc.json"
    p.write_text(json.dumps(sc))
    assert main(["relative", "--config", str(p), "--out", str(tmp_path / "o")]) == 1
    err = json.loads((tmp_path / "o" / "error.json").read_text())
    assert err["error"] == "CliError" and "13" in err["message"]
