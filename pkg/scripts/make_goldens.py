"""Regenerate tests/goldens from the fast CLI cases.

Run from the repository root:  python3 scripts/make_goldens.py
"""
import json
import shutil
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from morse_pi1.cli import dump, main  # noqa: E402
from morse_pi1.continuation import StepMap, identity_map  # noqa: E402
from morse_pi1.mscomplex import torus_complex  # noqa: E402

GOLDENS = ROOT / "tests" / "goldens"
COMBINATORIAL = ROOT / "scenarios" / "combinatorial"


def combinatorial_inputs():
    """Hand-written complexes and step maps for the --from-json cases."""
    COMBINATORIAL.mkdir(parents=True, exist_ok=True)
    T = torus_complex()
    ident = identity_map(T).to_json()
    # conjugation by b: a -> b a b^-1, b -> b
    conj = StepMap(T, T, {0: ((1, 1), (0, 1), (1, -1)), 1: ((1, 1),)}, {0: 0}, "combinatorial").to_json()

    def m(doc):
        return {"source": "torus", "target": "torus", "stepmap": doc}

    square = {"complexes": {"torus": T.to_json()},
              "maps": {"phi12": m(ident), "phi23": m(conj), "phi13": m(ident)}}
    cont = {"complexes": {"torus": T.to_json()}, "maps": {"phi": m(conj)}}
    (COMBINATORIAL / "square_conjugated.json").write_text(dump(square))
    (COMBINATORIAL / "continue_conjugated.json").write_text(dump(cont))
    (COMBINATORIAL / "scenario.json").write_text(dump({"schema": "scenario/v1",
                                                        "name": "combinatorial"}))


def cases():
    return json.loads((GOLDENS / "cases.json").read_text())


def run_case(case, out: Path):
    argv = [case["command"], "--config", str(ROOT / case["config"]), "--out", str(out)]
    if "from_json" in case:
        argv += ["--from-json", str(ROOT / case["from_json"])]
    argv += case.get("args", [])
    return main(argv)


def main_():
    combinatorial_inputs()
    for case in cases():
        out = GOLDENS / case["name"]
        if out.exists():
            shutil.rmtree(out)
        code = run_case(case, out)
        if code != case["exit"]:
            raise SystemExit(f"{case['name']}: exit {code}, expected {case['exit']}")
        print(case["name"], sorted(p.name for p in out.iterdir()))


if __name__ == "__main__":
    main_()
