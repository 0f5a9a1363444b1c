"""morse-pi1 command line: analyze, continue, graft, square, relative.

Exit codes: 0 verified, 1 error or refuted, 2 strict Smale check failed,
3 inconclusive (an Unknown verdict is present).
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import warnings
from pathlib import Path

import jsonschema

from . import __version__

EXIT_OK, EXIT_ERROR, EXIT_SMALE, EXIT_INCONCLUSIVE = 0, 1, 2, 3

_EXPR_SLOT = {"type": "string", "minLength": 1}
_MANIFOLD = {"type": "object", "properties": {"kind": {"enum": ["torus", "sphere"]}},
             "required": ["kind"]}
SCENARIO_SCHEMA = {
    "type": "object",
    "properties": {
        "schema": {"const": "scenario/v1"},
        "name": {"type": "string"},
        "manifold": _MANIFOLD,
        "field": _EXPR_SLOT,
        "options": {"type": "object", "properties": {
            "seeds_per_axis": {"type": "integer", "minimum": 8},
            "samples": {"type": "integer", "minimum": 8},
            "smale": {"type": "boolean"}}},
        "continuation": {"type": "object", "properties": {
            "f1": _EXPR_SLOT, "f2": _EXPR_SLOT, "C": {"type": "number", "exclusiveMinimum": 0},
            "samples": {"type": "integer", "minimum": 8}}, "required": ["f1", "f2"]},
        "graft": {"type": "object", "properties": {
            "f1": _EXPR_SLOT, "f2": _EXPR_SLOT, "samples": {"type": "integer", "minimum": 8},
            "map": {"type": "object", "properties": {
                "kind": {"enum": ["identity", "linear", "constant"]},
                "matrix": {"type": "array"}, "offset": {"type": "array"},
                "point": {"type": "array"}}, "required": ["kind"]}},
            "required": ["f1", "f2", "map"]},
        "square": {"type": "object", "properties": {
            "f1": _EXPR_SLOT, "f2": _EXPR_SLOT, "f3": _EXPR_SLOT,
            "grid": {"type": "integer", "minimum": 16},
            "samples": {"type": "integer", "minimum": 8}}},
        "relative": {"type": "object", "properties": {
            "h": _EXPR_SLOT,
            "slab": {"type": "object"},
            "base": {"type": "object", "properties": {
                "kind": {"enum": ["cp", "neg_inf", "pos_inf"]},
                "min": {"type": "integer"}, "layer": {"type": "integer"}},
                "required": ["kind", "min"]},
            "max_len": {"type": "integer", "minimum": 0, "maximum": 12}},
            "required": ["h", "slab", "base"]},
    },
    "required": ["schema", "name"],
}


class CliError(Exception):
    pass


# -- io helpers ------------------------------------------------------------

def load_scenario(path):
    doc = json.loads(Path(path).read_text())
    try:
        jsonschema.validate(doc, SCENARIO_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise CliError(f"invalid scenario: {exc.message}")
    return doc


def scenario_digest(doc) -> str:
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]


def dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=True) + "\n"


class Writer:
    def __init__(self, out: Path, scenario, seed: int):
        self.out = out
        self.meta = {"tool": {"name": "morse_pi1", "version": __version__},
                     "scenario": scenario.get("name", ""), "scenario_hash": scenario_digest(scenario),
                     "seed": seed}
        out.mkdir(parents=True, exist_ok=True)

    def json(self, name, schema, payload):
        doc = dict(self.meta, schema=schema, payload=payload)
        (self.out / name).write_text(dump(doc))

    def text(self, name, text):
        (self.out / name).write_text(text)


def _error_payload(exc):
    d = {"error": type(exc).__name__, "message": str(exc)}
    for attr in ("point", "eigenvalues", "theta", "cp", "disk", "position"):
        if hasattr(exc, attr):
            v = getattr(exc, attr)
            d[attr] = list(v) if isinstance(v, tuple) else v
    return d


def _field(manifold_doc, src):
    from .geometry import ExprField, Manifold

    return ExprField(Manifold.from_json(manifold_doc), src)


def _options(sc):
    o = sc.get("options", {})
    return o.get("seeds_per_axis", 8), o.get("samples", 512), o.get("smale", True)


def _analyze(sc, src):
    from .mscomplex import analyze

    seeds, samples, smale = _options(sc)
    return analyze(_field(sc.get("manifold", {"kind": "torus"}), src), seeds_per_axis=seeds,
                   samples=samples, smale=smale)


def _threads():
    try:
        return max(1, int(os.environ.get("MORSE_PI1_THREADS", "1")))
    except ValueError:
        return 1


# -- commands --------------------------------------------------------------

def cmd_analyze(sc, args, w: Writer):
    from .pi1 import abelianization, presentation

    if "field" not in sc:
        raise CliError("analyze needs a top-level 'field'")
    data = _analyze(sc, sc["field"])
    pres = presentation(data)
    w.json("complex.json", "mscomplex/v1", data.to_json())
    w.json("pi1.json", "pi1/v1", dict(pres.to_json(), abelianization=str(abelianization(pres))))
    if args.plot:
        from .continuation import unstable_curve
        from .plot import complex_svg

        curves = {s.id: unstable_curve(data.dynamics, data.cp_by_id[s.through])[0] for s in data.steps}
        w.text("plot.svg", complex_svg(data, curves, sc.get("name", "")))
    return EXIT_OK


def _verdict_exit(counts):
    if counts.get("Nontrivial"):
        return EXIT_ERROR
    if counts.get("Unknown"):
        return EXIT_INCONCLUSIVE
    return EXIT_OK


def _stepmap_payload(sm):
    from .pi1 import presentation

    d = sm.to_json()
    try:
        d["abelian_matrix"] = sm.abelian_matrix(presentation(sm.source), presentation(sm.target))
    except Exception:
        d["abelian_matrix"] = None
    return d


def _quotient_report(sm, budget):
    from .continuation import verify_theorem_quotient
    from .mscomplex import word_str

    q = verify_theorem_quotient(sm, max_states=budget, strict=False)
    rows = [{"disk": r["disk"], "image": word_str(r["image"]), "verdict": r["verdict"].kind}
            for r in q["rows"]]
    return {"counts": q["counts"], "rows": rows}


def _combinatorial(path):
    from .continuation import StepMap
    from .mscomplex import MorseComplexData

    doc = json.loads(Path(path).read_text())
    cxs = {k: MorseComplexData.from_json(v) for k, v in doc["complexes"].items()}
    maps = {}
    for name, m in doc.get("maps", {}).items():
        maps[name] = StepMap.from_json(m["stepmap"], cxs[m["source"]], cxs[m["target"]])
    return cxs, maps, doc


def cmd_continue(sc, args, w: Writer):
    from .continuation import continuation_map, sweep_C
    from .geometry import InterpolationSpec, build_interpolation

    if args.from_json:
        _, maps, _ = _combinatorial(args.from_json)
        sm = maps["phi"]
    else:
        c = sc.get("continuation") or {}
        if not c:
            raise CliError("continue needs a 'continuation' section")
        m = sc.get("manifold", {"kind": "torus"})
        f1, f2 = _field(m, c["f1"]), _field(m, c["f2"])
        d1, d2 = _analyze(sc, c["f1"]), _analyze(sc, c["f2"])
        C = c.get("C") or sweep_C(f1, f2)
        F = build_interpolation(InterpolationSpec(f1, f2, C=C))
        sm = continuation_map(d1, d2, F, samples=c.get("samples", 96))
    rep = _quotient_report(sm, args.budget)
    w.json("stepmap.json", "stepmap/v1", _stepmap_payload(sm))
    w.json("report.json", "stepmap/v1", rep)
    if args.plot and "walls" in sm.details:
        from .plot import strip_svg

        walls = sm.details["walls"]
        xs = [j / 100 for j in range(101)]
        series = {f"step {sid}": [sum(1 for t, _, _ in walls[sid] if t <= x) for x in xs]
                  for sid in sorted(walls)}
        w.text("plot.svg", strip_svg(xs, series, [t for sid in walls for t, _, _ in walls[sid]],
                                     "position along the unstable curve", "walls crossed"))
    return _verdict_exit(rep["counts"])


def _graft_spec(doc, seed):
    from .continuation import constant_graft, identity_graft, linear_torus_graft

    kind = doc["kind"]
    if kind == "identity":
        return identity_graft(seed)
    if kind == "linear":
        return linear_torus_graft(doc["matrix"], tuple(doc.get("offset", (0.0, 0.0))), seed)
    return constant_graft(doc["point"], seed)


def cmd_graft(sc, args, w: Writer):
    from .continuation import GraftedFlow, dimension_check, grafted_map
    from .functoriality import det2
    from .geometry import DEFAULT_PROFILE, ProfileField

    if args.from_json:
        _, maps, _ = _combinatorial(args.from_json)
        sm, dims = maps["phi"], None
    else:
        g = sc.get("graft") or {}
        if not g:
            raise CliError("graft needs a 'graft' section")
        m = sc.get("manifold", {"kind": "torus"})
        f1, f2 = _field(m, g["f1"]), _field(m, g["f2"])
        d1, d2 = _analyze(sc, g["f1"]), _analyze(sc, g["f2"])
        F1, F2 = ProfileField(f1, 1.0, DEFAULT_PROFILE), ProfileField(f2, 1.0, DEFAULT_PROFILE)
        spec = _graft_spec(g["map"], args.seed)
        flow = GraftedFlow(F1, F2, spec, d2)
        sm = grafted_map(d1, d2, F1, F2, spec, samples=g.get("samples", 96), flow=flow)
        dims = dimension_check(d1, d2, F1, F2, spec, flow=flow)
    rep = _quotient_report(sm, args.budget)
    M = _stepmap_payload(sm)["abelian_matrix"]
    rep["abelian_matrix"] = M
    if M and len(M) == 2 and len(M[0]) == 2:
        rep["det"], rep["trace"] = det2(M), M[0][0] + M[1][1]
    if dims is not None:
        rep["dimension_check"] = {"anomalies": len(dims["anomalies"]), "entries": len(dims["entries"])}
    w.json("stepmap.json", "stepmap/v1", _stepmap_payload(sm))
    w.json("report.json", "stepmap/v1", rep)
    code = _verdict_exit(rep["counts"])
    if dims is not None and dims["anomalies"]:
        code = EXIT_ERROR
    return code


def cmd_square(sc, args, w: Writer):
    from .functoriality import (InconclusiveBudget, SquareFamily, SquareSpec, build_square,
                                square_C, sweep_lambda, verify_diagram)

    sweep = None
    if args.from_json:
        _, maps, _ = _combinatorial(args.from_json)
        phi12, phi23, phi13 = maps["phi12"], maps["phi23"], maps["phi13"]
    else:
        q = sc.get("square") or {}
        if not q:
            raise CliError("square needs a 'square' section")
        from .continuation import continuation_map, sweep_C
        from .geometry import InterpolationSpec, build_interpolation

        m = sc.get("manifold", {"kind": "torus"})
        fs = [_field(m, q[k]) for k in ("f1", "f2", "f3")]
        ds = [_analyze(sc, q[k]) for k in ("f1", "f2", "f3")]
        F = build_square(SquareSpec(*fs, square_C(*fs)))
        fam = SquareFamily(F, ds[0], ds[2], samples=q.get("samples", 48))
        sweep = sweep_lambda(F, q.get("grid", 16), ds[0], ds[2], family=fam, workers=_threads())

        def edge(i, j):
            E = build_interpolation(InterpolationSpec(fs[i], fs[j], C=sweep_C(fs[i], fs[j])))
            return continuation_map(ds[i], ds[j], E)

        phi12, phi23, phi13 = edge(0, 1), edge(1, 2), edge(0, 2)
        w.json("sweep.json", "sweep/v1", sweep.to_json())
        if args.plot:
            from .plot import strip_svg

            series = {f"step {sid}": [len(mm.images[sid]) for mm in sweep.maps]
                      for sid in sorted(sweep.maps[0].images)}
            w.text("plot.svg", strip_svg(sweep.lambdas, series, [x.lam for x in sweep.walls],
                                         "lambda", "image lengths"))
    try:
        v = verify_diagram(sweep, phi12, phi23, phi13, max_states=args.budget)
        rep = {"verdict": v.to_json(), "inconclusive_walls": sweep.inconclusive if sweep else []}
        code = EXIT_OK if v.kind == "Commutes" else EXIT_ERROR
        if sweep is not None and sweep.inconclusive:
            code = EXIT_INCONCLUSIVE
    except InconclusiveBudget as exc:
        rep = {"verdict": {"kind": "Unknown", "reason": str(exc)}}
        code = EXIT_INCONCLUSIVE
    rep["maps"] = {n: _stepmap_payload(x) for n, x in
                   (("phi12", phi12), ("phi23", phi23), ("phi13", phi13))}
    w.json("report.json", "sweep/v1", rep)
    return code


def _slab(doc, sc):
    from .mscomplex import sphere_complex, torus_complex

    if "builtin" in doc:
        return {"torus": torus_complex, "sphere": sphere_complex}[doc["builtin"]](), None
    m = sc.get("manifold", {"kind": "torus"})
    return _analyze(sc, doc["field"]), _field(m, doc["field"])


def cmd_relative(sc, args, w: Writer):
    from .relpi1 import (InterpolationProfile, RelEndpoint, build_relative_complex,
                         classes_report, rel_classes)

    r = sc.get("relative") or {}
    if not r:
        raise CliError("relative needs a 'relative' section")
    data, fld = _slab(r["slab"], sc)
    prof = InterpolationProfile.from_expr(r["h"], data, fields=fld)
    cx = build_relative_complex(prof)
    b = r["base"]
    base = RelEndpoint(b["kind"], b["min"], b.get("layer"))
    classes = rel_classes(cx, base, r.get("max_len", 12), max_states=args.budget)
    w.json("relpi1.json", "relpi1/v1", classes_report(cx, base, classes))
    return EXIT_OK


COMMANDS = {"analyze": cmd_analyze, "continue": cmd_continue, "graft": cmd_graft,
            "square": cmd_square, "relative": cmd_relative}


def build_parser():
    p = argparse.ArgumentParser(prog="morse-pi1", description="Morse fundamental groups and "
                                "continuation maps on model surfaces.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="scenario JSON (scenario/v1)")
        s.add_argument("--out", default="out", help="output directory")
        s.add_argument("--plot", action="store_true", help="also write plot.svg")
        s.add_argument("--strict-smale", action="store_true",
                       help="exit 2 when the Smale heuristic finds a saddle connection")
        s.add_argument("--seed", type=int, default=0)
        s.add_argument("--budget", type=int, default=20_000, help="word-problem state budget")
        s.add_argument("--from-json", default=None, help="combinatorial input instead of numerics")
    return p


def main(argv=None) -> int:
    from .flow import NotSmaleWarning

    args = build_parser().parse_args(argv)
    out = Path(args.out)
    try:
        sc = load_scenario(args.config)
    except (OSError, ValueError, CliError) as exc:
        out.mkdir(parents=True, exist_ok=True)
        (out / "error.json").write_text(dump(_error_payload(exc)))
        print(dump(_error_payload(exc)), end="", file=sys.stderr)
        return EXIT_ERROR
    w = Writer(out, sc, args.seed)
    try:
        with warnings.catch_warnings():
            if args.strict_smale:
                warnings.simplefilter("error", NotSmaleWarning)
            return COMMANDS[args.command](sc, args, w)
    except NotSmaleWarning as exc:
        w.json("error.json", "error/v1", _error_payload(exc))
        return EXIT_SMALE
    except Exception as exc:     # every module error becomes a diagnostic document
        w.json("error.json", "error/v1", _error_payload(exc))
        print(dump(_error_payload(exc)), end="", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
