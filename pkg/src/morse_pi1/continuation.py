"""Continuation step-maps on M x R, plain and grafted."""
from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Callable, Optional

from .flow import Dynamics, FlowOptions, unstable_frame
from .geometry import InterpolationField, ProfileField
from .mscomplex import (MorseComplexData, NotConsecutive, UnresolvedWall, walk_walls, word_str)
from .pi1 import (Presentation, exponent_vector, free_reduce, inverse, is_trivial, presentation,
                  spanning_tree)

SCHEMA = "stepmap/v1"


class ContinuationError(Exception):
    pass


class EscapedUnexpectedly(ContinuationError):
    pass


class EndpointMismatch(ContinuationError):
    pass


class WallUnresolved(ContinuationError):
    pass


class TheoremViolation(ContinuationError):
    def __init__(self, disk, certificate):
        self.disk = disk
        self.certificate = certificate
        super().__init__(f"image of the boundary of disk {disk} is nontrivial: {certificate}")


class GraftNontransverse(ContinuationError):
    pass


# -- step maps -------------------------------------------------------------

@dataclass
class StepMap:
    source: MorseComplexData
    target: MorseComplexData
    images: dict                   # step id -> word in target steps
    transport: dict                # source minimum -> target minimum
    kind: str = "continuation"
    details: dict = field(default_factory=dict)

    @property
    def base_transport(self):
        return self.source.base, self.transport[self.source.base]

    def apply(self, word):
        out = []
        for sid, e in word:
            img = self.images[sid]
            out.extend(img if e > 0 else inverse(img))
        return free_reduce(out)

    def check_coherence(self):
        mins_t = set(self.target.minima)
        for v in self.source.minima:
            if self.transport.get(v) not in mins_t:
                raise EndpointMismatch(f"minimum {v} has no transport")
        for s in self.source.steps:
            img = tuple(self.images.get(s.id, ()))
            a, b = self.transport[s.start], self.transport[s.end]
            try:
                end = self.target.check_consecutive(img, start=a)
            except NotConsecutive as exc:
                raise EndpointMismatch(f"image of step {s.id} is not consecutive: {exc}")
            if (end if img else a) != b:
                raise EndpointMismatch(f"image of step {s.id} ends at {end if img else a}, expected {b}")
        return True

    def loop_image(self, word):
        """Image of a loop at the source base, conjugated back to the target base."""
        _, paths = spanning_tree(self.target)
        c = paths[self.transport[self.source.base]]
        return free_reduce(c + self.apply(word) + inverse(c))

    def generator_loops(self, pres1: Optional[Presentation] = None):
        pres1 = pres1 or presentation(self.source)
        _, paths = spanning_tree(self.source)
        out = {}
        for g in pres1.generators:
            s = self.source.step(g)
            out[g] = free_reduce(paths[s.start] + ((g, 1),) + inverse(paths[s.end]))
        return out

    def abelian_matrix(self, pres1=None, pres2=None):
        """Integer matrix of the induced map on H1, columns indexed by source generators."""
        pres1 = pres1 or presentation(self.source)
        pres2 = pres2 or presentation(self.target)
        loops = self.generator_loops(pres1)
        cols = [exponent_vector(pres2, pres2.rewrite(self.loop_image(loops[g])))
                for g in pres1.generators]
        return [[cols[j][i] for j in range(len(cols))] for i in range(len(pres2.generators))]

    def to_json(self):
        return {
            "schema": SCHEMA,
            "kind": self.kind,
            "images": [{"step": sid, "word": [list(x) for x in self.images[sid]],
                        "text": word_str(self.images[sid])} for sid in sorted(self.images)],
            "transport": [[a, self.transport[a]] for a in sorted(self.transport)],
        }

    @staticmethod
    def from_json(doc, source, target):
        if doc.get("schema", SCHEMA) != SCHEMA:
            raise ContinuationError(f"unsupported schema {doc.get('schema')}")
        images = {int(r["step"]): tuple((int(a), int(b)) for a, b in r["word"]) for r in doc["images"]}
        transport = {int(a): int(b) for a, b in doc["transport"]}
        return StepMap(source, target, images, transport, doc.get("kind", "combinatorial"))


def identity_map(data: MorseComplexData) -> StepMap:
    return StepMap(data, data, {s.id: ((s.id, 1),) for s in data.steps},
                   {m: m for m in data.minima}, "identity")


def compose(g: StepMap, f: StepMap) -> StepMap:
    """g after f."""
    images = {sid: g.apply(w) for sid, w in f.images.items()}
    transport = {v: g.transport[w] for v, w in f.transport.items()}
    return StepMap(f.source, g.target, images, transport, "composite")


# -- shared sweep machinery ------------------------------------------------

def _match(data: MorseComplexData, dyn: Dynamics, s_value: float):
    """F critical points on the slab s = s_value -> critical points of the slab function."""
    k = dyn.m.base_dim
    base = dyn.m.base
    out = {}
    for c in dyn.cps:
        if any(abs(v - s_value) > 1e-6 for v in c.coords[k:]):
            continue
        q = c.coords[:k]
        best = min(data.critical_points, key=lambda d: base.distance(d.coords, q))
        if base.distance(best.coords, q) < 1e-5:
            out[c.id] = best.id
    return out


class _Target:
    """Reads outcomes on the target side: landing labels and wall mediators."""

    def __init__(self, dyn: Dynamics, data: MorseComplexData, s_value: float = 1.0):
        self.dyn, self.data = dyn, data
        self.cp_map = _match(data, dyn, s_value)
        self.by_through = {s.through: s for s in data.steps}
        self._frames = {}

    def label(self, out):
        if out.kind != "ConvergedTo" or out.cp not in self.cp_map:
            return (out.kind, out.cp, out.direction)
        return (self.cp_map[out.cp], out.lift)

    def mediator(self, cid):
        if cid not in self._frames:
            c = self.dyn.by_id[cid]
            tid = self.cp_map.get(cid)
            if tid not in self.by_through:
                raise UnresolvedWall(0.0, f"mediator {cid} is not a target saddle")
            self._frames[cid] = (c.coords, unstable_frame(self.dyn.field, c)[0],
                                 self.dyn.track_k)
        return self._frames[cid]

    def step_of(self, cid):
        return self.by_through[self.cp_map[cid]].id


def _assemble(target: _Target, run, thetas, start_min, end_min, what):
    try:
        walls, labels = walk_walls(run, thetas, target.label, target.mediator, target.dyn.m,
                                   closed=False)
    except UnresolvedWall as exc:
        raise WallUnresolved(f"{what}: {exc}")
    for lab in (labels[0], labels[-1]):
        if len(lab) != 2:
            raise EscapedUnexpectedly(f"{what}: sweep sample ended with {lab}")
    if labels[0][0] != start_min or labels[-1][0] != end_min:
        raise EndpointMismatch(f"{what}: sweep runs from {labels[0][0]} to {labels[-1][0]}, "
                               f"expected {start_min} to {end_min}")
    word = tuple((target.step_of(w.cp), w.sign) for w in walls)
    return word, walls, labels


def _source_frame(dyn: Dynamics, cp):
    """(u along M, e_s) at a source point (x, 0) of index 2."""
    vs = unstable_frame(dyn.field, cp)
    k = dyn.m.base_dim
    es = max(vs, key=lambda v: abs(v[k]))
    u = [v for v in vs if v is not es][0]
    es = tuple(0.0 for _ in range(k)) + (1.0,) + tuple(0.0 for _ in es[k + 1:])
    return u, es


# -- unstable curves -------------------------------------------------------

def unstable_curve(dyn: Dynamics, x):
    """Polyline of the unstable curve of the saddle x, from its -u end to its +u end,
    with cumulative arclength.  Coordinates are unwrapped and start at x."""
    c = min(dyn.cps, key=lambda d: dyn.m.distance(d.coords, x.coords))
    u = unstable_frame(dyn.field, c)[0]
    lo = dyn.integrate(dyn.seed(c, [-v for v in u]))
    hi = dyn.integrate(dyn.seed(c, u))
    pts = list(reversed(lo.path)) + [c.coords] + list(hi.path)
    arc = [0.0]
    for a, b in zip(pts, pts[1:]):
        arc.append(arc[-1] + math.dist(a, b))
    return pts, arc


def point_at(pts, arc, ell):
    lo, hi = 0, len(arc) - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if arc[mid] <= ell:
            lo = mid
        else:
            hi = mid
    seg = arc[hi] - arc[lo]
    w = 0.0 if seg == 0 else (ell - arc[lo]) / seg
    return tuple(a + w * (b - a) for a, b in zip(pts[lo], pts[hi]))


# -- plain continuation ----------------------------------------------------

def sweep_C(f1, f2, eps: float = 0.1, h: str = None, factor: float = 2.0) -> float:
    """A constant above the pick_C bound whose s-expansion outpaces the slices.

    Seeds leave (x, 0) along s at rate |h''(0)| C and along M at the largest
    unstable eigenvalue; if M wins, the sweep parameter would have to be
    resolved beyond double precision.
    """
    from .flow import find_critical_points
    from .geometry import DEFAULT_PROFILE, InterpolationSpec, Profile, pick_C

    h = h or DEFAULT_PROFILE
    lam = max(abs(v) for f in (f1, f2) for c in find_critical_points(f) for v in c.eigenvalues)
    hdd = abs(Profile(h).all(0.0)[2])
    return max(pick_C(InterpolationSpec(f1, f2, eps=eps, h=h)), factor * lam / hdd)


def transport_base(dyn: Dynamics, target: _Target, y_F: int):
    """Follow the positive-s unstable trajectory of (y, 0)."""
    c = dyn.by_id[y_F]
    k = dyn.m.base_dim
    e = [0.0] * len(c.coords)
    e[k] = 1.0
    out = dyn.integrate(dyn.seed(c, e))
    lab = target.label(out)
    if len(lab) != 2:
        raise EscapedUnexpectedly(f"positive trajectory of {c.coords} ended with {out.kind}")
    return lab


def continuation_map(data1: MorseComplexData, data2: MorseComplexData, F: InterpolationField,
                     samples: int = 96, opts: Optional[FlowOptions] = None,
                     dyn: Optional[Dynamics] = None) -> StepMap:
    """Read the image of every step off the positive half of the unstable disk of (x, 0).

    For s <= eps the field is f1 + C h, a product, so the half disk meets the
    slice s* = eps/2 exactly in (unstable curve of x) x {s*}.  The sweep runs
    along that curve by arclength from the start side to the end side.
    """
    dyn = dyn or Dynamics(F, None, opts)
    base = Dynamics(F.f1, None, opts)
    s_star = 0.5 * F.eps
    src = {v: c for c, v in _match(data1, dyn, 0.0).items()}
    target = _Target(dyn, data2, 1.0)
    transport = {}
    for y in data1.minima:
        transport[y] = transport_base(dyn, target, src[y])[0]
    images, walls_out = {}, {}
    for s in data1.steps:
        pts, arc = unstable_curve(base, data1.cp_by_id[s.through])
        L = arc[-1]

        def run(ell, pts=pts, arc=arc):
            return dyn.integrate(point_at(pts, arc, ell) + (s_star,), track=True)

        thetas = [L * (j + 0.5) / samples for j in range(samples)]
        word, walls, _ = _assemble(target, run, thetas, transport[s.start], transport[s.end],
                                   f"step {s.id}")
        images[s.id] = word
        walls_out[s.id] = [(w.theta / L, w.cp, w.sign) for w in walls]
    sm = StepMap(data1, data2, images, transport, "continuation", {"walls": walls_out, "C": F.C})
    sm.check_coherence()
    return sm


def verify_theorem_quotient(sm: StepMap, max_len: int = 64, max_states: int = 100_000,
                            strict: bool = True):
    """Every source disk boundary must map to a trivial loop."""
    sm.check_coherence()
    pres2 = presentation(sm.target)
    _, paths = spanning_tree(sm.target)
    rows = []
    for d in sm.source.disk_boundaries:
        v = sm.source.endpoints(d.word[0])[0] if d.word else sm.source.base
        c = paths[sm.transport[v]]
        loop = free_reduce(c + sm.apply(d.word) + inverse(c))
        verdict = is_trivial(loop, pres2, max_len, max_states)
        rows.append({"disk": d.of, "image": loop, "verdict": verdict})
        if strict and verdict.kind == "Nontrivial":
            raise TheoremViolation(d.of, verdict.certificate)
    counts = {k: sum(r["verdict"].kind == k for r in rows) for k in ("Trivial", "Nontrivial", "Unknown")}
    return {"rows": rows, "counts": counts}


# -- grafting --------------------------------------------------------------

@dataclass
class GraftSpec:
    H: Callable
    description: dict
    jitter_seed: int = 0
    slab: float = 0.5


def linear_torus_graft(matrix, offset=(0.0, 0.0), jitter_seed: int = 0) -> GraftSpec:
    (a, b), (c, d) = matrix
    if any(v != int(v) for v in (a, b, c, d)):
        raise ValueError("torus maps need an integer matrix")

    def H(p):
        return (a * p[0] + b * p[1] + offset[0], c * p[0] + d * p[1] + offset[1])

    return GraftSpec(H, {"type": "linear", "matrix": [[a, b], [c, d]], "offset": list(offset)},
                     jitter_seed)


def constant_graft(point, jitter_seed: int = 0) -> GraftSpec:
    pt = tuple(point)
    return GraftSpec(lambda p: pt, {"type": "constant", "point": list(pt)}, jitter_seed)


def identity_graft(jitter_seed: int = 0) -> GraftSpec:
    return GraftSpec(lambda p: tuple(p), {"type": "identity"}, jitter_seed)


class GraftedFlow:
    """Grafted trajectories: X x R up to the slab, through H, then Y x R."""

    def __init__(self, F1: ProfileField, F2: ProfileField, graft: GraftSpec,
                 data2: MorseComplexData, opts: Optional[FlowOptions] = None):
        self.F1, self.F2, self.graft = F1, F2, graft
        self.dyn1 = Dynamics(F1, None, opts)
        self.dyn2 = Dynamics(F2, None, opts)
        self.base1 = Dynamics(F1.f, None, opts)
        self.target = _Target(self.dyn2, data2, 1.0)
        self.k = self.dyn1.m.base_dim
        # points on s = 0 are never approached from the slab; with M-projected
        # tracking they would shadow their partners on s = 1
        self.low = tuple(c.id for c in self.dyn2.cps if abs(c.coords[self.k]) < 1e-6)

    def teleport(self, p):
        q = self.graft.H(tuple(p[:self.k]))
        return self.dyn2.m.retract(tuple(q) + (p[self.k],))

    def run_from(self, p0):
        out = self.dyn1.integrate(p0, slab=self.graft.slab)
        if out.kind != "CrossedSlab":
            raise EscapedUnexpectedly(f"trajectory from {p0} never reached the graft slab ({out.kind})")
        return self.dyn2.integrate(self.teleport(out.end), track=True, exclude=self.low)

    def run_from_slab(self, m_point):
        return self.dyn2.integrate(self.teleport(tuple(m_point) + (self.graft.slab,)), track=True,
                                   exclude=self.low)

    def transport(self, y_F1: int):
        c = self.dyn1.by_id[y_F1]
        e = [0.0] * len(c.coords)
        e[self.k] = 1.0
        lab = self.target.label(self.run_from(self.dyn1.seed(c, e)))
        if len(lab) != 2:
            raise EscapedUnexpectedly(f"grafted trajectory from {c.coords} ended with {lab}")
        return lab

    def slab_trace(self, x_f1):
        """The field on X x R is split, so the unstable disk of (x, 0) meets the
        slab exactly in (unstable curve of x) x {slab}."""
        return unstable_curve(self.base1, x_f1)


def _jittered(samples, seed):
    rng = random.Random(seed)
    d = rng.uniform(-0.25, 0.25) if seed else 0.0
    return [(j + 0.5 + d) / samples for j in range(samples)]


def grafted_map(data1: MorseComplexData, data2: MorseComplexData, F1: ProfileField,
                F2: ProfileField, graft: GraftSpec, samples: int = 96,
                opts: Optional[FlowOptions] = None, flow: Optional[GraftedFlow] = None) -> StepMap:
    gf = flow or GraftedFlow(F1, F2, graft, data2, opts)
    src = {v: c for c, v in _match(data1, gf.dyn1, 0.0).items()}
    transport = {y: gf.transport(src[y])[0] for y in data1.minima}
    images, walls_out = {}, {}
    fr = _jittered(samples, graft.jitter_seed)
    for s in data1.steps:
        x = data1.cp_by_id[s.through]
        pts, arc = gf.slab_trace(x)
        L = arc[-1]

        def run(ell, pts=pts, arc=arc):
            return gf.run_from_slab(point_at(pts, arc, ell))

        try:
            word, walls, _ = _assemble(gf.target, run, [L * f for f in fr], transport[s.start],
                                       transport[s.end], f"step {s.id}")
        except WallUnresolved as exc:
            raise GraftNontransverse(str(exc))
        images[s.id] = word
        walls_out[s.id] = [(w.theta / L, w.cp, w.sign) for w in walls]
    sm = StepMap(data1, data2, images, transport, "grafted",
                 {"walls": walls_out, "graft": graft.description})
    sm.check_coherence()
    return sm


def dimension_check(data1: MorseComplexData, data2: MorseComplexData, F1: ProfileField,
                    F2: ProfileField, graft: GraftSpec, samples: int = 64,
                    opts: Optional[FlowOptions] = None, flow: Optional[GraftedFlow] = None):
    """Rigid grafted connections may only join points whose F-indices differ by one."""
    gf = flow or GraftedFlow(F1, F2, graft, data2, opts)
    k = gf.k
    entries, anomalies = [], []
    idx2 = {c.id: c.index for c in gf.dyn2.cps}
    for c in gf.dyn1.cps:
        if abs(c.coords[k]) > 1e-6:
            continue
        if c.index == 1:
            e = [0.0] * len(c.coords)
            e[k] = 1.0
            out = gf.run_from(gf.dyn1.seed(c, e))
            tgt = out.cp
            diff = c.index - idx2.get(tgt, -99)
            entries.append({"source": c.id, "source_index": c.index, "target": tgt,
                            "target_index": idx2.get(tgt), "kind": "rigid", "count": 1})
            if out.kind != "ConvergedTo" or diff != 1:
                anomalies.append({"source": c.id, "outcome": out.kind, "difference": diff})
        elif c.index == 2:
            x = min(data1.critical_points, key=lambda d: gf.dyn1.m.base.distance(d.coords, c.coords[:k]))
            pts, arc = gf.slab_trace(x)
            L = arc[-1]
            thetas = [L * f for f in _jittered(samples, graft.jitter_seed)]

            def run(ell, pts=pts, arc=arc):
                return gf.run_from_slab(point_at(pts, arc, ell))

            outs = [run(t) for t in thetas]
            fam = {}
            for o in outs:
                if o.kind != "ConvergedTo":
                    anomalies.append({"source": c.id, "outcome": o.kind, "difference": None})
                    continue
                fam[o.cp] = fam.get(o.cp, 0) + 1
            for tgt in sorted(fam):
                d = c.index - idx2[tgt]
                entries.append({"source": c.id, "source_index": c.index, "target": tgt,
                                "target_index": idx2[tgt], "kind": "family", "count": fam[tgt]})
                if d != 2:
                    anomalies.append({"source": c.id, "target": tgt, "difference": d, "kind": "family"})
            walls, _ = walk_walls(run, thetas, gf.target.label, gf.target.mediator, gf.dyn2.m,
                                  closed=False, outcomes=outs)
            rigid = {}
            for w in walls:
                rigid[w.cp] = rigid.get(w.cp, 0) + 1
            for tgt in sorted(rigid):
                d = c.index - idx2[tgt]
                entries.append({"source": c.id, "source_index": c.index, "target": tgt,
                                "target_index": idx2[tgt], "kind": "rigid", "count": rigid[tgt]})
                if d != 1:
                    anomalies.append({"source": c.id, "target": tgt, "difference": d, "kind": "rigid"})
    return {"entries": entries, "anomalies": anomalies,
            "note": "index-3 sources are not swept"}
