"""Relative Morse fundamental group of interpolation-type functions on M x R.

The complex has one layer per critical point p_i of the profile h, plus a
layer at -inf (resp. +inf) when h tends to -inf there.  Slab functions sit
on every layer; F~ is assumed to be a product on each slab.  Layers at
minima of h carry the slab complex unchanged, layers at maxima contribute
vertical steps (one per slab minimum) and vertical disks (one per slab
saddle), and the infinity layers carry the slab complex as "steps at
infinity".
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .continuation import StepMap, identity_map
from .expr import diff, evaluate, parse
from .flow import CriticalPoint
from .mscomplex import DiskBoundary, MorseComplexData, NotConsecutive, Step, step_name
from .pi1 import (Presentation, abelian_image, free_reduce, inverse, is_trivial, presentation,
                  rotations, spanning_tree)

SCHEMA = "relpi1/v1"
NEG, POS = "neg_inf", "pos_inf"


class RelError(Exception):
    pass


class ProfileInvalid(RelError):
    pass


class BudgetExceeded(RelError):
    pass


class InconclusiveBudget(RelError):
    pass


# -- profiles --------------------------------------------------------------

def _h_critical_points(src: str, lo=-50.0, hi=50.0, n=20001):
    e = parse(src)
    d1, d2 = diff(e, "s"), diff(diff(e, "s"), "s")

    def g(x):
        return evaluate(d1, {"s": x})

    xs = [lo + (hi - lo) * i / (n - 1) for i in range(n)]
    out = []
    prev = g(xs[0])
    for a, b in zip(xs, xs[1:]):
        gb = g(b)
        if prev == 0.0 or prev * gb < 0:
            x0, x1 = a, b
            for _ in range(80):
                mid = 0.5 * (x0 + x1)
                if g(x0) * g(mid) <= 0:
                    x1 = mid
                else:
                    x0 = mid
            p = 0.5 * (x0 + x1)
            c = evaluate(d2, {"s": p})
            if abs(c) < 1e-9:
                raise ProfileInvalid(f"degenerate critical point of h at {p}")
            if not out or abs(out[-1][0] - p) > 1e-6:
                out.append((round(p, 9) + 0.0, "max" if c < 0 else "min"))
        prev = gb
    lim = (math.copysign(1, evaluate(e, {"s": -1e3})), math.copysign(1, evaluate(e, {"s": 1e3})))
    return out, lim


@dataclass
class InterpolationProfile:
    """h with tagged critical points, its limits at -inf/+inf (+1 or -1), and slab data.

    slabs[0] and slabs[k+1] are f_0 and f_{k+1}; slabs[i] sits at crit[i-1].
    connections[(i, j)] is the step map from slab i (a maximum of h) down to
    the neighbouring layer j; when absent, equal slabs use the identity and
    differing slabs with fields are connected by numerical continuation.
    """
    h: str
    crit: list
    limits: tuple
    slabs: list
    C: float = 1.0
    fields: Optional[list] = None
    connections: dict = field(default_factory=dict)

    @staticmethod
    def from_expr(h: str, slabs, C: float = 1.0, fields=None, connections=None):
        crit, lim = _h_critical_points(h)
        k = len(crit)
        if isinstance(slabs, MorseComplexData):
            slabs = [slabs] * (k + 2)
        if fields is not None and not isinstance(fields, (list, tuple)):
            fields = [fields] * (k + 2)
        prof = InterpolationProfile(h, crit, lim, list(slabs), C, fields, dict(connections or {}))
        return prof.validate()

    @property
    def k(self):
        return len(self.crit)

    def has_layer(self, i):
        if i == 0:
            return self.limits[0] < 0
        if i == self.k + 1:
            return self.limits[1] < 0
        return 1 <= i <= self.k

    def kind(self, i):
        if i == 0:
            return NEG
        if i == self.k + 1:
            return POS
        return self.crit[i - 1][1]

    def validate(self):
        k = self.k
        if len(self.slabs) != k + 2:
            raise ProfileInvalid(f"need {k + 2} slab complexes, got {len(self.slabs)}")
        tags = [t for _, t in self.crit]
        for a, b in zip(tags, tags[1:]):
            if a == b:
                raise ProfileInvalid("two consecutive critical points of h share a type")
        # h decreases into -inf before a first maximum, increases before a first minimum
        first = tags[0] if tags else None
        last = tags[-1] if tags else None
        if first is not None:
            if (first == "max") != (self.limits[0] < 0):
                raise ProfileInvalid("the limit at -inf does not match the first critical point")
            if (last == "max") != (self.limits[1] < 0):
                raise ProfileInvalid("the limit at +inf does not match the last critical point")
        elif self.limits[0] == self.limits[1]:
            raise ProfileInvalid("h without critical points must be monotone")
        if self.C <= 0:
            raise ProfileInvalid("C must be positive")
        return self

    def nature(self):
        return (self.limits[0] < 0, self.limits[1] < 0, tuple(t for _, t in self.crit))

    def describe(self):
        return {"h": self.h, "critical_points": [[p, t] for p, t in self.crit],
                "limits": ["-inf" if l < 0 else "+inf" for l in self.limits], "C": self.C}


@dataclass(frozen=True)
class RelEndpoint:
    """A minimum of F on a finite layer, or a formal point (min, -inf) / (min, +inf)."""
    kind: str           # "cp" | "neg_inf" | "pos_inf"
    min: int
    layer: Optional[int] = None

    def vertex(self, cx: "RelComplex"):
        if self.kind == NEG:
            layer = 0
        elif self.kind == POS:
            layer = cx.profile.k + 1
        else:
            layer = self.layer
        if not cx.profile.has_layer(layer):
            raise ProfileInvalid(f"no layer for endpoint {self}; formal endpoints need h -> -inf")
        key = (layer, self.min)
        if key not in cx.vertex_id:
            raise ProfileInvalid(f"{self} is not an index-0 point of F")
        return cx.vertex_id[key]


# -- the enlarged complex --------------------------------------------------

@dataclass(frozen=True)
class RelStep:
    id: int
    name: str
    start: int
    end: int
    layer: int
    through: int            # critical point id of the slab function
    side: Optional[str] = None

    def to_json(self):
        d = {"id": self.id, "name": self.name, "start": self.start, "end": self.end,
             "layer": self.layer, "through": self.through}
        if self.side:
            d["side"] = self.side
        return d


@dataclass
class RelComplex:
    profile: InterpolationProfile
    vertices: list              # (layer, min id)
    steps: list
    disks: list                 # (layer, cp id, word)
    provenance: str = "Handwritten"

    def __post_init__(self):
        self.vertex_id = {v: i for i, v in enumerate(self.vertices)}
        self.step_by_id = {s.id: s for s in self.steps}
        self.side = {}
        for i, (layer, _) in enumerate(self.vertices):
            if layer == 0:
                self.side[i] = NEG
            elif layer == self.profile.k + 1:
                self.side[i] = POS
        self._components()

    def _components(self):
        """Connected components of the infinity part, through infinity steps only."""
        parent = {v: v for v in self.side}

        def find(v):
            while parent[v] != v:
                parent[v] = parent[parent[v]]
                v = parent[v]
            return v

        for s in self.steps:
            if s.side:
                parent[find(s.start)] = find(s.end)
        roots = sorted({find(v) for v in self.side})
        self.component = {v: roots.index(find(v)) for v in self.side}
        self.component_side = {roots.index(r): self.side[r] for r in roots}

    def is_infinity(self, v):
        return v in self.side

    def endpoints(self, ss):
        s = self.step_by_id[ss[0]]
        return (s.start, s.end) if ss[1] > 0 else (s.end, s.start)

    def walk(self, word, start):
        cur = start
        for i, ss in enumerate(word):
            a, b = self.endpoints(ss)
            if a != cur:
                raise NotConsecutive(i, f"(expected start {cur}, got {a})")
            cur = b
        return cur

    def vertex_name(self, v):
        layer, m = self.vertices[v]
        return f"(m{m},{self.layer_tag(layer)})"

    def layer_tag(self, layer):
        if layer == 0:
            return "-inf"
        if layer == self.profile.k + 1:
            return "+inf"
        p = self.profile.crit[layer - 1][0]
        return f"{p:g}"

    def word_text(self, word):
        if not word:
            return "1"
        return " ".join(self.step_by_id[s].name + ("" if e > 0 else "^-1") for s, e in word)

    def plain(self) -> MorseComplexData:
        """The same cells as an ordinary complex (vertices become minima)."""
        cps = [CriticalPoint(i, (), 0, 0.0) for i in range(len(self.vertices))]
        steps = [Step(s.id, len(self.vertices) + s.id, s.start, s.end) for s in self.steps]
        off = len(self.vertices) + len(self.steps)
        cps += [CriticalPoint(len(self.vertices) + s.id, (), 1, 0.0) for s in self.steps]
        disks = []
        for i, (_, _, w) in enumerate(self.disks):
            cps.append(CriticalPoint(off + i, (), 2, 0.0))
            disks.append(DiskBoundary(off + i, w))
        return MorseComplexData(cps, steps, disks, 0, self.provenance)

    def to_json(self):
        return {
            "schema": SCHEMA,
            "provenance": self.provenance,
            "profile": self.profile.describe(),
            "vertices": [{"id": i, "layer": l, "min": m, "name": self.vertex_name(i),
                          **({"side": self.side[i]} if i in self.side else {})}
                         for i, (l, m) in enumerate(self.vertices)],
            "steps": [s.to_json() for s in self.steps],
            "disk_boundaries": [{"layer": l, "of": c, "word": [[s, e] for s, e in w],
                                 "text": self.word_text(w)} for l, c, w in self.disks],
        }


def _connection(profile: InterpolationProfile, i: int, j: int) -> StepMap:
    if (i, j) in profile.connections:
        return profile.connections[(i, j)]
    a, b = profile.slabs[i], profile.slabs[j]
    if a is b:
        return identity_map(a)
    fields = profile.fields
    if fields is None or fields[i] is None or fields[j] is None:
        raise ProfileInvalid(f"slabs {i} and {j} differ and no connecting data was supplied")
    if fields[i].describe() == fields[j].describe():
        return identity_map(a)
    from .continuation import continuation_map, sweep_C
    from .geometry import InterpolationSpec, build_interpolation

    F = build_interpolation(InterpolationSpec(fields[i], fields[j],
                                              C=sweep_C(fields[i], fields[j])))
    return continuation_map(a, b, F)


def build_relative_complex(profile: InterpolationProfile) -> RelComplex:
    k = profile.k
    layers = [i for i in range(k + 2) if profile.has_layer(i)]
    vertices = []
    for i in layers:
        if profile.kind(i) != "max":
            vertices += [(i, m) for m in profile.slabs[i].minima]
    vid = {v: n for n, v in enumerate(vertices)}
    steps, disks = [], []
    numeric = False
    single = {i: len(profile.slabs[i].minima) == 1 for i in layers}

    def slab_step_name(i, s):
        return f"{step_name(s.id)}[{_tag(profile, i)}]"

    local = {}   # (layer, slab step id) -> global step id
    for i in layers:
        if profile.kind(i) == "max":
            continue
        side = profile.kind(i) if profile.kind(i) in (NEG, POS) else None
        data = profile.slabs[i]
        for s in data.steps:
            g = len(steps)
            local[(i, s.id)] = g
            steps.append(RelStep(g, slab_step_name(i, s), vid[(i, s.start)], vid[(i, s.end)], i,
                                 s.through, side))
        for d in data.disk_boundaries:
            w = tuple((local[(i, sid)], e) for sid, e in d.word)
            if w:
                disks.append((i, d.of, w))

    for i in layers:
        if profile.kind(i) != "max":
            continue
        data = profile.slabs[i]
        left, right = _connection(profile, i, i - 1), _connection(profile, i, i + 1)
        numeric = numeric or left.kind == "continuation" or right.kind == "continuation"
        sigma = {}
        for m in data.minima:
            g = len(steps)
            name = "sigma" if single[i] and sum(profile.kind(j) == "max" for j in layers) == 1 \
                else f"sigma[m{m},{_tag(profile, i)}]"
            sigma[m] = g
            cp = data.cp_by_id[m]
            steps.append(RelStep(g, name, vid[(i - 1, left.transport[m])],
                                 vid[(i + 1, right.transport[m])], i, cp.id))
        # the unstable disk of (z, p_i) is (step of z) x (vertical segment):
        # left image, then up the end side, right image backwards, down the start side
        for s in data.steps:
            lw = tuple((local[(i - 1, sid)], e) for sid, e in left.images[s.id])
            rw = tuple((local[(i + 1, sid)], e) for sid, e in right.images[s.id])
            w = lw + ((sigma[s.end], 1),) + inverse(rw) + ((sigma[s.start], -1),)
            disks.append((i, s.through, w))
    cx = RelComplex(profile, vertices, steps, disks,
                    "Numerical" if numeric else "Handwritten")
    for _, _, w in cx.disks:
        a = cx.endpoints(w[0])[0]
        if cx.walk(w, a) != a:
            raise ProfileInvalid("a disk boundary does not close up")
    return cx


def _tag(profile, i):
    if i == 0:
        return "-inf"
    if i == profile.k + 1:
        return "+inf"
    return f"{profile.crit[i - 1][0]:g}"


# -- normalization and certificates ----------------------------------------

def rel_normalize(word, cx: RelComplex, base: int, trace: Optional[list] = None):
    """Rule (1) to a fixpoint, then drop trailing infinity steps (rule (3))."""
    word = tuple(word)
    end = cx.walk(word, base)
    if end != base and not cx.is_infinity(end):
        raise NotConsecutive(len(word), "(a relative path must end at the base or at infinity)")
    w = free_reduce(word)
    if trace is not None and w != word:
        trace.append(("cancel", len(word) - len(w)))
    while w and cx.step_by_id[w[-1][0]].side:
        if trace is not None:
            trace.append(("drop_infinity", w[-1]))
        w = w[:-1]
    return w


@dataclass
class _Certifier:
    cx: RelComplex
    base: int

    def __post_init__(self):
        data = self.cx.plain()
        self.data = data
        self.tree, self.paths = spanning_tree(data, self.base)
        self.pres = presentation(data, self.base)
        self._kpres = {}
        self._complete = None

    def end_type(self, v):
        if v == self.base and not self.cx.is_infinity(v):
            return "loop"
        c = self.cx.component[v]
        return f"{self.cx.component_side[c]}#{c}"

    def pres_for(self, v):
        if v == self.base and not self.cx.is_infinity(v):
            return self.pres
        c = self.cx.component[v]
        if c not in self._kpres:
            extra = tuple(self.pres.rewrite(((s.id, 1),)) for s in self.cx.steps
                          if s.side and self.cx.component[s.start] == c)
            self._kpres[c] = Presentation(self.pres.generators,
                                          self.pres.relators + tuple(r for r in extra if r),
                                          self.pres.tree, self.base)
        return self._kpres[c]

    def certificate(self, word):
        v = self.cx.walk(word, self.base)
        loop = tuple(word) + inverse(self.paths[v])
        return (self.end_type(v), abelian_image(self.pres_for(v), self.pres.rewrite(loop)))

    @property
    def complete(self):
        """True when pi1 is abelian, so that certificates decide equivalence."""
        if self._complete is None:
            gens = self.pres.generators
            ok = True
            for i, g in enumerate(gens):
                for h in gens[i + 1:]:
                    c = ((g, 1), (h, 1), (g, -1), (h, -1))
                    if is_trivial(c, self.pres, rewrite=False, max_states=20_000).kind != "Trivial":
                        ok = False
                        break
                if not ok:
                    break
            self._complete = ok
        return self._complete


@dataclass
class RelVerdict:
    kind: str                   # Equivalent | Distinct | Unknown
    trace: tuple = ()
    certificate: tuple = ()
    explored: int = 0
    via: str = ""

    def to_json(self):
        return {"kind": self.kind, "trace": [list(map(_jsonable, t)) for t in self.trace],
                "certificate": _jsonable(self.certificate), "explored": self.explored,
                "via": self.via}


def _jsonable(x):
    if isinstance(x, tuple):
        return [_jsonable(y) for y in x]
    return x


def _moves(w, cx: RelComplex, base, rels, max_len):
    """Words one relator insertion, or one infinity extension/removal, away from w."""
    verts = [base]
    for ss in w:
        verts.append(cx.endpoints(ss)[1])
    out = []
    for pos, v in enumerate(verts):
        for r in rels.get(v, ()):
            nw = free_reduce(w[:pos] + r + w[pos:])
            if len(nw) <= max_len:
                out.append((("insert", pos, r), nw))
    end = verts[-1]
    if cx.is_infinity(end):
        for s in cx.steps:
            if not s.side:
                continue
            for e in (1, -1):
                if cx.endpoints((s.id, e))[0] == end and len(w) < max_len:
                    out.append((("extend", (s.id, e)), free_reduce(w + ((s.id, e),))))
    if w and cx.step_by_id[w[-1][0]].side:
        out.append((("drop_infinity", w[-1]), w[:-1]))
    return out


def rel_equivalent(w1, w2, cx: RelComplex, base: int, max_len: int = 16,
                   max_states: int = 20_000, certifier: Optional[_Certifier] = None) -> RelVerdict:
    tr1, tr2 = [], []
    a, b = rel_normalize(w1, cx, base, tr1), rel_normalize(w2, cx, base, tr2)
    if a == b:
        return RelVerdict("Equivalent", tuple(tr1 + [("meet",)] + tr2[::-1]), (), 0, "normalize")
    cert = certifier or _Certifier(cx, base)
    c1, c2 = cert.certificate(a), cert.certificate(b)
    if c1 != c2:
        return RelVerdict("Distinct", (), (c1, c2), 0, "certificate")
    end = cx.walk(a, base)
    if end == base and not cx.is_infinity(base):
        v = is_trivial(a + inverse(b), cert.pres, max_states=max_states)
        if v.kind == "Trivial":
            return RelVerdict("Equivalent", tuple(("conjugate_relator",) + tuple(x) for x in v.witness),
                              (), v.explored, "word problem")
    # bidirectional search over rule applications
    rels = {}
    for _, _, r in cx.disks:
        for rr in set(rotations(r)) | set(rotations(inverse(r))):
            rels.setdefault(cx.endpoints(rr[0])[0], []).append(rr)
    for v in rels:
        rels[v].sort()
    seen = [{a: None}, {b: None}]
    frontier = [deque([a]), deque([b])]
    explored = 0
    while frontier[0] or frontier[1]:
        for side in (0, 1):
            if not frontier[side]:
                continue
            w = frontier[side].popleft()
            explored += 1
            if explored > max_states:
                return RelVerdict("Unknown", (), c1, explored,
                                  "certificate complete" if cert.complete else "")
            for mv, nw in _moves(w, cx, base, rels, max_len):
                if nw in seen[side]:
                    continue
                seen[side][nw] = (w, mv)
                if nw in seen[1 - side]:
                    return RelVerdict("Equivalent", _join(seen, nw, side), (), explored, "search")
                frontier[side].append(nw)
    return RelVerdict("Unknown", (), c1, explored, "search space exhausted")


def _join(seen, meet, side):
    def chain(d, w):
        out = []
        while d[w] is not None:
            w, mv = d[w]
            out.append(mv)
        return out

    left = chain(seen[0], meet)[::-1]
    right = chain(seen[1], meet)
    return tuple(left + [("meet",)] + right)


# -- class enumeration -----------------------------------------------------

@dataclass
class RelClass:
    representative: tuple
    text: str
    end: str
    certificate: tuple
    length: int

    def to_json(self):
        return {"representative": [list(x) for x in self.representative], "text": self.text,
                "end": self.end, "certificate": list(self.certificate[1]), "length": self.length}


def _reachable(cx, cert, base, max_len):
    """Layered search over (vertex, abelian image of the loop-closed word)."""
    deltas = {}
    gens = set(cert.pres.generators)
    for s in cx.steps:
        for e in (1, -1):
            w = ((s.id, e),) if s.id in gens else ()
            deltas[(s.id, e)] = w
    start = (base, ())
    seen = {start: ()}
    layer = [start]
    moves = sorted(deltas)
    for n in range(max_len):
        nxt = []
        for (v, img) in layer:
            rep = seen[(v, img)]
            for mv in moves:
                a, b = cx.endpoints(mv)
                if a != v or (rep and rep[-1] == (mv[0], -mv[1])):
                    continue
                w = rep + (mv,)
                key = (b, abelian_image(cert.pres, cert.pres.rewrite(w + inverse(cert.paths[b]))))
                if key not in seen:
                    seen[key] = w
                    nxt.append(key)
        layer = nxt
    return seen


def rel_classes(cx: RelComplex, base: RelEndpoint, max_len: int = 12,
                max_words: int = 200_000, max_states: int = 20_000):
    """Classes of relative paths of length <= max_len, the class of 1 first."""
    if max_len > 12:
        raise BudgetExceeded("max-len above 12 is outside desk scale")
    b = base.vertex(cx)
    cert = _Certifier(cx, b)
    if cert.complete:
        seen = _reachable(cx, cert, b, max_len)
        words = [w for (v, _), w in seen.items() if v == b or cx.is_infinity(v)]
        buckets = {}
        for w in sorted(words, key=lambda w: (len(w), w)):
            buckets.setdefault(cert.certificate(w), w)
    else:
        buckets = _classes_by_search(cx, cert, b, max_len, max_words, max_states)
    empty = cert.certificate(())
    out = []
    for c, w in buckets.items():
        w = rel_normalize(w, cx, b)
        out.append(RelClass(w, cx.word_text(w), c[0], c, len(w)))
    out.sort(key=lambda k: (k.certificate != empty, k.length, k.representative))
    return out


def _classes_by_search(cx, cert, b, max_len, max_words, max_states):
    words = []
    layer = [((), b)]
    moves = sorted((s.id, e) for s in cx.steps for e in (1, -1))
    for n in range(max_len + 1):
        for w, v in layer:
            if v == b or cx.is_infinity(v):
                words.append(rel_normalize(w, cx, b))
        if n == max_len:
            break
        nxt = []
        for w, v in layer:
            for mv in moves:
                a, e = cx.endpoints(mv)
                if a == v and not (w and w[-1] == (mv[0], -mv[1])):
                    nxt.append((w + (mv,), e))
        layer = nxt
        if len(words) + len(layer) > max_words:
            raise BudgetExceeded(f"more than {max_words} words of length <= {n + 1}")
    reps = {}
    for w in sorted(set(words), key=lambda w: (len(w), w)):
        c = cert.certificate(w)
        bucket = reps.setdefault(c, [])
        for r in bucket:
            v = rel_equivalent(r, w, cx, b, max_len=max_len + 4, max_states=max_states,
                               certifier=cert)
            if v.kind == "Equivalent":
                break
            if v.kind == "Unknown":
                raise BudgetExceeded(f"could not decide {cx.word_text(r)} ~ {cx.word_text(w)}")
        else:
            bucket.append(w)
    out = {}
    for c, ws in reps.items():
        for i, w in enumerate(ws):
            out[c + ((i,),) if i else c] = w
    return out


def cor_invariance_check(complexes: Sequence[RelComplex], bases: Sequence[RelEndpoint],
                         max_len: int = 8):
    """Class histograms (by end type and representative length) agree across profiles."""
    if len(complexes) < 2:
        raise ValueError("need at least two profiles")
    natures = {cx.profile.nature() for cx in complexes}
    if len(natures) != 1:
        raise ValueError("profiles differ in the nature of h at infinity")
    sides = {b.kind for b in bases}
    if len(sides) != 1:
        raise ValueError("base points sit on different sides")
    hists = []
    for cx, b in zip(complexes, bases):
        cert = _Certifier(cx, b.vertex(cx))
        if not cert.complete:
            raise InconclusiveBudget("certificates are not complete for a non-abelian group")
        hist = {}
        for c in rel_classes(cx, b, max_len):
            key = (c.end.split("#")[0], c.length)
            hist[key] = hist.get(key, 0) + 1
        hists.append(sorted(hist.items()))
    return {"agree": all(h == hists[0] for h in hists), "histograms": hists}


def classes_report(cx: RelComplex, base: RelEndpoint, classes) -> dict:
    return {"schema": SCHEMA, "base": {"kind": base.kind, "min": base.min, "layer": base.layer},
            "count": len(classes), "classes": [c.to_json() for c in classes],
            "complex": cx.to_json()}
