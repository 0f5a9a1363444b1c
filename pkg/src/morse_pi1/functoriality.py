"""Interpolation squares, the lambda family of step-maps, wall crossings and the
commutation and isomorphism verdicts."""
from __future__ import annotations

import math
import multiprocessing
from dataclasses import dataclass, field
from itertools import product
from typing import Optional

from .continuation import (StepMap, _Target, _assemble, _match, compose, point_at, unstable_curve)
from .flow import Dynamics, FlowOptions, find_critical_points
from .geometry import (DEFAULT_PROFILE, InteriorCriticalPoint, Profile, SquareField, pick_C_square)
from .mscomplex import MorseComplexData, UnresolvedWall, walk_walls, word_str
from .pi1 import (cyclic_reduce, free_reduce, inverse, is_trivial, presentation, rotations,
                  spanning_tree)

SCHEMA = "sweep/v1"


class FunctorialityError(Exception):
    pass


class NonGenericLambda(FunctorialityError):
    def __init__(self, lam, detail=""):
        self.lam = lam
        super().__init__(f"lambda = {lam} is on a wall {detail}".strip())


class UnclassifiedWall(FunctorialityError):
    def __init__(self, lam, diff):
        self.lam, self.diff = lam, diff
        super().__init__(f"wall at lambda = {lam} matches no known pattern: {diff}")


class InconclusiveBudget(FunctorialityError):
    pass


# -- the square ------------------------------------------------------------

@dataclass
class SquareSpec:
    f1: object
    f2: object
    f3: object
    C: Optional[float] = None
    eps: float = 0.1
    h: str = DEFAULT_PROFILE


def square_C(f1, f2, f3, eps=0.1, h=DEFAULT_PROFILE, factor=2.0) -> float:
    """pick_C bound for the square, raised so the (s, t) expansion outpaces the slices."""
    lam = max(abs(v) for f in (f1, f2, f3) for c in find_critical_points(f) for v in c.eigenvalues)
    hdd = abs(Profile(h).all(0.0)[2])
    return max(pick_C_square(f1, f2, f3, eps, h), factor * lam / hdd)


CORNER_SHIFT = {(0, 0): ("f1", 2), (1, 0): ("f1", 1), (0, 1): ("f2", 1), (1, 1): ("f3", 0)}


def build_square(spec: SquareSpec, seeds_per_axis: int = 8, check: bool = True):
    C = spec.C if spec.C is not None else pick_C_square(spec.f1, spec.f2, spec.f3, spec.eps, spec.h)
    F = SquareField(spec.f1, spec.f2, spec.f3, C, spec.eps, spec.h)
    if check:
        check_square(F, seeds_per_axis)
    return F


def check_square(F: SquareField, seeds_per_axis: int = 8):
    k = F._k
    cps = find_critical_points(F, seeds_per_axis)
    slices = {name: find_critical_points(getattr(F, name), seeds_per_axis) for name in ("f1", "f2", "f3")}
    m = F.f1.manifold
    expected = 0
    for corner, (name, _) in CORNER_SHIFT.items():
        expected += len(slices[name])
    for c in cps:
        s, t = c.coords[k], c.coords[k + 1]
        corner = (round(s), round(t))
        if abs(s - corner[0]) > 1e-6 or abs(t - corner[1]) > 1e-6:
            raise InteriorCriticalPoint(c.coords)
        name, shift = CORNER_SHIFT[corner]
        ref = min(slices[name], key=lambda d: m.distance(d.coords, c.coords[:k]))
        if m.distance(ref.coords, c.coords[:k]) > 1e-5 or ref.index + shift != c.index:
            raise InteriorCriticalPoint(c.coords, "(index shift violated)")
    if len(cps) != expected:
        raise InteriorCriticalPoint((), f"expected {expected} critical points, found {len(cps)}")
    return cps


# -- the lambda family -----------------------------------------------------

def _odds_seed(lam: float, top: float):
    """(s, t) on the ray of angle lam, in logistic odds, with max(s, t) = top.

    Near the (0, 0) corner s and t follow the same logistic law, so the odds
    ratio t(1-s) / (s(1-t)) is conserved and equals tan(lam) on the ray.
    """
    r = math.tan(lam)
    o_top = top / (1.0 - top)
    if r <= 1.0:
        os_, ot = o_top, o_top * r
    else:
        os_, ot = o_top / r, o_top
    return os_ / (1.0 + os_), ot / (1.0 + ot)


class SquareFamily:
    """phi_lambda for one square field."""

    def __init__(self, F: SquareField, data1: MorseComplexData, data3: MorseComplexData,
                 samples: int = 64, opts: Optional[FlowOptions] = None,
                 dyn: Optional[Dynamics] = None):
        self.F = F
        self.data1, self.data3 = data1, data3
        self.samples = samples
        self.dyn = dyn or Dynamics(F, None, opts)
        self.base = Dynamics(F.f1, None, opts)
        self.target = _Target(self.dyn, data3, 1.0)
        self.top = 0.5 * F.eps
        self.curves = {s.id: unstable_curve(self.base, data1.cp_by_id[s.through]) for s in data1.steps}
        self.min_coords = {y: data1.cp_by_id[y].coords for y in data1.minima}

    def run(self, m_point, lam):
        s, t = _odds_seed(lam, self.top)
        return self.dyn.integrate(tuple(m_point) + (s, t), track=True)

    def transport(self, lam):
        out = {}
        for y, q in self.min_coords.items():
            lab = self.target.label(self.run(q, lam))
            if len(lab) != 2:
                raise NonGenericLambda(lam, f"(transport of {y} ended with {lab})")
            out[y] = lab
        return out

    def image(self, lam, sid, transport):
        s = self.data1.step(sid)
        pts, arc = self.curves[sid]
        L = arc[-1]

        def run(ell):
            return self.run(point_at(pts, arc, ell), lam)

        # the curve ends sit on the minima, so the end samples must carry the
        # transport labels (lift included); walls close to the ends are then bisected
        thetas = [0.0] + [L * (j + 0.5) / self.samples for j in range(self.samples)] + [L]
        try:
            word, walls, labels = _assemble(self.target, run, thetas, transport[s.start][0],
                                            transport[s.end][0], f"step {sid} at lambda {lam}")
        except Exception as exc:
            raise NonGenericLambda(lam, f"({exc})")
        if not (self._agrees(labels[0], pts[0], s.start, transport)
                and self._agrees(labels[-1], pts[-1], s.end, transport)):
            raise NonGenericLambda(lam, f"(step {sid} ends disagree with the transport)")
        return word

    def _agrees(self, lab, p, y, transport):
        m = self.dyn.m
        tid, lift = transport[y]
        off = m.lift_offset(m.retract(tuple(p)), self.min_coords[y])
        return lab == (tid, tuple(a + b for a, b in zip(lift, off)))

    def phi(self, lam, steps=None) -> StepMap:
        tr = self.transport(lam)
        ids = [s.id for s in self.data1.steps] if steps is None else steps
        images = {sid: self.image(lam, sid, tr) for sid in ids}
        sm = StepMap(self.data1, self.data3, images, {y: v[0] for y, v in tr.items()}, "lambda",
                     {"lambda": lam, "lifts": {y: v[1] for y, v in tr.items()}})
        if steps is None:
            sm.check_coherence()
        return sm

    def transport_wall(self, lo, hi, y):
        """Bisect the transport of y between lo and hi; return (lambda*, signed step)."""
        q = self.min_coords[y]

        def run(lam):
            return self.run(q, lam)

        walls, _ = walk_walls(run, [lo, hi], self.target.label, self.target.mediator, self.dyn.m,
                              closed=False, tol=1e-12)
        return [(w.theta, (self.target.step_of(w.cp), w.sign)) for w in walls]


def phi_lambda(F: SquareField, lam: float, data1, data3, samples: int = 64,
               family: Optional[SquareFamily] = None) -> StepMap:
    fam = family or SquareFamily(F, data1, data3, samples)
    return fam.phi(lam)


# -- wall classification ---------------------------------------------------

@dataclass
class WallEvent:
    lam: float
    kind: str                     # BirthDeath | BreakIndex2Target | BreakIndex0Source
    conjugator: tuple = ()        # tau: path T+(base) -> T-(base), for source breaks
    steps: tuple = ()
    detail: str = ""

    def to_json(self):
        return {"lambda": self.lam, "kind": self.kind, "conjugator": [list(x) for x in self.conjugator],
                "steps": list(self.steps), "detail": self.detail}


def _is_birth_death(u, v):
    """v is u with one adjacent cancelling pair inserted (or removed)."""
    if len(v) < len(u):
        u, v = v, u
    if len(v) != len(u) + 2:
        return False
    for i in range(len(v) - 1):
        a, b = v[i], v[i + 1]
        if a[0] == b[0] and a[1] == -b[1] and v[:i] + v[i + 2:] == u:
            return True
    return False


def _is_splice(u, v, relators):
    """u = A p B, v = A q B with q p^-1 a cyclic rotation of a relator or its inverse."""
    n = 0
    while n < min(len(u), len(v)) and u[n] == v[n]:
        n += 1
    m = 0
    while m < min(len(u), len(v)) - n and u[len(u) - 1 - m] == v[len(v) - 1 - m]:
        m += 1
    allowed = set()
    for r in relators:
        allowed.update(rotations(r))
    for a in range(n + 1):
        for b in range(m + 1):
            p = u[a:len(u) - b]
            q = v[a:len(v) - b]
            if q + inverse(p) in allowed:
                return True
    return False


def classify_wall(lam, before: StepMap, after: StepMap, tau: dict = None):
    """Match the change between two adjacent step-maps to one of the three wall types.

    tau maps each source minimum whose transport moved to the target path
    T+(y) -> T-(y); an index-0 source break conjugates every image by it.
    """
    data3 = before.target
    relators = [d.word for d in data3.disk_boundaries]
    changed = tuple(sid for sid in sorted(before.images) if before.images[sid] != after.images[sid])
    if before.transport != after.transport or tau:
        tau = tau or {}
        for sid in sorted(before.images):
            s = before.source.step(sid)
            ts, te = tau.get(s.start, ()), tau.get(s.end, ())
            want = free_reduce(ts + before.images[sid] + inverse(te))
            if free_reduce(after.images[sid]) != want:
                pres = presentation(data3)
                _, paths = spanning_tree(data3)
                a = after.transport[s.start]
                loop = free_reduce(paths[a] + after.images[sid] + inverse(want) + inverse(paths[a]))
                if is_trivial(loop, pres).kind != "Trivial":
                    raise UnclassifiedWall(lam, {"step": sid, "before": before.images[sid],
                                                 "after": after.images[sid]})
        base = before.source.base
        return WallEvent(lam, "BreakIndex0Source", tuple(tau.get(base, ())), changed)
    if not changed:
        raise UnclassifiedWall(lam, "no change")
    kinds = set()
    for sid in changed:
        u, v = before.images[sid], after.images[sid]
        if _is_birth_death(u, v):
            kinds.add("BirthDeath")
        elif _is_splice(u, v, relators):
            kinds.add("BreakIndex2Target")
        else:
            raise UnclassifiedWall(lam, {"step": sid, "before": u, "after": v})
    if len(kinds) != 1:
        raise UnclassifiedWall(lam, f"mixed wall types {sorted(kinds)}")
    return WallEvent(lam, kinds.pop(), (), changed)


@dataclass
class LambdaSweep:
    lambdas: list
    maps: list
    walls: list
    phi0: Optional[StepMap] = None
    phi1: Optional[StepMap] = None
    inconclusive: list = field(default_factory=list)

    @property
    def psi(self):
        """Path from T_0(base) to T_pi/2(base) built from the source-break conjugators."""
        sigma = ()
        for w in self.walls:
            if w.kind == "BreakIndex0Source":
                sigma = free_reduce(w.conjugator + sigma)
        return inverse(sigma)

    def to_json(self):
        return {
            "schema": SCHEMA,
            "grid": len(self.lambdas),
            "lambdas": self.lambdas,
            "lengths": [[len(m.images[s]) for s in sorted(m.images)] for m in self.maps],
            "walls": [w.to_json() for w in self.walls],
            "psi": [list(x) for x in self.psi],
            "psi_text": word_str(self.psi),
            "inconclusive": self.inconclusive,
        }


def _same(a: StepMap, b: StepMap):
    return a.images == b.images and a.transport == b.transport and \
        a.details.get("lifts") == b.details.get("lifts")


_POOL_FAMILY = None


def _generic_phi(fam: SquareFamily, lam: float, width: float):
    """phi at lam, nudged inside its grid cell if lam happens to sit on a wall."""
    last = None
    for off in (0.0, 0.13, -0.17, 0.29, -0.31):
        try:
            return fam.phi(lam + off * width)
        except NonGenericLambda as exc:
            last = exc
    raise last


def _pool_phi(args):
    lam, width = args
    m = _generic_phi(_POOL_FAMILY, lam, width)
    return m.images, m.transport, m.details


def sweep_lambda(F: SquareField, grid: int, data1, data3, samples: int = 64,
                 family: Optional[SquareFamily] = None, tol: float = 1e-6,
                 workers: int = 1) -> LambdaSweep:
    global _POOL_FAMILY
    if grid < 16:
        raise ValueError("grid must be at least 16")
    fam = family or SquareFamily(F, data1, data3, samples)
    width = (math.pi / 2) / grid
    lams = [(j + 0.5) * width for j in range(grid)]
    if workers > 1 and "fork" in multiprocessing.get_all_start_methods():
        _POOL_FAMILY = fam
        try:
            with multiprocessing.get_context("fork").Pool(workers) as pool:
                got = pool.map(_pool_phi, [(l, width) for l in lams])
        finally:
            _POOL_FAMILY = None
        maps = [StepMap(fam.data1, fam.data3, i, t, "lambda", d) for i, t, d in got]
    else:
        maps = [_generic_phi(fam, l, width) for l in lams]
    lams = [m.details["lambda"] for m in maps]
    walls, bad = [], []
    for j in range(grid - 1):
        if _same(maps[j], maps[j + 1]):
            continue
        try:
            walls.extend(_resolve(fam, lams[j], lams[j + 1], maps[j], maps[j + 1], tol))
        except (UnclassifiedWall, NonGenericLambda, UnresolvedWall) as exc:
            bad.append({"interval": [lams[j], lams[j + 1]], "error": str(exc)})
    return LambdaSweep(lams, maps, walls, maps[0], maps[-1], bad)


def _probe(fam: SquareFamily, lam, ma: StepMap, mb: StepMap):
    """phi at lam inside a bracket, re-tracing only the steps whose images differ at its ends."""
    if ma.transport != mb.transport or ma.details.get("lifts") != mb.details.get("lifts"):
        return fam.phi(lam)
    tr = fam.transport(lam)
    transport, lifts = {y: v[0] for y, v in tr.items()}, {y: v[1] for y, v in tr.items()}
    if transport != ma.transport or lifts != ma.details.get("lifts"):
        return fam.phi(lam)
    images = dict(ma.images)
    for sid in ma.images:
        if ma.images[sid] != mb.images[sid]:
            images[sid] = fam.image(lam, sid, tr)
    sm = StepMap(fam.data1, fam.data3, images, transport, "lambda", {"lambda": lam, "lifts": lifts})
    sm.check_coherence()
    return sm


def _resolve(fam: SquareFamily, lo, hi, m_lo, m_hi, tol, depth=0):
    """Bisect (lo, hi) down to isolated walls and classify each."""
    if depth > 3:
        raise UnclassifiedWall(lo, "coincident walls")
    a, b = lo, hi
    ma, mb = m_lo, m_hi
    while b - a > tol:
        mm = None
        for frac in (0.5, 0.3, 0.7):
            mid = a + frac * (b - a)
            try:
                mm = _probe(fam, mid, ma, mb)
                break
            except NonGenericLambda:
                continue
        if mm is None:
            # the bracket sits inside the unresolvable zone of the wall itself
            break
        if _same(mm, ma):
            a, ma = mid, mm
        else:
            b, mb = mid, mm
    tau = {}
    if ma.transport != mb.transport or ma.details.get("lifts") != mb.details.get("lifts"):
        for y in fam.data1.minima:
            if (ma.transport[y], ma.details["lifts"][y]) == (mb.transport[y], mb.details["lifts"][y]):
                continue
            found = fam.transport_wall(a, b, y)
            # the transport of y moved along these signed steps; tau runs back
            path = tuple(st for _, st in found)
            tau[y] = inverse(path)
    try:
        ev = classify_wall(0.5 * (a + b), ma, mb, tau)
        rest = [] if _same(mb, m_hi) else _resolve(fam, b, hi, mb, m_hi, tol, depth)
        return [ev] + rest
    except UnclassifiedWall:
        # maybe two walls in the bracket: split and retry
        mid = 0.5 * (a + b)
        if b - a < 1e-12:
            raise
        mm = fam.phi(mid)
        return _resolve(fam, a, mid, ma, mm, tol / 4, depth + 1) + \
            _resolve(fam, mid, b, mm, mb, tol / 4, depth + 1) + \
            ([] if _same(mb, m_hi) else _resolve(fam, b, hi, mb, m_hi, tol, depth))


# -- verdicts --------------------------------------------------------------

@dataclass
class DiagramVerdict:
    kind: str                     # Commutes | Fails
    psi: tuple = ()
    offending: Optional[int] = None
    details: dict = field(default_factory=dict)

    def to_json(self):
        return {"kind": self.kind, "psi": [list(x) for x in self.psi], "psi_text": word_str(self.psi),
                "offending": self.offending}


def _agree(data3, lhs, rhs, pres, max_states):
    if free_reduce(lhs) == free_reduce(rhs):
        return "Trivial"
    _, paths = spanning_tree(data3)
    v = data3.endpoints(lhs[0])[0] if lhs else data3.endpoints(rhs[0])[0]
    c = paths[v]
    loop = free_reduce(c + lhs + inverse(rhs) + inverse(c))
    return is_trivial(loop, pres, max_states=max_states).kind


def _consecutive_words(data, start, end, max_len):
    """Reduced consecutive words from start to end, shortest first, then lexicographic."""
    moves = sorted([(s.id, 1) for s in data.steps] + [(s.id, -1) for s in data.steps])
    layer = [((), start)]
    for n in range(max_len + 1):
        for w, v in layer:
            if v == end:
                yield w
        if n == max_len:
            return
        nxt = []
        for w, v in layer:
            for mv in moves:
                if w and w[-1][0] == mv[0] and w[-1][1] == -mv[1]:
                    continue
                a, b = data.endpoints(mv)
                if a == v:
                    nxt.append((w + (mv,), b))
        layer = nxt


def _search_conjugator(data3, pairs, start, end, max_len, max_states):
    """Shortest psi (start -> end) with psi^-1 l psi = r for every (l, r) in pairs."""
    pres = presentation(data3)
    cands = list(_consecutive_words(data3, start, end, max_len))
    # cheap pass: free equality
    for psi in cands:
        if all(free_reduce(inverse(psi) + l + psi) == free_reduce(r) for l, r in pairs):
            return psi, "free"
    for psi in cands[:64]:
        if all(_agree(data3, free_reduce(inverse(psi) + l + psi), r, pres, max_states) == "Trivial"
               for l, r in pairs):
            return psi, "relators"
    return None, None


def verify_diagram(sweep: Optional[LambdaSweep], phi12: StepMap, phi23: StepMap, phi13: StepMap,
                   max_len: int = 8, max_states: int = 20_000) -> DiagramVerdict:
    """psi(phi13(g)) == phi23(phi12(g)) for every source generator g.

    With a sweep, psi comes from the recorded source-break conjugators;
    without one (combinatorial mode) it is searched among short words.
    """
    for sm in (phi12, phi23, phi13):
        sm.check_coherence()
    comp = compose(phi23, phi12)
    data1, data3 = phi13.source, phi13.target
    pres1, pres3 = presentation(data1), presentation(data3)
    loops = StepMap.generator_loops(phi13, pres1)
    s3 = phi13.transport[data1.base]
    s3p = comp.transport[data1.base]
    pairs = {g: (phi13.apply(loops[g]), comp.apply(loops[g])) for g in pres1.generators}
    if sweep is not None:
        psi = sweep.psi
        try:
            end = data3.check_consecutive(psi, start=s3) if psi else s3
        except Exception:
            return DiagramVerdict("Fails", psi, None, {"reason": "psi is not consecutive"})
        if end != s3p:
            return DiagramVerdict("Fails", psi, None, {"reason": "psi does not join the base points"})
        for g, (l, r) in sorted(pairs.items()):
            lhs = free_reduce(inverse(psi) + l + psi)
            kind = _agree(data3, lhs, r, pres3, max_states)
            if kind == "Unknown":
                raise InconclusiveBudget(f"generator {g}")
            if kind != "Trivial":
                return DiagramVerdict("Fails", psi, g)
        return DiagramVerdict("Commutes", psi)
    psi, how = _search_conjugator(data3, list(pairs.values()), s3, s3p, max_len, max_states)
    if psi is None:
        # name the first generator that no candidate fixes on its own
        for g, (l, r) in sorted(pairs.items()):
            if _search_conjugator(data3, [(l, r)], s3, s3p, max_len, max_states)[0] is None:
                return DiagramVerdict("Fails", (), g)
        return DiagramVerdict("Fails", (), None, {"reason": "no common conjugator"})
    return DiagramVerdict("Commutes", psi, None, {"found_by": how})


@dataclass
class IsoVerdict:
    kind: str                     # Inner | Fails
    conjugator: tuple = ()
    matrix: list = field(default_factory=list)
    reason: str = ""

    def to_json(self):
        return {"kind": self.kind, "conjugator": [list(x) for x in self.conjugator],
                "conjugator_text": word_str(self.conjugator), "matrix": self.matrix,
                "reason": self.reason}


def verify_iso(phi12: StepMap, phi21: StepMap, max_len: int = 8,
               max_states: int = 20_000) -> IsoVerdict:
    """phi21 o phi12 must be inner: w^-1 g w for a short loop-compatible w."""
    comp = compose(phi21, phi12)
    data1 = phi12.source
    pres1 = presentation(data1)
    M = comp.abelian_matrix(pres1, pres1)
    n = len(pres1.generators)
    eye = [[int(i == j) for j in range(n)] for i in range(n)]
    if M != eye:
        return IsoVerdict("Fails", (), M, "abelianized composite is not the identity")
    loops = comp.generator_loops(pres1)
    pairs = [(loops[g], comp.apply(loops[g])) for g in pres1.generators]
    start, end = data1.base, comp.transport[data1.base]
    w, _ = _search_conjugator(data1, pairs, start, end, max_len, max_states)
    if w is None:
        return IsoVerdict("Fails", (), M, f"no conjugator of length <= {max_len}")
    return IsoVerdict("Inner", w, M)


def det2(M):
    return M[0][0] * M[1][1] - M[0][1] * M[1][0]
