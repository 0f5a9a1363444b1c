"""Combinatorial Morse-Smale complex: steps, disk boundaries, and their extraction."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field as dfield
from typing import Callable, Optional, Sequence

from .flow import (CriticalPoint, Dynamics, FlowOptions, NoLinger, TrajectoryOutcome,
                   bisect_transition, exit_side, unstable_frame)

SCHEMA = "mscomplex/v1"


class ComplexError(Exception):
    pass


class StepBroken(ComplexError):
    def __init__(self, cp, detail=""):
        self.cp = cp
        super().__init__(f"unstable trajectory of saddle {cp} does not reach a minimum {detail}".strip())


class UnresolvedWall(ComplexError):
    def __init__(self, theta, detail=""):
        self.theta = theta
        super().__init__(f"could not resolve wall near {theta}: {detail}")


class NotConsecutive(ComplexError):
    def __init__(self, position, detail=""):
        self.position = position
        super().__init__(f"word is not consecutive at position {position} {detail}".strip())


@dataclass(frozen=True)
class Step:
    id: int
    through: int
    start: int
    end: int
    shift: tuple = ()      # lattice displacement start -> end on the universal cover (torus only)

    def to_json(self):
        d = {"id": self.id, "through": self.through, "start": self.start, "end": self.end}
        if self.shift:
            d["shift"] = list(self.shift)
        return d


@dataclass(frozen=True)
class DiskBoundary:
    of: int
    word: tuple

    def to_json(self):
        return {"of": self.of, "word": [[s, e] for s, e in self.word]}


@dataclass
class MorseComplexData:
    critical_points: list
    steps: list
    disk_boundaries: list
    base: int
    provenance: str = "Handwritten"
    manifold: Optional[dict] = None

    def __post_init__(self):
        self.step_by_id = {s.id: s for s in self.steps}
        self.cp_by_id = {c.id: c for c in self.critical_points}

    @property
    def minima(self):
        return [c.id for c in self.critical_points if c.index == 0]

    def step(self, sid) -> Step:
        return self.step_by_id[sid]

    def endpoints(self, ss):
        s = self.step_by_id[ss[0]]
        return (s.start, s.end) if ss[1] > 0 else (s.end, s.start)

    def check_consecutive(self, word, start=None, closed=False):
        """Raise NotConsecutive unless each signed step starts where the previous ends."""
        cur = start
        for i, ss in enumerate(word):
            a, b = self.endpoints(ss)
            if cur is not None and a != cur:
                raise NotConsecutive(i, f"(expected start {cur}, got {a})")
            cur = b
        if closed and word and cur != self.endpoints(word[0])[0]:
            raise NotConsecutive(len(word), "(word does not close up)")
        return cur

    def validate(self):
        ids = {c.id for c in self.critical_points}
        if self.base not in ids or self.cp_by_id[self.base].index != 0:
            raise ComplexError("base must be an index-0 critical point")
        through = [s.through for s in self.steps]
        if len(set(through)) != len(through):
            raise ComplexError("a saddle carries two steps")
        for s in self.steps:
            for v in (s.start, s.end):
                if v not in ids or self.cp_by_id[v].index != 0:
                    raise ComplexError(f"step {s.id} has a non-minimum endpoint {v}")
        for d in self.disk_boundaries:
            self.check_consecutive(d.word, closed=True)
        return self

    def to_json(self):
        return {
            "schema": SCHEMA,
            "provenance": self.provenance,
            "manifold": self.manifold,
            "base": self.base,
            "critical_points": [c.to_json() for c in self.critical_points],
            "steps": [s.to_json() for s in self.steps],
            "disk_boundaries": [d.to_json() for d in self.disk_boundaries],
        }

    @staticmethod
    def from_json(doc):
        if doc.get("schema", SCHEMA) != SCHEMA:
            raise ComplexError(f"unsupported schema {doc.get('schema')}")
        cps = [CriticalPoint(c["id"], tuple(c.get("coords", ())), c["index"], c.get("value", 0.0))
               for c in doc["critical_points"]]
        steps = [Step(s["id"], s["through"], s["start"], s["end"], tuple(s.get("shift", ())))
                 for s in doc["steps"]]
        disks = [DiskBoundary(d["of"], tuple((int(a), int(b)) for a, b in d["word"]))
                 for d in doc["disk_boundaries"]]
        return MorseComplexData(cps, steps, disks, doc["base"], doc.get("provenance", "Handwritten"),
                                doc.get("manifold")).validate()


def step_name(sid: int) -> str:
    letters = "abcdefghijklmnopqrstuvwxyz"
    return letters[sid] if sid < 26 else f"s{sid}"


def word_str(word, names: Optional[dict] = None) -> str:
    if not word:
        return "1"
    out = []
    for sid, e in word:
        n = names[sid] if names else step_name(sid)
        out.append(n if e > 0 else n + "^-1")
    return " ".join(out)


def canonical_rotation(word):
    """Lexicographically least cyclic rotation, by (step id, sign)."""
    word = tuple(word)
    if not word:
        return word
    return min(word[i:] + word[:i] for i in range(len(word)))


def cyclic_equal(w1, w2, allow_inverse=True) -> bool:
    w1, w2 = tuple(w1), tuple(w2)
    if len(w1) != len(w2):
        return False
    cands = [w2]
    if allow_inverse:
        cands.append(tuple((s, -e) for s, e in reversed(w2)))
    return any(canonical_rotation(w1) == canonical_rotation(c) for c in cands)


# -- extraction ------------------------------------------------------------

def extract_steps(dyn: Dynamics) -> list:
    """One step per index-1 point; start from the -u branch, end from the +u branch."""
    steps = []
    for c in dyn.cps:
        if c.index != 1:
            continue
        u = unstable_frame(dyn.field, c)[0]
        ends = []
        for sgn in (-1.0, 1.0):
            out = dyn.integrate(dyn.seed(c, [sgn * v for v in u]))
            if out.kind != "ConvergedTo":
                raise StepBroken(c.id, f"({out.kind})")
            ends.append(out)
        lo, hi = ends
        shift = tuple(b - a for a, b in zip(lo.lift, hi.lift))
        steps.append(Step(len(steps), c.id, lo.cp, hi.cp, shift))
    return steps


@dataclass
class Wall:
    theta: float
    cp: int
    sign: int
    lo_label: object
    hi_label: object


def walk_walls(run: Callable[[float], TrajectoryOutcome], thetas: Sequence[float],
               label: Callable[[TrajectoryOutcome], object],
               mediator: Callable[[int], tuple], manifold, closed: bool,
               tol: float = 1e-10, max_walls: int = 64, outcomes=None):
    """Sweep a one-parameter family and resolve every label change into a signed wall.

    `run(theta)` integrates (with closest-approach tracking) and returns the
    outcome whose label is compared.  `mediator(cp_id)` returns the center
    and unstable direction used to read the sign of the crossing from the two
    bracketing trajectories.
    """
    outs = outcomes if outcomes is not None else [run(th) for th in thetas]
    labels = [label(o) for o in outs]
    pairs = list(zip(range(len(thetas)), range(1, len(thetas))))
    if closed:
        pairs.append((len(thetas) - 1, 0))
    walls = []
    for i, j in pairs:
        lo, hi = thetas[i], thetas[j]
        if closed and j == 0:
            hi = hi + 2.0 * math.pi
        if labels[i] == labels[j]:
            continue
        target = labels[j]
        cur_lo = lo
        while True:
            if len(walls) > max_walls:
                raise UnresolvedWall(lo, "too many walls")
            try:
                tr = bisect_transition(None, None, cur_lo, hi, label=label, run=run, tol=tol)
            except (NoLinger, ValueError) as exc:
                raise UnresolvedWall(cur_lo, str(exc))
            if tr.lo_out is None or tr.hi_out is None or tr.lo_out is tr.hi_out:
                raise UnresolvedWall(tr.theta, "trajectory hit the wall exactly")
            med = mediator(tr.cp)
            center, u = med[0], med[1]
            dims = med[2] if len(med) > 2 else None
            e_lo = exit_side(manifold, tr.lo_out, center, u, dims=dims)
            e_hi = exit_side(manifold, tr.hi_out, center, u, dims=dims)
            if e_lo == e_hi:
                raise UnresolvedWall(tr.theta, "both sides leave the mediator on the same branch")
            walls.append(Wall(tr.theta, tr.cp, 1 if e_hi > 0 else -1, tr.lo_label, tr.hi_label))
            if tr.hi_label == target:
                break
            cur_lo = tr.hi
    return walls, labels


def extract_disk_boundary(dyn: Dynamics, z: CriticalPoint, steps: Sequence[Step],
                          samples: int = 512) -> DiskBoundary:
    """Boundary word of the unstable disk of z, read counterclockwise in its unstable frame."""
    if z.index != 2:
        raise ValueError("disk boundaries are defined for index-2 points")
    m = dyn.m
    u1, u2 = unstable_frame(dyn.field, z)
    r0 = dyn.opts.r0
    by_through = {s.through: s for s in steps}
    frames = {}

    def family(th):
        c, s = math.cos(th), math.sin(th)
        return m.retract(tuple(p + r0 * (c * a + s * b) for p, a, b in zip(z.coords, u1, u2)))

    def run(th):
        return dyn.integrate(family(th), track=True, exclude=(z.id,))

    def label(o):
        if o.kind != "ConvergedTo":
            return (o.kind, o.cp)
        return (o.cp, o.lift)

    def mediator(cid):
        if cid not in frames:
            c = dyn.by_id[cid]
            if cid not in by_through:
                raise UnresolvedWall(0.0, f"mediator {cid} carries no step")
            frames[cid] = (c.coords, unstable_frame(dyn.field, c)[0])
        return frames[cid]

    thetas = [2.0 * math.pi * (k + 0.5) / samples for k in range(samples)]
    walls, _ = walk_walls(run, thetas, label, mediator, m, closed=True)
    word = tuple((by_through[w.cp].id, w.sign) for w in walls)
    return DiskBoundary(z.id, canonical_rotation(word))


def scenario_hash(desc) -> str:
    return hashlib.sha256(json.dumps(desc, sort_keys=True).encode()).hexdigest()[:16]


def analyze(field, opts: Optional[FlowOptions] = None, seeds_per_axis: int = 8,
            samples: int = 512, base: Optional[int] = None, smale: bool = True):
    """Critical points, steps and disk boundaries of one Morse function."""
    from .flow import smale_check

    dyn = Dynamics(field, None, opts, seeds_per_axis)
    if smale:
        smale_check(dyn)
    steps = extract_steps(dyn)
    disks = [extract_disk_boundary(dyn, z, steps, samples) for z in dyn.cps if z.index == 2]
    mins = [c.id for c in dyn.cps if c.index == 0]
    desc = field.describe()
    data = MorseComplexData(list(dyn.cps), steps, disks, mins[0] if base is None else base,
                            f"Numerical({scenario_hash(desc)})", field.manifold.to_json())
    data.dynamics = dyn
    return data.validate()


# -- handwritten fixtures --------------------------------------------------

def torus_complex() -> MorseComplexData:
    """cos 2pi x + cos 2pi y on the flat torus, written out by hand."""
    cps = [CriticalPoint(0, (0.5, 0.5), 0, -2.0), CriticalPoint(1, (0.0, 0.5), 1, 0.0),
           CriticalPoint(2, (0.5, 0.0), 1, 0.0), CriticalPoint(3, (0.0, 0.0), 2, 2.0)]
    steps = [Step(0, 1, 0, 0, (1, 0)), Step(1, 2, 0, 0, (0, 1))]
    disk = DiskBoundary(3, canonical_rotation(((0, -1), (1, -1), (0, 1), (1, 1))))
    return MorseComplexData(cps, steps, [disk], 0, "Handwritten", {"kind": "torus"}).validate()


def sphere_complex() -> MorseComplexData:
    """Height on the round sphere: one minimum, one maximum."""
    cps = [CriticalPoint(0, (0.0, 0.0, -1.0), 0, -1.0), CriticalPoint(1, (0.0, 0.0, 1.0), 2, 1.0)]
    return MorseComplexData(cps, [], [DiskBoundary(1, ())], 0, "Handwritten",
                            {"kind": "sphere"}).validate()
