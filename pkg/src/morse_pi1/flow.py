"""Critical points, anti-gradient trajectories and separatrix bisection."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .geometry import ScalarField, grad, hessian


class FlowError(Exception):
    pass


class DegenerateCritical(FlowError):
    def __init__(self, point, eigenvalues):
        self.point = tuple(point)
        self.eigenvalues = tuple(eigenvalues)
        super().__init__(f"degenerate critical point at {self.point}, eigenvalues {self.eigenvalues}")


class TimedOut(FlowError):
    def __init__(self, t_max, point=None):
        self.t_max = t_max
        self.point = point
        super().__init__(f"trajectory did not settle before t_max = {t_max}")


class NoLinger(FlowError):
    pass


class NotSmaleWarning(UserWarning):
    pass


@dataclass(frozen=True)
class CriticalPoint:
    id: int
    coords: tuple
    index: int
    value: float
    eigenvalues: tuple = ()

    def to_json(self):
        return {"id": self.id, "index": self.index, "coords": list(self.coords), "value": self.value}


@dataclass(frozen=True)
class FlowOptions:
    eps_cp: float = 1e-5
    grad_tol: float = 1e-7
    t_linger: float = 25.0
    s_max: float = 5.0
    t_max: float = 5000.0
    r0: float = 1e-4
    rtol: float = 1e-9
    h0: float = 1e-3
    max_steps: int = 400000
    record_path: bool = True


@dataclass
class TrajectoryOutcome:
    kind: str                      # ConvergedTo | CrossedSlab | Escaped | Lingered
    time: float
    end: tuple                     # final point, torus part unwrapped
    cp: Optional[int] = None
    s_value: Optional[float] = None
    direction: Optional[str] = None
    path: list = field(default_factory=list)
    closest: dict = field(default_factory=dict)
    max_increase: float = 0.0
    lift: tuple = ()

    @property
    def label(self):
        if self.kind in ("ConvergedTo", "Lingered"):
            return (self.kind, self.cp, self.lift)
        if self.kind == "Escaped":
            return (self.kind, self.direction, ())
        return (self.kind, None, ())


# -- critical points -------------------------------------------------------

def _seeds(manifold, n):
    root = manifold.root
    if root.kind == "torus":
        base = [(i / n, j / n) for i in range(n) for j in range(n)]
    else:
        base = []
        for i in range(n):
            th = (i + 0.5) * math.pi / n
            for j in range(n):
                ph = 2.0 * math.pi * j / n
                base.append((math.sin(th) * math.cos(ph), math.sin(th) * math.sin(ph), math.cos(th)))
    if manifold.kind == "product_r":
        ss = [-0.5 + 2.0 * k / (n - 1) for k in range(n)]
        return [b + (s,) for b in base for s in ss]
    if manifold.kind == "product_square":
        ss = [-0.25 + 1.5 * k / (n - 1) for k in range(n)]
        return [b + (s, t) for b in base for s in ss for t in ss]
    return base


def _newton(field: ScalarField, p, max_iter=60, trust=0.1, s_max=5.0):
    m = field.manifold
    k = m.base_dim
    for _ in range(max_iter):
        g = np.array(grad(field, p))
        frame = m.tangent_frame(p)
        gi = frame.T @ g
        gn = float(np.linalg.norm(gi))
        if gn < 1e-14:
            break
        H = hessian(field, p, check=False)
        try:
            d = np.linalg.solve(H, -gi)
        except np.linalg.LinAlgError:
            d = np.linalg.lstsq(H, -gi, rcond=None)[0]
        nd = float(np.linalg.norm(d))
        if nd > trust:
            d *= trust / nd
        p = m.retract(tuple(np.array(p) + frame @ d))
        if any(abs(v) > s_max for v in p[k:]):
            return None
        if nd < 1e-15:
            break
    return p


def _snap(manifold, p):
    p = list(manifold.normalize(p))
    for i, v in enumerate(p):
        if abs(v) < 1e-13:
            p[i] = 0.0
        if manifold.periodic[i] and abs(v - 1.0) < 1e-12:
            p[i] = 0.0
    return tuple(p)


def classify(field: ScalarField, p):
    H = hessian(field, p, check=False)
    ev = np.linalg.eigvalsh(H)
    return int(np.sum(ev < 0)), tuple(float(v) for v in ev)


def find_critical_points(field: ScalarField, seeds_per_axis: int = 8, seeds=None):
    """Newton from a uniform seed grid, de-duplicated and sorted by (value, coords)."""
    if seeds_per_axis < 8:
        raise ValueError("seeds_per_axis must be at least 8")
    m = field.manifold
    found = []
    for seed in (seeds if seeds is not None else _seeds(m, seeds_per_axis)):
        p = _newton(field, seed)
        if p is None:
            continue
        gn = float(np.linalg.norm(grad(field, p)))
        if gn > 1e-10:
            # one more polish round from the current point
            p = _newton(field, p, max_iter=20, trust=1e-3)
            if p is None or float(np.linalg.norm(grad(field, p))) > 1e-10:
                continue
        p = _snap(m, p)
        if any(m.distance(p, q) < 1e-6 for q in found):
            continue
        found.append(p)
    out = []
    for p in found:
        idx, ev = classify(field, p)
        if min(abs(v) for v in ev) < 1e-6:
            raise DegenerateCritical(p, ev)
        out.append((idx, ev, p, field.value(p)))
    out.sort(key=lambda r: (round(r[3], 9), tuple(round(c, 9) for c in r[2])))
    return [CriticalPoint(i, r[2], r[0], r[3], r[1]) for i, r in enumerate(out)]


def unstable_frame(field: ScalarField, cp: CriticalPoint):
    """Unit eigenvectors of the negative Hessian eigenvalues, most negative first,
    each signed so that its first nonzero ambient component is positive."""
    if cp.index == 0:
        return []
    m = field.manifold
    H = hessian(field, cp.coords, check=False)
    ev, vec = np.linalg.eigh(H)
    frame = m.tangent_frame(cp.coords)
    order = sorted(range(len(ev)), key=lambda i: (round(ev[i] / max(1.0, abs(ev[i])), 9), i))
    out = []
    for i in order:
        if ev[i] >= 0:
            continue
        v = frame @ vec[:, i]
        v = v / np.linalg.norm(v)
        for c in v:
            if abs(c) > 1e-12:
                if c < 0:
                    v = -v
                break
        out.append(tuple(float(c) + 0.0 for c in v))
    return out


def stable_frame(field: ScalarField, cp: CriticalPoint):
    m = field.manifold
    H = hessian(field, cp.coords, check=False)
    ev, vec = np.linalg.eigh(H)
    frame = m.tangent_frame(cp.coords)
    out = []
    for i in range(len(ev)):
        if ev[i] > 0:
            v = frame @ vec[:, i]
            v = v / np.linalg.norm(v)
            out.append(tuple(float(c) for c in v))
    return out


# -- integration -----------------------------------------------------------

class Dynamics:
    """Anti-gradient flow of one field, with its critical points cached."""

    def __init__(self, field: ScalarField, cps: Optional[Sequence[CriticalPoint]] = None,
                 opts: Optional[FlowOptions] = None, seeds_per_axis: int = 8):
        self.field = field
        self.m = field.manifold
        self.opts = opts or FlowOptions()
        self.cps = list(cps) if cps is not None else find_critical_points(field, seeds_per_axis)
        self.by_id = {c.id: c for c in self.cps}
        lam = max([max(abs(v) for v in c.eigenvalues) for c in self.cps if c.eigenvalues] or [1.0])
        # RK4 is stable for h * |lambda| < 2.78; leave margin for non-linear regions
        self.h_max = 1.5 / lam
        self.k = self.m.base_dim
        self._sphere = self.m.is_sphere
        self._torus = self.m.root.kind == "torus"
        # split fields f(m) + C h(s): saddle approaches are measured on M alone
        self.split = getattr(field, "split", False)
        self.track_m = self.m.base if self.split else self.m
        self.track_k = self.k if self.split else None

    # the right-hand side -grad f, projected on the sphere
    def velocity(self, p):
        g = self.field.grad_amb(p)
        if self._sphere:
            dot = p[0] * g[0] + p[1] * g[1] + p[2] * g[2]
            out = [-v for v in g]
            out[0] += dot * p[0]
            out[1] += dot * p[1]
            out[2] += dot * p[2]
            return out
        return [-v for v in g]

    def _rk4(self, p, h):
        k1 = self.velocity(p)
        p2 = [a + 0.5 * h * b for a, b in zip(p, k1)]
        k2 = self.velocity(p2)
        p3 = [a + 0.5 * h * b for a, b in zip(p, k2)]
        k3 = self.velocity(p3)
        p4 = [a + h * b for a, b in zip(p, k3)]
        k4 = self.velocity(p4)
        out = [a + h / 6.0 * (b + 2.0 * c + 2.0 * d + e) for a, b, c, d, e in zip(p, k1, k2, k3, k4)]
        return self.m.retract(out)

    def nearest(self, p, pool=None):
        best, bd = None, math.inf
        for c in (pool if pool is not None else self.cps):
            d = self.m.distance(p, c.coords)
            if d < bd:
                best, bd = c, d
        return best, bd

    def lift_of(self, p, cp):
        return self.m.lift_offset(p, cp.coords) if self._torus else ()

    def integrate(self, p0, track: bool = False, exclude=(), slab: Optional[float] = None,
                  opts: Optional[FlowOptions] = None) -> TrajectoryOutcome:
        o = opts or self.opts
        m = self.m
        k = self.k
        f = self.field.value
        p = list(m.retract(tuple(p0)))
        t = 0.0
        h = min(o.h0, self.h_max)
        fp = f(p)
        path = [tuple(p)] if o.record_path else []
        closest = {}
        pool = [c for c in self.cps if c.index >= 1 and c.id not in exclude] if track else []
        linger_cp, linger_t = None, 0.0
        max_inc = 0.0
        steps = 0

        def settle(q):
            gq = self.field.grad_amb(q)
            if self._sphere:
                gq = m.project(q, gq)
            gn = math.sqrt(sum(v * v for v in gq))
            if gn >= o.grad_tol:
                return None, None
            c, d = self.nearest(q)
            if d >= o.eps_cp:
                return None, None
            return c, d

        c, _ = settle(p)
        if c is not None and c.index == 0:
            return TrajectoryOutcome("ConvergedTo", 0.0, tuple(p), cp=c.id, path=path,
                                     lift=self.lift_of(p, c))
        while True:
            if steps >= o.max_steps or t > o.t_max:
                raise TimedOut(o.t_max, tuple(p))
            steps += 1
            y1 = self._rk4(p, h)
            yh = self._rk4(p, 0.5 * h)
            y2 = self._rk4(yh, 0.5 * h)
            err = max(abs(a - b) for a, b in zip(y1, y2)) / 15.0
            scale = o.rtol * max(1.0, max(abs(v) for v in y2))
            fn = f(y2)
            inc = fn - fp
            if err > scale or inc > 1e-12 * (1.0 + abs(fp)):
                if h < 1e-14:
                    raise TimedOut(o.t_max, tuple(p))
                fac = 0.9 * (scale / err) ** 0.2 if err > 0 else 0.5
                h *= max(0.1, min(0.5, fac))
                continue
            if slab is not None and (p[k] - slab) * (y2[k] - slab) <= 0 and y2[k] != p[k]:
                q, dt = self._slab_hit(p, h, slab)
                if o.record_path:
                    path.append(tuple(q))
                return TrajectoryOutcome("CrossedSlab", t + dt, tuple(q), s_value=slab, path=path,
                                         closest=closest, max_increase=max_inc)
            max_inc = max(max_inc, inc)
            p, fp = list(y2), fn
            t += h
            if o.record_path:
                path.append(tuple(p))
            if track:
                tk = self.track_k
                for c in pool:
                    d = (self.track_m.distance(p[:tk], c.coords[:tk]) if tk
                         else m.distance(p, c.coords))
                    if d < closest.get(c.id, math.inf):
                        closest[c.id] = d
            if k < len(p):
                for v in p[k:]:
                    if abs(v) > o.s_max:
                        return TrajectoryOutcome("Escaped", t, tuple(p),
                                                 direction="+inf" if v > 0 else "-inf",
                                                 path=path, closest=closest, max_increase=max_inc)
            c, _ = settle(p)
            if c is not None:
                if c.index == 0:
                    return TrajectoryOutcome("ConvergedTo", t, tuple(p), cp=c.id, path=path,
                                             closest=closest, max_increase=max_inc,
                                             lift=self.lift_of(p, c))
                if linger_cp == c.id:
                    linger_t += h
                else:
                    linger_cp, linger_t = c.id, h
                if linger_t > o.t_linger:
                    return TrajectoryOutcome("Lingered", t, tuple(p), cp=c.id, path=path,
                                             closest=closest, max_increase=max_inc,
                                             lift=self.lift_of(p, c))
            else:
                linger_cp, linger_t = None, 0.0
            fac = 0.9 * (scale / err) ** 0.2 if err > 0 else 4.0
            h = min(self.h_max, h * max(1.0, min(4.0, fac)))

    def _slab_hit(self, p, h, slab):
        k = self.k
        lo, hi = 0.0, h
        q = p
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            q = self._rk4(p, mid)
            if (p[k] - slab) * (q[k] - slab) > 0:
                lo = mid
            else:
                hi = mid
            if hi - lo < 1e-15 * max(1.0, h):
                break
        q = list(self._rk4(p, hi))
        q[k] = slab
        return q, hi

    def perturbed(self, p0, opts=None, max_kicks=4):
        """Integrate; on Lingered, kick along the cp's unstable direction and continue."""
        kicks = []
        out = self.integrate(p0, opts=opts)
        while out.kind == "Lingered" and len(kicks) < max_kicks:
            c = self.by_id[out.cp]
            u = unstable_frame(self.field, c)[0]
            r0 = (opts or self.opts).r0
            start = [a + r0 * b for a, b in zip(out.end, u)]
            kicks.append(out.cp)
            nxt = self.integrate(start, opts=opts)
            nxt.time += out.time
            nxt.path = out.path + nxt.path
            out = nxt
        out.kicks = kicks
        return out

    def seed(self, cp: CriticalPoint, direction, r0=None):
        r0 = self.opts.r0 if r0 is None else r0
        return self.m.retract(tuple(a + r0 * b for a, b in zip(cp.coords, direction)))


def integrate(field: ScalarField, p0, opts: Optional[FlowOptions] = None, cps=None,
              slab: Optional[float] = None) -> TrajectoryOutcome:
    return Dynamics(field, cps, opts).integrate(p0, slab=slab)


# -- separatrix bisection --------------------------------------------------

@dataclass
class Transition:
    theta: float
    cp: int
    lo: float
    hi: float
    lo_label: object = None
    hi_label: object = None
    lo_out: Optional[TrajectoryOutcome] = None
    hi_out: Optional[TrajectoryOutcome] = None
    distance: float = 0.0

    def __iter__(self):
        return iter((self.theta, self.cp))


def bisect_transition(family: Callable[[float], tuple], field_or_dyn, lo: float, hi: float,
                      label: Optional[Callable] = None, exclude=(), tol: float = 1e-10,
                      max_depth: int = 60, near: float = 1e-3,
                      run: Optional[Callable[[float], TrajectoryOutcome]] = None) -> Transition:
    """Locate the wall between lo and hi and the critical point mediating it.

    A trajectory seeded exactly on the wall lingers at the mediating point.
    A bisection width away, the two bracketing trajectories only pass close
    to it, so the mediator is the index >= 1 point both of them approach
    most closely.  Unpacks as (theta, cp).
    """
    dyn = field_or_dyn if isinstance(field_or_dyn, Dynamics) or field_or_dyn is None \
        else Dynamics(field_or_dyn)
    if run is None:
        def run(th):
            return dyn.integrate(family(th), track=True, exclude=exclude)
    lab = label or (lambda o: o.label)
    lo_out, hi_out = run(lo), run(hi)
    a, b = lab(lo_out), lab(hi_out)
    if a == b:
        raise ValueError("both ends of the interval land in the same place")
    for _ in range(max_depth):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        out = run(mid)
        if out.kind == "Lingered":
            return Transition(mid, out.cp, lo, hi, a, b, lo_out, hi_out, 0.0)
        lm = lab(out)
        if lm == a:
            lo, lo_out = mid, out
        else:
            hi, hi_out, b = mid, out, lm
    common = set(lo_out.closest) & set(hi_out.closest)
    if not common:
        raise NoLinger("no index >= 1 point was approached")
    cid = min(common, key=lambda c: (max(lo_out.closest[c], hi_out.closest[c]), c))
    d = max(lo_out.closest[cid], hi_out.closest[cid])
    if d > near:
        raise NoLinger(f"closest approach {d:.2e} to cp {cid} is too far")
    return Transition(0.5 * (lo + hi), cid, lo, hi, a, b, lo_out, hi_out, d)


def exit_side(manifold, out: TrajectoryOutcome, center, u, radius: float = 1e-2,
              dims: Optional[int] = None) -> int:
    """Which branch (+1 along u, -1 against u) the trajectory leaves `center` by.

    With `dims`, only the first dims coordinates are compared (split fields)."""
    path = out.path
    if dims:
        path = [p[:dims] for p in path]
        center, u = center[:dims], u[:dims]
        manifold = manifold.base
    if not path:
        raise ValueError("trajectory has no recorded path")
    ds = [manifold.distance(p, center) for p in path]
    i = min(range(len(ds)), key=ds.__getitem__)
    j = i
    while j + 1 < len(path) and ds[j] < max(radius, 10.0 * ds[i]):
        j += 1
    v = manifold.delta(center, path[j])
    dot = sum(a * b for a, b in zip(v, u))
    return 1 if dot > 0 else -1


def smale_check(dyn: Dynamics, warn: bool = True):
    """Heuristic Smale check: no unstable separatrix of a saddle lingers elsewhere."""
    issues = []
    for c in dyn.cps:
        if c.index != 1:
            continue
        u = unstable_frame(dyn.field, c)[0]
        for sgn in (-1.0, 1.0):
            out = dyn.integrate(dyn.seed(c, [sgn * v for v in u]))
            if out.kind == "Lingered":
                issues.append((c.id, sgn, out.cp))
    if issues and warn:
        warnings.warn(NotSmaleWarning(f"saddle connections detected: {issues}"))
    return issues
