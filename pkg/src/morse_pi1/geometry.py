"""Model manifolds, scalar fields on them, and the interpolation constructions.

Points are plain tuples of ambient coordinates.  The torus uses (x, y) taken
mod 1, the sphere is the unit sphere in R^3 with coordinates (x, y, z), and the
product spaces append s (and t for the second square coordinate).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import expr as E


class GeometryError(Exception):
    pass


class NotNearCritical(GeometryError):
    pass


class ProfileDegenerate(GeometryError):
    pass


class InteriorCriticalPoint(GeometryError):
    def __init__(self, point, detail=""):
        self.point = tuple(point)
        super().__init__(f"critical point off the slabs at {self.point} {detail}".strip())


# -- manifolds -------------------------------------------------------------

@dataclass(frozen=True)
class Manifold:
    kind: str
    base: Optional["Manifold"] = None

    def __post_init__(self):
        if self.kind not in ("torus", "sphere", "product_r", "product_square"):
            raise ValueError(self.kind)
        if self.kind.startswith("product") and (self.base is None or self.base.kind.startswith("product")):
            raise ValueError("products take a torus or sphere base")

    @property
    def root(self) -> "Manifold":
        return self.base if self.base is not None else self

    @property
    def ambient_dim(self) -> int:
        return len(self.variables)

    @property
    def dim(self) -> int:
        extra = {"product_r": 1, "product_square": 2}.get(self.kind, 0)
        return 2 + extra

    @property
    def base_dim(self) -> int:
        return self.root.ambient_dim

    @property
    def variables(self) -> tuple:
        root = ("x", "y") if self.root.kind == "torus" else ("x", "y", "z")
        if self.kind == "product_r":
            return root + ("s",)
        if self.kind == "product_square":
            return root + ("s", "t")
        return root

    @property
    def periodic(self) -> tuple:
        n = self.ambient_dim
        if self.root.kind == "torus":
            return (True, True) + (False,) * (n - 2)
        return (False,) * n

    @property
    def is_sphere(self) -> bool:
        return self.root.kind == "sphere"

    def normalize(self, p):
        """Canonical representative: wrap torus coordinates, re-project the sphere."""
        p = [float(v) for v in p]
        if self.root.kind == "torus":
            for i in (0, 1):
                p[i] = p[i] - math.floor(p[i])
                if p[i] >= 1.0:
                    p[i] = 0.0
        else:
            r = math.sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2])
            p[0] /= r
            p[1] /= r
            p[2] /= r
        return tuple(p)

    def retract(self, p):
        """Back onto the manifold without wrapping (lifts stay continuous)."""
        if self.root.kind == "sphere":
            p = list(p)
            r = math.sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2])
            p[0] /= r
            p[1] /= r
            p[2] /= r
            return tuple(p)
        return tuple(p)

    def delta(self, p, q):
        """Ambient displacement from p to q, torus part taken as the shortest lift."""
        d = [b - a for a, b in zip(p, q)]
        if self.root.kind == "torus":
            d[0] -= round(d[0])
            d[1] -= round(d[1])
        return d

    def distance(self, p, q) -> float:
        return math.sqrt(sum(v * v for v in self.delta(p, q)))

    def lift_offset(self, p, anchor):
        """Integer lattice offset of the lift p relative to the point anchor in [0,1)^2."""
        if self.root.kind != "torus":
            return ()
        return (int(round(p[0] - anchor[0])), int(round(p[1] - anchor[1])))

    def project(self, p, v):
        """Orthogonal projection of an ambient vector to the tangent space at p."""
        if self.root.kind != "sphere":
            return tuple(v)
        dot = p[0] * v[0] + p[1] * v[1] + p[2] * v[2]
        out = list(v)
        out[0] -= dot * p[0]
        out[1] -= dot * p[1]
        out[2] -= dot * p[2]
        return tuple(out)

    def tangent_frame(self, p) -> np.ndarray:
        """Orthonormal tangent basis at p, as columns of an ambient_dim x dim array."""
        n = self.ambient_dim
        frame = np.zeros((n, self.dim))
        if self.root.kind == "torus":
            frame[0, 0] = frame[1, 1] = 1.0
            k0 = 2
        else:
            x = np.array(p[:3], dtype=float)
            x /= np.linalg.norm(x)
            k = int(np.argmin(np.abs(x)))
            a = np.zeros(3)
            a[k] = 1.0
            e1 = a - a.dot(x) * x
            e1 /= np.linalg.norm(e1)
            e2 = np.cross(x, e1)
            frame[:3, 0] = e1
            frame[:3, 1] = e2
            k0 = 3
        for j in range(self.dim - 2):
            frame[k0 + j, 2 + j] = 1.0
        return frame

    def sample_points(self, n: int):
        """Deterministic sample of the compact factor, used for bounds and seeds."""
        if self.root.kind == "torus":
            return [((i + 0.5) / n, (j + 0.5) / n) for i in range(n) for j in range(n)]
        pts = []
        total = n * n
        golden = math.pi * (3.0 - math.sqrt(5.0))
        for i in range(total):
            z = 1.0 - 2.0 * (i + 0.5) / total
            r = math.sqrt(max(0.0, 1.0 - z * z))
            pts.append((r * math.cos(golden * i), r * math.sin(golden * i), z))
        return pts

    def to_json(self):
        if self.base is None:
            return {"kind": self.kind}
        return {"kind": self.kind, "base": self.base.to_json()}

    @staticmethod
    def from_json(d):
        base = Manifold.from_json(d["base"]) if "base" in d else None
        return Manifold(d["kind"], base)


def Torus() -> Manifold:
    return Manifold("torus")


def Sphere() -> Manifold:
    return Manifold("sphere")


def ProductR(base: Manifold) -> Manifold:
    return Manifold("product_r", base)


def ProductSquare(base: Manifold) -> Manifold:
    return Manifold("product_square", base)


# -- scalar fields ---------------------------------------------------------

class ScalarField:
    """Smooth function on a manifold, given through its ambient extension."""

    manifold: Manifold

    def value(self, p) -> float:
        raise NotImplementedError

    def grad_amb(self, p):
        raise NotImplementedError

    def hess_amb(self, p) -> np.ndarray:
        raise NotImplementedError

    def describe(self):
        raise NotImplementedError


class ExprField(ScalarField):
    def __init__(self, manifold: Manifold, expression):
        self.manifold = manifold
        self.source = expression if isinstance(expression, str) else E.to_string(expression)
        self.expr = E.parse(expression) if isinstance(expression, str) else expression
        extra = E.free_variables(self.expr) - set(manifold.variables)
        if extra:
            raise E.UnknownIdentifier(sorted(extra)[0])
        vs = manifold.variables
        self._grad_exprs = [E.diff(self.expr, v) for v in vs]
        self._hess_exprs = [[E.diff(g, v) for v in vs] for g in self._grad_exprs]
        self._val = E.compile_many([self.expr], vs)
        self._grad = E.compile_many(self._grad_exprs, vs)
        self._hess = E.compile_many([h for row in self._hess_exprs for h in row], vs)

    def value(self, p):
        return self._val(*p)[0]

    def grad_amb(self, p):
        return self._grad(*p)

    def hess_amb(self, p):
        n = self.manifold.ambient_dim
        return np.array(self._hess(*p), dtype=float).reshape(n, n)

    def describe(self):
        return {"type": "expr", "manifold": self.manifold.to_json(), "expr": self.source}

    def __repr__(self):
        return f"ExprField({self.source!r} on {self.manifold.kind})"


def field_from(manifold, f):
    if isinstance(f, ScalarField):
        return f
    return ExprField(manifold, f)


def grad(field: ScalarField, p):
    """Riemannian gradient at p, as an ambient tangent vector."""
    return field.manifold.project(p, field.grad_amb(p))


def grad_norm(field: ScalarField, p) -> float:
    return math.sqrt(sum(v * v for v in grad(field, p)))


def hessian(field: ScalarField, p, check: bool = True) -> np.ndarray:
    """Hessian in the orthonormal tangent frame at p.

    On the sphere the ambient Hessian is corrected by the second fundamental
    form term -(grad f . n) I on the sphere block.
    """
    m = field.manifold
    if check and grad_norm(field, p) > 1e-6:
        raise NotNearCritical(f"|grad| = {grad_norm(field, p):.3e} at {tuple(p)}")
    H = field.hess_amb(p)
    if m.is_sphere:
        g = field.grad_amb(p)
        dot = p[0] * g[0] + p[1] * g[1] + p[2] * g[2]
        H = H.copy()
        for i in range(3):
            H[i, i] -= dot
    frame = m.tangent_frame(p)
    out = frame.T @ H @ frame
    return 0.5 * (out + out.T)


# -- blend and interpolation ----------------------------------------------

def _smooth(u):
    return u * u * (3.0 - 2.0 * u)


def _dsmooth(u):
    return 6.0 * u * (1.0 - u)


def _ddsmooth(u):
    return 6.0 - 12.0 * u


@dataclass(frozen=True)
class Blend:
    """C^2 monotone cutoff: 0 for s <= eps, 1 for s >= 1 - eps (smoothstep twice)."""
    eps: float = 0.1

    def __post_init__(self):
        if not 0.0 < self.eps <= 0.5:
            raise ValueError("eps must lie in (0, 1/2]")

    def _u(self, s):
        width = 1.0 - 2.0 * self.eps
        if width <= 0.0:
            raise ValueError("blend width is zero at eps = 1/2")
        return (s - self.eps) / width, 1.0 / width

    def rho(self, s):
        if s <= self.eps:
            return 0.0
        if s >= 1.0 - self.eps:
            return 1.0
        u, _ = self._u(s)
        return _smooth(_smooth(u))

    def drho(self, s):
        if s <= self.eps or s >= 1.0 - self.eps:
            return 0.0
        u, du = self._u(s)
        return _dsmooth(_smooth(u)) * _dsmooth(u) * du

    def ddrho(self, s):
        if s <= self.eps or s >= 1.0 - self.eps:
            return 0.0
        u, du = self._u(s)
        su = _smooth(u)
        d1 = _dsmooth(u)
        return (_ddsmooth(su) * d1 * d1 + _dsmooth(su) * _ddsmooth(u)) * du * du

    def max_drho(self):
        if 1.0 - 2.0 * self.eps <= 0.0:
            return math.inf
        # S'(S(u)) S'(u) peaks at u = 1/2 where it equals 1.5 * 1.5
        return 2.25 / (1.0 - 2.0 * self.eps)


DEFAULT_PROFILE = "pow(s,3)-1.5*pow(s,2)"


class Profile:
    """One-variable profile h(s) with its first two derivatives compiled."""

    def __init__(self, source=DEFAULT_PROFILE, var="s"):
        self.source = source if isinstance(source, str) else E.to_string(source)
        self.expr = E.parse(source) if isinstance(source, str) else source
        extra = E.free_variables(self.expr) - {var}
        if extra:
            raise E.UnknownIdentifier(sorted(extra)[0])
        d1 = E.diff(self.expr, var)
        d2 = E.diff(d1, var)
        self._f = E.compile_many([self.expr, d1, d2], (var,))

    def __call__(self, s):
        return self._f(s)[0]

    def all(self, s):
        return self._f(s)

    def d(self, s):
        return self._f(s)[1]


@dataclass
class InterpolationSpec:
    f1: ScalarField
    f2: ScalarField
    eps: float = 0.1
    C: Optional[float] = None
    h: str = DEFAULT_PROFILE

    def __post_init__(self):
        if self.f1.manifold != self.f2.manifold:
            raise ValueError("f1 and f2 must live on the same manifold")
        if self.f1.manifold.kind.startswith("product"):
            raise ValueError("interpolate fields on a closed surface")


def _same_field(f1, f2):
    return isinstance(f1, ExprField) and isinstance(f2, ExprField) and f1.expr == f2.expr


def max_abs_difference(f1: ScalarField, f2: ScalarField, n: int = 96) -> float:
    if _same_field(f1, f2):
        return 0.0
    return max(abs(f2.value(p) - f1.value(p)) for p in f1.manifold.sample_points(n))


def pick_C(spec: InterpolationSpec, max_ds: Optional[float] = None) -> float:
    """C = (1 + max |d_s F~|) / min over [eps, 1-eps] of |h'|."""
    prof = Profile(spec.h)
    eps = spec.eps
    grid = [eps + (1.0 - 2.0 * eps) * k / 400 for k in range(401)]
    hmin = min(abs(prof.d(s)) for s in grid)
    if hmin < 1e-9:
        raise ProfileDegenerate(f"min |h'| on [{eps}, {1 - eps}] is {hmin:.3e}")
    if max_ds is None:
        diff = max_abs_difference(spec.f1, spec.f2)
        if diff == 0.0:
            max_ds = 0.0
        else:
            blend = Blend(eps)
            ss = [eps + (1.0 - 2.0 * eps) * (k + 0.5) / 400 for k in range(400)]
            max_ds = diff * max(abs(blend.drho(s)) for s in ss)
    return (1.0 + max_ds) / hmin


class InterpolationField(ScalarField):
    """F(m, s) = (1 - rho(s)) f1(m) + rho(s) f2(m) + C h(s) on M x R."""

    def __init__(self, f1: ScalarField, f2: ScalarField, C: float, eps: float = 0.1,
                 h: str = DEFAULT_PROFILE):
        self.f1, self.f2, self.C, self.eps = f1, f2, float(C), eps
        self.blend = Blend(eps)
        self.profile = Profile(h)
        self.h_source = self.profile.source
        self.manifold = ProductR(f1.manifold)
        self._k = f1.manifold.ambient_dim
        self._same = _same_field(f1, f2)

    def tilde(self, p):
        m, s = p[:self._k], p[self._k]
        r = self.blend.rho(s)
        if r == 0.0 or self._same:
            return self.f1.value(m)
        if r == 1.0:
            return self.f2.value(m)
        return (1.0 - r) * self.f1.value(m) + r * self.f2.value(m)

    def value(self, p):
        return self.tilde(p) + self.C * self.profile(p[self._k])

    def grad_amb(self, p):
        m, s = p[:self._k], p[self._k]
        r = self.blend.rho(s)
        hd = self.profile.d(s)
        if r == 0.0 or self._same:
            return tuple(self.f1.grad_amb(m)) + (self.C * hd,)
        if r == 1.0:
            return tuple(self.f2.grad_amb(m)) + (self.C * hd,)
        g1, g2 = self.f1.grad_amb(m), self.f2.grad_amb(m)
        gm = tuple((1.0 - r) * a + r * b for a, b in zip(g1, g2))
        ds = self.blend.drho(s) * (self.f2.value(m) - self.f1.value(m))
        return gm + (ds + self.C * hd,)

    def hess_amb(self, p):
        k = self._k
        m, s = p[:k], p[k]
        r = self.blend.rho(s)
        _, _, hdd = self.profile.all(s)
        H = np.zeros((k + 1, k + 1))
        if r == 0.0 or self._same:
            H[:k, :k] = self.f1.hess_amb(m)
        elif r == 1.0:
            H[:k, :k] = self.f2.hess_amb(m)
        else:
            H[:k, :k] = (1.0 - r) * self.f1.hess_amb(m) + r * self.f2.hess_amb(m)
            dr = self.blend.drho(s)
            cross = dr * (np.array(self.f2.grad_amb(m)) - np.array(self.f1.grad_amb(m)))
            H[:k, k] = cross
            H[k, :k] = cross
            H[k, k] = self.blend.ddrho(s) * (self.f2.value(m) - self.f1.value(m))
        H[k, k] += self.C * hdd
        return H

    def describe(self):
        return {"type": "interpolation", "f1": self.f1.describe(), "f2": self.f2.describe(),
                "C": self.C, "eps": self.eps, "h": self.h_source}


class ProfileField(ScalarField):
    """F(m, s) = f(m) + C h(s): the split field of an interpolation-type function."""

    split = True

    def __init__(self, f: ScalarField, C: float, h: str):
        self.f, self.C = f, float(C)
        self.profile = Profile(h)
        self.h_source = self.profile.source
        self.manifold = ProductR(f.manifold)
        self._k = f.manifold.ambient_dim

    def value(self, p):
        return self.f.value(p[:self._k]) + self.C * self.profile(p[self._k])

    def grad_amb(self, p):
        return tuple(self.f.grad_amb(p[:self._k])) + (self.C * self.profile.d(p[self._k]),)

    def hess_amb(self, p):
        k = self._k
        H = np.zeros((k + 1, k + 1))
        H[:k, :k] = self.f.hess_amb(p[:k])
        H[k, k] = self.C * self.profile.all(p[k])[2]
        return H

    def describe(self):
        return {"type": "profile", "f": self.f.describe(), "C": self.C, "h": self.h_source}


class SquareField(ScalarField):
    """F~ + C (h(s) + h(t)) on M x [0,1]^2 with corners f1 (0,0), f1 (1,0), f2 (0,1), f3 (1,1).

    The bilinear blend restricts to f1 on t <= eps, F12 on s <= eps,
    F13 on s >= 1 - eps and F23 on t >= 1 - eps.
    """

    def __init__(self, f1, f2, f3, C: float, eps: float = 0.1, h: str = DEFAULT_PROFILE):
        self.f1, self.f2, self.f3 = f1, f2, f3
        self.C, self.eps = float(C), eps
        self.blend = Blend(eps)
        self.profile = Profile(h)
        self.h_source = self.profile.source
        self.manifold = ProductSquare(f1.manifold)
        self._k = f1.manifold.ambient_dim

    def _weights(self, s, t):
        rs, rt = self.blend.rho(s), self.blend.rho(t)
        # weights of f1, f2, f3
        return (1.0 - rt), rt * (1.0 - rs), rt * rs

    def value(self, p):
        k = self._k
        m, s, t = p[:k], p[k], p[k + 1]
        w1, w2, w3 = self._weights(s, t)
        v = 0.0
        if w1:
            v += w1 * self.f1.value(m)
        if w2:
            v += w2 * self.f2.value(m)
        if w3:
            v += w3 * self.f3.value(m)
        return v + self.C * (self.profile(s) + self.profile(t))

    def grad_amb(self, p):
        k = self._k
        m, s, t = p[:k], p[k], p[k + 1]
        b = self.blend
        rs, rt = b.rho(s), b.rho(t)
        drs, drt = b.drho(s), b.drho(t)
        w = (1.0 - rt, rt * (1.0 - rs), rt * rs)
        dws = (0.0, -rt * drs, rt * drs)
        dwt = (-drt, drt * (1.0 - rs), drt * rs)
        g = [0.0] * k
        ds = self.C * self.profile.d(s)
        dt = self.C * self.profile.d(t)
        for i, f in enumerate((self.f1, self.f2, self.f3)):
            if w[i]:
                gf = f.grad_amb(m)
                for j in range(k):
                    g[j] += w[i] * gf[j]
            if dws[i] or dwt[i]:
                v = f.value(m)
                ds += dws[i] * v
                dt += dwt[i] * v
        return tuple(g) + (ds, dt)

    def hess_amb(self, p):
        k = self._k
        m, s, t = p[:k], p[k], p[k + 1]
        b = self.blend
        rs, rt = b.rho(s), b.rho(t)
        drs, drt = b.drho(s), b.drho(t)
        ddrs, ddrt = b.ddrho(s), b.ddrho(t)
        fs = (self.f1, self.f2, self.f3)
        v = np.array([f.value(m) for f in fs])
        g = np.array([f.grad_amb(m) for f in fs], dtype=float)
        Hs = [f.hess_amb(m) for f in fs]
        w = np.array([1.0 - rt, rt * (1.0 - rs), rt * rs])
        dws = np.array([0.0, -rt * drs, rt * drs])
        dwt = np.array([-drt, drt * (1.0 - rs), drt * rs])
        dwss = np.array([0.0, -rt * ddrs, rt * ddrs])
        dwtt = np.array([-ddrt, ddrt * (1.0 - rs), ddrt * rs])
        dwst = np.array([0.0, -drt * drs, drt * drs])
        H = np.zeros((k + 2, k + 2))
        for i in range(3):
            H[:k, :k] += w[i] * Hs[i]
        H[:k, k] = dws @ g
        H[k, :k] = H[:k, k]
        H[:k, k + 1] = dwt @ g
        H[k + 1, :k] = H[:k, k + 1]
        H[k, k] = dwss @ v + self.C * self.profile.all(s)[2]
        H[k + 1, k + 1] = dwtt @ v + self.C * self.profile.all(t)[2]
        H[k, k + 1] = H[k + 1, k] = dwst @ v
        return H

    def describe(self):
        return {"type": "square", "f1": self.f1.describe(), "f2": self.f2.describe(),
                "f3": self.f3.describe(), "C": self.C, "eps": self.eps, "h": self.h_source}


def pick_C_square(f1, f2, f3, eps=0.1, h=DEFAULT_PROFILE) -> float:
    """Same bound as pick_C, applied to both square directions."""
    d = max(max_abs_difference(f1, f2), max_abs_difference(f2, f3),
            max_abs_difference(f1, f3))
    blend = Blend(eps)
    return pick_C(InterpolationSpec(f1, f1, eps=eps, h=h), max_ds=d * blend.max_drho()) \
        if d else pick_C(InterpolationSpec(f1, f1, eps=eps, h=h))


def build_interpolation(spec: InterpolationSpec, seeds_per_axis: int = 8, check: bool = True):
    """F = F~ + C h on M x R, checked against the index-shift contract.

    Every critical point must sit on s = 0 (index of f1 plus one) or s = 1
    (index of f2); otherwise C was too small.
    """
    from .flow import find_critical_points

    C = spec.C if spec.C is not None else pick_C(spec)
    F = InterpolationField(spec.f1, spec.f2, C, spec.eps, spec.h)
    if check:
        check_index_shift(F, seeds_per_axis)
    return F


def check_index_shift(F: InterpolationField, seeds_per_axis: int = 8):
    from .flow import find_critical_points

    k = F._k
    c1 = find_critical_points(F.f1, seeds_per_axis)
    c2 = find_critical_points(F.f2, seeds_per_axis)
    cF = find_critical_points(F, seeds_per_axis)
    m = F.f1.manifold

    def match(cps, q):
        best = min(cps, key=lambda c: m.distance(c.coords, q))
        return best if m.distance(best.coords, q) < 1e-5 else None

    for c in cF:
        s = c.coords[k]
        q = c.coords[:k]
        if abs(s) < 1e-6:
            ref, shift = match(c1, q), 1
        elif abs(s - 1.0) < 1e-6:
            ref, shift = match(c2, q), 0
        else:
            raise InteriorCriticalPoint(c.coords)
        if ref is None or ref.index + shift != c.index:
            raise InteriorCriticalPoint(c.coords, "(index shift violated)")
    if len(cF) != len(c1) + len(c2):
        raise InteriorCriticalPoint((), f"expected {len(c1) + len(c2)} critical points, found {len(cF)}")
    return cF
