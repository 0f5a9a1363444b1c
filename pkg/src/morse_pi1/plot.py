"""Small SVG writers: complexes on a fundamental domain and strip charts."""
from __future__ import annotations

import math
from xml.sax.saxutils import escape

W, H, PAD = 420, 420, 30
COLORS = {0: "#1f77b4", 1: "#2ca02c", 2: "#d62728", 3: "#9467bd", 4: "#8c564b"}


def _f(x):
    return f"{x:.2f}"


def _domain_xy(manifold_kind, p):
    """Point -> unit square: identity mod 1 on the torus, longitude/latitude on the sphere."""
    if manifold_kind == "sphere":
        lon = math.atan2(p[1], p[0]) / (2 * math.pi) % 1.0
        lat = 0.5 + math.asin(max(-1.0, min(1.0, p[2]))) / math.pi
        return lon, lat
    return p[0] % 1.0, p[1] % 1.0


def _to_px(u, v):
    return PAD + u * (W - 2 * PAD), H - PAD - v * (H - 2 * PAD)


def _glyph(kind, x, y, index):
    c = COLORS.get(index, "#000")
    if index == 0:
        return f'<circle cx="{_f(x)}" cy="{_f(y)}" r="5" fill="{c}"/>'
    if index == 1:
        return (f'<path d="M{_f(x - 5)},{_f(y - 5)} L{_f(x + 5)},{_f(y + 5)} '
                f'M{_f(x - 5)},{_f(y + 5)} L{_f(x + 5)},{_f(y - 5)}" stroke="{c}" stroke-width="2"/>')
    return f'<rect x="{_f(x - 5)}" y="{_f(y - 5)}" width="10" height="10" fill="{c}"/>'


def _polylines(kind, pts):
    """Split a path wherever it wraps around the domain."""
    runs, cur, prev = [], [], None
    for p in pts:
        q = _domain_xy(kind, p)
        if prev is not None and (abs(q[0] - prev[0]) > 0.5 or abs(q[1] - prev[1]) > 0.5):
            if len(cur) > 1:
                runs.append(cur)
            cur = []
        cur.append(_to_px(*q))
        prev = q
    if len(cur) > 1:
        runs.append(cur)
    return runs


def complex_svg(data, curves=None, title="") -> str:
    """Critical points (circle = min, cross = saddle, square = max) and step curves."""
    kind = (data.manifold or {}).get("kind", "torus")
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{W}" height="{H}">',
           f'<rect x="{PAD}" y="{PAD}" width="{W - 2 * PAD}" height="{H - 2 * PAD}" '
           f'fill="none" stroke="#999"/>']
    if title:
        out.append(f'<text x="{PAD}" y="{PAD - 10}" font-size="12">{escape(title)}</text>')
    for sid, pts in sorted((curves or {}).items()):
        for run in _polylines(kind, pts):
            d = " ".join(f"{_f(x)},{_f(y)}" for x, y in run)
            out.append(f'<polyline points="{d}" fill="none" stroke="#555" stroke-width="1.5">'
                       f'<title>step {sid}</title></polyline>')
    for c in data.critical_points:
        if not c.coords:
            continue
        x, y = _to_px(*_domain_xy(kind, c.coords))
        out.append(_glyph(kind, x, y, c.index))
    out.append("</svg>")
    return "\n".join(out) + "\n"


def strip_svg(xs, series: dict, walls=(), xlabel="", title="") -> str:
    """One polyline per named series over a shared x axis; walls as dashed verticals."""
    w, h = 640, 240
    x0, x1 = (min(xs), max(xs)) if xs else (0.0, 1.0)
    ys = [y for vals in series.values() for y in vals] or [0]
    y0, y1 = min(ys + [0]), max(ys + [1])
    x1 = x1 if x1 > x0 else x0 + 1.0

    def px(x, y):
        return (PAD + (x - x0) / (x1 - x0) * (w - 2 * PAD),
                h - PAD - (y - y0) / (y1 - y0) * (h - 2 * PAD))

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}">',
           f'<rect x="{PAD}" y="{PAD}" width="{w - 2 * PAD}" height="{h - 2 * PAD}" '
           f'fill="none" stroke="#999"/>']
    if title:
        out.append(f'<text x="{PAD}" y="{PAD - 10}" font-size="12">{escape(title)}</text>')
    if xlabel:
        out.append(f'<text x="{w // 2}" y="{h - 6}" font-size="11">{escape(xlabel)}</text>')
    for wx in walls:
        a, top = px(wx, y1)
        _, bot = px(wx, y0)
        out.append(f'<line x1="{_f(a)}" y1="{_f(top)}" x2="{_f(a)}" y2="{_f(bot)}" '
                   f'stroke="#d62728" stroke-dasharray="4,3"/>')
    for n, (name, vals) in enumerate(sorted(series.items())):
        d = " ".join(f"{_f(a)},{_f(b)}" for a, b in (px(x, y) for x, y in zip(xs, vals)))
        c = COLORS.get(n % 5, "#000")
        out.append(f'<polyline points="{d}" fill="none" stroke="{c}" stroke-width="1.5">'
                   f'<title>{escape(str(name))}</title></polyline>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
