"""Relative path classes for the worked interpolation-type examples.

    python3 scripts/relative_examples.py
"""
import time

from morse_pi1.mscomplex import sphere_complex, torus_complex
from morse_pi1.relpi1 import InterpolationProfile, RelEndpoint, build_relative_complex, rel_classes

CASES = [
    ("cubic, base at -inf", "pow(s,3)-1.5*pow(s,2)", torus_complex, RelEndpoint("neg_inf", 0)),
    ("cubic, base on the minimum", "pow(s,3)-1.5*pow(s,2)", torus_complex, RelEndpoint("cp", 0, 2)),
    ("well", "pow(s,2)", torus_complex, RelEndpoint("cp", 0, 1)),
    ("hill on the torus", "-pow(s,2)", torus_complex, RelEndpoint("neg_inf", 0)),
    ("hill on the sphere", "-pow(s,2)", sphere_complex, RelEndpoint("neg_inf", 0)),
]


def main():
    for name, h, slab, base in CASES:
        t = time.perf_counter()
        cx = build_relative_complex(InterpolationProfile.from_expr(h, slab()))
        classes = rel_classes(cx, base, 12)
        ends = {}
        for c in classes:
            ends[c.end.split("#")[0]] = ends.get(c.end.split("#")[0], 0) + 1
        short = [c.text for c in classes[:4]]
        print(f"{name:28s} {len(classes):4d} classes {ends}  first {short}  "
              f"{time.perf_counter() - t:.2f}s")


if __name__ == "__main__":
    main()
