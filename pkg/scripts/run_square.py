"""Torus square sweep with wall table and diagram verdict.

    python3 scripts/run_square.py [grid] [samples]
"""
import os
import sys
import time

from morse_pi1.continuation import continuation_map, sweep_C
from morse_pi1.functoriality import (SquareFamily, SquareSpec, build_square, square_C, sweep_lambda,
                                     verify_diagram)
from morse_pi1.geometry import ExprField, InterpolationSpec, Torus, build_interpolation
from morse_pi1.mscomplex import analyze, word_str

EXPRS = ("cos(2*pi*x)+cos(2*pi*y)",
         "cos(2*pi*(x-(-0.2)))+cos(2*pi*(y-(0.07)))",
         "cos(2*pi*(x-(0.45)))+cos(2*pi*(y-(0.1)))")


def main():
    grid = int(sys.argv[1]) if len(sys.argv) > 1 else 64
    samples = int(sys.argv[2]) if len(sys.argv) > 2 else 48
    t0 = time.perf_counter()
    fs = [ExprField(Torus(), e) for e in EXPRS]
    ds = [analyze(f) for f in fs]
    F = build_square(SquareSpec(*fs, square_C(*fs)))
    fam = SquareFamily(F, ds[0], ds[2], samples=samples)
    sw = sweep_lambda(F, grid, ds[0], ds[2], family=fam,
                      workers=int(os.environ.get("MORSE_PI1_THREADS", "1")))
    print(f"sweep: {time.perf_counter() - t0:.0f}s, {len(sw.walls)} walls")
    for w in sw.walls:
        print(f"  {w.lam:.6f}  {w.kind:18s} conjugator={word_str(w.conjugator)} steps={w.steps}")
    print("inconclusive:", sw.inconclusive)

    def edge(i, j):
        E = build_interpolation(InterpolationSpec(fs[i], fs[j], C=sweep_C(fs[i], fs[j])))
        return continuation_map(ds[i], ds[j], E)

    v = verify_diagram(sw, edge(0, 1), edge(1, 2), edge(0, 2))
    print(f"verdict: {v.kind} psi={word_str(v.psi)}  total {time.perf_counter() - t0:.0f}s")


if __name__ == "__main__":
    main()
