import random

import pytest
import sympy
from hypothesis import given, settings, strategies as st
from sympy.matrices.normalforms import smith_normal_form as sympy_snf

from morse_pi1.flow import CriticalPoint
from morse_pi1.mscomplex import DiskBoundary, MorseComplexData, Step, torus_complex
from morse_pi1.pi1 import (DisconnectedComplex, Presentation, abelianization, cyclic_reduce,
                           free_reduce, glue_disks, inverse, is_trivial, presentation, replay,
                           smith_normal_form)


def bouquet(n_gens, relators):
    """One vertex, n loops, the given relators as disks."""
    cps = [CriticalPoint(0, (), 0, 0.0)]
    cps += [CriticalPoint(1 + i, (), 1, 0.0) for i in range(n_gens)]
    steps = [Step(i, 1 + i, 0, 0) for i in range(n_gens)]
    disks = []
    for j, r in enumerate(relators):
        cps.append(CriticalPoint(1 + n_gens + j, (), 2, 0.0))
        disks.append(DiskBoundary(1 + n_gens + j, tuple(r)))
    return MorseComplexData(cps, steps, disks, 0).validate()


A, B = (0, 1), (1, 1)
Ai, Bi = (0, -1), (1, -1)


def test_torus_presentation():
    p = presentation(torus_complex())
    assert p.generators == (0, 1)
    assert len(p.relators) == 1
    assert str(abelianization(p)) == "Z + Z"
    assert p.to_text() == "< a,b | a^-1 b^-1 a b >"


def test_sphere_and_projective_plane_like_abelianizations(sphere_data):
    assert str(abelianization(presentation(sphere_data))) == "0"
    assert str(abelianization(presentation(bouquet(1, [(A, A)])))) == "Z/2"


def test_presentation_json_round_trip():
    p = presentation(torus_complex())
    q = Presentation.from_json(p.to_json())
    assert (q.generators, q.relators, q.tree) == (p.generators, p.relators, p.tree)


def test_spanning_tree_collapses_a_bigon():
    cps = [CriticalPoint(0, (), 0, 0.0), CriticalPoint(1, (), 0, 0.0),
           CriticalPoint(2, (), 1, 0.0), CriticalPoint(3, (), 1, 0.0)]
    d = MorseComplexData(cps, [Step(0, 2, 0, 1), Step(1, 3, 0, 1)], [], 0).validate()
    p = presentation(d)
    assert p.tree == (0,) and p.generators == (1,)


def test_disconnected_complex_is_reported():
    cps = [CriticalPoint(0, (), 0, 0.0), CriticalPoint(1, (), 0, 0.0)]
    with pytest.raises(DisconnectedComplex):
        presentation(MorseComplexData(cps, [], [], 0).validate())


def test_word_problem_on_the_torus():
    p = presentation(bouquet(2, [(A, B, Ai, Bi)]))
    v = is_trivial((A, B, Ai, Bi), p)
    assert v.kind == "Trivial" and replay((A, B, Ai, Bi), v.witness, p.relators)
    assert is_trivial((A,), p).kind == "Nontrivial"
    w = (A, A, B, B, Ai, Ai, Bi, Bi)
    v = is_trivial(w, p)
    assert v.kind == "Trivial" and replay(w, v.witness, p.relators)


def test_word_problem_gives_up_honestly():
    # Baumslag-Solitar relator: a tiny budget may run out before a verdict
    p = presentation(bouquet(2, [(A, B, Ai, Bi, Bi)]))
    v = is_trivial((B, B, Ai, Bi, A), p, max_states=5)
    assert v.kind in ("Unknown", "Trivial", "Nontrivial")
    if v.kind == "Trivial":
        assert replay((B, B, Ai, Bi, A), v.witness, p.relators)


def _random_word(rng, n_gens, length):
    return tuple((rng.randrange(n_gens), rng.choice((1, -1))) for _ in range(length))


def test_free_reduce_idempotent_on_many_random_words():
    rng = random.Random(7)
    for _ in range(10_000):
        w = _random_word(rng, 3, rng.randrange(0, 30))
        r = free_reduce(w)
        assert free_reduce(r) == r
        assert all(not (x[0] == y[0] and x[1] == -y[1]) for x, y in zip(r, r[1:]))
        assert free_reduce(w + inverse(w)) == ()


letters = st.tuples(st.integers(0, 3), st.sampled_from([1, -1]))


@given(st.lists(letters, max_size=40).map(tuple))
def test_reduction_properties(w):
    r = free_reduce(w)
    assert free_reduce(r) == r
    assert len(r) <= len(w)
    assert len(r) % 2 == len(w) % 2
    c = cyclic_reduce(w)
    assert cyclic_reduce(c) == c


@settings(max_examples=200)
@given(st.integers(1, 4), st.integers(1, 4), st.randoms(use_true_random=False))
def test_smith_normal_form_matches_sympy(m, n, rnd):
    A = [[rnd.randint(-6, 6) for _ in range(n)] for _ in range(m)]
    D, U, V = smith_normal_form(A)
    MU, MA, MV, MD = (sympy.Matrix(x) for x in (U, A, V, D))
    assert MU * MA * MV == MD
    assert abs(MU.det()) == 1 and abs(MV.det()) == 1
    ours = sorted(abs(D[i][i]) for i in range(min(m, n)) if D[i][i])
    ref = sympy_snf(MA, domain=sympy.ZZ)
    theirs = sorted(abs(ref[i, i]) for i in range(min(m, n)) if ref[i, i])
    assert ours == theirs


def random_disk_fixture(rng):
    """A disk cut into cells, each new cell glued along one boundary arc of the union so far."""
    n_vert = 1
    steps = []

    def new_step(a, b):
        sid = len(steps)
        if rng.random() < 0.5:
            steps.append((a, b))
            return (sid, 1)
        steps.append((b, a))
        return (sid, -1)

    def path(a, b, length):
        nonlocal n_vert
        out, cur = [], a
        for i in range(length):
            nxt = b if i == length - 1 else n_vert
            if i < length - 1:
                n_vert += 1
            out.append(new_step(cur, nxt))
            cur = nxt
        return out

    k0 = rng.randint(2, 5)
    first = path(0, 0, k0)
    cells = [tuple(first)]
    boundary = tuple(first)
    for _ in range(rng.randint(1, 5)):
        n = len(boundary)
        k = rng.randint(1, n - 1)
        i = rng.randrange(n)
        rot = boundary[i:] + boundary[:i]
        P, S = rot[:n - k], rot[n - k:]

        def src(ss):
            a, b = steps[ss[0]]
            return (a, b) if ss[1] > 0 else (b, a)

        s_start, s_end = src(S[0])[0], src(S[-1])[1]
        Q = tuple(path(s_start, s_end, rng.randint(1, 3)))
        if len(Q) == 1 and len(S) == 1 and Q[0][0] == S[0][0]:
            continue
        cells.append(inverse(S) + Q)
        boundary = free_reduce(P + Q)
    verts = sorted({v for st_ in steps for v in st_})
    cps = [CriticalPoint(v, (), 0, 0.0) for v in verts]
    off = max(verts) + 1
    cps += [CriticalPoint(off + i, (), 1, 0.0) for i in range(len(steps))]
    disks = []
    for j, c in enumerate(cells):
        r = rng.randrange(len(c))
        c = c[r:] + c[:r]
        if rng.random() < 0.3:
            c = inverse(c)
        cps.append(CriticalPoint(off + len(steps) + j, (), 2, 0.0))
        disks.append(DiskBoundary(off + len(steps) + j, c))
    st_objs = [Step(i, off + i, a, b) for i, (a, b) in enumerate(steps)]
    a, b = steps[boundary[0][0]]
    base = a if boundary[0][1] > 0 else b
    return MorseComplexData(cps, st_objs, disks, base).validate(), [d.of for d in disks]


def test_glue_disks_on_random_fixtures():
    rng = random.Random(11)
    for _ in range(100):
        data, ids = random_disk_fixture(rng)
        pres = presentation(data)
        verdict, loop = glue_disks(data, ids, pres=pres)
        assert verdict.kind == "Trivial"
        assert replay(pres.rewrite(loop), verdict.witness, pres.relators)
        assert is_trivial(loop, pres, max_states=2000).kind in ("Trivial", "Unknown")


def test_glue_disks_on_the_torus_cell():
    data = torus_complex()
    verdict, loop = glue_disks(data, [3])
    assert verdict.kind == "Trivial" and len(loop) == 4
