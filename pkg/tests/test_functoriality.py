import pytest

from morse_pi1.continuation import StepMap, identity_map
from morse_pi1.flow import find_critical_points
from morse_pi1.functoriality import (SquareSpec, UnclassifiedWall, build_square, classify_wall,
                                     square_C, verify_diagram, verify_iso)
from morse_pi1.mscomplex import torus_complex

from conftest import COSCOS, field

T = torus_complex()
A, B, Ai, Bi = (0, 1), (1, 1), (0, -1), (1, -1)


def smap(img_a, img_b):
    return StepMap(T, T, {0: tuple(img_a), 1: tuple(img_b)}, {0: 0}, "combinatorial")


def test_equal_square_has_sixteen_critical_points():
    f = field(COSCOS)
    F = build_square(SquareSpec(f, f, f, square_C(f, f, f)))
    cps = find_critical_points(F)
    assert len(cps) == 16
    assert sorted(c.index for c in cps) == [0, 1, 1, 1, 1, 2, 2, 2, 2, 2, 2, 3, 3, 3, 3, 4]


def test_identity_diagram_commutes_with_empty_psi():
    i = identity_map(T)
    v = verify_diagram(None, i, i, i)
    assert v.kind == "Commutes" and v.psi == ()


def test_conjugated_diagram_finds_psi():
    i = identity_map(T)
    # phi13 differs from phi23 o phi12 by conjugation with b
    phi13 = smap((B, A, Bi), (B,))
    v = verify_diagram(None, i, i, phi13)
    assert v.kind == "Commutes" and v.psi == (B,)


def test_corrupted_diagram_names_the_generator():
    i = identity_map(T)
    v = verify_diagram(None, i, i, smap((A,), (A,)))
    assert v.kind == "Fails" and v.offending == 1


def test_birth_death_wall():
    ev = classify_wall(0.3, smap((A,), (B,)), smap((A, B, Bi), (B,)))
    assert ev.kind == "BirthDeath" and ev.steps == (0,)


def test_target_break_splices_a_relator():
    # b^-1 a b a^-1 is a rotation of the torus relator
    ev = classify_wall(0.3, smap((A,), (B,)), smap((Bi, A, B), (B,)))
    assert ev.kind == "BreakIndex2Target"


def test_source_break_conjugates_everything():
    ev = classify_wall(0.3, smap((A,), (B,)), smap((B, A, Bi), (B,)), {0: (B,)})
    assert ev.kind == "BreakIndex0Source" and ev.conjugator == (B,)


def test_unclassifiable_change_is_reported():
    with pytest.raises(UnclassifiedWall):
        classify_wall(0.3, smap((A,), (B,)), smap((A, A), (B,)))


def test_iso_on_the_translated_pair(phi_forward, phi_back):
    v = verify_iso(phi_forward, phi_back)
    assert v.kind == "Inner" and v.matrix == [[1, 0], [0, 1]] and len(v.conjugator) <= 8


def test_iso_finds_a_nontrivial_inner_witness():
    v = verify_iso(smap((Bi, A, B), (B,)), identity_map(T))
    assert v.kind == "Inner" and v.conjugator == (B,)


def test_iso_rejects_a_non_unimodular_map():
    v = verify_iso(smap((A, A), (B,)), identity_map(T))
    assert v.kind == "Fails" and v.matrix == [[2, 0], [0, 1]]
