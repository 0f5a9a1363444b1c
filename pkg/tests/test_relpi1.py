import pytest

from morse_pi1.mscomplex import sphere_complex, torus_complex
from morse_pi1.relpi1 import (BudgetExceeded, InterpolationProfile, ProfileInvalid, RelEndpoint,
                              build_relative_complex, cor_invariance_check, rel_classes,
                              rel_equivalent, rel_normalize)

CUBIC = "pow(s,3)-1.5*pow(s,2)"
NEG = RelEndpoint("neg_inf", 0)


def rel(h, slab=None):
    return build_relative_complex(InterpolationProfile.from_expr(h, slab or torus_complex()))


def step(cx, name, e=1):
    return (next(s.id for s in cx.steps if s.name == name), e)


def lattice_points(r):
    return sum(1 for m in range(-r, r + 1) for n in range(-r, r + 1) if abs(m) + abs(n) <= r)


def test_profile_tags_and_layers():
    p = InterpolationProfile.from_expr(CUBIC, torus_complex())
    assert [t for _, t in p.crit] == ["max", "min"]
    assert p.has_layer(0) and not p.has_layer(3)


def test_invalid_profiles():
    with pytest.raises(ProfileInvalid):
        InterpolationProfile.from_expr(CUBIC, [torus_complex()] * 3)
    with pytest.raises(ProfileInvalid):
        InterpolationProfile.from_expr(CUBIC, torus_complex(), C=-1.0)
    cx = rel("pow(s,2)")
    with pytest.raises(ProfileInvalid):
        NEG.vertex(cx)


def test_relative_disks_bound_sigma():
    cx = rel(CUBIC)
    texts = {cx.word_text(r) for *_, r in cx.disks}
    assert "a[-inf] sigma a[1]^-1 sigma^-1" in texts
    assert "b[-inf] sigma b[1]^-1 sigma^-1" in texts


def test_example_base_at_minus_infinity_is_a_point():
    cx = rel(CUBIC)
    classes = rel_classes(cx, NEG)
    assert [c.text for c in classes] == ["1"]


def test_example_base_on_the_minimum_layer():
    cx = rel(CUBIC)
    classes = rel_classes(cx, RelEndpoint("cp", 0, 2))
    loops = [c for c in classes if c.end == "loop"]
    ends = [c for c in classes if c.end != "loop"]
    assert len(loops) == lattice_points(12) == 313
    assert [c.text for c in ends] == ["sigma^-1"]


def test_example_without_infinity_is_plain_pi1():
    classes = rel_classes(rel("pow(s,2)"), RelEndpoint("cp", 0, 1))
    assert len(classes) == 313 and all(c.end == "loop" for c in classes)


@pytest.mark.parametrize("slab", [torus_complex, sphere_complex])
def test_example_two_ends(slab):
    classes = rel_classes(rel("-pow(s,2)", slab()), NEG)
    assert [c.text for c in classes] == ["1", "sigma"]


def test_normalize_cancels_and_drops_infinity_steps():
    cx = rel(CUBIC)
    base = RelEndpoint("cp", 0, 2).vertex(cx)
    a1 = step(cx, "a[1]")
    trace = []
    assert rel_normalize((a1, (a1[0], -1)), cx, base, trace) == ()
    assert trace == [("cancel", 2)]
    sig_inv = step(cx, "sigma", -1)
    assert rel_normalize((sig_inv, step(cx, "a[-inf]")), cx, base) == (sig_inv,)


def test_equivalence_verdicts():
    cx = rel("-pow(s,2)")
    base = NEG.vertex(cx)
    sig = step(cx, "sigma")
    assert rel_equivalent((sig,), (), cx, base).kind == "Distinct"
    w = (step(cx, "a[-inf]"), sig, step(cx, "a[+inf]", -1))
    assert rel_equivalent(w, (sig,), cx, base).kind == "Equivalent"


def test_class_enumeration_budget():
    with pytest.raises(BudgetExceeded):
        rel_classes(rel(CUBIC), NEG, max_len=13)


def test_invariance_across_profiles():
    a, b = rel("-pow(s,2)"), rel("-pow(s,4)-pow(s,2)")
    out = cor_invariance_check([a, b], [NEG, NEG], max_len=6)
    assert out["agree"]
    with pytest.raises(ValueError):
        cor_invariance_check([a, rel(CUBIC)], [NEG, NEG])
    with pytest.raises(ValueError):
        cor_invariance_check([a, a], [NEG, RelEndpoint("pos_inf", 0)])
