import math
import warnings

import pytest
from hypothesis import given, settings, strategies as st

from morse_pi1.flow import (DegenerateCritical, Dynamics, FlowOptions, NotSmaleWarning,
                            bisect_transition, exit_side, find_critical_points, smale_check,
                            unstable_frame)
from morse_pi1.geometry import ExprField, Sphere, Torus

from conftest import COSCOS

TWO_PI_SQ = 4 * math.pi ** 2


@pytest.fixture(scope="module")
def dyn():
    return Dynamics(ExprField(Torus(), COSCOS))


def test_coscos_critical_points(dyn):
    got = sorted((c.index, tuple(round(x, 6) for x in c.coords)) for c in dyn.cps)
    assert got == [(0, (0.5, 0.5)), (1, (0.0, 0.5)), (1, (0.5, 0.0)), (2, (0.0, 0.0))]
    for c in dyn.cps:
        assert sorted(abs(e) for e in c.eigenvalues) == pytest.approx([TWO_PI_SQ] * 2)


def test_sphere_height_has_two_critical_points():
    cps = find_critical_points(ExprField(Sphere(), "z"))
    assert sorted(c.index for c in cps) == [0, 2]


def test_degenerate_field_is_rejected():
    with pytest.raises(DegenerateCritical):
        find_critical_points(ExprField(Torus(), "cos(2*pi*x)"))


def test_too_few_seeds_rejected():
    with pytest.raises(ValueError):
        find_critical_points(ExprField(Torus(), COSCOS), seeds_per_axis=4)


def test_saddle_separatrices_reach_the_minimum(dyn):
    saddle = next(c for c in dyn.cps if c.index == 1)
    u = unstable_frame(dyn.field, saddle)[0]
    for sgn in (1, -1):
        out = dyn.integrate(dyn.seed(saddle, [sgn * v for v in u]))
        assert out.kind == "ConvergedTo"
        assert dyn.by_id[out.cp].index == 0


def test_bisection_finds_the_stable_line_of_a_saddle(dyn):
    tr = bisect_transition(lambda x: (x, 0.3), dyn, 0.8, 1.2)
    assert tr.theta == pytest.approx(1.0, abs=1e-9)
    med = dyn.by_id[tr.cp]
    assert med.index == 1 and med.coords == pytest.approx((0.0, 0.5), abs=1e-8)
    u = unstable_frame(dyn.field, med)[0]
    assert exit_side(dyn.m, tr.lo_out, med.coords, u) == -exit_side(dyn.m, tr.hi_out, med.coords, u)


def test_smale_check_is_clean_for_coscos(dyn):
    with warnings.catch_warnings():
        warnings.simplefilter("error", NotSmaleWarning)
        assert smale_check(dyn) == []


@settings(max_examples=40)
@given(st.floats(0, 1, exclude_max=True), st.floats(0, 1, exclude_max=True))
def test_energy_never_increases_along_trajectories(x, y):
    d = _DYN
    out = d.integrate((x, y))
    f = d.field.value
    vals = [f(p) for p in out.path]
    worst = max((b - a for a, b in zip(vals, vals[1:])), default=0.0)
    assert worst <= 1e-9
    assert out.max_increase <= 1e-9


_DYN = Dynamics(ExprField(Torus(), COSCOS + "+0.1*sin(2*pi*(x+y))"))
