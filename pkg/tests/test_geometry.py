import math

import numpy as np
import pytest

from morse_pi1.flow import find_critical_points
from morse_pi1.geometry import (Blend, ExprField, InteriorCriticalPoint, InterpolationSpec, Manifold,
                                Profile, ProductR, ProductSquare, Sphere, Torus, build_interpolation,
                                grad, hessian, pick_C)

from conftest import COSCOS


def test_torus_metric_wraps():
    T = Torus()
    assert T.distance((0.95, 0.5), (0.05, 0.5)) == pytest.approx(0.1)
    assert T.lift_offset((1.2, -0.1), (0.2, 0.9)) == (1, -1)


def test_sphere_retracts_to_unit_norm():
    p = Sphere().retract((0.0, 0.0, 2.0))
    assert p == pytest.approx((0.0, 0.0, 1.0))


def test_manifold_json_round_trip():
    for m in (Torus(), Sphere(), ProductR(Torus()), ProductSquare(Sphere())):
        assert Manifold.from_json(m.to_json()).to_json() == m.to_json()


def test_gradient_and_hessian_of_coscos():
    f = ExprField(Torus(), COSCOS)
    g = grad(f, (0.25, 0.0))
    assert g[0] == pytest.approx(-2 * math.pi)
    assert g[1] == pytest.approx(0.0, abs=1e-12)
    H = hessian(f, (0.5, 0.5))
    assert np.allclose(H, np.diag([4 * math.pi ** 2] * 2))


def test_blend_is_monotone_with_flat_ends():
    b = Blend(0.1)
    assert b.rho(0.05) == 0.0 and b.rho(0.95) == 1.0
    vals = [b.rho(i / 200) for i in range(201)]
    assert all(x <= y for x, y in zip(vals, vals[1:]))


def test_profile_has_max_at_0_and_min_at_1():
    h = Profile()
    assert h.d(0.0) == 0.0 and h.d(1.0) == 0.0
    assert h(0.0) > h(1.0)


def test_index_shift_for_constant_interpolation():
    f = ExprField(Torus(), COSCOS)
    F = build_interpolation(InterpolationSpec(f, f))
    cps = find_critical_points(F)
    assert len(cps) == 8
    top = sorted(c.index for c in cps if abs(c.coords[2]) < 1e-6)
    bottom = sorted(c.index for c in cps if abs(c.coords[2] - 1) < 1e-6)
    assert top == [1, 2, 2, 3] and bottom == [0, 1, 1, 2]


def test_small_C_creates_an_interior_critical_point():
    f1 = ExprField(Torus(), COSCOS)
    f2 = ExprField(Torus(), COSCOS + "+3")
    C = pick_C(InterpolationSpec(f1, f2))
    build_interpolation(InterpolationSpec(f1, f2, C=C))
    with pytest.raises(InteriorCriticalPoint):
        build_interpolation(InterpolationSpec(f1, f2, C=C / 4))
