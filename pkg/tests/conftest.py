import os
import sys
import time

import pytest
from hypothesis import HealthCheck, settings

from morse_pi1.geometry import ExprField, Sphere, Torus

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

COSCOS = "cos(2*pi*x)+cos(2*pi*y)"


def shifted(a, b):
    return f"cos(2*pi*(x-({a})))+cos(2*pi*(y-({b})))"


TRANSLATED = shifted(0.3, 0.2)
SQUARE_F2 = shifted(-0.2, 0.07)
SQUARE_F3 = shifted(0.45, 0.1)


class _Cache:
    """Session-wide memo of the expensive numeric objects, with their build times."""

    def __init__(self):
        self.values, self.times = {}, {}

    def get(self, key, build):
        if key not in self.values:
            t = time.perf_counter()
            self.values[key] = build()
            self.times[key] = time.perf_counter() - t
        return self.values[key]


@pytest.fixture(scope="session")
def cache():
    return _Cache()


@pytest.fixture(scope="session")
def torus():
    return Torus()


def field(expr, m=None):
    return ExprField(m or Torus(), expr)


@pytest.fixture(scope="session")
def torus_data(cache):
    from morse_pi1.mscomplex import analyze

    return cache.get("torus", lambda: analyze(field(COSCOS)))


@pytest.fixture(scope="session")
def sphere_data(cache):
    from morse_pi1.mscomplex import analyze

    return cache.get("sphere", lambda: analyze(ExprField(Sphere(), "z")))


@pytest.fixture(scope="session")
def translated_data(cache):
    from morse_pi1.mscomplex import analyze

    return cache.get("translated", lambda: analyze(field(TRANSLATED)))


def continuation(cache, a, b, da, db, key):
    from morse_pi1.continuation import continuation_map, sweep_C
    from morse_pi1.geometry import InterpolationSpec, build_interpolation

    def build():
        fa, fb = field(a), field(b)
        F = build_interpolation(InterpolationSpec(fa, fb, C=sweep_C(fa, fb)))
        return continuation_map(da, db, F)

    return cache.get(key, build)


@pytest.fixture(scope="session")
def phi_identity(cache, torus_data):
    return continuation(cache, COSCOS, COSCOS, torus_data, torus_data, "phi_id")


@pytest.fixture(scope="session")
def phi_forward(cache, torus_data, translated_data):
    return continuation(cache, COSCOS, TRANSLATED, torus_data, translated_data, "phi_fw")


@pytest.fixture(scope="session")
def phi_back(cache, torus_data, translated_data):
    return continuation(cache, TRANSLATED, COSCOS, translated_data, torus_data, "phi_bk")


def graft(cache, key, f2expr, spec_fn, data1, data2):
    from morse_pi1.continuation import GraftedFlow, dimension_check, grafted_map
    from morse_pi1.geometry import DEFAULT_PROFILE, ProfileField

    def build():
        F1 = ProfileField(field(COSCOS), 1.0, DEFAULT_PROFILE)
        F2 = ProfileField(field(f2expr), 1.0, DEFAULT_PROFILE)
        spec = spec_fn()
        flow = GraftedFlow(F1, F2, spec, data2)
        sm = grafted_map(data1, data2, F1, F2, spec, flow=flow)
        dims = dimension_check(data1, data2, F1, F2, spec, flow=flow)
        return sm, dims

    return cache.get(key, build)


@pytest.fixture(scope="session")
def shear_data(cache):
    from morse_pi1.mscomplex import analyze

    return cache.get("shear_target", lambda: analyze(field(shifted(0.1, 0.13))))


@pytest.fixture(scope="session")
def grafts(cache, torus_data, shear_data):
    from morse_pi1.continuation import constant_graft, identity_graft, linear_torus_graft

    return {
        "identity": graft(cache, "g_id", COSCOS, identity_graft, torus_data, torus_data),
        "shear": graft(cache, "g_shear", shifted(0.1, 0.13),
                       lambda: linear_torus_graft([[1, 1], [0, 1]]), torus_data, shear_data),
        "constant": graft(cache, "g_const", COSCOS, lambda: constant_graft((0.3, 0.2)),
                          torus_data, torus_data),
    }


@pytest.fixture(scope="session")
def square_run(cache):
    """The torus square scenario: three distinct translates, grid 64."""
    from morse_pi1.functoriality import (SquareFamily, SquareSpec, build_square, square_C,
                                         sweep_lambda)
    from morse_pi1.mscomplex import analyze

    def build():
        t = time.perf_counter()
        fs = [field(COSCOS), field(SQUARE_F2), field(SQUARE_F3)]
        ds = [analyze(f) for f in fs]
        F = build_square(SquareSpec(*fs, square_C(*fs)))
        fam = SquareFamily(F, ds[0], ds[2], samples=48)
        workers = int(os.environ.get("MORSE_PI1_THREADS", "1"))
        sweep = sweep_lambda(F, 64, ds[0], ds[2], family=fam, workers=workers)
        phis = {}
        for (i, j) in ((0, 1), (1, 2), (0, 2)):
            exprs = (COSCOS, SQUARE_F2, SQUARE_F3)
            phis[f"{i + 1}{j + 1}"] = continuation(cache, exprs[i], exprs[j], ds[i], ds[j],
                                                   f"sq{i}{j}")
        return {"sweep": sweep, "phis": phis, "data": ds, "seconds": time.perf_counter() - t}

    return cache.get("square", build)


_CONFIG = None
_EMITTED = []


def pytest_configure(config):
    global _CONFIG
    _CONFIG = config


def emit(line):
    """Write past pytest's capture so the line lands in the transcript, and again in the summary."""
    _EMITTED.append(line)
    tr = _CONFIG.pluginmanager.get_plugin("terminalreporter") if _CONFIG else None
    if tr is not None:
        tr.write_line(line)
    else:
        sys.__stderr__.write(line + "\n")


def pytest_terminal_summary(terminalreporter):
    if _EMITTED:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_EMITTED):
            terminalreporter.write_line(line)
