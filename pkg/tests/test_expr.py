import math

import pytest
from hypothesis import given, strategies as st

from morse_pi1.expr import (DivisionByZero, ExprSyntaxError, UnboundVariable, UnknownIdentifier,
                            compile_many, diff, evaluate, free_variables, parse, to_string)


def test_precedence_and_unary_minus():
    assert evaluate(parse("1+2*3"), {}) == 7.0
    assert evaluate(parse("-2*3"), {}) == -6.0
    assert evaluate(parse("2-3-4"), {}) == -5.0
    assert evaluate(parse("pow(x,2)"), {"x": -3.0}) == 9.0
    assert evaluate(parse("pow(x,-1)"), {"x": 4.0}) == 0.25


def test_pi_and_functions():
    assert evaluate(parse("cos(2*pi*x)"), {"x": 0.5}) == pytest.approx(-1.0)
    assert evaluate(parse("exp(0)+sin(0)"), {}) == 1.0


def test_syntax_error_reports_offset():
    with pytest.raises(ExprSyntaxError) as exc:
        parse("1+*2")
    assert exc.value.offset == 2


def test_unknown_identifier():
    with pytest.raises(UnknownIdentifier):
        parse("tan(x)")
    with pytest.raises(UnknownIdentifier):
        parse("w+1")


def test_unbound_variable_and_division():
    with pytest.raises(UnboundVariable):
        evaluate(parse("x+y"), {"x": 1.0})
    with pytest.raises(DivisionByZero):
        evaluate(parse("1/x"), {"x": 0.0})


def test_free_variables():
    assert free_variables(parse("cos(x)+s*pow(y,2)")) == {"x", "y", "s"}
    assert free_variables(parse("pi*2")) == frozenset()


def test_round_trip_through_text():
    src = "cos(2*pi*(x-0.3))+cos(2*pi*(y-0.2))-pow(s,3)/7"
    e = parse(src)
    env = {"x": 0.17, "y": 0.61, "s": 0.4}
    assert evaluate(parse(to_string(e)), env) == evaluate(e, env)


def test_compile_many_matches_evaluate():
    es = [parse("x*y+sin(x)"), parse("exp(-x)")]
    fn = compile_many(es, ("x", "y"))
    assert fn(0.3, 0.7) == tuple(evaluate(e, {"x": 0.3, "y": 0.7}) for e in es)


def test_derivative_of_profile():
    d = diff(parse("pow(s,3)-1.5*pow(s,2)"), "s")
    for s in (-1.0, 0.0, 0.5, 1.0, 2.0):
        assert evaluate(d, {"s": s}) == pytest.approx(3 * s * s - 3 * s)


leaves = st.sampled_from(["x", "y", "1", "2.5", "pi", "0.3"])


def _extend(children):
    unary = st.tuples(st.sampled_from(["sin", "cos"]), children).map(lambda t: f"{t[0]}({t[1]})")
    neg = children.map(lambda c: f"-({c})")
    power = st.tuples(children, st.integers(0, 3)).map(lambda t: f"pow({t[0]},{t[1]})")
    binop = st.tuples(children, st.sampled_from(["+", "-", "*"]), children).map(
        lambda t: f"({t[0]}){t[1]}({t[2]})")
    damped = children.map(lambda c: f"exp(sin({c}))")
    return unary | neg | power | binop | damped


expressions = st.recursive(leaves, _extend, max_leaves=8)


@given(expressions, st.floats(-1.5, 1.5), st.floats(-1.5, 1.5))
def test_derivative_matches_finite_differences(src, x, y):
    e = parse(src)
    dx = diff(e, "x")
    h = 1e-3

    def f(t):
        return evaluate(e, {"x": t, "y": y})

    # fourth-order central stencil
    fd = (-f(x + 2 * h) + 8 * f(x + h) - 8 * f(x - h) + f(x - 2 * h)) / (12 * h)
    exact = evaluate(dx, {"x": x, "y": y})
    scale = 1.0 + max(abs(f(x + k * h)) for k in (-2, -1, 0, 1, 2))
    assert math.isclose(exact, fd, abs_tol=1e-6 * scale, rel_tol=1e-6)
