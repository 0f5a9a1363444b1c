"""Small arithmetic expression language for scalar fields on charts.

Grammar (standard precedence, unary minus binds tighter than ``*``)::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | primary
    primary := NUMBER | 'pi' | VAR | FUNC '(' expr ')'
             | 'pow' '(' expr ',' ['-'] INTEGER ')' | '(' expr ')'

VAR is one of x, y, z, s, t and FUNC one of sin, cos, exp.

>>> e = parse("pow(s,3)-1.5*pow(s,2)")
>>> evaluate(e, {"s": 1.0})
-0.5
>>> to_string(diff(parse("x*x"), "x"))
'(x + x)'
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

VARIABLES = ("x", "y", "z", "s", "t")
FUNCTIONS = ("sin", "cos", "exp")


class ExprError(Exception):
    pass


class ExprSyntaxError(ExprError):
    def __init__(self, offset: int, expected):
        self.offset = offset
        self.expected = frozenset(expected)
        super().__init__(f"syntax error at byte {offset}: expected one of {sorted(self.expected)}")


class UnknownIdentifier(ExprError):
    def __init__(self, name: str, offset: int = -1):
        self.name = name
        self.offset = offset
        super().__init__(f"unknown identifier {name!r} at byte {offset}")


class UnboundVariable(ExprError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"variable {name!r} is not bound")


class DivisionByZero(ExprError):
    pass


# -- AST -------------------------------------------------------------------

class Expr:
    __slots__ = ()


@dataclass(frozen=True)
class Num(Expr):
    value: float


@dataclass(frozen=True)
class Pi(Expr):
    pass


@dataclass(frozen=True)
class Var(Expr):
    name: str


@dataclass(frozen=True)
class Neg(Expr):
    arg: Expr


@dataclass(frozen=True)
class BinOp(Expr):
    op: str
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Call(Expr):
    fn: str
    arg: Expr


@dataclass(frozen=True)
class Pow(Expr):
    base: Expr
    exponent: int


def free_variables(e: Expr) -> frozenset:
    if isinstance(e, Var):
        return frozenset([e.name])
    if isinstance(e, (Num, Pi)):
        return frozenset()
    if isinstance(e, Neg):
        return free_variables(e.arg)
    if isinstance(e, BinOp):
        return free_variables(e.left) | free_variables(e.right)
    if isinstance(e, Call):
        return free_variables(e.arg)
    if isinstance(e, Pow):
        return free_variables(e.base)
    raise TypeError(e)


# -- parser ----------------------------------------------------------------

_NUMBER, _IDENT, _OP, _END = "number", "identifier", "op", "end"


def _tokenize(src: bytes):
    toks = []
    i, n = 0, len(src)
    while i < n:
        c = src[i]
        if c in b" \t\r\n":
            i += 1
            continue
        if 48 <= c <= 57 or (c == 46 and i + 1 < n and 48 <= src[i + 1] <= 57):
            j = i
            while j < n and 48 <= src[j] <= 57:
                j += 1
            if j < n and src[j] == 46:
                j += 1
                while j < n and 48 <= src[j] <= 57:
                    j += 1
            if j < n and src[j] in b"eE":
                k = j + 1
                if k < n and src[k] in b"+-":
                    k += 1
                if k < n and 48 <= src[k] <= 57:
                    while k < n and 48 <= src[k] <= 57:
                        k += 1
                    j = k
            toks.append((_NUMBER, src[i:j].decode("ascii"), i))
            i = j
            continue
        if c == 95 or 65 <= c <= 90 or 97 <= c <= 122:
            j = i
            while j < n and (src[j] == 95 or 65 <= src[j] <= 90 or 97 <= src[j] <= 122 or 48 <= src[j] <= 57):
                j += 1
            toks.append((_IDENT, src[i:j].decode("ascii"), i))
            i = j
            continue
        if c in b"+-*/(),":
            toks.append((_OP, chr(c), i))
            i += 1
            continue
        raise ExprSyntaxError(i, {"number", "identifier", "operator"})
    toks.append((_END, "", n))
    return toks


_PRIMARY_START = {"number", "identifier", "(", "-"}


MAX_DEPTH = 200


class _Parser:
    def __init__(self, toks):
        self.toks = toks
        self.pos = 0
        self.depth = 0

    def peek(self):
        return self.toks[self.pos]

    def take(self):
        t = self.toks[self.pos]
        self.pos += 1
        return t

    def expect(self, op):
        kind, text, off = self.peek()
        if kind != _OP or text != op:
            raise ExprSyntaxError(off, {op})
        self.pos += 1

    def expr(self):
        node = self.term()
        while True:
            kind, text, _ = self.peek()
            if kind == _OP and text in "+-":
                self.pos += 1
                node = _fold(BinOp(text, node, self.term()))
            else:
                return node

    def term(self):
        node = self.unary()
        while True:
            kind, text, _ = self.peek()
            if kind == _OP and text in "*/":
                self.pos += 1
                node = _fold(BinOp(text, node, self.unary()))
            else:
                return node

    def unary(self):
        kind, text, off = self.peek()
        self.depth += 1
        if self.depth > MAX_DEPTH:
            raise ExprSyntaxError(off, {"shallower nesting"})
        try:
            if kind == _OP and text == "-":
                self.pos += 1
                return _fold(Neg(self.unary()))
            return self.primary()
        finally:
            self.depth -= 1

    def primary(self):
        kind, text, off = self.take()
        if kind == _NUMBER:
            return Num(float(text))
        if kind == _OP and text == "(":
            node = self.expr()
            self.expect(")")
            return node
        if kind == _IDENT:
            if text == "pi":
                return Pi()
            if text in VARIABLES:
                return Var(text)
            if text in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return _fold(Call(text, arg))
            if text == "pow":
                self.expect("(")
                base = self.expr()
                self.expect(",")
                sign = 1
                k, t2, o2 = self.peek()
                if k == _OP and t2 == "-":
                    sign = -1
                    self.pos += 1
                k, t2, o2 = self.take()
                if k != _NUMBER or not t2.isdigit():
                    raise ExprSyntaxError(o2, {"integer"})
                self.expect(")")
                return _fold(Pow(base, sign * int(t2)))
            raise UnknownIdentifier(text, off)
        raise ExprSyntaxError(off, _PRIMARY_START)


def parse(src) -> Expr:
    """Parse ``src`` (str or UTF-8 bytes) into an Expr."""
    if isinstance(src, str):
        data = src.encode("utf-8")
    else:
        data = bytes(src)
    p = _Parser(_tokenize(data))
    node = p.expr()
    kind, _, off = p.peek()
    if kind != _END:
        raise ExprSyntaxError(off, {"+", "-", "*", "/", "end of input"})
    return node


def _is_literal(e: Expr) -> bool:
    return isinstance(e, (Num, Pi))


def _fold(e: Expr) -> Expr:
    # literal subtrees only; anything touching a variable is left alone
    if isinstance(e, Neg) and _is_literal(e.arg):
        return Num(-_lit(e.arg))
    if isinstance(e, BinOp) and _is_literal(e.left) and _is_literal(e.right):
        try:
            return Num(_apply(e.op, _lit(e.left), _lit(e.right)))
        except DivisionByZero:
            return e
    if isinstance(e, Call) and _is_literal(e.arg):
        try:
            return Num(_CALLS[e.fn](_lit(e.arg)))
        except OverflowError:
            return e
    if isinstance(e, Pow) and _is_literal(e.base):
        try:
            return Num(_pow(_lit(e.base), e.exponent))
        except (DivisionByZero, OverflowError):
            return e
    return e


def _lit(e):
    return math.pi if isinstance(e, Pi) else e.value


# -- evaluation ------------------------------------------------------------

_CALLS = {"sin": math.sin, "cos": math.cos, "exp": math.exp}


def _apply(op, a, b):
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if b == 0.0:
        raise DivisionByZero("division by zero")
    return a / b


def _pow(a, n):
    if a == 0.0 and n < 0:
        raise DivisionByZero("zero to a negative power")
    return a ** n


def evaluate(e: Expr, env: Mapping[str, float]) -> float:
    """IEEE double evaluation of ``e`` with variables bound by ``env``."""
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Pi):
        return math.pi
    if isinstance(e, Var):
        try:
            return float(env[e.name])
        except KeyError:
            raise UnboundVariable(e.name) from None
    if isinstance(e, Neg):
        return -evaluate(e.arg, env)
    if isinstance(e, BinOp):
        return _apply(e.op, evaluate(e.left, env), evaluate(e.right, env))
    if isinstance(e, Call):
        return _CALLS[e.fn](evaluate(e.arg, env))
    if isinstance(e, Pow):
        return _pow(evaluate(e.base, env), e.exponent)
    raise TypeError(e)


# the spec-facing name; ``evaluate`` avoids shadowing the builtin inside this module
eval_expr = evaluate


def _src(e: Expr) -> str:
    if isinstance(e, Num):
        return repr(e.value)
    if isinstance(e, Pi):
        return "_pi"
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        return f"(-{_src(e.arg)})"
    if isinstance(e, BinOp):
        return f"({_src(e.left)} {e.op} {_src(e.right)})"
    if isinstance(e, Call):
        return f"_{e.fn}({_src(e.arg)})"
    if isinstance(e, Pow):
        return f"_pow({_src(e.base)}, {e.exponent})"
    raise TypeError(e)


def _checked_div(a, b):
    if b == 0.0:
        raise DivisionByZero("division by zero")
    return a / b


def compile_many(exprs, variables):
    """Compile expressions into one callable taking ``variables`` positionally
    and returning a tuple.  Evaluation order and rounding match ``evaluate``."""
    body = ", ".join(_src(e) for e in exprs)
    src = f"lambda {', '.join(variables) or '_unused=None'}: ({body}{',' if len(exprs) == 1 else ''})"
    # plain '/' raises ZeroDivisionError, which callers translate
    ns = {"_pi": math.pi, "_sin": math.sin, "_cos": math.cos, "_exp": math.exp, "_pow": _pow}
    return eval(compile(src, "<expr>", "eval"), ns)


# -- printing --------------------------------------------------------------

def to_string(e: Expr) -> str:
    """Fully parenthesised source text; ``parse(to_string(e))`` rebuilds ``e``."""
    if isinstance(e, Num):
        r = repr(e.value)
        if r in ("inf", "-inf", "nan"):
            raise ExprError(f"cannot print non-finite literal {r}")
        return f"({r})" if e.value < 0 or r.startswith("-") else r
    if isinstance(e, Pi):
        return "pi"
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        return f"(-{to_string(e.arg)})"
    if isinstance(e, BinOp):
        return f"({to_string(e.left)} {e.op} {to_string(e.right)})"
    if isinstance(e, Call):
        return f"{e.fn}({to_string(e.arg)})"
    if isinstance(e, Pow):
        return f"pow({to_string(e.base)}, {e.exponent})"
    raise TypeError(e)


# -- symbolic derivative ---------------------------------------------------

ZERO = Num(0.0)
ONE = Num(1.0)


def _is_num(e, v):
    return isinstance(e, Num) and e.value == v


def _add(a, b):
    if _is_num(a, 0.0):
        return b
    if _is_num(b, 0.0):
        return a
    return BinOp("+", a, b)


def _sub(a, b):
    if _is_num(b, 0.0):
        return a
    if _is_num(a, 0.0):
        return _neg(b)
    return BinOp("-", a, b)


def _neg(a):
    if isinstance(a, Num):
        return Num(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def _mul(a, b):
    if _is_num(a, 0.0) or _is_num(b, 0.0):
        return ZERO
    if _is_num(a, 1.0):
        return b
    if _is_num(b, 1.0):
        return a
    return BinOp("*", a, b)


def diff(e: Expr, v: str) -> Expr:
    """Symbolic partial derivative of ``e`` with respect to variable ``v``."""
    if v not in VARIABLES:
        raise ValueError(f"not a variable: {v!r}")
    if isinstance(e, (Num, Pi)):
        return ZERO
    if isinstance(e, Var):
        return ONE if e.name == v else ZERO
    if isinstance(e, Neg):
        return _neg(diff(e.arg, v))
    if isinstance(e, BinOp):
        da, db = diff(e.left, v), diff(e.right, v)
        if e.op == "+":
            return _add(da, db)
        if e.op == "-":
            return _sub(da, db)
        if e.op == "*":
            return _add(_mul(da, e.right), _mul(e.left, db))
        # quotient rule
        num = _sub(_mul(da, e.right), _mul(e.left, db))
        if _is_num(num, 0.0):
            return ZERO
        return BinOp("/", num, Pow(e.right, 2))
    if isinstance(e, Call):
        da = diff(e.arg, v)
        if _is_num(da, 0.0):
            return ZERO
        if e.fn == "sin":
            return _mul(Call("cos", e.arg), da)
        if e.fn == "cos":
            return _mul(_neg(Call("sin", e.arg)), da)
        return _mul(Call("exp", e.arg), da)
    if isinstance(e, Pow):
        db = diff(e.base, v)
        n = e.exponent
        if n == 0 or _is_num(db, 0.0):
            return ZERO
        inner = ONE if n == 1 else (e.base if n == 2 else Pow(e.base, n - 1))
        return _mul(_mul(Num(float(n)), inner), db)
    raise TypeError(e)
