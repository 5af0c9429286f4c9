"""Expression language for exponent functions a(s), with jet evaluation.

A nonlinearity is written f = exp(a(s)); the user supplies a(s) as text in a
small grammar (numbers, ``s``, ``+ - * /``, ``^`` with a constant exponent,
``exp(...)`` and ``log(...)``).  ``eval_jet`` returns a(s) together with its
raw derivatives d^k a / ds^k, k = 0..order, propagated through the tree by
Leibniz-type recurrences.  Evaluation accepts numpy arrays of points.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Union

import numpy as np

MAX_ORDER = 8
EXP_OVERFLOW = 709.0


class ExprError(ValueError):
    """Base error; ``offset`` is a byte offset into the source when known."""

    def __init__(self, message: str, offset: int | None = None, cause: str = ""):
        self.message = message
        self.offset = offset
        self.cause = cause
        where = f" at offset {offset}" if offset is not None else ""
        super().__init__(f"{message}{where}")


class ParseError(ExprError):
    pass


class EvalError(ExprError):
    """Evaluation failure: cause is one of 'domain', 'division', 'overflow'."""


# --- AST -------------------------------------------------------------------

@dataclass(frozen=True)
class Const:
    value: float
    pos: int | None = field(default=None, compare=False)


@dataclass(frozen=True)
class Var:
    pos: int | None = field(default=None, compare=False)


@dataclass(frozen=True)
class Add:
    left: "Node"
    right: "Node"
    pos: int | None = field(default=None, compare=False)


@dataclass(frozen=True)
class Sub:
    left: "Node"
    right: "Node"
    pos: int | None = field(default=None, compare=False)


@dataclass(frozen=True)
class Mul:
    left: "Node"
    right: "Node"
    pos: int | None = field(default=None, compare=False)


@dataclass(frozen=True)
class Div:
    left: "Node"
    right: "Node"
    pos: int | None = field(default=None, compare=False)


@dataclass(frozen=True)
class Pow:
    base: "Node"
    exponent: float
    pos: int | None = field(default=None, compare=False)


@dataclass(frozen=True)
class Exp:
    arg: "Node"
    pos: int | None = field(default=None, compare=False)


@dataclass(frozen=True)
class Log:
    arg: "Node"
    pos: int | None = field(default=None, compare=False)


Node = Union[Const, Var, Add, Sub, Mul, Div, Pow, Exp, Log]


@dataclass(frozen=True)
class Expression:
    root: Node
    source: str = field(default="", compare=False)

    def __str__(self) -> str:
        return to_text(self)

    def __call__(self, s):
        return evaluate(self, s)


# --- parser ----------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()]))"
)


def _tokenize(source: str):
    tokens = []
    i = 0
    n = len(source)
    while i < n:
        if source[i].isspace():
            i += 1
            continue
        m = _TOKEN.match(source, i)
        if m is None or m.end() == i:
            raise ParseError(f"unexpected character {source[i]!r}",
                             _byte_offset(source, i), "syntax")
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), _byte_offset(source, start)))
        i = m.end()
    tokens.append(("end", "", _byte_offset(source, n)))
    return tokens


def _byte_offset(source: str, char_index: int) -> int:
    return len(source[:char_index].encode("utf-8"))


class _Parser:
    def __init__(self, source: str):
        self.tokens = _tokenize(source)
        self.i = 0
        self.open_parens: list[int] = []

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_close(self):
        kind, text, pos = self.peek()
        if kind == "op" and text == ")":
            self.take()
            self.open_parens.pop()
            return
        if kind == "end":
            raise ParseError("unbalanced parenthesis", pos, "syntax")
        raise ParseError(f"expected ')' but found {text!r}", pos, "syntax")

    def parse(self) -> Node:
        node = self.expr()
        kind, text, pos = self.peek()
        if kind != "end":
            if text == ")":
                raise ParseError("unbalanced parenthesis", pos, "syntax")
            raise ParseError(f"unexpected token {text!r}", pos, "syntax")
        return node

    def expr(self) -> Node:
        node = self.term()
        while True:
            kind, text, pos = self.peek()
            if kind == "op" and text in "+-":
                self.take()
                rhs = self.term()
                node = Add(node, rhs, pos) if text == "+" else Sub(node, rhs, pos)
            else:
                return node

    def term(self) -> Node:
        node = self.unary()
        while True:
            kind, text, pos = self.peek()
            if kind == "op" and text in "*/":
                self.take()
                rhs = self.unary()
                node = Mul(node, rhs, pos) if text == "*" else Div(node, rhs, pos)
            else:
                return node

    def unary(self) -> Node:
        # Leading sign is an extension of the base grammar so that negative
        # constants print and re-parse.
        kind, text, pos = self.peek()
        if kind == "op" and text in "+-":
            self.take()
            operand = self.unary()
            if text == "+":
                return operand
            if isinstance(operand, Const):
                return Const(-operand.value, pos)
            return Mul(Const(-1.0, pos), operand, pos)
        return self.factor()

    def factor(self) -> Node:
        base = self.atom()
        kind, text, pos = self.peek()
        if kind == "op" and text == "^":
            self.take()
            return Pow(base, self.exponent(), pos)
        return base

    def exponent(self) -> float:
        kind, text, pos = self.peek()
        sign = 1.0
        if kind == "op" and text in "+-":
            self.take()
            sign = -1.0 if text == "-" else 1.0
            kind, text, pos = self.peek()
        if kind == "num":
            self.take()
            return sign * float(text)
        if kind == "op" and text == "(" and sign == 1.0:
            # allow s^(-3) and s^(1.5); anything else is not a constant
            save = self.i
            self.take()
            self.open_parens.append(pos)
            inner_sign = 1.0
            k2, t2, _ = self.peek()
            if k2 == "op" and t2 in "+-":
                self.take()
                inner_sign = -1.0 if t2 == "-" else 1.0
                k2, t2, _ = self.peek()
            if k2 == "num":
                self.take()
                k3, t3, _ = self.peek()
                if k3 == "op" and t3 == ")":
                    self.take()
                    self.open_parens.pop()
                    return inner_sign * float(t2)
            self.i = save
            self.open_parens.pop()
        raise ParseError("pow exponent must be a constant number", pos, "syntax")

    def atom(self) -> Node:
        kind, text, pos = self.take()
        if kind == "num":
            return Const(float(text), pos)
        if kind == "name":
            if text == "s":
                return Var(pos)
            if text in ("exp", "log"):
                k2, t2, p2 = self.take()
                if not (k2 == "op" and t2 == "("):
                    raise ParseError(f"expected '(' after {text}", p2, "syntax")
                self.open_parens.append(p2)
                arg = self.expr()
                self.expect_close()
                return Exp(arg, pos) if text == "exp" else Log(arg, pos)
            raise ParseError(f"unknown identifier {text!r}", pos, "identifier")
        if kind == "op" and text == "(":
            self.open_parens.append(pos)
            node = self.expr()
            self.expect_close()
            return node
        if kind == "end":
            raise ParseError("unexpected end of input", pos, "syntax")
        raise ParseError(f"unexpected token {text!r}", pos, "syntax")


def parse(source: str) -> Expression:
    """Parse expression text into an :class:`Expression`."""
    if isinstance(source, bytes):
        source = source.decode("utf-8")
    return Expression(_Parser(source).parse(), source)


# --- printer ---------------------------------------------------------------

def _num(v: float) -> str:
    if not math.isfinite(v):
        raise ValueError(f"non-finite constant {v}")
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


def _prec(node: Node) -> int:
    if isinstance(node, (Add, Sub)):
        return 1
    if isinstance(node, (Mul, Div)):
        return 2
    if isinstance(node, Pow):
        return 3
    return 4


def _show(node: Node, need: int) -> str:
    if isinstance(node, Const):
        text = _num(node.value)
        return f"({text})" if node.value < 0 or text.startswith("-") else text
    if isinstance(node, Var):
        return "s"
    if isinstance(node, Exp):
        return f"exp({_show(node.arg, 0)})"
    if isinstance(node, Log):
        return f"log({_show(node.arg, 0)})"
    if isinstance(node, Pow):
        text = f"{_show(node.base, 4)}^{_num(node.exponent)}"
    elif isinstance(node, (Add, Sub)):
        op = "+" if isinstance(node, Add) else "-"
        text = f"{_show(node.left, 1)} {op} {_show(node.right, 2)}"
    elif isinstance(node, (Mul, Div)):
        op = "*" if isinstance(node, Mul) else "/"
        text = f"{_show(node.left, 2)}{op}{_show(node.right, 3)}"
    else:
        raise TypeError(f"not an expression node: {node!r}")
    return f"({text})" if _prec(node) < need else text


def to_text(expr: Expression | Node) -> str:
    """Canonical text form; ``parse(to_text(e)) == e``."""
    root = expr.root if isinstance(expr, Expression) else expr
    return _show(root, 0)


# --- jets ------------------------------------------------------------------

@dataclass(frozen=True)
class Jet:
    """Value and raw derivatives d^0..d^order at one point (or array of points)."""

    order: int
    coeffs: np.ndarray

    def __getitem__(self, k):
        return self.coeffs[k]

    def __len__(self):
        return self.order + 1


_BINOM = [[math.comb(n, k) for k in range(n + 1)] for n in range(MAX_ORDER + 1)]


def _mul(f, g):
    n = len(f)
    return [sum(_BINOM[m][k] * f[k] * g[m - k] for k in range(m + 1)) for m in range(n)]


def _div(f, g, node):
    g0 = g[0]
    if np.any(g0 == 0):
        raise EvalError("division by zero", node.pos, "division")
    q = []
    for m in range(len(f)):
        acc = f[m]
        for k in range(1, m + 1):
            acc = acc - _BINOM[m][k] * g[k] * q[m - k]
        q.append(acc / g0)
    return q


def _exp(f, node, strict=True):
    if strict and np.any(f[0] > EXP_OVERFLOW):
        raise EvalError("overflow in exp", node.pos, "overflow")
    h = [np.exp(f[0])]
    for n in range(1, len(f)):
        h.append(sum(_BINOM[n - 1][k] * f[k + 1] * h[n - 1 - k] for k in range(n)))
    return h


def _log(f, node):
    if np.any(f[0] <= 0):
        raise EvalError("log of non-positive value", node.pos, "domain")
    h = [np.log(f[0])]
    if len(f) > 1:
        h.extend(_div(f[1:], f[:-1], node))
    return h


def _pow(f, p, node):
    n = len(f)
    zero = np.zeros_like(f[0])
    if p == 0:
        return [zero + 1.0] + [zero] * (n - 1)
    if p == int(p) and p > 0:
        # repeated squaring keeps bases <= 0 legal for integer powers
        k = int(p)
        result = None
        base = f
        while k:
            if k & 1:
                result = base if result is None else _mul(result, base)
            k >>= 1
            if k:
                base = _mul(base, base)
        return result
    if p == int(p) and np.any(f[0] <= 0):
        one = [zero + 1.0] + [zero] * (n - 1)
        return _div(one, _pow(f, -p, node), node)
    if np.any(f[0] <= 0):
        raise EvalError("non-integer power of non-positive value", node.pos, "domain")
    f0 = f[0]
    h = [f0 ** p]
    for m in range(1, n):
        acc = sum(_BINOM[m - 1][k] * p * f[k + 1] * h[m - 1 - k] for k in range(m))
        for k in range(1, m):
            acc = acc - _BINOM[m - 1][k] * f[k] * h[m - k]
        h.append(acc / f0)
    return h


def _eval(node: Node, s, n: int, strict: bool = True):
    if isinstance(node, Const):
        zero = np.zeros_like(s)
        return [zero + node.value] + [zero] * (n - 1)
    if isinstance(node, Var):
        zero = np.zeros_like(s)
        return [s + zero] + ([zero + 1.0] if n > 1 else []) + [zero] * max(n - 2, 0)
    if isinstance(node, Add):
        a, b = _eval(node.left, s, n, strict), _eval(node.right, s, n, strict)
        return [x + y for x, y in zip(a, b)]
    if isinstance(node, Sub):
        a, b = _eval(node.left, s, n, strict), _eval(node.right, s, n, strict)
        return [x - y for x, y in zip(a, b)]
    if isinstance(node, Mul):
        return _mul(_eval(node.left, s, n, strict), _eval(node.right, s, n, strict))
    if isinstance(node, Div):
        return _div(_eval(node.left, s, n, strict), _eval(node.right, s, n, strict), node)
    if isinstance(node, Pow):
        return _pow(_eval(node.base, s, n, strict), node.exponent, node)
    if isinstance(node, Exp):
        return _exp(_eval(node.arg, s, n, strict), node, strict)
    if isinstance(node, Log):
        return _log(_eval(node.arg, s, n, strict), node)
    raise TypeError(f"not an expression node: {node!r}")


def jet_array(expr: Expression, s, order: int, strict: bool = True) -> np.ndarray:
    """Derivatives d^0..d^order of ``expr`` at ``s``; shape (order+1, *s.shape).

    With ``strict=False`` overflow yields inf/nan entries instead of raising;
    root finders use this to treat an overflow as "beyond the root".
    """
    if not 0 <= order <= MAX_ORDER:
        raise ValueError(f"order must be in [0, {MAX_ORDER}]")
    s = np.asarray(s, dtype=float)
    with np.errstate(all="ignore"):
        out = np.array(_eval(expr.root, s, order + 1, strict))
    if strict and not np.all(np.isfinite(out)):
        raise EvalError("non-finite derivative (overflow)", None, "overflow")
    return out


def eval_jet(expr: Expression, s, order: int = 5) -> Jet:
    return Jet(order, jet_array(expr, s, order))


def evaluate(expr: Expression, s):
    """Value only; returns a float for scalar ``s``."""
    out = jet_array(expr, s, 0)[0]
    return float(out) if out.ndim == 0 else out
