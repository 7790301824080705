"""A tiny arithmetic grammar in one variable ``x``.

Grammar (``^`` binds tighter than unary minus and is right associative)::

    expr   := term (("+" | "-") term)*
    term   := unary (("*" | "/") unary)*
    unary  := ("-" | "+") unary | power
    power  := atom ("^" unary)?
    atom   := NUMBER | "x" | "pi" | FUNC "(" expr ")" | "(" expr ")"
    FUNC   := log | abs | exp | sqrt | sin | cos

``log`` and ``abs`` are the contractual functions; ``exp``, ``sqrt``, ``sin``,
``cos`` and the constant ``pi`` are conveniences. Compiled expressions are
vectorised over numpy arrays and carry a symbolic derivative.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

_TOKEN = re.compile(r"\s*(?:(\d+\.?\d*(?:[eE][-+]?\d+)?|\.\d+(?:[eE][-+]?\d+)?)|([A-Za-z_]+)|(.))")
_FUNCS = ("log", "abs", "exp", "sqrt", "sin", "cos")


class Node:
    def __call__(self, x):
        raise NotImplementedError

    def diff(self) -> "Node":
        raise NotImplementedError


@dataclass(frozen=True)
class Const(Node):
    value: float

    def __call__(self, x):
        return np.full(np.shape(x), self.value, dtype=float) if np.ndim(x) else self.value

    def diff(self):
        return Const(0.0)


@dataclass(frozen=True)
class Var(Node):
    def __call__(self, x):
        return x

    def diff(self):
        return Const(1.0)


@dataclass(frozen=True)
class Add(Node):
    a: Node
    b: Node

    def __call__(self, x):
        return self.a(x) + self.b(x)

    def diff(self):
        return _add(self.a.diff(), self.b.diff())


@dataclass(frozen=True)
class Sub(Node):
    a: Node
    b: Node

    def __call__(self, x):
        return self.a(x) - self.b(x)

    def diff(self):
        return _sub(self.a.diff(), self.b.diff())


@dataclass(frozen=True)
class Mul(Node):
    a: Node
    b: Node

    def __call__(self, x):
        return self.a(x) * self.b(x)

    def diff(self):
        return _add(_mul(self.a.diff(), self.b), _mul(self.a, self.b.diff()))


@dataclass(frozen=True)
class Div(Node):
    a: Node
    b: Node

    def __call__(self, x):
        return self.a(x) / self.b(x)

    def diff(self):
        num = _sub(_mul(self.a.diff(), self.b), _mul(self.a, self.b.diff()))
        return Div(num, Mul(self.b, self.b))


@dataclass(frozen=True)
class Pow(Node):
    a: Node
    b: Node

    def __call__(self, x):
        return np.power(self.a(x), self.b(x))

    def diff(self):
        if isinstance(self.b, Const):
            p = self.b.value
            return _mul(_mul(Const(p), Pow(self.a, Const(p - 1.0))), self.a.diff())
        # d(a^b) = a^b (b' log a + b a'/a)
        inner = _add(_mul(self.b.diff(), Func("log", self.a)),
                     _mul(self.b, Div(self.a.diff(), self.a)))
        return _mul(self, inner)


@dataclass(frozen=True)
class Neg(Node):
    a: Node

    def __call__(self, x):
        return -self.a(x)

    def diff(self):
        d = self.a.diff()
        return Const(0.0) if _is_zero(d) else Neg(d)


@dataclass(frozen=True)
class Func(Node):
    name: str
    a: Node

    def __call__(self, x):
        v = self.a(x)
        with np.errstate(divide="ignore", invalid="ignore"):
            return getattr(np, self.name if self.name != "abs" else "abs")(v)

    def diff(self):
        a, da = self.a, self.a.diff()
        if self.name == "log":
            outer = Div(Const(1.0), a)
        elif self.name == "abs":
            outer = Sign(a)
        elif self.name == "exp":
            outer = self
        elif self.name == "sqrt":
            outer = Div(Const(0.5), self)
        elif self.name == "sin":
            outer = Func("cos", a)
        else:
            outer = Neg(Func("sin", a))
        return _mul(outer, da)


@dataclass(frozen=True)
class Sign(Node):
    a: Node

    def __call__(self, x):
        return np.sign(self.a(x))

    def diff(self):
        return Const(0.0)


def _is_zero(n):
    return isinstance(n, Const) and n.value == 0.0


def _is_one(n):
    return isinstance(n, Const) and n.value == 1.0


def _add(a, b):
    if _is_zero(a):
        return b
    if _is_zero(b):
        return a
    return Add(a, b)


def _sub(a, b):
    if _is_zero(b):
        return a
    if _is_zero(a):
        return Neg(b)
    return Sub(a, b)


def _mul(a, b):
    if _is_zero(a) or _is_zero(b):
        return Const(0.0)
    if _is_one(a):
        return b
    if _is_one(b):
        return a
    return Mul(a, b)


class _Parser:
    def __init__(self, text):
        self.text = text
        self.tokens = []
        pos = 0
        text = text.rstrip()
        while pos < len(text):
            m = _TOKEN.match(text, pos)
            if m is None:
                raise DomainError(f"cannot tokenize expression {self.text!r} at {pos}")
            num, name, sym = m.groups()
            if num is not None:
                self.tokens.append(("num", float(num)))
            elif name is not None:
                self.tokens.append(("name", name))
            elif sym is not None and not sym.isspace():
                self.tokens.append(("sym", sym))
            pos = m.end()
        self.i = 0

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else (None, None)

    def take(self, kind=None, value=None):
        tok = self.peek()
        if tok[0] is None or (kind and tok[0] != kind) or (value and tok[1] != value):
            want = value or kind or "token"
            raise DomainError(f"expected {want} in expression {self.text!r}, got {tok[1]!r}")
        self.i += 1
        return tok

    def parse(self):
        node = self.expr()
        if self.i != len(self.tokens):
            raise DomainError(f"unexpected {self.peek()[1]!r} in expression {self.text!r}")
        return node

    def expr(self):
        node = self.term()
        while self.peek() in (("sym", "+"), ("sym", "-")):
            op = self.take()[1]
            rhs = self.term()
            node = Add(node, rhs) if op == "+" else Sub(node, rhs)
        return node

    def term(self):
        node = self.unary()
        while self.peek() in (("sym", "*"), ("sym", "/")):
            op = self.take()[1]
            rhs = self.unary()
            node = Mul(node, rhs) if op == "*" else Div(node, rhs)
        return node

    def unary(self):
        if self.peek() == ("sym", "-"):
            self.take()
            return Neg(self.unary())
        if self.peek() == ("sym", "+"):
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek() == ("sym", "^"):
            self.take()
            return Pow(base, self.unary())
        return base

    def atom(self):
        kind, value = self.peek()
        if kind == "num":
            self.take()
            return Const(value)
        if kind == "name":
            self.take()
            if value == "x":
                return Var()
            if value == "pi":
                return Const(math.pi)
            if value in _FUNCS:
                self.take("sym", "(")
                arg = self.expr()
                self.take("sym", ")")
                return Func(value, arg)
            raise DomainError(f"unknown name {value!r} in expression {self.text!r}")
        if (kind, value) == ("sym", "("):
            self.take()
            node = self.expr()
            self.take("sym", ")")
            return node
        raise DomainError(f"unexpected {value!r} in expression {self.text!r}")


@dataclass(frozen=True)
class Expression:
    """A compiled expression: callable on floats or arrays, with ``derivative``."""

    text: str
    tree: Node
    dtree: Node

    def __call__(self, x):
        with np.errstate(divide="ignore", invalid="ignore"):
            out = self.tree(np.asarray(x, dtype=float))
        return out if np.ndim(out) else float(out)

    def derivative(self, x):
        with np.errstate(divide="ignore", invalid="ignore"):
            out = self.dtree(np.asarray(x, dtype=float))
        return out if np.ndim(out) else float(out)


def parse_expression(text: str) -> Expression:
    if not isinstance(text, str) or not text.strip():
        raise DomainError("expression must be a non-empty string")
    tree = _Parser(text).parse()
    return Expression(text, tree, tree.diff())
