"""Minimal arithmetic-expression grammar for user-supplied coefficients.

Grammar (whitespace insensitive)::

    expr   := term (('+' | '-') term)*
    term   := factor (('*' | '/') factor)*
    factor := '-' factor | atom ('^' factor)?   # '^' right associative,
                                                # binding tighter than unary '-'
    atom   := NUMBER | 'x' | FUNC '(' expr ')' | '(' expr ')'
    FUNC   := 'exp' | 'log' | 'sqrt'

Parsed expressions evaluate on floats or numpy arrays and support exact
symbolic differentiation in x, which the stopping-time machinery needs for
drift/volatility derivatives of generic models.
"""

from __future__ import annotations

import math
import re

import numpy as np

from .errors import ConfigError

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_]\w*)"
    r"|(?P<op>[-+*/^()]))"
)

_FUNCS = ("exp", "log", "sqrt")


class Expr:
    """Expression AST node."""

    def __call__(self, x):
        raise NotImplementedError

    def diff(self) -> "Expr":
        raise NotImplementedError


class Const(Expr):
    def __init__(self, value: float):
        self.value = float(value)

    def __call__(self, x):
        return self.value if np.isscalar(x) else np.full_like(np.asarray(x, dtype=float), self.value)

    def diff(self):
        return Const(0.0)

    def __repr__(self):
        return repr(self.value)


class Var(Expr):
    def __call__(self, x):
        return x

    def diff(self):
        return Const(1.0)

    def __repr__(self):
        return "x"


class BinOp(Expr):
    def __init__(self, op: str, left: Expr, right: Expr):
        self.op, self.left, self.right = op, left, right

    def __call__(self, x):
        a, b = self.left(x), self.right(x)
        if self.op == "+":
            return a + b
        if self.op == "-":
            return a - b
        if self.op == "*":
            return a * b
        if self.op == "/":
            return a / b
        return a ** b

    def diff(self):
        a, b = self.left, self.right
        da, db = a.diff(), b.diff()
        if self.op == "+":
            return BinOp("+", da, db)
        if self.op == "-":
            return BinOp("-", da, db)
        if self.op == "*":
            return BinOp("+", BinOp("*", da, b), BinOp("*", a, db))
        if self.op == "/":
            num = BinOp("-", BinOp("*", da, b), BinOp("*", a, db))
            return BinOp("/", num, BinOp("^", b, Const(2.0)))
        # a^b with b constant is the only supported power in diff; the general
        # case (a^b)' needs log(a) which is undefined for a <= 0.
        if isinstance(b, Const):
            return BinOp(
                "*",
                BinOp("*", b, BinOp("^", a, Const(b.value - 1.0))),
                da,
            )
        inner = BinOp("+", BinOp("*", db, Call("log", a)), BinOp("/", BinOp("*", b, da), a))
        return BinOp("*", self, inner)

    def __repr__(self):
        return f"({self.left!r} {self.op} {self.right!r})"


class Neg(Expr):
    def __init__(self, inner: Expr):
        self.inner = inner

    def __call__(self, x):
        return -self.inner(x)

    def diff(self):
        return Neg(self.inner.diff())

    def __repr__(self):
        return f"(-{self.inner!r})"


class Call(Expr):
    def __init__(self, func: str, arg: Expr):
        self.func, self.arg = func, arg

    def __call__(self, x):
        v = self.arg(x)
        if np.isscalar(v):
            return {"exp": math.exp, "log": math.log, "sqrt": math.sqrt}[self.func](v)
        return {"exp": np.exp, "log": np.log, "sqrt": np.sqrt}[self.func](v)

    def diff(self):
        da = self.arg.diff()
        if self.func == "exp":
            return BinOp("*", self, da)
        if self.func == "log":
            return BinOp("/", da, self.arg)
        return BinOp("/", da, BinOp("*", Const(2.0), self))

    def __repr__(self):
        return f"{self.func}({self.arg!r})"


def _tokenize(text: str):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            if text[pos:].strip() == "":
                break
            raise ConfigError(f"bad character {text[pos]!r} at position {pos} in {text!r}")
        if m.lastgroup == "num":
            tokens.append(("num", float(m.group("num"))))
        elif m.lastgroup == "name":
            tokens.append(("name", m.group("name")))
        else:
            tokens.append(("op", m.group("op")))
        pos = m.end()
    return tokens


class _Parser:
    def __init__(self, tokens, text):
        self.tokens = tokens
        self.text = text
        self.i = 0

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else (None, None)

    def take(self):
        tok = self.peek()
        self.i += 1
        return tok

    def expect_op(self, op):
        kind, val = self.take()
        if kind != "op" or val != op:
            raise ConfigError(f"expected {op!r} in {self.text!r}")

    def expr(self):
        node = self.term()
        while self.peek() == ("op", "+") or self.peek() == ("op", "-"):
            _, op = self.take()
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.factor()
        while self.peek() == ("op", "*") or self.peek() == ("op", "/"):
            _, op = self.take()
            node = BinOp(op, node, self.factor())
        return node

    def factor(self):
        if self.peek() == ("op", "-"):
            self.take()
            return Neg(self.factor())
        node = self.atom()
        if self.peek() == ("op", "^"):
            self.take()
            node = BinOp("^", node, self.factor())
        return node

    def atom(self):
        kind, val = self.take()
        if kind == "num":
            return Const(val)
        if kind == "name":
            if val == "x":
                return Var()
            if val in _FUNCS:
                self.expect_op("(")
                inner = self.expr()
                self.expect_op(")")
                return Call(val, inner)
            raise ConfigError(f"unknown name {val!r} in {self.text!r} (allowed: x, {', '.join(_FUNCS)})")
        if kind == "op" and val == "(":
            inner = self.expr()
            self.expect_op(")")
            return inner
        raise ConfigError(f"unexpected token {val!r} in {self.text!r}")


def parse_expression(text: str) -> Expr:
    """Parse ``text`` into an evaluable/differentiable expression tree."""
    tokens = _tokenize(text)
    if not tokens:
        raise ConfigError(f"empty expression {text!r}")
    parser = _Parser(tokens, text)
    node = parser.expr()
    if parser.i != len(tokens):
        raise ConfigError(f"trailing input after position {parser.i} in {text!r}")
    return node
