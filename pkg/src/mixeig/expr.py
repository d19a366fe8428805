"""Tiny arithmetic expression language for drift fields.

Grammar (``^`` binds tighter than unary minus, and is right associative)::

    expr   := term (("+" | "-") term)*
    term   := unary (("*" | "/") unary)*
    unary  := ("+" | "-") unary | power
    power  := atom ("^" unary)?
    atom   := NUMBER | "x" | "y" | "pi" | FUNC "(" expr ")" | "(" expr ")"
    FUNC   := sin | cos | exp

Expressions compile to closures over numpy arrays; nothing is ``eval``-ed.
"""

from __future__ import annotations

import math
import re
from typing import Callable

import numpy as np

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_]\w*)|(?P<op>[-+*/^()]))"
)
_FUNCS = {"sin": np.sin, "cos": np.cos, "exp": np.exp}
_VARS = ("x", "y")


class ExpressionError(ValueError):
    """Raised for malformed drift expressions, with the character position."""

    def __init__(self, message: str, text: str, pos: int):
        super().__init__(f"{message} at position {pos} in {text!r}")
        self.text = text
        self.pos = pos


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens, pos = [], 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            bad = pos + len(text[pos:]) - len(text[pos:].lstrip())
            raise ExpressionError("unexpected character", text, bad)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


Node = Callable[[dict], np.ndarray]


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0
        self.variables: set[str] = set()

    def peek(self):
        return self.tokens[self.i]

    def take(self, value: str | None = None):
        tok = self.tokens[self.i]
        if value is not None and tok[1] != value:
            raise ExpressionError(f"expected {value!r}, found {tok[1] or 'end'!r}", self.text, tok[2])
        self.i += 1
        return tok

    def parse(self) -> Node:
        node = self.expr()
        tok = self.peek()
        if tok[0] != "end":
            raise ExpressionError(f"unexpected token {tok[1]!r}", self.text, tok[2])
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.peek()[1] in ("+", "-"):
            op = self.take()[1]
            lhs, rhs = node, self.term()
            node = (lambda a, b: lambda env: a(env) + b(env))(lhs, rhs) if op == "+" else \
                (lambda a, b: lambda env: a(env) - b(env))(lhs, rhs)
        return node

    def term(self) -> Node:
        node = self.unary()
        while self.peek()[1] in ("*", "/"):
            op = self.take()[1]
            lhs, rhs = node, self.unary()
            node = (lambda a, b: lambda env: a(env) * b(env))(lhs, rhs) if op == "*" else \
                (lambda a, b: lambda env: a(env) / b(env))(lhs, rhs)
        return node

    def unary(self) -> Node:
        if self.peek()[1] in ("+", "-"):
            op = self.take()[1]
            inner = self.unary()
            return inner if op == "+" else (lambda a: lambda env: -a(env))(inner)
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        if self.peek()[1] == "^":
            self.take()
            exponent = self.unary()
            return (lambda a, b: lambda env: np.power(a(env), b(env)))(base, exponent)
        return base

    def atom(self) -> Node:
        kind, value, pos = self.take()
        if kind == "num":
            c = float(value)
            return lambda env: c
        if kind == "name":
            if value in _VARS:
                self.variables.add(value)
                return lambda env: env[value]
            if value == "pi":
                return lambda env: math.pi
            if value in _FUNCS:
                fn = _FUNCS[value]
                self.take("(")
                arg = self.expr()
                self.take(")")
                return lambda env: fn(arg(env))
            raise ExpressionError(f"unknown name {value!r}", self.text, pos)
        if value == "(":
            node = self.expr()
            self.take(")")
            return node
        raise ExpressionError(f"unexpected token {value or 'end'!r}", self.text, pos)


def compile_expression(text: str, dimension: int = 1) -> Callable[[np.ndarray], np.ndarray]:
    """Compile ``text`` into ``f(points) -> values`` for points of shape (m,) or (m, d)."""
    parser = _Parser(text)
    node = parser.parse()
    if dimension == 1 and "y" in parser.variables:
        raise ExpressionError("variable 'y' used in a 1D expression", text, text.index("y"))

    def f(points):
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        env = {name: pts[:, k] for k, name in enumerate(_VARS[: pts.shape[1]])}
        with np.errstate(all="ignore"):  # non-finite values are rejected by the caller
            val = node(env)
        return np.broadcast_to(np.asarray(val, dtype=float), (pts.shape[0],)).copy()

    f.source = text
    return f
