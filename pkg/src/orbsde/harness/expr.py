"""Coefficient mini-language.

Grammar (usual precedence, left associative)::

    expr    := term (("+" | "-") term)*
    term    := unary (("*" | "/") unary)*
    unary   := ("-" | "+") unary | primary
    primary := NUMBER | NAME | NAME "(" expr ("," expr)* ")" | "(" expr ")"

Names are the declared variables (``x1..xm``, ``y1..yd``, ``z1..zq``) and
the functions ``min``, ``max`` (two or more arguments), ``exp``, ``abs`` and
``clamp(v, lo, hi)``.  A minus sign directly in front of a number literal
is folded into the literal.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from ..errors import ParseError

_TOKEN = re.compile(r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/(),])
""", re.VERBOSE)

DEFAULT_VARIABLE = re.compile(r"[xyz][1-9][0-9]*\Z")

FUNCTIONS = {
    "min": (2, None),
    "max": (2, None),
    "exp": (1, 1),
    "abs": (1, 1),
    "clamp": (3, 3),
}


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    arg: object


@dataclass(frozen=True)
class BinOp:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple


def _tokenize(source: str):
    pos = 0
    tokens = []
    while pos < len(source):
        m = _TOKEN.match(source, pos)
        if m is None:
            raise ParseError(f"unexpected character {source[pos]!r}", source, pos)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append((kind, m.group(), pos))
        pos = m.end()
    tokens.append(("end", "", len(source)))
    return tokens


class _Parser:
    def __init__(self, source: str, variables):
        self.source = source
        self.tokens = _tokenize(source)
        self.pos = 0
        self.variables = variables

    def peek(self):
        return self.tokens[self.pos]

    def advance(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def error(self, message, tok=None):
        tok = tok or self.peek()
        return ParseError(message, self.source, tok[2])

    def expect(self, text):
        tok = self.peek()
        if tok[1] != text or tok[0] == "end":
            found = "end of input" if tok[0] == "end" else repr(tok[1])
            raise self.error(f"expected {text!r}, found {found}")
        return self.advance()

    def parse(self):
        if self.peek()[0] == "end":
            raise self.error("empty expression")
        node = self.expr()
        if self.peek()[0] != "end":
            raise self.error(f"unexpected trailing token {self.peek()[1]!r}")
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.advance()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.advance()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        tok = self.peek()
        if tok[0] == "op" and tok[1] == "-":
            self.advance()
            if self.peek()[0] == "num":
                return Num(-float(self.advance()[1]))
            return Neg(self.unary())
        if tok[0] == "op" and tok[1] == "+":
            self.advance()
            return self.unary()
        return self.primary()

    def primary(self):
        tok = self.peek()
        kind, text, _ = tok
        if kind == "num":
            self.advance()
            return Num(float(text))
        if kind == "name":
            self.advance()
            if self.peek()[1] == "(" and self.peek()[0] == "op":
                return self.call(tok)
            if text in FUNCTIONS:
                raise self.error(f"function {text!r} needs an argument list", tok)
            if not self._known(text):
                raise self.error(f"unknown identifier {text!r}", tok)
            return Var(text)
        if kind == "op" and text == "(":
            self.advance()
            node = self.expr()
            self.expect(")")
            return node
        if kind == "end":
            raise self.error("unexpected end of input")
        raise self.error(f"unexpected token {text!r}")

    def call(self, name_tok):
        name = name_tok[1]
        if name not in FUNCTIONS:
            raise self.error(f"unknown function {name!r}", name_tok)
        self.expect("(")
        args = [self.expr()]
        while self.peek()[1] == "," and self.peek()[0] == "op":
            self.advance()
            args.append(self.expr())
        self.expect(")")
        lo, hi = FUNCTIONS[name]
        if len(args) < lo or (hi is not None and len(args) > hi):
            want = f"{lo}" if lo == hi else f"at least {lo}"
            raise self.error(f"{name}() takes {want} argument(s), got {len(args)}", name_tok)
        return Call(name, tuple(args))

    def _known(self, name):
        if self.variables is None:
            return bool(DEFAULT_VARIABLE.match(name))
        return name in self.variables


def parse_expression(source: str, variables=None):
    """Parse ``source`` into an expression tree.

    ``variables`` is the set of admissible names; by default any
    ``x<k>``, ``y<k>`` or ``z<k>`` with ``k >= 1`` is accepted.
    """
    return _Parser(source, None if variables is None else frozenset(variables)).parse()


def to_source(node) -> str:
    """Fully parenthesised source text that parses back to ``node``."""
    if isinstance(node, Num):
        text = repr(float(node.value))
        return f"({text})" if text.startswith("-") else text
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        inner = to_source(node.arg)
        if isinstance(node.arg, Num):
            inner = f"({inner})"
        return f"(-{inner})"
    if isinstance(node, BinOp):
        return f"({to_source(node.left)} {node.op} {to_source(node.right)})"
    if isinstance(node, Call):
        return f"{node.name}({', '.join(to_source(a) for a in node.args)})"
    raise TypeError(f"not an expression node: {node!r}")


def variables_of(node) -> set:
    if isinstance(node, Var):
        return {node.name}
    if isinstance(node, Num):
        return set()
    if isinstance(node, Neg):
        return variables_of(node.arg)
    if isinstance(node, BinOp):
        return variables_of(node.left) | variables_of(node.right)
    return set().union(*(variables_of(a) for a in node.args))


def evaluate(node, env):
    """Evaluate with numpy semantics; ``env`` maps names to floats or arrays."""
    with np.errstate(all="ignore"):
        return _eval(node, env)


def _eval(node, env):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        return env[node.name]
    if isinstance(node, Neg):
        return -_eval(node.arg, env)
    if isinstance(node, BinOp):
        a, b = _eval(node.left, env), _eval(node.right, env)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        return np.divide(a, b)
    args = [_eval(a, env) for a in node.args]
    if node.name == "min":
        out = args[0]
        for a in args[1:]:
            out = np.minimum(out, a)
        return out
    if node.name == "max":
        out = args[0]
        for a in args[1:]:
            out = np.maximum(out, a)
        return out
    if node.name == "exp":
        return np.exp(args[0])
    if node.name == "abs":
        return np.abs(args[0])
    v, lo, hi = args
    return np.minimum(np.maximum(v, lo), hi)


class CoefficientExpr:
    """A parsed coefficient bound to the problem's array calling conventions.

    ``state`` coefficients are called as ``expr(x)``; drivers as
    ``expr(x, y, z_row)``.
    """

    def __init__(self, source, variables):
        self.source = str(source)
        self.variables = frozenset(variables)
        self.tree = parse_expression(self.source, self.variables)

    def __repr__(self):
        return f"CoefficientExpr({self.source!r})"

    def env(self, x, y=None, z=None):
        env = {f"x{k + 1}": x[:, k] for k in range(x.shape[1])}
        if y is not None:
            env.update({f"y{k + 1}": y[:, k] for k in range(y.shape[1])})
        if z is not None:
            env.update({f"z{k + 1}": z[:, k] for k in range(z.shape[1])})
        return env

    def __call__(self, x, y=None, z=None):
        return evaluate(self.tree, self.env(x, y, z))
