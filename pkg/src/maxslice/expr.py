"""Tiny arithmetic expression language used by scenario files.

Grammar::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := ('+' | '-') unary | power
    power  := atom ('^' unary)?
    atom   := NUMBER | NAME | NAME '(' expr ')' | '(' expr ')'

Names are the variables ``t``, ``x``, ``y``, the constant ``pi`` and the
functions ``exp sin cos cosh sinh tanh``.  Expressions evaluate on numpy
arrays and can be differentiated symbolically, which is how scenario
models get analytic time derivatives.
"""

from __future__ import annotations

import math
import re

import numpy as np

from .errors import ScenarioError

VARIABLES = ("t", "x", "y")
CONSTANTS = {"pi": math.pi}

_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_]\w*)|(?P<op>\*\*|[-+*/^()]))"
)


class Node:
    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)


class Num(Node):
    def __init__(self, value):
        self.value = float(value)

    def eval(self, env):
        return self.value

    def diff(self, var):
        return ZERO

    def __str__(self):
        return repr(self.value)


class Var(Node):
    def __init__(self, name):
        self.name = name

    def eval(self, env):
        return env[self.name]

    def diff(self, var):
        return ONE if var == self.name else ZERO

    def __str__(self):
        return self.name


class Neg(Node):
    def __init__(self, arg):
        self.arg = arg

    def eval(self, env):
        return -self.arg.eval(env)

    def diff(self, var):
        return neg(self.arg.diff(var))

    def __str__(self):
        return f"(-{self.arg})"


class Bin(Node):
    def __init__(self, op, left, right):
        self.op, self.left, self.right = op, left, right

    def eval(self, env):
        a = self.left.eval(env)
        b = self.right.eval(env)
        if self.op == "+":
            return a + b
        if self.op == "-":
            return a - b
        if self.op == "*":
            return a * b
        if self.op == "/":
            return a / b
        return _power(a, b)

    def diff(self, var):
        a, b = self.left, self.right
        da, db = a.diff(var), b.diff(var)
        if self.op == "+":
            return add(da, db)
        if self.op == "-":
            return sub(da, db)
        if self.op == "*":
            return add(mul(da, b), mul(a, db))
        if self.op == "/":
            return div(sub(mul(da, b), mul(a, db)), mul(b, b))
        # a^b with constant exponent is by far the common case
        if _is_const(db, 0.0):
            return mul(mul(b, power(a, sub(b, ONE))), da)
        return mul(self, add(mul(db, Call("log", a)), div(mul(b, da), a)))

    def __str__(self):
        return f"({self.left} {self.op} {self.right})"


_FUNCS = {
    "exp": np.exp,
    "sin": np.sin,
    "cos": np.cos,
    "cosh": np.cosh,
    "sinh": np.sinh,
    "tanh": np.tanh,
    "log": np.log,
}
PUBLIC_FUNCTIONS = ("exp", "sin", "cos", "cosh", "sinh", "tanh")


class Call(Node):
    def __init__(self, fn, arg):
        self.fn, self.arg = fn, arg

    def eval(self, env):
        return _FUNCS[self.fn](self.arg.eval(env))

    def diff(self, var):
        a = self.arg
        if self.fn == "exp":
            outer = self
        elif self.fn == "sin":
            outer = Call("cos", a)
        elif self.fn == "cos":
            outer = neg(Call("sin", a))
        elif self.fn == "cosh":
            outer = Call("sinh", a)
        elif self.fn == "sinh":
            outer = Call("cosh", a)
        elif self.fn == "tanh":
            outer = sub(ONE, mul(self, self))
        else:
            outer = div(ONE, a)
        return mul(outer, a.diff(var))

    def __str__(self):
        return f"{self.fn}({self.arg})"


ZERO = Num(0.0)
ONE = Num(1.0)


def _power(a, b):
    if np.ndim(b) == 0 and float(b).is_integer():
        return a ** int(b)
    return a ** b


def _is_const(node, value=None):
    if not isinstance(node, Num):
        return False
    return value is None or node.value == value


def neg(a):
    if _is_const(a):
        return Num(-a.value)
    return Neg(a)


def add(a, b):
    if _is_const(a, 0.0):
        return b
    if _is_const(b, 0.0):
        return a
    if _is_const(a) and _is_const(b):
        return Num(a.value + b.value)
    return Bin("+", a, b)


def sub(a, b):
    if _is_const(b, 0.0):
        return a
    if _is_const(a, 0.0):
        return neg(b)
    if _is_const(a) and _is_const(b):
        return Num(a.value - b.value)
    return Bin("-", a, b)


def mul(a, b):
    if _is_const(a, 0.0) or _is_const(b, 0.0):
        return ZERO
    if _is_const(a, 1.0):
        return b
    if _is_const(b, 1.0):
        return a
    if _is_const(a) and _is_const(b):
        return Num(a.value * b.value)
    return Bin("*", a, b)


def div(a, b):
    if _is_const(a, 0.0):
        return ZERO
    if _is_const(b, 1.0):
        return a
    return Bin("/", a, b)


def power(a, b):
    if _is_const(b, 1.0):
        return a
    if _is_const(b, 0.0):
        return ONE
    return Bin("^", a, b)


class _Parser:
    def __init__(self, text):
        self.text = text
        self.tokens = self._tokenize(text)
        self.pos = 0

    def _error(self, message, offset):
        raise ScenarioError(f"{message} in expression {self.text!r}", line=1, column=offset + 1)

    def _tokenize(self, text):
        tokens = []
        i = 0
        while i < len(text):
            if text[i].isspace():
                i += 1
                continue
            m = _TOKEN.match(text, i)
            if m is None or m.end() == i:
                self._error(f"unexpected character {text[i]!r}", i)
            kind = m.lastgroup
            value = m.group(kind)
            start = m.start(kind)
            if value == "**":
                value = "^"
            tokens.append((kind, value, start))
            i = m.end()
        tokens.append(("end", "", len(text)))
        return tokens

    def peek(self):
        return self.tokens[self.pos]

    def take(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, value):
        kind, val, off = self.take()
        if val != value:
            self._error(f"expected {value!r} but found {val or 'end of input'!r}", off)

    def parse(self):
        node = self.expr()
        kind, val, off = self.peek()
        if kind != "end":
            self._error(f"unexpected token {val!r}", off)
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-"):
            op = self.take()[1]
            rhs = self.term()
            node = Bin(op, node, rhs)
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/"):
            op = self.take()[1]
            rhs = self.unary()
            node = Bin(op, node, rhs)
        return node

    def unary(self):
        if self.peek()[1] == "-":
            self.take()
            return Neg(self.unary())
        if self.peek()[1] == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[1] == "^":
            self.take()
            return Bin("^", base, self.unary())
        return base

    def atom(self):
        kind, val, off = self.take()
        if kind == "num":
            return Num(float(val))
        if kind == "name":
            if self.peek()[1] == "(":
                if val not in PUBLIC_FUNCTIONS:
                    self._error(f"unknown function {val!r}", off)
                self.take()
                arg = self.expr()
                self.expect(")")
                return Call(val, arg)
            if val in CONSTANTS:
                return Num(CONSTANTS[val])
            if val in VARIABLES:
                return Var(val)
            self._error(f"unknown name {val!r}", off)
        if val == "(":
            node = self.expr()
            self.expect(")")
            return node
        self._error(f"unexpected {val or 'end of input'!r}", off)


def parse(text):
    """Parse an expression string into a node tree."""
    if not isinstance(text, str):
        text = repr(float(text))
    return _Parser(text).parse()


def variables(node):
    """Set of variable names an expression depends on."""
    if isinstance(node, Var):
        return {node.name}
    if isinstance(node, (Neg, Call)):
        return variables(node.arg)
    if isinstance(node, Bin):
        return variables(node.left) | variables(node.right)
    return set()


class Expression:
    """Compiled expression: callable on ``(t, x, y)`` arrays with broadcasting."""

    def __init__(self, source):
        if isinstance(source, Node):
            self.node = source
            self.source = str(source)
        else:
            self.source = source if isinstance(source, str) else repr(float(source))
            self.node = parse(self.source)
        self.names = variables(self.node)

    def __call__(self, t=0.0, x=0.0, y=0.0):
        env = {"t": t, "x": x, "y": y}
        value = self.node.eval(env)
        shape = np.broadcast(*[np.asarray(env[n]) for n in VARIABLES]).shape
        return np.broadcast_to(np.asarray(value, dtype=float), shape).copy()

    def diff(self, var):
        d = Expression(self.node.diff(var))
        d.source = f"d/d{var}[{self.source}]"
        return d

    def depends_on(self, var):
        return var in self.names

    def __repr__(self):
        return f"Expression({self.source!r})"
