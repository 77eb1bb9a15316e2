"""
A small infix expression language for dynamics and cost functions.

Grammar (EBNF, whitespace insignificant)::

    expr    = term   { ("+" | "-") term } ;
    term    = unary  { ("*" | "/") unary } ;
    unary   = "-" unary | power ;
    power   = atom [ "^" unary ] ;                 (* right-associative *)
    atom    = number | variable | func "(" expr ")" | "(" expr ")" ;
    number  = digits [ "." digits ] [ ("e" | "E") [ "+" | "-" ] digits ]
            | "." digits [ exponent ] ;
    variable= "t" | "x" index | "u" index ;        (* index in 1..n / 1..m *)
    func    = "sin" | "cos" | "exp" | "tanh" | "sqrt" | "abs" ;

``^`` binds tightest, then unary minus, then ``* /``, then ``+ -``; so
``-x1^2`` is ``-(x1^2)`` and ``2^-1`` is ``0.5``.

Evaluation is eager about failures: division by zero, ``sqrt`` of a negative
number, a complex power, overflow, or any non-finite intermediate raises
:class:`EvalError` instead of returning NaN.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np


class ExprError(Exception):
    """Base class for expression failures."""


class ParseError(ExprError):
    def __init__(self, message: str, offset: int, source: str):
        self.offset = offset
        self.source = source
        super().__init__(f"{message} at offset {offset} in {source!r}")


class SignatureError(ExprError):
    """A variable outside the declared (n, m) signature."""

    def __init__(self, name: str, n: int, m: int):
        self.name = name
        super().__init__(f"variable {name!r} is outside the signature (n={n}, m={m})")


class EvalError(ExprError):
    pass


# -- AST ---------------------------------------------------------------------


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    kind: str  # "t", "x" or "u"
    index: int = 0  # zero-based; unused for t

    @property
    def name(self) -> str:
        return "t" if self.kind == "t" else f"{self.kind}{self.index + 1}"


@dataclass(frozen=True)
class Neg:
    arg: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Node"


Node = Union[Num, Var, Neg, BinOp, Call]

FUNCTIONS = ("sin", "cos", "exp", "tanh", "sqrt", "abs")

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^()])
    """,
    re.VERBOSE,
)


def _tokenize(src: str):
    pos = 0
    out = []
    while pos < len(src):
        mt = _TOKEN.match(src, pos)
        if mt is None:
            raise ParseError(f"unexpected character {src[pos]!r}", pos, src)
        kind = mt.lastgroup
        if kind != "ws":
            out.append((kind, mt.group(), pos))
        pos = mt.end()
    out.append(("end", "", len(src)))
    return out


class _Parser:
    def __init__(self, src: str, n: int, m: int):
        self.src = src
        self.n = n
        self.m = m
        self.toks = _tokenize(src)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def take(self):
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def fail(self, expected: str):
        kind, text, pos = self.peek()
        got = "end of input" if kind == "end" else repr(text)
        raise ParseError(f"expected {expected}, got {got}", pos, self.src)

    def expect_op(self, op: str):
        if self.peek()[:2] != ("op", op):
            self.fail(repr(op))
        self.take()

    def parse(self) -> Node:
        node = self.expr()
        if self.peek()[0] != "end":
            self.fail("operator or end of input")
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.take()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.unary()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            op = self.take()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self) -> Node:
        if self.peek()[:2] == ("op", "-"):
            self.take()
            return Neg(self.unary())
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        if self.peek()[:2] == ("op", "^"):
            self.take()
            return BinOp("^", base, self.unary())
        return base

    def atom(self) -> Node:
        kind, text, pos = self.peek()
        if kind == "num":
            self.take()
            value = float(text)
            if not math.isfinite(value):
                raise ParseError(f"numeric literal {text!r} overflows", pos, self.src)
            return Num(value)
        if kind == "name":
            self.take()
            if text in FUNCTIONS:
                self.expect_op("(")
                arg = self.expr()
                self.expect_op(")")
                return Call(text, arg)
            return self._variable(text)
        if (kind, text) == ("op", "("):
            self.take()
            node = self.expr()
            self.expect_op(")")
            return node
        self.fail("number, variable, function or '('")

    def _variable(self, text: str) -> Var:
        if text == "t":
            return Var("t")
        mt = re.fullmatch(r"([xu])([1-9]\d*)", text)
        if mt is None:
            raise SignatureError(text, self.n, self.m)
        kind, idx = mt.group(1), int(mt.group(2))
        if idx > (self.n if kind == "x" else self.m):
            raise SignatureError(text, self.n, self.m)
        return Var(kind, idx - 1)


# -- evaluation ---------------------------------------------------------------


def _checked(value: float, what: str) -> float:
    if not math.isfinite(value):
        raise EvalError(f"non-finite result in {what}")
    return value


def _div(a: float, b: float) -> float:
    if b == 0.0:
        raise EvalError("division by zero")
    return _checked(a / b, "division")


def _pow(a: float, b: float) -> float:
    try:
        return _checked(math.pow(a, b), "power")
    except (ValueError, OverflowError, ZeroDivisionError):
        raise EvalError(f"invalid power {a!r}^{b!r}") from None


def _sqrt(a: float) -> float:
    if a < 0.0:
        raise EvalError(f"sqrt of negative value {a!r}")
    return math.sqrt(a)


def _exp(a: float) -> float:
    try:
        return math.exp(a)
    except OverflowError:
        raise EvalError(f"exp overflow at {a!r}") from None


_SCALAR_FUNCS: dict[str, Callable[[float], float]] = {
    "sin": math.sin,
    "cos": math.cos,
    "exp": _exp,
    "tanh": math.tanh,
    "sqrt": _sqrt,
    "abs": abs,
}

_ARRAY_FUNCS = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "tanh": np.tanh,
    "sqrt": np.sqrt,
    "abs": np.abs,
}


def _compile_scalar(node: Node):
    if isinstance(node, Num):
        v = node.value
        return lambda t, x, u: v
    if isinstance(node, Var):
        i = node.index
        if node.kind == "t":
            return lambda t, x, u: t
        if node.kind == "x":
            return lambda t, x, u: x[i]
        return lambda t, x, u: u[i]
    if isinstance(node, Neg):
        a = _compile_scalar(node.arg)
        return lambda t, x, u: -a(t, x, u)
    if isinstance(node, Call):
        fn = _SCALAR_FUNCS[node.func]
        a = _compile_scalar(node.arg)
        name = node.func
        return lambda t, x, u: _checked(fn(a(t, x, u)), name)
    a = _compile_scalar(node.left)
    b = _compile_scalar(node.right)
    if node.op == "+":
        return lambda t, x, u: _checked(a(t, x, u) + b(t, x, u), "addition")
    if node.op == "-":
        return lambda t, x, u: _checked(a(t, x, u) - b(t, x, u), "subtraction")
    if node.op == "*":
        return lambda t, x, u: _checked(a(t, x, u) * b(t, x, u), "multiplication")
    if node.op == "/":
        return lambda t, x, u: _div(a(t, x, u), b(t, x, u))
    return lambda t, x, u: _pow(a(t, x, u), b(t, x, u))


def _eval_array(node: Node, t, X, U):
    if isinstance(node, Num):
        return np.full(t.shape, node.value)
    if isinstance(node, Var):
        if node.kind == "t":
            return t
        return (X if node.kind == "x" else U)[:, node.index]
    if isinstance(node, Neg):
        return -_eval_array(node.arg, t, X, U)
    if isinstance(node, Call):
        a = _eval_array(node.arg, t, X, U)
        if node.func == "sqrt" and np.any(a < 0):
            raise EvalError("sqrt of negative value")
        return _ARRAY_FUNCS[node.func](a)
    a = _eval_array(node.left, t, X, U)
    b = _eval_array(node.right, t, X, U)
    if node.op == "+":
        return a + b
    if node.op == "-":
        return a - b
    if node.op == "*":
        return a * b
    if node.op == "/":
        if np.any(b == 0):
            raise EvalError("division by zero")
        return a / b
    if np.any((a < 0) & (b != np.round(b))):
        raise EvalError("negative base with non-integer exponent")
    if np.any((a == 0) & (b < 0)):
        raise EvalError("zero raised to a negative power")
    return np.power(a, b)


class Expr:
    """A parsed expression bound to a signature ``(n, m)``."""

    __slots__ = ("ast", "n", "m", "source", "_fn")

    def __init__(self, ast: Node, n: int, m: int, source: str | None = None):
        self.ast = ast
        self.n = n
        self.m = m
        self.source = source if source is not None else to_string(ast)
        self._fn = _compile_scalar(ast)

    def __call__(self, t: float, x=(), u=()) -> float:
        return evaluate(self, t, x, u)

    def __eq__(self, other):
        return isinstance(other, Expr) and (self.ast, self.n, self.m) == (other.ast, other.n, other.m)

    def __hash__(self):
        return hash((self.ast, self.n, self.m))

    def __repr__(self):
        return f"Expr({self.source!r}, n={self.n}, m={self.m})"


def parse(source: str, n: int, m: int) -> Expr:
    if not source or not source.strip():
        raise ParseError("empty expression", 0, source or "")
    return Expr(_Parser(source, n, m).parse(), n, m, source)


def evaluate(e: Expr, t: float, x=(), u=()) -> float:
    if len(x) != e.n or len(u) != e.m:
        raise EvalError(f"expected {e.n} states and {e.m} controls, got {len(x)} and {len(u)}")
    try:
        return float(e._fn(float(t), [float(v) for v in x], [float(v) for v in u]))
    except (OverflowError, ZeroDivisionError) as exc:
        raise EvalError(str(exc)) from None


def evaluate_many(e: Expr, t, X=None, U=None) -> np.ndarray:
    """Vectorized evaluation over rows ``(t[k], X[k], U[k])``."""
    t = np.asarray(t, dtype=np.float64).reshape(-1)
    X = np.zeros((t.size, 0)) if X is None else np.asarray(X, dtype=np.float64).reshape(t.size, -1)
    U = np.zeros((t.size, 0)) if U is None else np.asarray(U, dtype=np.float64).reshape(t.size, -1)
    if X.shape[1] != e.n or U.shape[1] != e.m:
        raise EvalError(f"expected {e.n} states and {e.m} controls, got {X.shape[1]} and {U.shape[1]}")
    with np.errstate(all="ignore"):
        out = _eval_array(e.ast, t, X, U)
    out = np.broadcast_to(out, t.shape).astype(np.float64, copy=True)
    if not np.all(np.isfinite(out)):
        bad = int(np.flatnonzero(~np.isfinite(out))[0])
        raise EvalError(f"non-finite value of {e.source!r} at row {bad}")
    return out


def to_string(node: Node) -> str:
    """Canonical, fully parenthesized form; ``parse(to_string(a))`` rebuilds ``a``."""
    if isinstance(node, Num):
        return repr(node.value)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        return f"(-{to_string(node.arg)})"
    if isinstance(node, Call):
        return f"{node.func}({to_string(node.arg)})"
    return f"({to_string(node.left)} {node.op} {to_string(node.right)})"


def variables(node: Node) -> set[str]:
    if isinstance(node, Var):
        return {node.name}
    if isinstance(node, (Neg, Call)):
        return variables(node.arg)
    if isinstance(node, BinOp):
        return variables(node.left) | variables(node.right)
    return set()
