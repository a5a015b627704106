"""Symbolic expression trees with point, interval, and derivative evaluation.

The grammar accepted by :func:`parse_expr`::

    expr   := term (('+'|'-') term)*
    term   := factor (('*'|'/') factor)*
    factor := atom ['^' INT]
    atom   := NUMBER | IDENT | 'tanh' '(' expr ')' | '(' expr ')' | '-' atom

Expressions are immutable after construction and safe to evaluate from
multiple workers concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence


class ExprError(ValueError):
    """Base error for expression construction and evaluation."""


class ParseError(ExprError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset


class EvalError(ExprError):
    """Raised for undefined point evaluations (division by zero)."""


class IntervalError(ExprError):
    """Raised when an interval operation is undefined (division by an
    interval containing zero)."""


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if not (self.lo <= self.hi):
            raise ExprError(f"empty interval [{self.lo}, {self.hi}]")

    @staticmethod
    def point(v: float) -> "Interval":
        return Interval(v, v)

    def contains(self, v: float, slack: float = 0.0) -> bool:
        return self.lo - slack <= v <= self.hi + slack

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def mid(self) -> float:
        return 0.5 * (self.lo + self.hi)

    @property
    def magmax(self) -> float:
        return max(abs(self.lo), abs(self.hi))

    def __neg__(self) -> "Interval":
        return Interval(-self.hi, -self.lo)

    def __add__(self, other: "Interval") -> "Interval":
        return Interval(self.lo + other.lo, self.hi + other.hi)

    def __sub__(self, other: "Interval") -> "Interval":
        return Interval(self.lo - other.hi, self.hi - other.lo)

    def __mul__(self, other: "Interval") -> "Interval":
        p = (self.lo * other.lo, self.lo * other.hi,
             self.hi * other.lo, self.hi * other.hi)
        return Interval(min(p), max(p))

    def __truediv__(self, other: "Interval") -> "Interval":
        if other.lo <= 0.0 <= other.hi:
            raise IntervalError(
                f"division by interval [{other.lo}, {other.hi}] containing 0")
        p = (self.lo / other.lo, self.lo / other.hi,
             self.hi / other.lo, self.hi / other.hi)
        return Interval(min(p), max(p))

    def pow_int(self, k: int) -> "Interval":
        """Sharp k-th power for integer k >= 1 (even powers are not
        evaluated as repeated multiplication)."""
        if k == 1:
            return self
        if k % 2 == 1:
            return Interval(self.lo ** k, self.hi ** k)
        hi = max(abs(self.lo), abs(self.hi)) ** k
        lo = 0.0 if self.lo <= 0.0 <= self.hi else min(abs(self.lo), abs(self.hi)) ** k
        return Interval(lo, hi)

    def tanh(self) -> "Interval":
        return Interval(math.tanh(self.lo), math.tanh(self.hi))


@dataclass(frozen=True)
class BoxRegion:
    """Axis-aligned box, one interval per state dimension."""

    intervals: tuple

    def __post_init__(self):
        if len(self.intervals) == 0:
            raise ExprError("box must have at least one dimension")

    @staticmethod
    def from_bounds(los: Sequence[float], his: Sequence[float]) -> "BoxRegion":
        return BoxRegion(tuple(Interval(float(l), float(h))
                               for l, h in zip(los, his)))

    @property
    def dim(self) -> int:
        return len(self.intervals)

    def midpoint(self) -> list:
        return [iv.mid for iv in self.intervals]

    def contains(self, x: Sequence[float]) -> bool:
        return all(iv.contains(v) for iv, v in zip(self.intervals, x))


# IR node kinds
_CONST = "const"
_VAR = "var"
_NEG = "neg"
_ADD = "add"
_SUB = "sub"
_MUL = "mul"
_DIV = "div"
_POW = "pow"
_TANH = "tanh"


@dataclass(frozen=True)
class ExprNode:
    op: str
    args: tuple = ()
    value: float = 0.0
    index: int = 0
    exponent: int = 1

    # -- constructors with constant folding -------------------------------

    @staticmethod
    def const(v: float) -> "ExprNode":
        return ExprNode(_CONST, value=float(v))

    @staticmethod
    def var(i: int) -> "ExprNode":
        if i < 0:
            raise ExprError("variable index must be nonnegative")
        return ExprNode(_VAR, index=i)

    @staticmethod
    def neg(a: "ExprNode") -> "ExprNode":
        if a.op == _CONST:
            return ExprNode.const(-a.value)
        return ExprNode(_NEG, (a,))

    @staticmethod
    def add(a: "ExprNode", b: "ExprNode") -> "ExprNode":
        if a.op == _CONST and b.op == _CONST:
            return ExprNode.const(a.value + b.value)
        if a.op == _CONST and a.value == 0.0:
            return b
        if b.op == _CONST and b.value == 0.0:
            return a
        return ExprNode(_ADD, (a, b))

    @staticmethod
    def sub(a: "ExprNode", b: "ExprNode") -> "ExprNode":
        if a.op == _CONST and b.op == _CONST:
            return ExprNode.const(a.value - b.value)
        if b.op == _CONST and b.value == 0.0:
            return a
        if a.op == _CONST and a.value == 0.0:
            return ExprNode.neg(b)
        return ExprNode(_SUB, (a, b))

    @staticmethod
    def mul(a: "ExprNode", b: "ExprNode") -> "ExprNode":
        if a.op == _CONST and b.op == _CONST:
            return ExprNode.const(a.value * b.value)
        for c, other in ((a, b), (b, a)):
            if c.op == _CONST:
                if c.value == 0.0:
                    return ExprNode.const(0.0)
                if c.value == 1.0:
                    return other
        return ExprNode(_MUL, (a, b))

    @staticmethod
    def div(a: "ExprNode", b: "ExprNode") -> "ExprNode":
        if b.op == _CONST:
            if b.value == 0.0:
                raise EvalError("division by constant zero")
            if a.op == _CONST:
                return ExprNode.const(a.value / b.value)
            if b.value == 1.0:
                return a
        return ExprNode(_DIV, (a, b))

    @staticmethod
    def pow(a: "ExprNode", k: int) -> "ExprNode":
        if not isinstance(k, int) or k < 1:
            raise ExprError(f"power exponent must be a positive integer, got {k!r}")
        if k == 1:
            return a
        if a.op == _CONST:
            return ExprNode.const(a.value ** k)
        return ExprNode(_POW, (a,), exponent=k)

    @staticmethod
    def tanh_of(a: "ExprNode") -> "ExprNode":
        if a.op == _CONST:
            return ExprNode.const(math.tanh(a.value))
        return ExprNode(_TANH, (a,))

    # -- evaluation -------------------------------------------------------

    def eval(self, x: Sequence[float]) -> float:
        op = self.op
        if op == _CONST:
            return self.value
        if op == _VAR:
            return float(x[self.index])
        if op == _NEG:
            return -self.args[0].eval(x)
        if op == _ADD:
            return self.args[0].eval(x) + self.args[1].eval(x)
        if op == _SUB:
            return self.args[0].eval(x) - self.args[1].eval(x)
        if op == _MUL:
            return self.args[0].eval(x) * self.args[1].eval(x)
        if op == _DIV:
            d = self.args[1].eval(x)
            if d == 0.0:
                raise EvalError("division by zero at evaluation point")
            return self.args[0].eval(x) / d
        if op == _POW:
            return self.args[0].eval(x) ** self.exponent
        if op == _TANH:
            return math.tanh(self.args[0].eval(x))
        raise ExprError(f"unknown op {op!r}")

    def eval_batch(self, X) -> "np.ndarray":
        """Vectorized evaluation over rows of X (shape (N, n))."""
        import numpy as np
        op = self.op
        if op == _CONST:
            return np.full(X.shape[0], self.value)
        if op == _VAR:
            return np.asarray(X[:, self.index], dtype=float)
        if op == _NEG:
            return -self.args[0].eval_batch(X)
        if op == _ADD:
            return self.args[0].eval_batch(X) + self.args[1].eval_batch(X)
        if op == _SUB:
            return self.args[0].eval_batch(X) - self.args[1].eval_batch(X)
        if op == _MUL:
            return self.args[0].eval_batch(X) * self.args[1].eval_batch(X)
        if op == _DIV:
            d = self.args[1].eval_batch(X)
            if np.any(d == 0.0):
                raise EvalError("division by zero at evaluation point")
            return self.args[0].eval_batch(X) / d
        if op == _POW:
            return self.args[0].eval_batch(X) ** self.exponent
        if op == _TANH:
            return np.tanh(self.args[0].eval_batch(X))
        raise ExprError(f"unknown op {op!r}")

    def eval_interval(self, box: BoxRegion) -> Interval:
        op = self.op
        if op == _CONST:
            return Interval.point(self.value)
        if op == _VAR:
            return box.intervals[self.index]
        if op == _NEG:
            return -self.args[0].eval_interval(box)
        if op == _ADD:
            return self.args[0].eval_interval(box) + self.args[1].eval_interval(box)
        if op == _SUB:
            return self.args[0].eval_interval(box) - self.args[1].eval_interval(box)
        if op == _MUL:
            return self.args[0].eval_interval(box) * self.args[1].eval_interval(box)
        if op == _DIV:
            return self.args[0].eval_interval(box) / self.args[1].eval_interval(box)
        if op == _POW:
            return self.args[0].eval_interval(box).pow_int(self.exponent)
        if op == _TANH:
            return self.args[0].eval_interval(box).tanh()
        raise ExprError(f"unknown op {op!r}")

    def max_var_index(self) -> int:
        if self.op == _VAR:
            return self.index
        if not self.args:
            return -1
        return max(a.max_var_index() for a in self.args)

    # -- differentiation --------------------------------------------------

    def diff(self, wrt: int) -> "ExprNode":
        op = self.op
        if op == _CONST:
            return ExprNode.const(0.0)
        if op == _VAR:
            return ExprNode.const(1.0 if self.index == wrt else 0.0)
        if op == _NEG:
            return ExprNode.neg(self.args[0].diff(wrt))
        if op == _ADD:
            return ExprNode.add(self.args[0].diff(wrt), self.args[1].diff(wrt))
        if op == _SUB:
            return ExprNode.sub(self.args[0].diff(wrt), self.args[1].diff(wrt))
        if op == _MUL:
            a, b = self.args
            return ExprNode.add(ExprNode.mul(a.diff(wrt), b),
                                ExprNode.mul(a, b.diff(wrt)))
        if op == _DIV:
            a, b = self.args
            num = ExprNode.sub(ExprNode.mul(a.diff(wrt), b),
                               ExprNode.mul(a, b.diff(wrt)))
            return ExprNode.div(num, ExprNode.pow(b, 2))
        if op == _POW:
            a = self.args[0]
            k = self.exponent
            return ExprNode.mul(
                ExprNode.mul(ExprNode.const(float(k)), ExprNode.pow(a, k - 1)),
                a.diff(wrt))
        if op == _TANH:
            a = self.args[0]
            # d tanh(u) = (1 - tanh(u)^2) u'
            return ExprNode.mul(
                ExprNode.sub(ExprNode.const(1.0),
                             ExprNode.pow(ExprNode.tanh_of(a), 2)),
                a.diff(wrt))
        raise ExprError(f"unknown op {op!r}")

    # -- printing ---------------------------------------------------------

    def pretty(self, names: Sequence[str] | None = None) -> str:
        def name(i):
            return names[i] if names is not None else f"x{i + 1}"

        def go(e, parent_prec):
            op = e.op
            if op == _CONST:
                s = repr(e.value)
                return f"({s})" if e.value < 0 and parent_prec > 0 else s
            if op == _VAR:
                return name(e.index)
            if op == _NEG:
                s = "-" + go(e.args[0], 3)
                return f"({s})" if parent_prec > 1 else s
            if op in (_ADD, _SUB):
                sep = " + " if op == _ADD else " - "
                s = go(e.args[0], 1) + sep + go(e.args[1], 2)
                return f"({s})" if parent_prec > 1 else s
            if op in (_MUL, _DIV):
                sep = "*" if op == _MUL else "/"
                s = go(e.args[0], 2) + sep + go(e.args[1], 3)
                return f"({s})" if parent_prec > 2 else s
            if op == _POW:
                s = go(e.args[0], 4) + f"^{e.exponent}"
                return f"({s})" if parent_prec > 3 else s
            if op == _TANH:
                return f"tanh({go(e.args[0], 0)})"
            raise ExprError(f"unknown op {op!r}")

        return go(self, 0)

    def __str__(self) -> str:
        return self.pretty()


# -- parser ---------------------------------------------------------------

class _Parser:
    def __init__(self, text: str, state_names: Sequence[str]):
        self.text = text
        self.pos = 0
        self.names = {name: i for i, name in enumerate(state_names)}

    def error(self, message: str):
        raise ParseError(message, self.pos)

    def skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def peek(self) -> str:
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def parse(self) -> ExprNode:
        e = self.expr()
        self.skip_ws()
        if self.pos != len(self.text):
            self.error(f"unexpected character {self.peek()!r}")
        return e

    def expr(self) -> ExprNode:
        e = self.term()
        while True:
            self.skip_ws()
            c = self.peek()
            if c == "+":
                self.pos += 1
                e = ExprNode.add(e, self.term())
            elif c == "-":
                self.pos += 1
                e = ExprNode.sub(e, self.term())
            else:
                return e

    def term(self) -> ExprNode:
        e = self.factor()
        while True:
            self.skip_ws()
            c = self.peek()
            if c == "*":
                self.pos += 1
                e = ExprNode.mul(e, self.factor())
            elif c == "/":
                self.pos += 1
                e = ExprNode.div(e, self.factor())
            else:
                return e

    def factor(self) -> ExprNode:
        # unary minus binds looser than '^': -x^2 means -(x^2)
        self.skip_ws()
        if self.peek() == "-":
            self.pos += 1
            return ExprNode.neg(self.factor())
        e = self.atom()
        self.skip_ws()
        if self.peek() == "^":
            self.pos += 1
            self.skip_ws()
            k = self.integer()
            try:
                e = ExprNode.pow(e, k)
            except ExprError:
                self.error(f"power exponent must be a positive integer, got {k}")
        return e

    def integer(self) -> int:
        start = self.pos
        if self.peek() == "-":
            self.error("power exponent must be a positive integer")
        while self.peek().isdigit():
            self.pos += 1
        if self.pos == start:
            if self.peek() == "." or self.peek().isdigit():
                self.error("power exponent must be a positive integer")
            self.error("expected integer exponent")
        if self.peek() == ".":
            self.error("power exponent must be a positive integer")
        return int(self.text[start:self.pos])

    def atom(self) -> ExprNode:
        self.skip_ws()
        c = self.peek()
        if c == "":
            self.error("unexpected end of input")
        if c == "(":
            self.pos += 1
            e = self.expr()
            self.skip_ws()
            if self.peek() != ")":
                self.error("expected ')'")
            self.pos += 1
            return e
        if c.isdigit() or c == ".":
            return self.number()
        if c.isalpha() or c == "_":
            return self.ident()
        self.error(f"unexpected character {c!r}")

    def number(self) -> ExprNode:
        start = self.pos
        while self.peek().isdigit():
            self.pos += 1
        if self.peek() == ".":
            self.pos += 1
            while self.peek().isdigit():
                self.pos += 1
        if self.peek() in ("e", "E"):
            save = self.pos
            self.pos += 1
            if self.peek() in ("+", "-"):
                self.pos += 1
            if self.peek().isdigit():
                while self.peek().isdigit():
                    self.pos += 1
            else:
                self.pos = save
        try:
            return ExprNode.const(float(self.text[start:self.pos]))
        except ValueError:
            self.pos = start
            self.error("malformed number")

    def ident(self) -> ExprNode:
        start = self.pos
        while self.peek().isalnum() or self.peek() == "_":
            self.pos += 1
        word = self.text[start:self.pos]
        if word == "tanh":
            self.skip_ws()
            if self.peek() != "(":
                self.pos = start
                self.error("expected '(' after tanh")
            self.pos += 1
            e = self.expr()
            self.skip_ws()
            if self.peek() != ")":
                self.error("expected ')'")
            self.pos += 1
            return ExprNode.tanh_of(e)
        if word in self.names:
            return ExprNode.var(self.names[word])
        self.pos = start
        self.error(f"unknown identifier {word!r}")


def parse_expr(text: str, state_names: Sequence[str]) -> ExprNode:
    """Parse infix arithmetic over the declared state names into an IR tree."""
    return _Parser(text, state_names).parse()
