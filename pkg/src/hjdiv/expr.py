"""Arithmetic expressions for user-defined tensor fields and Lagrangians.

Grammar (``^`` binds tighter than unary minus and is right-associative)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := ('+' | '-') unary | power
    power  := atom ('^' unary)?
    atom   := NUMBER | 'pi' | 'e' | xN | vN | FUNC '(' expr ')' | '(' expr ')'
    FUNC   := exp | log | sqrt | sin | cos | arccos

Variables ``x1..xd`` are chart coordinates and ``v1..vd`` velocity
components; indices start at 1.  Expressions compile to a Python callable
(used by the pure-Python flow) and to a flat postfix program executed by the
compiled kernel.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import EvalError, ParseError

__all__ = [
    "Expression",
    "parse_expression",
    "eval_expression",
    "Program",
    "compile_programs",
    "OPCODES",
]

FUNCTIONS = ("exp", "log", "sqrt", "sin", "cos", "arccos")
CONSTANTS = {"pi": math.pi, "e": math.e}

# postfix opcodes shared with the compiled kernel
OPCODES = {
    "const": 0,
    "var": 1,
    "+": 2,
    "-": 3,
    "*": 4,
    "/": 5,
    "^": 6,
    "neg": 7,
    "exp": 8,
    "log": 9,
    "sqrt": 10,
    "sin": 11,
    "cos": 12,
    "arccos": 13,
}


# -- syntax tree ------------------------------------------------------------


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Const:
    name: str


@dataclass(frozen=True)
class Var:
    kind: str  # "x" or "v"
    index: int  # 1-based


@dataclass(frozen=True)
class Neg:
    operand: object


@dataclass(frozen=True)
class BinOp:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class Call:
    func: str
    arg: object


def _to_source(node) -> str:
    if isinstance(node, Num):
        return repr(float(node.value))
    if isinstance(node, Const):
        return node.name
    if isinstance(node, Var):
        return f"{node.kind}{node.index}"
    if isinstance(node, Neg):
        return f"(-{_to_source(node.operand)})"
    if isinstance(node, BinOp):
        return f"({_to_source(node.left)} {node.op} {_to_source(node.right)})"
    if isinstance(node, Call):
        return f"{node.func}({_to_source(node.arg)})"
    raise TypeError(node)


# -- tokenizer / parser -----------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^(),]))"
)


def _tokenize(src: str):
    tokens = []
    pos = 0
    while pos < len(src):
        if src[pos:].strip() == "":
            break
        m = _TOKEN.match(src, pos)
        if m is None or m.end() == pos:
            start = pos + (len(src[pos:]) - len(src[pos:].lstrip()))
            raise ParseError(f"unexpected character {src[start]!r}", start)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", len(src)))
    return tokens


class _Parser:
    def __init__(self, src: str):
        self.tokens = _tokenize(src)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, text):
        kind, value, pos = self.take()
        if value != text or kind == "end":
            found = "end of input" if kind == "end" else repr(value)
            raise ParseError(f"expected {text!r}, found {found}", pos)

    def parse(self):
        node = self.expr()
        kind, value, pos = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected token {value!r}", pos)
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        kind, value, _ = self.peek()
        if kind == "op" and value in ("+", "-"):
            self.take()
            operand = self.unary()
            return Neg(operand) if value == "-" else operand
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[1] == "^" and self.peek()[0] == "op":
            self.take()
            return BinOp("^", base, self.unary())
        return base

    def atom(self):
        kind, value, pos = self.take()
        if kind == "num":
            return Num(float(value))
        if kind == "name":
            if value in CONSTANTS:
                return Const(value)
            if value in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                nkind, nvalue, npos = self.peek()
                if nvalue == ",":
                    raise ParseError(f"{value}() takes exactly one argument", npos)
                self.expect(")")
                return Call(value, arg)
            m = re.fullmatch(r"([xv])([1-9]\d*)", value)
            if m:
                return Var(m.group(1), int(m.group(2)))
            raise ParseError(f"unknown identifier {value!r}", pos)
        if kind == "op" and value == "(":
            node = self.expr()
            self.expect(")")
            return node
        found = "end of input" if kind == "end" else repr(value)
        raise ParseError(f"unexpected {found}", pos)


# -- python compilation -----------------------------------------------------


def _py_source(node, dim: int) -> str:
    if isinstance(node, Num):
        return repr(float(node.value))
    if isinstance(node, Const):
        return repr(CONSTANTS[node.name])
    if isinstance(node, Var):
        offset = 0 if node.kind == "x" else dim
        return f"z[{offset + node.index - 1}]"
    if isinstance(node, Neg):
        return f"(-{_py_source(node.operand, dim)})"
    if isinstance(node, BinOp):
        a, b = _py_source(node.left, dim), _py_source(node.right, dim)
        if node.op == "^":
            return f"_pow({a}, {b})"
        return f"({a} {node.op} {b})"
    if isinstance(node, Call):
        fn = {"arccos": "acos"}.get(node.func, node.func)
        return f"_m.{fn}({_py_source(node.arg, dim)})"
    raise TypeError(node)


def _pow(a, b):
    if b == 2.0:
        return a * a
    return math.pow(a, b)


class Expression:
    """Parsed expression over ``x1..xd`` (and ``v1..vd`` for Lagrangians).

    Instances are immutable; :meth:`to_source` gives a fully parenthesized
    string that parses back to an identical tree.
    """

    __slots__ = ("tree", "_callables")

    def __init__(self, tree):
        self.tree = tree
        self._callables = {}

    def __repr__(self):
        return f"Expression({self.to_source()!r})"

    def __eq__(self, other):
        return isinstance(other, Expression) and self.tree == other.tree

    def __hash__(self):
        return hash(self.tree)

    def to_source(self) -> str:
        return _to_source(self.tree)

    def variables(self) -> set[tuple[str, int]]:
        out = set()

        def walk(node):
            if isinstance(node, Var):
                out.add((node.kind, node.index))
            elif isinstance(node, Neg):
                walk(node.operand)
            elif isinstance(node, BinOp):
                walk(node.left)
                walk(node.right)
            elif isinstance(node, Call):
                walk(node.arg)

        walk(self.tree)
        return out

    def is_constant(self) -> bool:
        return not self.variables()

    def check_dim(self, dim: int, allow_velocity: bool = False) -> None:
        for kind, index in self.variables():
            if kind == "v" and not allow_velocity:
                raise EvalError(f"velocity variable v{index} not allowed here")
            if index > dim:
                raise EvalError(f"variable {kind}{index} exceeds dimension {dim}")

    def to_callable(self, dim: int):
        """Compile to ``f(z) -> float`` where ``z = (x1..xd, v1..vd)``."""
        fn = self._callables.get(dim)
        if fn is not None:
            return fn
        body = _py_source(self.tree, dim)
        src = (
            "def _f(z):\n"
            "    try:\n"
            f"        r = {body}\n"
            "    except (ZeroDivisionError, ValueError, OverflowError) as exc:\n"
            "        raise EvalError(str(exc)) from None\n"
            "    if r != r or r in (_inf, -_inf):\n"
            "        raise EvalError('non-finite result')\n"
            "    return r\n"
        )
        scope = {"_m": math, "_pow": _pow, "EvalError": EvalError, "_inf": math.inf}
        exec(src, scope)  # noqa: S102 - source built from a validated tree
        fn = scope["_f"]
        self._callables[dim] = fn
        return fn

    def postfix(self, dim: int) -> list[tuple[int, float]]:
        """Flatten to (opcode, argument) pairs for the stack machine."""
        out: list[tuple[int, float]] = []

        def emit(node):
            if isinstance(node, Num):
                out.append((OPCODES["const"], float(node.value)))
            elif isinstance(node, Const):
                out.append((OPCODES["const"], CONSTANTS[node.name]))
            elif isinstance(node, Var):
                offset = 0 if node.kind == "x" else dim
                out.append((OPCODES["var"], float(offset + node.index - 1)))
            elif isinstance(node, Neg):
                emit(node.operand)
                out.append((OPCODES["neg"], 0.0))
            elif isinstance(node, BinOp):
                emit(node.left)
                emit(node.right)
                out.append((OPCODES[node.op], 0.0))
            elif isinstance(node, Call):
                emit(node.arg)
                out.append((OPCODES[node.func], 0.0))

        emit(self.tree)
        return out


def parse_expression(src: str) -> Expression:
    if not isinstance(src, str):
        raise ParseError(f"expression must be a string, got {type(src).__name__}", 0)
    return Expression(_Parser(src).parse())


def eval_expression(e: Expression, x: Sequence[float], v: Sequence[float] | None = None) -> float:
    """Evaluate ``e`` at chart point ``x`` (and velocity ``v`` if it uses one)."""
    x = [float(c) for c in x]
    dim = len(x)
    if v is not None:
        v = [float(c) for c in v]
        if len(v) != dim:
            raise EvalError("x and v must have equal length")
    e.check_dim(dim, allow_velocity=v is not None)
    return e.to_callable(dim)(x + (v or []))


@dataclass(frozen=True)
class Program:
    """A batch of expressions flattened for the compiled kernel.

    ``codes``/``args`` hold every program back to back; program ``k`` spans
    ``starts[k]:starts[k+1]``.  ``constant[k]`` is 1 for programs without
    variables, whose derivatives the kernel skips.
    """

    codes: np.ndarray
    args: np.ndarray
    starts: np.ndarray
    constant: np.ndarray
    max_stack: int

    @property
    def count(self) -> int:
        return len(self.starts) - 1


def _stack_depth(ops) -> int:
    depth = best = 0
    for code, _ in ops:
        if code in (OPCODES["const"], OPCODES["var"]):
            depth += 1
        elif code in (2, 3, 4, 5, 6):
            depth -= 1
        best = max(best, depth)
    return best


def compile_programs(exprs: Sequence[Expression], dim: int) -> Program:
    codes: list[int] = []
    args: list[float] = []
    starts = [0]
    constant = []
    depth = 1
    for e in exprs:
        ops = e.postfix(dim)
        depth = max(depth, _stack_depth(ops))
        codes.extend(c for c, _ in ops)
        args.extend(a for _, a in ops)
        starts.append(len(codes))
        constant.append(1 if e.is_constant() else 0)
    return Program(
        codes=np.asarray(codes, dtype=np.int32),
        args=np.asarray(args, dtype=np.float64),
        starts=np.asarray(starts, dtype=np.int32),
        constant=np.asarray(constant, dtype=np.int32),
        max_stack=depth,
    )
