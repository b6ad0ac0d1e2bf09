"""Small vectorized expression language used by JSON model files.

Expressions are parsed with :mod:`ast`, checked against a whitelist and
compiled to numpy code, so a model file is data and never executes
arbitrary Python.

Variables are bound positionally from arrays::

    x1..xd   state coordinates        (``x[..., 0]`` ...)
    y1..yd   destination coordinates  (controlled jump cost only)
    u1..um   continuous control
    v1..vp   discrete control
    t        time

Available functions: ``min``, ``max`` (elementwise, any arity), ``abs``,
``exp``, ``log``, ``sqrt``, ``sin``, ``cos``, ``tanh``, ``sign``,
``norm(x)``/``norm(y)`` (Euclidean norm of a whole vector) and
``piecewise(cond, a, b)``. Comparisons and ``and``/``or``/``not`` produce
boolean arrays usable as ``piecewise`` conditions.
"""

from __future__ import annotations

import ast
import re
from typing import Callable

import numpy as np

__all__ = ["ExpressionError", "Expression", "compile_expression"]


class ExpressionError(ValueError):
    """Raised when an expression is malformed or uses a forbidden construct."""


def _nary(fn):
    def wrapped(*args):
        if len(args) < 2:
            raise ExpressionError("min/max need at least two arguments")
        out = args[0]
        for a in args[1:]:
            out = fn(out, a)
        return out

    return wrapped


def _norm(vec):
    return np.sqrt(np.sum(np.asarray(vec, dtype=float) ** 2, axis=-1))


_FUNCTIONS: dict[str, Callable] = {
    "min": _nary(np.minimum),
    "max": _nary(np.maximum),
    "abs": np.abs,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "sin": np.sin,
    "cos": np.cos,
    "tanh": np.tanh,
    "sign": np.sign,
    "piecewise": np.where,
}

_CONSTANTS = {"pi": np.pi, "e": np.e}

_VAR_RE = re.compile(r"^(x|y|u|v)([1-9][0-9]*)$")

_ALLOWED_NODES = (
    ast.Expression,
    ast.BinOp,
    ast.UnaryOp,
    ast.BoolOp,
    ast.Compare,
    ast.Call,
    ast.Name,
    ast.Load,
    ast.Constant,
    ast.Add,
    ast.Sub,
    ast.Mult,
    ast.Div,
    ast.Pow,
    ast.Mod,
    ast.USub,
    ast.UAdd,
    ast.Not,
    ast.And,
    ast.Or,
    ast.Lt,
    ast.LtE,
    ast.Gt,
    ast.GtE,
    ast.Eq,
    ast.NotEq,
)


class _Rewriter(ast.NodeTransformer):
    """Turns boolean operators into numpy logical calls."""

    def visit_BoolOp(self, node):
        self.generic_visit(node)
        fn = "_and" if isinstance(node.op, ast.And) else "_or"
        out = node.values[0]
        for nxt in node.values[1:]:
            out = ast.Call(func=ast.Name(id=fn, ctx=ast.Load()), args=[out, nxt], keywords=[])
        return out

    def visit_UnaryOp(self, node):
        self.generic_visit(node)
        if isinstance(node.op, ast.Not):
            return ast.Call(func=ast.Name(id="_not", ctx=ast.Load()), args=[node.operand], keywords=[])
        return node

    def visit_Compare(self, node):
        self.generic_visit(node)
        if len(node.ops) == 1:
            return node
        # chained comparison a < b < c -> (a < b) & (b < c)
        parts = []
        left = node.left
        for op, right in zip(node.ops, node.comparators):
            parts.append(ast.Compare(left=left, ops=[op], comparators=[right]))
            left = right
        out = parts[0]
        for p in parts[1:]:
            out = ast.Call(func=ast.Name(id="_and", ctx=ast.Load()), args=[out, p], keywords=[])
        return out


class Expression:
    """A compiled expression; call with keyword arrays ``x``, ``y``, ``u``, ``v``, ``t``."""

    def __init__(self, source: str):
        if not isinstance(source, (str, int, float)):
            raise ExpressionError(f"expression must be a string or number, got {type(source).__name__}")
        self.source = str(source)
        try:
            tree = ast.parse(self.source.strip(), mode="eval")
        except SyntaxError as exc:
            raise ExpressionError(f"cannot parse {self.source!r}: {exc.msg}") from None
        self.variables: set[str] = set()
        norm_args = {id(sub) for n in ast.walk(tree)
                     if isinstance(n, ast.Call) and isinstance(n.func, ast.Name) and n.func.id == "norm"
                     for a in n.args for sub in ast.walk(a)}
        for node in ast.walk(tree):
            if isinstance(node, ast.Name) and node.id in ("x", "y") and id(node) not in norm_args:
                raise ExpressionError(f"bare vector {node.id!r} is only allowed as the argument of norm() in {self.source!r}")
            if not isinstance(node, _ALLOWED_NODES):
                raise ExpressionError(f"forbidden construct {type(node).__name__} in {self.source!r}")
            if isinstance(node, ast.Call):
                if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCTIONS | {"norm": None}:
                    name = getattr(node.func, "id", "?")
                    raise ExpressionError(f"unknown function {name!r} in {self.source!r}")
                if node.keywords:
                    raise ExpressionError("keyword arguments are not supported")
            if isinstance(node, ast.Name):
                self._check_name(node, tree)
            if isinstance(node, ast.Constant) and not isinstance(node.value, (int, float)):
                raise ExpressionError(f"only numeric literals allowed in {self.source!r}")
        tree = ast.fix_missing_locations(_Rewriter().visit(tree))
        self._code = compile(tree, "<expr>", "eval")

    def _check_name(self, node: ast.Name, tree) -> None:
        name = node.id
        if name in _FUNCTIONS or name in _CONSTANTS or name == "norm":
            return
        if name == "t":
            self.variables.add("t")
            return
        if name in ("x", "y"):
            self.variables.add(name + "*")
            return
        if _VAR_RE.match(name):
            self.variables.add(name)
            return
        raise ExpressionError(f"unknown variable {name!r} in {self.source!r}")

    @property
    def uses_time(self) -> bool:
        return "t" in self.variables

    def max_index(self, letter: str) -> int:
        idx = [int(m.group(2)) for v in self.variables if (m := _VAR_RE.match(v)) and m.group(1) == letter]
        return max(idx, default=0)

    def __call__(self, *, x=None, y=None, u=None, v=None, t=0.0, shape=None):
        env: dict[str, object] = dict(_FUNCTIONS)
        env.update(_CONSTANTS)
        env["_and"] = np.logical_and
        env["_or"] = np.logical_or
        env["_not"] = np.logical_not
        env["norm"] = _norm
        env["t"] = t
        for letter, arr in (("x", x), ("y", y), ("u", u), ("v", v)):
            need = self.max_index(letter)
            if arr is None:
                if need:
                    raise ExpressionError(f"{self.source!r} uses {letter}{need} but no {letter} was given")
                continue
            arr = np.asarray(arr, dtype=float)
            if need > arr.shape[-1]:
                raise ExpressionError(f"{self.source!r} uses {letter}{need} but only {arr.shape[-1]} given")
            env[letter] = arr
            for k in range(need):
                env[f"{letter}{k + 1}"] = arr[..., k]
        out = eval(self._code, {"__builtins__": {}}, env)  # noqa: S307 - whitelisted AST
        out = np.asarray(out, dtype=float)
        if shape is not None:
            out = np.broadcast_to(out, shape).copy()
        return out

    def __repr__(self) -> str:
        return f"Expression({self.source!r})"


def compile_expression(source) -> Expression:
    return Expression(source)
