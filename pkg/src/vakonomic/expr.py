"""Tiny arithmetic expression language for command-line systems.

Grammar: numbers, identifiers, + - * / ^ (or **), parentheses and the
functions sin, cos, exp. Expressions are parsed with the standard ``ast``
module restricted to those node types, then differentiated with sympy.
"""
from __future__ import annotations

import ast

import numpy as np
import sympy as sp

from .fields import ScalarField

FUNCTIONS = {"sin": sp.sin, "cos": sp.cos, "exp": sp.exp}


class ExpressionError(ValueError):
    def __init__(self, message, source="", position=None):
        self.source = source
        self.position = position
        text = message
        if position is not None and source:
            text = f"{message}\n  {source}\n  {' ' * position}^"
        super().__init__(text)


def _normalize(source):
    """Replace ``^`` by ``**``; return the new text and a map back to source columns."""
    out, cols = [], []
    for i, ch in enumerate(source):
        if ch == "^":
            out.append("**")
            cols.extend([i, i])
        else:
            out.append(ch)
            cols.append(i)
    cols.append(len(source))
    return "".join(out), cols


_BINOPS = {ast.Add: lambda a, b: a + b, ast.Sub: lambda a, b: a - b,
           ast.Mult: lambda a, b: a * b, ast.Div: lambda a, b: a / b,
           ast.Pow: lambda a, b: a ** b}


def parse(source: str, names, params=None) -> sp.Expr:
    """Parse ``source`` into a sympy expression over symbols ``names``.

    ``params`` maps further identifiers to numeric constants.
    """
    params = params or {}
    text, cols = _normalize(source)
    if not text.strip():
        raise ExpressionError("empty expression", source, 0)
    lead = len(text) - len(text.lstrip())
    text, cols = text[lead:], cols[lead:]
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as exc:
        # offset 0 means the input ended early
        pos = cols[min(exc.offset - 1, len(cols) - 1)] if exc.offset else len(source.rstrip())
        raise ExpressionError(f"syntax error: {exc.msg}", source, pos) from None
    symbols = {n: sp.Symbol(n, real=True) for n in names}

    def at(node):
        return cols[min(getattr(node, "col_offset", 0), len(cols) - 1)]

    def build(node):
        if isinstance(node, ast.Expression):
            return build(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
                and not isinstance(node.value, bool):
            return sp.Float(node.value) if isinstance(node.value, float) else sp.Integer(node.value)
        if isinstance(node, ast.Name):
            if node.id in symbols:
                return symbols[node.id]
            if node.id in params:
                return sp.Float(float(params[node.id]))
            raise ExpressionError(f"unknown identifier {node.id!r}", source, at(node))
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](build(node.left), build(node.right))
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            v = build(node.operand)
            return -v if isinstance(node.op, ast.USub) else v
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) \
                and node.func.id in FUNCTIONS and len(node.args) == 1 and not node.keywords:
            return FUNCTIONS[node.func.id](build(node.args[0]))
        if isinstance(node, ast.Call):
            raise ExpressionError("only sin(.), cos(.), exp(.) calls are allowed", source, at(node))
        raise ExpressionError("unsupported syntax", source, at(node))

    return build(tree)


def _lambdify(names, expr):
    syms = [sp.Symbol(n, real=True) for n in names]
    f = sp.lambdify(syms, expr, modules="numpy")
    return lambda z: f(*z)


def compile_scalar(source: str, names, params=None) -> ScalarField:
    """ScalarField of the coordinates ``names`` with symbolic gradient and Hessian."""
    expr = parse(source, names, params)
    syms = [sp.Symbol(n, real=True) for n in names]
    grad = [sp.diff(expr, s) for s in syms]
    hess = [[sp.diff(g, s) for s in syms] for g in grad]
    fv = _lambdify(names, expr)
    fg = _lambdify(names, sp.Matrix(grad))
    fh = _lambdify(names, sp.Matrix(hess))
    dim = len(names)
    return ScalarField(
        lambda z: float(fv(z)),
        lambda z: np.asarray(fg(z), dtype=float).reshape(dim),
        lambda z: np.asarray(fh(z), dtype=float).reshape(dim, dim),
    )


def compile_array(sources, names, params=None, shape=None):
    """Array-valued function of ``names`` and its Jacobian (trailing derivative axis).

    ``sources`` is a nested list of expression strings (or numbers).
    """
    arr = np.array(sources, dtype=object)
    shape = arr.shape if shape is None else shape
    flat = [parse(str(s), names, params) for s in arr.reshape(-1)]
    syms = [sp.Symbol(n, real=True) for n in names]
    jac = [[sp.diff(e, s) for s in syms] for e in flat]
    fv = _lambdify(names, sp.Matrix(flat))
    fj = _lambdify(names, sp.Matrix(jac))
    dim = len(names)
    return (lambda z: np.asarray(fv(z), dtype=float).reshape(shape),
            lambda z: np.asarray(fj(z), dtype=float).reshape(tuple(shape) + (dim,)))
