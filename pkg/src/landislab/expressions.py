"""Small arithmetic grammar for coefficient fields in experiment specs.

An expression is a Python-syntax formula in the variables ``x`` and ``y``
built from numbers, ``pi``, ``e``, the operators ``+ - * / **`` and the
functions ``exp sin cos tan sinh cosh tanh abs sqrt log``. Anything else
is rejected before evaluation.
"""
from __future__ import annotations

import ast
from typing import Callable

import numpy as np

__all__ = ["ExpressionError", "compile_expression", "field_from_spec"]

FUNCTIONS = {
    "exp": np.exp, "sin": np.sin, "cos": np.cos, "tan": np.tan,
    "sinh": np.sinh, "cosh": np.cosh, "tanh": np.tanh,
    "abs": np.abs, "sqrt": np.sqrt, "log": np.log,
}
CONSTANTS = {"pi": np.pi, "e": np.e}
VARIABLES = ("x", "y")
_BINOPS = (ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow)
_UNARY = (ast.UAdd, ast.USub)


class ExpressionError(ValueError):
    pass


def _check(node, variables):
    if isinstance(node, ast.Expression):
        return _check(node.body, variables)
    if isinstance(node, ast.BinOp) and isinstance(node.op, _BINOPS):
        _check(node.left, variables)
        _check(node.right, variables)
        return
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, _UNARY):
        return _check(node.operand, variables)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
        return
    if isinstance(node, ast.Name):
        if node.id in variables or node.id in CONSTANTS:
            return
        if node.id == "t":
            raise ExpressionError("time-dependent coefficients are not supported")
        raise ExpressionError(f"unknown name {node.id!r}")
    if isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in FUNCTIONS:
            raise ExpressionError("only exp, sin, cos, tan, sinh, cosh, tanh, abs, sqrt, log may be called")
        if len(node.args) != 1 or node.keywords:
            raise ExpressionError(f"{node.func.id} takes exactly one argument")
        return _check(node.args[0], variables)
    raise ExpressionError(f"unsupported syntax: {ast.dump(node)[:40]}")


def compile_expression(text: str, dim: int = 2) -> Callable[[np.ndarray], np.ndarray]:
    """Validate ``text`` and return ``f(points) -> values`` for ``(n, dim)`` points."""
    try:
        tree = ast.parse(str(text).strip(), mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse {text!r}: {exc.msg}") from None
    variables = VARIABLES[:dim]
    _check(tree, variables)
    code = compile(tree, "<expression>", "eval")

    def f(points):
        P = np.atleast_2d(np.asarray(points, float))
        env = dict(FUNCTIONS)
        env.update(CONSTANTS)
        for k, v in enumerate(variables):
            env[v] = P[:, k]
        with np.errstate(all="ignore"):
            out = eval(code, {"__builtins__": {}}, env)
        return np.broadcast_to(np.asarray(out, float), (len(P),)).copy()

    f.expression = str(text)
    return f


def field_from_spec(spec, dim: int = 2, vector: bool = False):
    """Turn a number, expression string or list of them into a field spec."""
    if spec is None:
        return None
    if vector:
        items = spec if isinstance(spec, (list, tuple)) else [spec] * dim
        if len(items) != dim:
            raise ExpressionError(f"vector field needs {dim} components")
        parts = [field_from_spec(s, dim) for s in items]
        if all(not callable(p) for p in parts):
            return np.array(parts, float)

        def vec(points):
            P = np.atleast_2d(points)
            return np.stack([p(P) if callable(p) else np.full(len(P), float(p)) for p in parts], axis=1)

        return vec
    if isinstance(spec, bool):
        raise ExpressionError("booleans are not fields")
    if isinstance(spec, (int, float)):
        return float(spec)
    if isinstance(spec, str):
        return compile_expression(spec, dim)
    raise ExpressionError(f"cannot interpret {spec!r} as a field")
