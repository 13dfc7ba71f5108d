"""Tiny arithmetic expression compiler for scenario configs.

Expressions are parsed with :mod:`ast`, checked against a whitelist, and
compiled into closures that evaluate with numpy broadcasting. Both ``^`` and
``**`` denote exponentiation. Allowed names are the chart/fiber variables
(``x1..xn``, ``y1..yn``), the constants ``pi`` and ``e``, and the functions
exp, log, sqrt, sin, cos, sinh, cosh, tanh, abs and norm(...) (Euclidean
norm of its arguments).
"""

from __future__ import annotations

import ast

import numpy as np

from .errors import ConfigInvalid

_FUNCTIONS = {
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "sin": np.sin,
    "cos": np.cos,
    "sinh": np.sinh,
    "cosh": np.cosh,
    "tanh": np.tanh,
    "abs": np.abs,
    "norm": lambda *args: np.sqrt(sum(np.asarray(a) ** 2 for a in args)),
}

_CONSTANTS = {"pi": np.pi, "e": np.e}

_BINOPS = {
    ast.Add: np.add,
    ast.Sub: np.subtract,
    ast.Mult: np.multiply,
    ast.Div: np.true_divide,
    ast.Pow: np.power,
}

_UNARYOPS = {ast.UAdd: lambda v: v, ast.USub: np.negative}


def _check(node, variables):
    if isinstance(node, ast.Expression):
        _check(node.body, variables)
    elif isinstance(node, ast.BinOp):
        if type(node.op) not in _BINOPS:
            raise ConfigInvalid(f"operator {type(node.op).__name__} not allowed")
        _check(node.left, variables)
        _check(node.right, variables)
    elif isinstance(node, ast.UnaryOp):
        if type(node.op) not in _UNARYOPS:
            raise ConfigInvalid(f"operator {type(node.op).__name__} not allowed")
        _check(node.operand, variables)
    elif isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCTIONS:
            raise ConfigInvalid("only the whitelisted functions may be called")
        if node.keywords:
            raise ConfigInvalid("keyword arguments not allowed in expressions")
        for arg in node.args:
            _check(arg, variables)
    elif isinstance(node, ast.Name):
        if node.id not in variables and node.id not in _CONSTANTS:
            raise ConfigInvalid(f"unknown variable {node.id!r}")
    elif isinstance(node, ast.Constant):
        if not isinstance(node.value, (int, float)):
            raise ConfigInvalid(f"constant {node.value!r} not allowed")
    else:
        raise ConfigInvalid(f"syntax element {type(node).__name__} not allowed")


def _evaluate(node, env):
    if isinstance(node, ast.Expression):
        return _evaluate(node.body, env)
    if isinstance(node, ast.BinOp):
        return _BINOPS[type(node.op)](_evaluate(node.left, env), _evaluate(node.right, env))
    if isinstance(node, ast.UnaryOp):
        return _UNARYOPS[type(node.op)](_evaluate(node.operand, env))
    if isinstance(node, ast.Call):
        return _FUNCTIONS[node.func.id](*[_evaluate(a, env) for a in node.args])
    if isinstance(node, ast.Name):
        return env[node.id] if node.id in env else _CONSTANTS[node.id]
    if isinstance(node, ast.Constant):
        return node.value
    raise AssertionError("unreachable: node was checked")


def compile_expression(source: str, variables: tuple[str, ...]):
    """Compile ``source`` into ``f(*arrays) -> array`` over ``variables``.

    The returned callable broadcasts its arguments and always returns an
    ndarray of the broadcast shape (scalar-valued expressions included).
    """
    try:
        # '^' means power here, not xor; rewrite before parsing so that the
        # usual power precedence applies
        tree = ast.parse(source.replace("^", "**"), mode="eval")
    except SyntaxError as exc:
        raise ConfigInvalid(f"cannot parse expression {source!r}: {exc}") from exc
    _check(tree, set(variables))

    def evaluate(*args):
        if len(args) != len(variables):
            raise ValueError(f"expression expects {len(variables)} arguments")
        arrays = [np.asarray(a, dtype=float) for a in args]
        shape = np.broadcast_shapes(*[a.shape for a in arrays]) if arrays else ()
        env = dict(zip(variables, arrays))
        out = _evaluate(tree, env)
        return np.broadcast_to(np.asarray(out, dtype=float), shape).copy() if shape else np.asarray(out, dtype=float)

    evaluate.source = source
    evaluate.variables = tuple(variables)
    return evaluate


def point_variables(dim: int) -> tuple[str, ...]:
    return tuple(f"x{i+1}" for i in range(dim))


def fiber_variables(dim: int) -> tuple[str, ...]:
    return point_variables(dim) + tuple(f"y{i+1}" for i in range(dim))
