"""Arithmetic over numbers, strings and named variables, via a whitelisted AST walk."""

from __future__ import annotations

import ast
import operator
from typing import Mapping

from ..plugins import ToolError

_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
}
_UNARY = {ast.USub: operator.neg, ast.UAdd: operator.pos}


def evaluate(expr: str, variables: Mapping[str, object] | None = None):
    variables = variables or {}
    try:
        tree = ast.parse(expr.strip(), mode="eval")
    except SyntaxError as exc:
        raise ToolError(f"cannot parse expression {expr!r}") from exc
    return _eval(tree.body, variables)


def _eval(node, variables):
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float, str)) \
            and not isinstance(node.value, bool):
        return node.value
    if isinstance(node, ast.Name):
        try:
            return variables[node.id]
        except KeyError:
            raise ToolError(f"undefined variable {node.id!r}") from None
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        left, right = _eval(node.left, variables), _eval(node.right, variables)
        try:
            return _BINOPS[type(node.op)](left, right)
        except ZeroDivisionError:
            raise ToolError("division by zero") from None
        except TypeError as exc:
            raise ToolError(str(exc)) from None
    if isinstance(node, ast.UnaryOp) and type(node.op) in _UNARY:
        operand = _eval(node.operand, variables)
        if isinstance(operand, str):
            raise ToolError("unary operator on a string")
        return _UNARY[type(node.op)](operand)
    raise ToolError(f"unsupported syntax: {ast.dump(node)[:60]}")


def format_value(value) -> str:
    """Integral floats print without a fractional part (6/3 -> 2)."""
    if isinstance(value, float):
        if value.is_integer() and abs(value) < 1e15:
            return str(int(value))
        return repr(value)
    return str(value)
