"""A small arithmetic expression language for user dynamics.

Expressions use Python syntax restricted to numbers, the variables passed
in, the constants ``pi`` and ``e``, the operators ``+ - * / ** ^`` (``^`` is
power) and the functions below.  They are validated against a whitelist of
syntax nodes and compiled once, so evaluation is as fast as plain Python.

>>> fn = compile_vector(["-x1 + x2", "2*x1^2"], ["x1", "x2"])
>>> fn(1.0, 3.0)
array([2., 2.])
"""

from __future__ import annotations

import ast
import io
import math
import tokenize

import numpy as np

FUNCTIONS = {
    "sin": math.sin, "cos": math.cos, "tan": math.tan, "tanh": math.tanh,
    "exp": math.exp, "log": math.log, "sqrt": math.sqrt, "abs": abs,
    "atan": math.atan, "sinh": math.sinh, "cosh": math.cosh,
}
NP_FUNCTIONS = {
    "sin": np.sin, "cos": np.cos, "tan": np.tan, "tanh": np.tanh,
    "exp": np.exp, "log": np.log, "sqrt": np.sqrt, "abs": np.abs,
    "atan": np.arctan, "sinh": np.sinh, "cosh": np.cosh,
}
CONSTANTS = {"pi": math.pi, "e": math.e}

_BINOPS = (ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow)
_UNARY = (ast.UAdd, ast.USub)


class ExpressionError(ValueError):
    pass


def _caret_to_pow(text):
    # done on tokens so that ^ gets the precedence of ** rather than xor
    toks = tokenize.generate_tokens(io.StringIO(text).readline)
    out = [(tt, "**" if (tt == tokenize.OP and ts == "^") else ts) for tt, ts, *_ in toks]
    return tokenize.untokenize(out)


def _validate(node, names, text):
    for sub in ast.walk(node):
        if isinstance(sub, (ast.Expression, ast.Load)):
            continue
        if isinstance(sub, ast.BinOp):
            if not isinstance(sub.op, _BINOPS):
                raise ExpressionError(f"operator {type(sub.op).__name__} not allowed in {text!r}")
        elif isinstance(sub, ast.UnaryOp):
            if not isinstance(sub.op, _UNARY):
                raise ExpressionError(f"operator {type(sub.op).__name__} not allowed in {text!r}")
        elif isinstance(sub, ast.Call):
            if not isinstance(sub.func, ast.Name) or sub.func.id not in FUNCTIONS:
                raise ExpressionError(f"unknown function in {text!r}")
            if sub.keywords or len(sub.args) != 1:
                raise ExpressionError(f"functions take exactly one argument in {text!r}")
        elif isinstance(sub, ast.Name):
            if sub.id not in names and sub.id not in CONSTANTS and sub.id not in FUNCTIONS:
                raise ExpressionError(f"unknown variable {sub.id!r} in {text!r}")
        elif isinstance(sub, ast.Constant):
            if isinstance(sub.value, bool) or not isinstance(sub.value, (int, float)):
                raise ExpressionError(f"only numeric constants are allowed in {text!r}")
        elif isinstance(sub, _BINOPS + _UNARY):
            continue
        else:
            raise ExpressionError(f"{type(sub).__name__} is not allowed in {text!r}")


def parse_expr(text: str, names) -> ast.expr:
    if not isinstance(text, (str, int, float)) or isinstance(text, bool):
        raise ExpressionError(f"expression must be a string or number, got {text!r}")
    text = str(text)
    try:
        tree = ast.parse(_caret_to_pow(text.strip()), mode="eval")
    except (SyntaxError, tokenize.TokenError) as exc:
        raise ExpressionError(f"cannot parse {text!r}: {exc}") from None
    _validate(tree, set(names), text)
    return tree.body


def _compile(body: ast.expr, names, label, funcs=FUNCTIONS):
    args = ast.arguments(posonlyargs=[], args=[ast.arg(arg=n) for n in names],
                         kwonlyargs=[], kw_defaults=[], defaults=[])
    fn = ast.Lambda(args=args, body=body)
    mod = ast.fix_missing_locations(ast.Expression(fn))
    env = {"__builtins__": {}, **funcs, **CONSTANTS}
    return eval(compile(mod, f"<{label}>", "eval"), env)


def compile_scalar(text, names):
    """Compile one expression into ``fn(*values) -> float``."""
    names = list(names)
    return _compile(parse_expr(text, names), names, text)


def compile_vector(texts, names):
    """Compile a list of expressions into ``fn(*values) -> ndarray``."""
    names = list(names)
    bodies = [parse_expr(t, names) for t in texts]
    scalar = _compile(ast.Tuple(elts=bodies, ctx=ast.Load()), names, "vector")

    def fn(*values):
        try:
            return np.array(scalar(*values), dtype=float)
        except (ValueError, ZeroDivisionError, OverflowError) as exc:
            raise ExpressionError(f"evaluation failed: {exc}") from None

    fn.size = len(bodies)
    return fn


def compile_batch(texts, names):
    """Like ``compile_vector`` but evaluated on arrays: ``fn(X)`` maps an
    ``(N, len(names))`` array to ``(N, len(texts))``."""
    names = list(names)
    bodies = [parse_expr(t, names) for t in texts]
    vec = _compile(ast.Tuple(elts=bodies, ctx=ast.Load()), names, "batch", NP_FUNCTIONS)

    def fn(X):
        X = np.asarray(X, dtype=float)
        with np.errstate(divide="raise", over="raise", invalid="raise", under="ignore"):
            try:
                cols = vec(*X.T)
            except FloatingPointError as exc:
                raise ExpressionError(f"evaluation failed: {exc}") from None
        return np.stack([np.broadcast_to(np.asarray(c, dtype=float), X.shape[:1]) for c in cols],
                        axis=-1)

    return fn


def compile_matrix(rows, names):
    """Compile a nested list ``rows[i][j]`` into ``fn(*values) -> ndarray``
    of shape ``(len(rows), len(rows[0]))``."""
    rows = [list(r) if isinstance(r, (list, tuple)) else [r] for r in rows]
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise ExpressionError("matrix rows must all have the same length")
    flat = compile_vector([e for r in rows for e in r], names)
    shape = (len(rows), width)
    return lambda *values: flat(*values).reshape(shape)
