"""Closed-form matrix entries for custom generators.

Entries are strings in a small grammar (numbers, named parameters, the
variable ``z``, ``+ - * /``, integer powers, ``tanh``, ``sech``, ``cosh``,
``exp``).  They are parsed with sympy into expression trees, checked against
the grammar, differentiated symbolically and compiled to numpy callables.
Anything outside the grammar is rejected so that custom models stay analytic
by construction.
"""
from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np
import sympy
from sympy.parsing.sympy_parser import parse_expr, standard_transformations

from .errors import ConfigError

log = logging.getLogger(__name__)

Z = sympy.Symbol("z")

_ALLOWED_CHARS = re.compile(r"^[0-9A-Za-z_+\-*/(). eE]*$")
_NAME = re.compile(r"[A-Za-z_][A-Za-z_0-9]*")
_NUMBER = re.compile(r"(?<![A-Za-z_])(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?")
_FUNCTIONS = {"tanh", "sech", "cosh", "exp"}
_RESERVED = _FUNCTIONS | {"z", "I", "pi"}


def _sech(x):
    return 1 / sympy.cosh(x)


def _check_tree(expr: sympy.Expr, text: str, field: str) -> None:
    for node in sympy.preorder_traversal(expr):
        if isinstance(node, (sympy.Symbol, sympy.Number, sympy.Add, sympy.Mul)):
            continue
        if node in (sympy.I, sympy.pi, sympy.E):
            continue
        if isinstance(node, sympy.Pow):
            if not node.exp.is_Integer and node.base is not sympy.E:
                raise ConfigError(f"non-integer power in '{text}'", field=field)
            continue
        if isinstance(node, (sympy.tanh, sympy.cosh, sympy.exp)):
            continue
        raise ConfigError(f"'{type(node).__name__}' is outside the model grammar in '{text}'", field=field)


def parse_entry(text, params: Mapping[str, float], field: str = "model.entries") -> sympy.Expr:
    """Parse one matrix entry, substituting the named parameters."""
    if isinstance(text, (int, float)) and not isinstance(text, bool):
        return sympy.Integer(int(text)) if float(text).is_integer() else sympy.Float(text)
    if not isinstance(text, str) or not text.strip():
        raise ConfigError("matrix entry must be a number or a non-empty expression", field=field)
    if not _ALLOWED_CHARS.match(text):
        raise ConfigError(f"illegal character in '{text}'", field=field)

    clash = _RESERVED.intersection(params)
    if clash:
        raise ConfigError(f"parameter names {sorted(clash)} are reserved", field="model.params")
    symbols = {name: sympy.Symbol(name) for name in params}
    for name in _NAME.findall(_NUMBER.sub(" ", text)):
        if name not in _RESERVED and name not in symbols:
            raise ConfigError(f"unknown name '{name}' in '{text}'", field=field)

    local = {"z": Z, "tanh": sympy.tanh, "cosh": sympy.cosh, "exp": sympy.exp, "sech": _sech, **symbols}
    global_ns = {
        "Integer": sympy.Integer, "Float": sympy.Float, "Rational": sympy.Rational,
        "Symbol": sympy.Symbol, "I": sympy.I, "pi": sympy.pi, "__builtins__": {},
    }
    try:
        expr = parse_expr(text, local_dict=local, global_dict=global_ns,
                          transformations=standard_transformations, evaluate=True)
    except (SyntaxError, TypeError, NameError, sympy.SympifyError) as exc:
        raise ConfigError(f"cannot parse '{text}': {exc}", field=field) from exc

    expr = expr.subs({symbols[k]: sympy.Float(v) for k, v in params.items()})
    _check_tree(expr, text, field)
    stray = expr.free_symbols - {Z}
    if stray:
        raise ConfigError(f"unbound symbols {sorted(map(str, stray))} in '{text}'", field=field)
    return expr


@dataclass(frozen=True, eq=False)
class MatrixExpression:
    """A square matrix of parsed entries with its symbolic z-derivative."""

    entries: sympy.Matrix
    derivative: sympy.Matrix
    _value: Callable
    _deriv: Callable

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def __call__(self, z) -> np.ndarray:
        return np.array(self._value(complex(z)), dtype=complex).reshape(self.dim, self.dim)

    def deriv(self, z) -> np.ndarray:
        return np.array(self._deriv(complex(z)), dtype=complex).reshape(self.dim, self.dim)

    def is_real_on_real_axis(self) -> bool:
        # parameters are real and every grammar function maps reals to reals
        return not any(e.has(sympy.I) for e in self.entries)


def compile_matrix(rows: Sequence[Sequence], params: Mapping[str, float],
                   field: str = "model.entries") -> MatrixExpression:
    if not rows or any(not isinstance(r, (list, tuple)) for r in rows):
        raise ConfigError("matrix must be a list of rows", field=field)
    n = len(rows)
    if any(len(r) != n for r in rows):
        raise ConfigError(f"matrix must be square, got {n} rows of lengths {[len(r) for r in rows]}", field=field)
    parsed = [[parse_entry(e, params, f"{field}[{i}][{k}]") for k, e in enumerate(r)] for i, r in enumerate(rows)]
    M = sympy.Matrix(parsed)
    dM = M.diff(Z)
    log.debug("compiled %dx%d expression matrix", n, n)
    return MatrixExpression(
        entries=M,
        derivative=dM,
        _value=sympy.lambdify(Z, M, "numpy"),
        _deriv=sympy.lambdify(Z, dM, "numpy"),
    )


__all__ = ["MatrixExpression", "compile_matrix", "parse_entry", "Z"]
