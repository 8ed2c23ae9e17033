"""Deterministic interval maps T: [0,1] -> [0,1].

Built-in map families plus a small expression DSL. Grammar:

    expr   := term (('+'|'-') term)*
    term   := factor (('*'|'/') factor)*
    factor := unary ('^' factor)?
    unary  := ('-')? atom
    atom   := number | 'x' | identifier | identifier '(' expr (',' expr)* ')'
            | '(' expr ')'

Known functions: sin, cos, exp, abs, sqrt, mod(a, b), min, max.
Any other bare identifier is a named parameter that must be bound via
``MapSpec.params`` before evaluation. Parse error positions are 1-based
byte offsets into the source string.
"""

import re
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DomainError,
    MapSyntaxError,
    UnboundParameterError,
    UnknownIdentifierError,
)

__all__ = [
    "MapSpec",
    "ValidationReport",
    "parse_map",
    "make_map",
    "eval_map",
    "validate_map",
    "eval_map_derivative",
    "nonsmooth_points",
    "BUILTIN_MAPS",
]

# Slack for floating-point roundoff at the interval boundary.
_RANGE_TOL = 1e-12


# ---------------------------------------------------------------------------
# Expression trees


@dataclass(frozen=True)
class Num:
    value: float

    def __str__(self):
        return repr(self.value)


@dataclass(frozen=True)
class Var:
    def __str__(self):
        return "x"


@dataclass(frozen=True)
class Param:
    name: str

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class Neg:
    operand: "Node"

    def __str__(self):
        return f"(-{self.operand})"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"

    def __str__(self):
        return f"({self.left}{self.op}{self.right})"


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple

    def __str__(self):
        return f"{self.func}({','.join(str(a) for a in self.args)})"


Node = Num | Var | Param | Neg | BinOp | Call

# name -> (min arity, max arity or None for unbounded)
_FUNCTIONS = {
    "sin": (1, 1),
    "cos": (1, 1),
    "exp": (1, 1),
    "abs": (1, 1),
    "sqrt": (1, 1),
    "mod": (2, 2),
    "min": (2, None),
    "max": (2, None),
}

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<number>\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?"
    r"|\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^(),]))"
)


def _tokenize(text):
    """Yield (kind, value, position) with 1-based positions; ends with EOF."""
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            # skip over whitespace-only tail
            if text[pos:].strip() == "":
                break
            bad = pos + len(text[pos:]) - len(text[pos:].lstrip())
            raise MapSyntaxError(f"unexpected character {text[bad]!r}", bad + 1)
        if m.group("number") is not None:
            tokens.append(("number", m.group("number"), m.start("number") + 1))
        elif m.group("ident") is not None:
            tokens.append(("ident", m.group("ident"), m.start("ident") + 1))
        else:
            tokens.append(("op", m.group("op"), m.start("op") + 1))
        pos = m.end()
    tokens.append(("eof", "", len(text) + 1))
    return tokens


class _Parser:
    def __init__(self, text):
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, symbol):
        kind, value, pos = self.peek()
        if kind == "op" and value == symbol:
            return self.advance()
        raise MapSyntaxError(f"expected '{symbol}'", pos)

    def parse(self):
        node = self.expr()
        kind, value, pos = self.peek()
        if kind != "eof":
            raise MapSyntaxError(f"unexpected trailing input {value!r}", pos)
        return node

    def expr(self):
        node = self.term()
        while True:
            kind, value, _ = self.peek()
            if kind == "op" and value in "+-":
                self.advance()
                node = BinOp(value, node, self.term())
            else:
                return node

    def term(self):
        node = self.factor()
        while True:
            kind, value, _ = self.peek()
            if kind == "op" and value in "*/":
                self.advance()
                node = BinOp(value, node, self.factor())
            else:
                return node

    def factor(self):
        node = self.unary()
        kind, value, _ = self.peek()
        if kind == "op" and value == "^":
            self.advance()
            node = BinOp("^", node, self.factor())
        return node

    def unary(self):
        kind, value, _ = self.peek()
        if kind == "op" and value == "-":
            self.advance()
            return Neg(self.atom())
        return self.atom()

    def atom(self):
        kind, value, pos = self.advance()
        if kind == "op" and value == "(":
            node = self.expr()
            self.expect_op(")")
            return node
        if kind == "number":
            return Num(float(value))
        if kind == "ident":
            nxt_kind, nxt_value, _ = self.peek()
            if nxt_kind == "op" and nxt_value == "(":
                if value not in _FUNCTIONS:
                    raise UnknownIdentifierError(value, pos)
                self.advance()
                args = [self.expr()]
                while True:
                    k, v, _ = self.peek()
                    if k == "op" and v == ",":
                        self.advance()
                        args.append(self.expr())
                    else:
                        break
                self.expect_op(")")
                lo, hi = _FUNCTIONS[value]
                if len(args) < lo or (hi is not None and len(args) > hi):
                    raise MapSyntaxError(
                        f"function '{value}' takes "
                        f"{lo if hi == lo else f'{lo}+'} argument(s), "
                        f"got {len(args)}",
                        pos,
                    )
                return Call(value, tuple(args))
            if value == "x":
                return Var()
            return Param(value)
        raise MapSyntaxError(
            "expected a number, identifier, or '('" if kind == "eof"
            else f"unexpected token {value!r}",
            pos,
        )


def _eval_node(node, x, params):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        return x
    if isinstance(node, Param):
        if node.name not in params:
            raise UnboundParameterError(node.name)
        return params[node.name]
    if isinstance(node, Neg):
        return -_eval_node(node.operand, x, params)
    if isinstance(node, BinOp):
        a = _eval_node(node.left, x, params)
        b = _eval_node(node.right, x, params)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        if node.op == "/":
            return np.divide(a, b)
        return np.power(a, b)
    args = [_eval_node(a, x, params) for a in node.args]
    if node.func == "sin":
        return np.sin(args[0])
    if node.func == "cos":
        return np.cos(args[0])
    if node.func == "exp":
        return np.exp(args[0])
    if node.func == "abs":
        return np.abs(args[0])
    if node.func == "sqrt":
        return np.sqrt(args[0])
    if node.func == "mod":
        return np.mod(args[0], args[1])
    if node.func == "min":
        out = args[0]
        for a in args[1:]:
            out = np.minimum(out, a)
        return out
    out = args[0]
    for a in args[1:]:
        out = np.maximum(out, a)
    return out


# ---------------------------------------------------------------------------
# Map specifications


_BUILTIN_DEFAULTS = {
    "logistic": {"lam": 4.0},
    "doubling": {},
    "tent": {},
    "rotation": {"alpha": 0.3},
    "identity": {},
    "piecewise-const": {"left": 0.25, "right": 0.75, "threshold": 0.5},
}

BUILTIN_MAPS = tuple(_BUILTIN_DEFAULTS)


@dataclass(frozen=True)
class MapSpec:
    """A deterministic transition rule on [0, 1].

    ``kind`` is a built-in family name or ``"expression"``; expressions carry
    their parsed tree. Instances are immutable and safe to share across
    threads.
    """

    kind: str
    tree: Node | None = None
    params: dict = field(default_factory=dict)
    clamp: bool = False

    def __post_init__(self):
        if self.kind != "expression" and self.kind not in _BUILTIN_DEFAULTS:
            raise ValueError(f"unknown builtin map '{self.kind}'")
        if self.kind == "expression" and self.tree is None:
            raise ValueError("expression maps need a parsed tree")
        merged = dict(_BUILTIN_DEFAULTS.get(self.kind, {}))
        merged.update(self.params)
        for name, value in merged.items():
            value = float(value)
            if not np.isfinite(value):
                raise ValueError(f"parameter '{name}' must be finite")
            merged[name] = value
        object.__setattr__(self, "params", merged)

    def describe(self):
        if self.kind == "expression":
            return pretty(self.tree)
        if self.params:
            inner = ",".join(f"{k}={v:g}" for k, v in sorted(self.params.items()))
            return f"{self.kind}({inner})"
        return self.kind


def pretty(tree):
    """Canonical fully-parenthesized DSL form; reparses to the same tree."""
    return str(tree)


def parse_map(text, params=None, clamp=False):
    """Parse a DSL expression into a MapSpec.

    Raises MapSyntaxError / UnknownIdentifierError with 1-based positions.
    """
    if not text or not text.strip():
        raise MapSyntaxError("empty expression", 1)
    tree = _Parser(text).parse()
    return MapSpec("expression", tree=tree, params=dict(params or {}), clamp=clamp)


def make_map(name_or_expr, params=None, clamp=False):
    """Build a MapSpec from a builtin name or a DSL expression string."""
    if name_or_expr in _BUILTIN_DEFAULTS:
        return MapSpec(name_or_expr, params=dict(params or {}), clamp=clamp)
    return parse_map(name_or_expr, params=params, clamp=clamp)


def _eval_raw(spec, x):
    """Evaluate without range checks; may return non-finite values."""
    x = np.asarray(x, dtype=float)
    p = spec.params
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        if spec.kind == "expression":
            out = _eval_node(spec.tree, x, p)
        elif spec.kind == "logistic":
            out = p["lam"] * x * (1.0 - x)
        elif spec.kind == "doubling":
            out = np.mod(2.0 * x, 1.0)
        elif spec.kind == "tent":
            out = np.where(x <= 0.5, 2.0 * x, 2.0 * (1.0 - x))
        elif spec.kind == "rotation":
            out = np.mod(x + p["alpha"], 1.0)
        elif spec.kind == "identity":
            out = x + 0.0
        else:  # piecewise-const
            out = np.where(x < p["threshold"], p["left"], p["right"])
    out = np.asarray(out, dtype=float)
    if out.shape != x.shape:
        out = np.broadcast_to(out, x.shape).copy()
    return out


def eval_map(spec, x):
    """Evaluate T(x) for scalar or array x in [0, 1].

    With ``clamp`` set the result is clipped to [0, 1]; otherwise values
    outside [0, 1] (beyond roundoff) raise DomainError. Non-finite results
    always raise.
    """
    scalar = np.isscalar(x) or np.ndim(x) == 0
    xv = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any((xv < -_RANGE_TOL) | (xv > 1.0 + _RANGE_TOL)):
        raise DomainError("map input outside [0, 1]")
    out = _eval_raw(spec, xv)
    if not np.all(np.isfinite(out)):
        raise DomainError("map value is not finite")
    if spec.clamp:
        out = np.clip(out, 0.0, 1.0)
    else:
        if np.any((out < -_RANGE_TOL) | (out > 1.0 + _RANGE_TOL)):
            bad = float(xv[np.argmax((out < -_RANGE_TOL) | (out > 1.0 + _RANGE_TOL))])
            raise DomainError(f"map value leaves [0, 1] at x={bad!r} (clamp unset)")
        out = np.clip(out, 0.0, 1.0)
    return float(out[0]) if scalar else out


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    violations: tuple
    samples: int

    def __bool__(self):
        return self.ok


def validate_map(spec, samples=10_000):
    """Check T on a uniform grid (samples+1 points including endpoints).

    Violations (out-of-range with clamp unset, or non-finite values) are
    reported as data, not raised.
    """
    if samples < 2:
        raise ValueError("samples must be >= 2")
    grid = np.linspace(0.0, 1.0, samples + 1)
    out = _eval_raw(spec, grid)
    bad_finite = ~np.isfinite(out)
    if spec.clamp:
        bad_range = np.zeros_like(bad_finite)
    else:
        bad_range = (out < -_RANGE_TOL) | (out > 1.0 + _RANGE_TOL)
    violations = []
    for idx in np.flatnonzero(bad_finite | bad_range):
        reason = "non_finite" if bad_finite[idx] else "out_of_range"
        violations.append((float(grid[idx]), float(out[idx]), reason))
    return ValidationReport(not violations, tuple(violations), samples)


def eval_map_derivative(spec, x, h=1e-5):
    """Central finite difference (T(x+h) - T(x-h)) / (2h).

    When clamping is off the stencil must stay inside [0, 1].
    """
    if h <= 0:
        raise ValueError("step h must be positive")
    scalar = np.isscalar(x) or np.ndim(x) == 0
    xv = np.atleast_1d(np.asarray(x, dtype=float))
    if not spec.clamp and (np.any(xv < h) or np.any(xv > 1.0 - h)):
        raise DomainError("derivative stencil leaves [0, 1] (clamp unset)")
    hi = _eval_raw(spec, xv + h)
    lo = _eval_raw(spec, xv - h)
    out = (hi - lo) / (2.0 * h)
    if not np.all(np.isfinite(out)):
        raise DomainError("derivative stencil hit a non-finite value")
    return float(out[0]) if scalar else out


def nonsmooth_points(spec):
    """Interior points where the map is known to be non-differentiable."""
    p = spec.params
    if spec.kind == "doubling":
        return (0.5,)
    if spec.kind == "tent":
        return (0.5,)
    if spec.kind == "rotation":
        cut = (1.0 - p["alpha"]) % 1.0
        return (cut,) if 0.0 < cut < 1.0 else ()
    if spec.kind == "piecewise-const":
        t = p["threshold"]
        return (t,) if 0.0 < t < 1.0 else ()
    return ()
