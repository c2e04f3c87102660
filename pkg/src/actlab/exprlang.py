"""Activation-function DSL: AST, s-expression parser/printer, FLOP cost
model, and evaluation with exact reverse-mode gradients.

Expressions denote functions of one tensor input ``x`` (batch x features,
float64).  Pointwise ops apply elementwise; ``batch-mean``/``batch-std``
reduce over *all* elements of their operand and broadcast the scalar back,
so an expression is always shape-preserving.

The grammar (UTF-8 s-expressions, whitespace-insensitive)::

    expr   := "x" | number | "(" op expr+ ")"
    op     := neg abs sign sin cos tanh exp log1p sqrt relu gelu sinc sigmoid
              add sub mul div min max pow batch-mean batch-std
    number := decimal literal, optional sign/exponent

The canonical printer emits lowercase op names, single spaces, and
shortest round-trip decimals, so ``parse(print_expr(e)) == e``.

Evaluation is guarded so that arbitrary (evolved) trees stay scoreable:
``sqrt``/``log1p`` clamp their inputs into domain and ``div`` nudges the
denominator away from zero, preserving its sign.  Anything that still
produces a non-finite value raises :class:`NonFiniteOutput` instead of
leaking NaNs downstream.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Iterator, Mapping

import numpy as np
from scipy.special import expit

from .tensor import tensor2

__all__ = [
    "Expr",
    "Input",
    "Const",
    "Unary",
    "Binary",
    "BatchStat",
    "UNARY_OPS",
    "BINARY_OPS",
    "BATCH_STATS",
    "ExprError",
    "ExprSyntaxError",
    "ArityError",
    "NonConstExponent",
    "NonFiniteOutput",
    "parse",
    "print_expr",
    "validate",
    "CostModel",
    "DEFAULT_COST_MODEL",
    "FlopBudget",
    "DEFAULT_BUDGET",
    "cost",
    "check_budget",
    "forward",
    "forward_tape",
    "backward_tape",
    "forward_backward",
    "iter_nodes",
    "positions",
    "subtree_at",
    "replace_at",
    "depth",
    "count_nodes",
]


# ---------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class Expr:
    """Base class for DSL nodes.  Structural equality via dataclass eq."""


@dataclass(frozen=True)
class Input(Expr):
    """The tensor input ``x``."""


@dataclass(frozen=True)
class Const(Expr):
    value: float


@dataclass(frozen=True)
class Unary(Expr):
    op: str
    child: Expr


@dataclass(frozen=True)
class Binary(Expr):
    op: str
    left: Expr
    right: Expr


@dataclass(frozen=True)
class BatchStat(Expr):
    stat: str  # "mean" | "std"
    child: Expr


UNARY_OPS = (
    "neg", "abs", "sign", "sin", "cos", "tanh", "exp",
    "log1p", "sqrt", "relu", "gelu", "sinc", "sigmoid",
)
BINARY_OPS = ("add", "sub", "mul", "div", "min", "max", "pow")
BATCH_STATS = ("mean", "std")

_BATCH_OP_NAMES = {"batch-mean": "mean", "batch-std": "std"}


class ExprError(ValueError):
    """Base class for DSL errors."""


class ExprSyntaxError(ExprError):
    def __init__(self, position: int, expected: set[str], found: str = ""):
        self.position = position
        self.expected = frozenset(expected)
        self.found = found
        what = f", found {found!r}" if found else ""
        super().__init__(
            f"syntax error at position {position}: expected one of "
            f"{{{', '.join(sorted(expected))}}}{what}"
        )


class ArityError(ExprError):
    def __init__(self, op: str, got: int, want: int):
        self.op, self.got, self.want = op, got, want
        super().__init__(f"op {op!r} takes {want} argument(s), got {got}")


class NonConstExponent(ExprError):
    def __init__(self):
        super().__init__("pow exponent must be a constant literal")


class NonFiniteOutput(ExprError):
    """Evaluation produced NaN/Inf; carries the offending node's preorder index."""

    def __init__(self, node_index: int, op: str):
        self.node_index = node_index
        self.op = op
        super().__init__(f"non-finite value at node #{node_index} ({op})")


def _node_op(node: Expr) -> str:
    if isinstance(node, Input):
        return "x"
    if isinstance(node, Const):
        return "const"
    if isinstance(node, Unary):
        return node.op
    if isinstance(node, Binary):
        return node.op
    if isinstance(node, BatchStat):
        return f"batch-{node.stat}"
    raise TypeError(f"not an Expr node: {node!r}")


def validate(expr: Expr) -> None:
    """Check structural invariants: known ops, finite constants, const pow exponents."""
    for node, _ in iter_nodes(expr):
        if isinstance(node, Const):
            if not math.isfinite(node.value):
                raise ExprError(f"non-finite constant {node.value!r}")
        elif isinstance(node, Unary):
            if node.op not in UNARY_OPS:
                raise ExprError(f"unknown unary op {node.op!r}")
        elif isinstance(node, Binary):
            if node.op not in BINARY_OPS:
                raise ExprError(f"unknown binary op {node.op!r}")
            if node.op == "pow" and not isinstance(node.right, Const):
                raise NonConstExponent()
        elif isinstance(node, BatchStat):
            if node.stat not in BATCH_STATS:
                raise ExprError(f"unknown batch stat {node.stat!r}")
        elif not isinstance(node, (Input,)):
            raise ExprError(f"unknown node type {type(node).__name__}")


# ---------------------------------------------------------------------------
# Structural helpers (shared by the mutator and tests)


def iter_nodes(expr: Expr) -> Iterator[tuple[Expr, tuple[int, ...]]]:
    """Preorder traversal yielding (node, path); path is a tuple of child indices."""
    stack = [(expr, ())]
    while stack:
        node, path = stack.pop()
        yield node, path
        if isinstance(node, Unary):
            stack.append((node.child, path + (0,)))
        elif isinstance(node, Binary):
            stack.append((node.right, path + (1,)))
            stack.append((node.left, path + (0,)))
        elif isinstance(node, BatchStat):
            stack.append((node.child, path + (0,)))


def positions(expr: Expr, skip_pow_exponent: bool = True) -> list[tuple[int, ...]]:
    """All node paths; optionally excludes pow exponent slots (and below)."""
    out = []
    for node, path in iter_nodes(expr):
        out.append(path)
    if not skip_pow_exponent:
        return out
    banned: set[tuple[int, ...]] = set()
    for node, path in iter_nodes(expr):
        if isinstance(node, Binary) and node.op == "pow":
            banned.add(path + (1,))
    return [p for p in out if not any(p[: len(b)] == b for b in banned)]


def subtree_at(expr: Expr, path: tuple[int, ...]) -> Expr:
    node = expr
    for i in path:
        if isinstance(node, Unary) or isinstance(node, BatchStat):
            node = node.child
        elif isinstance(node, Binary):
            node = node.left if i == 0 else node.right
        else:
            raise IndexError(f"bad path {path}")
    return node


def replace_at(expr: Expr, path: tuple[int, ...], new: Expr) -> Expr:
    """Functionally replace the subtree at ``path`` (nodes are immutable)."""
    if not path:
        return new
    i, rest = path[0], path[1:]
    if isinstance(expr, Unary):
        return Unary(expr.op, replace_at(expr.child, rest, new))
    if isinstance(expr, BatchStat):
        return BatchStat(expr.stat, replace_at(expr.child, rest, new))
    if isinstance(expr, Binary):
        if i == 0:
            return Binary(expr.op, replace_at(expr.left, rest, new), expr.right)
        return Binary(expr.op, expr.left, replace_at(expr.right, rest, new))
    raise IndexError(f"bad path {path}")


def depth(expr: Expr) -> int:
    if isinstance(expr, (Input, Const)):
        return 1
    if isinstance(expr, (Unary, BatchStat)):
        return 1 + depth(expr.child)
    return 1 + max(depth(expr.left), depth(expr.right))


def count_nodes(expr: Expr) -> int:
    return sum(1 for _ in iter_nodes(expr))


# ---------------------------------------------------------------------------
# Parser / printer

_NUMBER_RE = re.compile(r"^[+-]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?$")

_ATOM_EXPECTED = {"x", "number", "("}


def _tokenize(text: str) -> list[tuple[str, int]]:
    tokens = []
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
        elif c in "()":
            tokens.append((c, i))
            i += 1
        else:
            j = i
            while j < n and not text[j].isspace() and text[j] not in "()":
                j += 1
            tokens.append((text[i:j], i))
            i = j
    return tokens


def parse(text: str) -> Expr:
    """Parse the s-expression grammar into an AST.

    Raises :class:`ExprSyntaxError` (with position and expected set),
    :class:`ArityError`, or :class:`NonConstExponent`.
    """
    tokens = _tokenize(text)
    if not tokens:
        raise ExprSyntaxError(0, _ATOM_EXPECTED, "end of input")
    expr, i = _parse_expr(tokens, 0, len(text))
    if i != len(tokens):
        raise ExprSyntaxError(tokens[i][1], {"end of input"}, tokens[i][0])
    return expr


def _parse_expr(tokens: list[tuple[str, int]], i: int, text_len: int) -> tuple[Expr, int]:
    if i >= len(tokens):
        raise ExprSyntaxError(text_len, _ATOM_EXPECTED, "end of input")
    tok, pos = tokens[i]
    if tok == ")":
        raise ExprSyntaxError(pos, _ATOM_EXPECTED, ")")
    if tok == "(":
        return _parse_form(tokens, i, text_len)
    if tok == "x":
        return Input(), i + 1
    if _NUMBER_RE.match(tok):
        value = float(tok)
        if not math.isfinite(value):
            raise ExprSyntaxError(pos, {"finite number"}, tok)
        return Const(value), i + 1
    raise ExprSyntaxError(pos, _ATOM_EXPECTED, tok)


def _parse_form(tokens: list[tuple[str, int]], i: int, text_len: int) -> tuple[Expr, int]:
    open_pos = tokens[i][1]
    i += 1
    if i >= len(tokens):
        raise ExprSyntaxError(text_len, {"operator"}, "end of input")
    op, op_pos = tokens[i]
    known = set(UNARY_OPS) | set(BINARY_OPS) | set(_BATCH_OP_NAMES)
    if op not in known:
        raise ExprSyntaxError(op_pos, known, op)
    i += 1
    args: list[Expr] = []
    while True:
        if i >= len(tokens):
            raise ExprSyntaxError(text_len, {")"}, "end of input")
        if tokens[i][0] == ")":
            i += 1
            break
        arg, i = _parse_expr(tokens, i, text_len)
        args.append(arg)
    want = 2 if op in BINARY_OPS else 1
    if len(args) != want:
        raise ArityError(op, len(args), want)
    if op in _BATCH_OP_NAMES:
        return BatchStat(_BATCH_OP_NAMES[op], args[0]), i
    if op in UNARY_OPS:
        return Unary(op, args[0]), i
    if op == "pow" and not isinstance(args[1], Const):
        raise NonConstExponent()
    return Binary(op, args[0], args[1]), i


def _fmt_const(value: float) -> str:
    # repr gives the shortest decimal that round-trips to the same float
    return repr(float(value))


def print_expr(expr: Expr) -> str:
    """Canonical text: lowercase ops, single spaces, shortest float literals."""
    if isinstance(expr, Input):
        return "x"
    if isinstance(expr, Const):
        return _fmt_const(expr.value)
    if isinstance(expr, Unary):
        return f"({expr.op} {print_expr(expr.child)})"
    if isinstance(expr, Binary):
        return f"({expr.op} {print_expr(expr.left)} {print_expr(expr.right)})"
    if isinstance(expr, BatchStat):
        return f"(batch-{expr.stat} {print_expr(expr.child)})"
    raise TypeError(f"not an Expr: {expr!r}")


# ---------------------------------------------------------------------------
# FLOP cost model


@dataclass(frozen=True)
class CostModel:
    """Per-op FLOPs per element; coarse relative costs, not hardware truth."""

    op_cost: Mapping[str, int]
    batch_cost: Mapping[str, int]

    def unary(self, op: str) -> int:
        return self.op_cost[op]

    def binary(self, op: str) -> int:
        return self.op_cost[op]


DEFAULT_COST_MODEL = CostModel(
    op_cost={
        "add": 1, "sub": 1, "mul": 1, "neg": 1, "abs": 1, "sign": 1,
        "min": 1, "max": 1, "relu": 1,
        "div": 4,
        "sin": 4, "cos": 4, "tanh": 4, "sigmoid": 4, "exp": 4,
        "log1p": 4, "sqrt": 4,
        "gelu": 8,
        "sinc": 6,
        "pow": 8,
    },
    batch_cost={"mean": 2, "std": 4},
)


@dataclass(frozen=True)
class FlopBudget:
    max_flops_per_element: int


DEFAULT_BUDGET = FlopBudget(max_flops_per_element=64)


def cost(expr: Expr, model: CostModel = DEFAULT_COST_MODEL) -> int:
    """Total FLOPs per element: sum of per-op costs over all nodes."""
    total = 0
    for node, _ in iter_nodes(expr):
        if isinstance(node, Unary):
            total += model.op_cost[node.op]
        elif isinstance(node, Binary):
            total += model.op_cost[node.op]
        elif isinstance(node, BatchStat):
            total += model.batch_cost[node.stat]
    return total


def check_budget(
    expr: Expr,
    budget: FlopBudget = DEFAULT_BUDGET,
    model: CostModel = DEFAULT_COST_MODEL,
) -> bool:
    return cost(expr, model) <= budget.max_flops_per_element


# ---------------------------------------------------------------------------
# Evaluation

_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)
_GELU_CUBIC = 0.044715
_STD_EPS = 1e-6  # stabilizer added to batch-std
_DIV_EPS = 1e-12  # sign-preserving denominator nudge
_LOG1P_FLOOR = -1.0 + 1e-12


def _gelu(v: np.ndarray) -> np.ndarray:
    # tanh form: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))
    # cube spelled as products: np.power takes a slow path on negative bases
    return 0.5 * v * (1.0 + np.tanh(_SQRT_2_OVER_PI * (v + _GELU_CUBIC * (v * v * v))))


def _gelu_grad(v: np.ndarray) -> np.ndarray:
    s = _SQRT_2_OVER_PI * (v + _GELU_CUBIC * (v * v * v))
    t = np.tanh(s)
    ds = _SQRT_2_OVER_PI * (1.0 + 3.0 * _GELU_CUBIC * v * v)
    return 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * ds


def _sinc_grad(v: np.ndarray) -> np.ndarray:
    # d/dx sin(pi x)/(pi x); series near 0 avoids the 0/0 cancellation
    small = np.abs(v) < 1e-4
    safe = np.where(small, 1.0, v)
    pv = np.pi * safe
    exact = (pv * np.cos(pv) - np.sin(pv)) / (np.pi * safe * safe)
    series = (-(np.pi**2) / 3.0) * v + (np.pi**4 / 30.0) * (v * v * v)
    return np.where(small, series, exact)


def _pow_const(base: np.ndarray, k: float) -> np.ndarray:
    # const-exponent power with fast paths for the common small exponents
    if k == 0.0:
        return np.ones(base.shape)
    if k == 1.0:
        return base.copy()
    if k == 2.0:
        return base * base
    if k == 3.0:
        return base * base * base
    return base**k


def _guarded_log1p(c: np.ndarray) -> np.ndarray:
    return np.log1p(np.maximum(c, _LOG1P_FLOOR))


def _guarded_log1p_grad(c: np.ndarray) -> np.ndarray:
    u = np.maximum(c, _LOG1P_FLOOR)
    return np.where(c >= _LOG1P_FLOOR, 1.0 / (1.0 + u), 0.0)


def _guarded_sqrt(c: np.ndarray) -> np.ndarray:
    return np.sqrt(np.maximum(c, 0.0))


def _guarded_sqrt_grad(c: np.ndarray) -> np.ndarray:
    safe = np.where(c > 0.0, c, 1.0)
    return np.where(c > 0.0, 0.5 / np.sqrt(safe), 0.0)


def _guard_denom(d: np.ndarray) -> np.ndarray:
    return d + np.copysign(_DIV_EPS, d)


_UNARY_FWD: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "neg": np.negative,
    "abs": np.abs,
    "sign": np.sign,
    "sin": np.sin,
    "cos": np.cos,
    "tanh": np.tanh,
    "exp": np.exp,
    "log1p": _guarded_log1p,
    "sqrt": _guarded_sqrt,
    "relu": lambda c: np.maximum(c, 0.0),
    "gelu": _gelu,
    "sinc": np.sinc,
    "sigmoid": expit,
}

# local derivative as a function of (child value, node value)
_UNARY_GRAD: dict[str, Callable[[np.ndarray, np.ndarray], np.ndarray]] = {
    "neg": lambda c, v: np.float64(-1.0),
    "abs": lambda c, v: np.sign(c),  # abs'(0) = 0 by convention
    "sign": lambda c, v: np.float64(0.0),
    "sin": lambda c, v: np.cos(c),
    "cos": lambda c, v: -np.sin(c),
    "tanh": lambda c, v: 1.0 - v * v,
    "exp": lambda c, v: v,
    "log1p": lambda c, v: _guarded_log1p_grad(c),
    "sqrt": lambda c, v: _guarded_sqrt_grad(c),
    "relu": lambda c, v: np.where(c > 0.0, 1.0, 0.0),  # relu'(0) = 0
    "gelu": lambda c, v: _gelu_grad(c),
    "sinc": lambda c, v: _sinc_grad(c),
    "sigmoid": lambda c, v: v * (1.0 - v),
}


def _binary_fwd(op: str, l: np.ndarray, r: np.ndarray) -> np.ndarray:
    if op == "add":
        return l + r
    if op == "sub":
        return l - r
    if op == "mul":
        return l * r
    if op == "div":
        return l / _guard_denom(r)
    if op == "min":
        return np.minimum(l, r)
    if op == "max":
        return np.maximum(l, r)
    raise ExprError(f"unknown binary op {op!r}")


def _eval(node: Expr, x: np.ndarray, tape: dict[int, np.ndarray] | None) -> np.ndarray:
    # every node value is materialized at the full input shape
    if isinstance(node, Input):
        v = x
    elif isinstance(node, Const):
        v = np.full(x.shape, node.value)
    elif isinstance(node, Unary):
        c = _eval(node.child, x, tape)
        v = _UNARY_FWD[node.op](c)
    elif isinstance(node, Binary):
        l = _eval(node.left, x, tape)
        r = _eval(node.right, x, tape)
        if node.op == "pow":
            v = _pow_const(l, node.right.value)  # type: ignore[union-attr]
        else:
            v = _binary_fwd(node.op, l, r)
    elif isinstance(node, BatchStat):
        c = _eval(node.child, x, tape)
        s = np.mean(c) if node.stat == "mean" else np.std(c) + _STD_EPS
        v = np.full(x.shape, s)
    else:
        raise TypeError(f"not an Expr: {node!r}")
    if tape is not None:
        tape[id(node)] = v
    return v


def _locate_nonfinite(expr: Expr, x: np.ndarray) -> tuple[int, str]:
    tape: dict[int, np.ndarray] = {}
    with np.errstate(all="ignore"):
        _eval(expr, x, tape)
    for index, (node, _) in enumerate(iter_nodes(expr)):
        if not np.isfinite(tape[id(node)]).all():
            return index, _node_op(node)
    return 0, _node_op(expr)


def forward(expr: Expr, x) -> np.ndarray:
    """Evaluate ``expr`` on a (batch x features) tensor; shape-preserving.

    Raises :class:`NonFiniteOutput` when the result contains NaN/Inf after
    domain guards (the candidate is ill-formed, not the caller).
    """
    x = tensor2(x)
    with np.errstate(all="ignore"):
        out = _eval(expr, x, None)
    if not np.isfinite(out).all():
        raise NonFiniteOutput(*_locate_nonfinite(expr, x))
    return out


def _backprop(
    node: Expr,
    adj: np.ndarray,
    tape: dict[int, np.ndarray],
    grad: np.ndarray,
) -> None:
    if isinstance(node, Input):
        grad += adj
        return
    if isinstance(node, Const):
        return
    if isinstance(node, Unary):
        c = tape[id(node.child)]
        v = tape[id(node)]
        _backprop(node.child, adj * _UNARY_GRAD[node.op](c, v), tape, grad)
        return
    if isinstance(node, Binary):
        l = tape[id(node.left)]
        r = tape[id(node.right)]
        op = node.op
        if op == "add":
            _backprop(node.left, adj, tape, grad)
            _backprop(node.right, adj, tape, grad)
        elif op == "sub":
            _backprop(node.left, adj, tape, grad)
            _backprop(node.right, -adj, tape, grad)
        elif op == "mul":
            _backprop(node.left, adj * r, tape, grad)
            _backprop(node.right, adj * l, tape, grad)
        elif op == "div":
            d = _guard_denom(r)
            _backprop(node.left, adj / d, tape, grad)
            _backprop(node.right, -adj * l / (d * d), tape, grad)
        elif op == "min":
            take_left = l <= r  # ties go left
            _backprop(node.left, np.where(take_left, adj, 0.0), tape, grad)
            _backprop(node.right, np.where(take_left, 0.0, adj), tape, grad)
        elif op == "max":
            take_left = l >= r  # ties go left
            _backprop(node.left, np.where(take_left, adj, 0.0), tape, grad)
            _backprop(node.right, np.where(take_left, 0.0, adj), tape, grad)
        elif op == "pow":
            k = node.right.value  # type: ignore[union-attr]
            if k == 0.0:
                return
            _backprop(node.left, adj * k * _pow_const(l, k - 1.0), tape, grad)
        else:
            raise ExprError(f"unknown binary op {op!r}")
        return
    if isinstance(node, BatchStat):
        c = tape[id(node.child)]
        n = c.size
        total = float(np.sum(adj))
        if node.stat == "mean":
            child_adj = np.full(c.shape, total / n)
        else:
            mu = np.mean(c)
            sigma = np.std(c)
            if sigma == 0.0:
                child_adj = np.zeros(c.shape)
            else:
                child_adj = total * (c - mu) / (n * sigma)
        _backprop(node.child, child_adj, tape, grad)
        return
    raise TypeError(f"not an Expr: {node!r}")


def forward_tape(expr: Expr, x) -> tuple[np.ndarray, dict[int, np.ndarray]]:
    """Like :func:`forward` but also returns the per-node value tape, so a
    later :func:`backward_tape` call can skip re-evaluating the tree."""
    x = tensor2(x)
    tape: dict[int, np.ndarray] = {}
    with np.errstate(all="ignore"):
        out = _eval(expr, x, tape)
    if not np.isfinite(out).all():
        raise NonFiniteOutput(*_locate_nonfinite(expr, x))
    return out, tape


def backward_tape(
    expr: Expr, x: np.ndarray, tape: dict[int, np.ndarray], upstream: np.ndarray
) -> np.ndarray:
    """Vector-Jacobian product using a tape from :func:`forward_tape`."""
    if upstream.shape != x.shape:
        raise ExprError(f"upstream shape {upstream.shape} != input shape {x.shape}")
    grad = np.zeros(x.shape)
    with np.errstate(all="ignore"):
        _backprop(expr, upstream, tape, grad)
    if not np.isfinite(grad).all():
        raise NonFiniteOutput(0, _node_op(expr))
    return grad


def forward_backward(
    expr: Expr, x, upstream: np.ndarray | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate and reverse-differentiate ``expr`` at ``x``.

    Returns ``(output, grad)`` where ``grad`` is the vector-Jacobian
    product with ``upstream`` (all-ones by default).  For pointwise
    expressions the default is exactly the elementwise derivative; for
    batch-stat expressions it includes the coupling through the
    whole-tensor mean/std, not a stop-gradient.
    """
    x = tensor2(x)
    out, tape = forward_tape(expr, x)
    if upstream is None:
        upstream = np.ones(x.shape)
    return out, backward_tape(expr, x, tape, upstream)
