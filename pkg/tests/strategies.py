"""Random expression generators shared across tests.

Two flavors: hypothesis strategies (shrinkable, for property tests) and a
plain seeded generator (for the big fixed-count round-trip sweeps).
"""

from __future__ import annotations

import numpy as np
from hypothesis import strategies as st

from actlab.exprlang import (
    BATCH_STATS,
    BINARY_OPS,
    UNARY_OPS,
    BatchStat,
    Binary,
    Const,
    Expr,
    Input,
    Unary,
)

_finite_floats = st.floats(
    allow_nan=False, allow_infinity=False, width=64, min_value=-1e9, max_value=1e9
)


def expr_strategy(max_leaves: int = 25) -> st.SearchStrategy[Expr]:
    leaves = st.one_of(st.builds(Input), st.builds(Const, _finite_floats))

    def extend(children: st.SearchStrategy[Expr]) -> st.SearchStrategy[Expr]:
        unary = st.builds(Unary, st.sampled_from(UNARY_OPS), children)
        batch = st.builds(BatchStat, st.sampled_from(BATCH_STATS), children)
        plain_binary = st.builds(
            Binary,
            st.sampled_from([op for op in BINARY_OPS if op != "pow"]),
            children,
            children,
        )
        pow_node = st.builds(
            Binary, st.just("pow"), children, st.builds(Const, _finite_floats)
        )
        return st.one_of(unary, batch, plain_binary, pow_node)

    return st.recursive(leaves, extend, max_leaves=max_leaves)


def random_expr(gen: np.random.Generator, max_depth: int = 8) -> Expr:
    """Plain seeded generator used for the large fixed-count sweeps."""
    if max_depth <= 1 or gen.random() < 0.3:
        if gen.random() < 0.5:
            return Input()
        return Const(float(gen.normal(0.0, 2.0)))
    roll = gen.random()
    if roll < 0.45:
        op = UNARY_OPS[gen.integers(0, len(UNARY_OPS))]
        return Unary(op, random_expr(gen, max_depth - 1))
    if roll < 0.55:
        stat = BATCH_STATS[gen.integers(0, len(BATCH_STATS))]
        return BatchStat(stat, random_expr(gen, max_depth - 1))
    op = BINARY_OPS[gen.integers(0, len(BINARY_OPS))]
    left = random_expr(gen, max_depth - 1)
    if op == "pow":
        return Binary(op, left, Const(float(gen.normal(0.0, 2.0))))
    return Binary(op, left, random_expr(gen, max_depth - 1))
