import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings

from actlab import exprlang as ex
from actlab.exprlang import (
    ArityError,
    BatchStat,
    Binary,
    Const,
    ExprSyntaxError,
    Input,
    NonConstExponent,
    NonFiniteOutput,
    Unary,
)
from actlab.tensor import SeededRng

from .strategies import expr_strategy, random_expr

GELUSINE = "(add (gelu x) (mul 0.1 (sin x)))"


# ---------------------------------------------------------------------------
# parsing


def test_parse_gelusine_structure():
    e = ex.parse(GELUSINE)
    assert e == Binary(
        "add",
        Unary("gelu", Input()),
        Binary("mul", Const(0.1), Unary("sin", Input())),
    )


def test_parse_identity_leaf():
    assert ex.parse("x") == Input()


def test_parse_whitespace_insensitive():
    assert ex.parse("  (add\n\tx   1.5 ) ") == Binary("add", Input(), Const(1.5))


@pytest.mark.parametrize(
    "text,value",
    [("1e-3", 1e-3), ("+2", 2.0), (".5", 0.5), ("-0.5", -0.5), ("3.", 3.0), ("2E5", 2e5)],
)
def test_parse_number_forms(text, value):
    assert ex.parse(text) == Const(value)


def test_parse_batch_ops():
    assert ex.parse("(batch-mean x)") == BatchStat("mean", Input())
    assert ex.parse("(batch-std (abs x))") == BatchStat("std", Unary("abs", Input()))


def test_pow_requires_const_exponent():
    with pytest.raises(NonConstExponent):
        ex.parse("(pow x x)")
    assert ex.parse("(pow x 2.0)") == Binary("pow", Input(), Const(2.0))


@pytest.mark.parametrize(
    "text",
    [
        "",
        "(",
        ")",
        "(add x",
        "(add x x))",
        "(frobnicate x)",
        "y",
        "1.2.3",
        "(add . x)",
        "()",
        "nan",
        "inf",
    ],
)
def test_malformed_inputs_raise_positioned_errors(text):
    with pytest.raises((ExprSyntaxError, ArityError)) as info:
        ex.parse(text)
    if isinstance(info.value, ExprSyntaxError):
        assert 0 <= info.value.position <= len(text)
        assert info.value.expected


@pytest.mark.parametrize(
    "text,got,want", [("(sin x x)", 2, 1), ("(add x)", 1, 2), ("(batch-mean x x)", 2, 1)]
)
def test_arity_errors(text, got, want):
    with pytest.raises(ArityError) as info:
        ex.parse(text)
    assert info.value.got == got
    assert info.value.want == want


# ---------------------------------------------------------------------------
# printing


def test_print_single_node():
    assert ex.print_expr(Unary("relu", Input())) == "(relu x)"


def test_print_shortest_roundtrip_decimal():
    assert ex.print_expr(Const(0.1)) == "0.1"
    assert float(ex.print_expr(Const(0.1))) == 0.1
    assert ex.print_expr(Const(1e-6)) == "1e-06"


def test_print_canonical_form():
    text = ex.print_expr(ex.parse("( mul   0.5 ( sinc x ) )"))
    assert text == "(mul 0.5 (sinc x))"
    assert " )" not in text and "( " not in text


@settings(max_examples=300, deadline=None)
@given(expr_strategy())
def test_roundtrip_property(e):
    assert ex.parse(ex.print_expr(e)) == e


def test_roundtrip_seeded_sweep():
    gen = SeededRng(123).generator
    for _ in range(1000):
        e = random_expr(gen)
        assert ex.parse(ex.print_expr(e)) == e


# ---------------------------------------------------------------------------
# cost model & budget


def test_cost_examples():
    assert ex.cost(ex.parse("(relu x)")) == 1
    assert ex.cost(ex.parse(GELUSINE)) == 14
    assert ex.cost(ex.parse("x")) == 0
    assert ex.cost(ex.parse("3.5")) == 0


def test_cost_additivity():
    gen = SeededRng(5).generator
    for _ in range(100):
        l, r = random_expr(gen, 4), random_expr(gen, 4)
        combined = Binary("mul", l, r)
        assert ex.cost(combined) == ex.cost(l) + ex.cost(r) + 1


def test_budget_monotone_under_wrapping():
    gen = SeededRng(9).generator
    for _ in range(100):
        e = random_expr(gen, 4)
        assert ex.cost(Unary("sin", e)) > ex.cost(e)
        assert ex.cost(BatchStat("mean", e)) > ex.cost(e)


def test_check_budget():
    assert ex.check_budget(ex.parse("(relu x)"))
    chain = Input()
    for _ in range(100):
        chain = Unary("gelu", chain)
    assert ex.cost(chain) == 800
    assert not ex.check_budget(chain)
    assert ex.check_budget(Input(), ex.FlopBudget(0))


# ---------------------------------------------------------------------------
# forward evaluation


def _mp_gelu(x):
    c = mpmath.sqrt(mpmath.mpf(2) / mpmath.pi)
    x = mpmath.mpf(x)
    return 0.5 * x * (1 + mpmath.tanh(c * (x + mpmath.mpf("0.044715") * x**3)))


def test_gelusine_at_zero():
    out = ex.forward(ex.parse(GELUSINE), np.array([[0.0]]))
    assert out[0, 0] == 0.0


def test_gelusinc_at_zero():
    e = ex.parse("(mul (gelu x) (add 1.0 (mul 0.5 (sinc x))))")
    assert ex.forward(e, np.array([[0.0]]))[0, 0] == 0.0


def test_gelusine_at_ten_high_precision():
    mpmath.mp.dps = 50
    want = float(_mp_gelu(10) + mpmath.mpf("0.1") * mpmath.sin(10))
    got = ex.forward(ex.parse(GELUSINE), np.array([[10.0]]))[0, 0]
    assert got == pytest.approx(want, abs=1e-12)
    assert got == pytest.approx(9.94559, abs=1e-5)


def test_forward_shape_preservation():
    gen = SeededRng(21).generator
    x = SeededRng(2).uniform(7, 5, -2.0, 2.0)
    for _ in range(50):
        e = random_expr(gen, 5)
        try:
            out = ex.forward(e, x)
        except NonFiniteOutput:
            continue
        assert out.shape == x.shape


def test_forward_purity_bit_identical():
    x = SeededRng(3).uniform(16, 8, -3.0, 3.0)
    e = ex.parse("(mul (batch-std x) (gelu (div x (batch-mean (abs x)))))")
    assert np.array_equal(ex.forward(e, x), ex.forward(e, x))


def test_domain_guards_make_eval_total():
    x = np.array([[-4.0, -1.0, 0.0, 2.0]])
    assert np.array_equal(ex.forward(ex.parse("(sqrt x)"), x), [[0.0, 0.0, 0.0, math.sqrt(2.0)]])
    out = ex.forward(ex.parse("(log1p x)"), x)
    assert np.isfinite(out).all()
    out = ex.forward(ex.parse("(div 1.0 x)"), x)
    assert np.isfinite(out).all()


def test_batch_stats_whole_tensor_reduction():
    x = np.array([[1.0, 2.0], [3.0, 4.0]])
    out = ex.forward(ex.parse("(batch-mean x)"), x)
    assert np.array_equal(out, np.full((2, 2), 2.5))
    out = ex.forward(ex.parse("(batch-std x)"), x)
    assert out[0, 0] == pytest.approx(np.std(x) + 1e-6, abs=0)


def test_nonfinite_output_reports_node():
    e = ex.parse("(exp (exp (exp x)))")
    with pytest.raises(NonFiniteOutput) as info:
        ex.forward(e, np.array([[100.0]]))
    assert info.value.op == "exp"


def test_pow_nan_raises():
    with pytest.raises(NonFiniteOutput):
        ex.forward(ex.parse("(pow x 0.5)"), np.array([[-1.0, 1.0]]))


# ---------------------------------------------------------------------------
# gradients


def test_gelusine_gradient_at_zero():
    _, g = ex.forward_backward(ex.parse(GELUSINE), np.array([[0.0]]))
    assert g[0, 0] == pytest.approx(0.6, abs=1e-12)


def test_relu_subgradient():
    _, g = ex.forward_backward(ex.parse("(relu x)"), np.array([[-1.0, 0.0, 1.0]]))
    assert np.array_equal(g, [[0.0, 0.0, 1.0]])


def test_abs_sign_subgradients():
    _, g = ex.forward_backward(ex.parse("(abs x)"), np.array([[0.0, -2.0, 2.0]]))
    assert np.array_equal(g, [[0.0, -1.0, 1.0]])
    _, g = ex.forward_backward(ex.parse("(sign x)"), np.array([[0.5, -0.5]]))
    assert np.array_equal(g, [[0.0, 0.0]])


def test_minmax_tie_break_left():
    # at a tie the left branch gets the gradient: d/dx max(x, 2) at x=2 is 1
    _, g = ex.forward_backward(ex.parse("(max x 2.0)"), np.array([[2.0]]))
    assert g[0, 0] == 1.0
    _, g = ex.forward_backward(ex.parse("(min x 2.0)"), np.array([[2.0]]))
    assert g[0, 0] == 1.0


def test_pow_gradient():
    _, g = ex.forward_backward(ex.parse("(pow x 3.0)"), np.array([[2.0, -1.5]]))
    assert np.allclose(g, [[12.0, 6.75]], atol=1e-12)
    _, g = ex.forward_backward(ex.parse("(pow x 0.0)"), np.array([[2.0]]))
    assert g[0, 0] == 0.0


def test_upstream_vjp():
    e = ex.parse("(mul 2.0 x)")
    upstream = np.array([[1.0, 10.0]])
    _, g = ex.forward_backward(e, np.array([[3.0, 4.0]]), upstream)
    assert np.array_equal(g, [[2.0, 20.0]])


NONSMOOTH_PROBES = {"relu", "abs", "sign", "min", "max"}

ZOO_EXPR_TEXTS = [
    "(relu x)",
    "(gelu x)",
    GELUSINE,
    "(mul (gelu x) (add 1.0 (mul 0.5 (sinc x))))",
    "(add (mul (tanh (mul 1.5 x)) (exp (neg (mul 0.2 (mul x x))))) (mul 0.1 x))",
]


@pytest.mark.parametrize("text", ZOO_EXPR_TEXTS)
def test_gradient_matches_finite_differences(text):
    # 1000 points in [-3, 3], avoiding a +-1e-3 margin around the kinks of
    # relu/abs/sign/min/max (here: the origin)
    e = ex.parse(text)
    pts = SeededRng(17).uniform(1000, 1, -3.0, 3.0)
    uses_kinky_op = any(
        getattr(n, "op", None) in NONSMOOTH_PROBES for n, _ in ex.iter_nodes(e)
    )
    if uses_kinky_op:
        pts = pts[np.abs(pts[:, 0]) > 1e-3].reshape(-1, 1)
    h = 1e-5
    _, ad = ex.forward_backward(e, pts)
    fd = (ex.forward(e, pts + h) - ex.forward(e, pts - h)) / (2 * h)
    rel = np.abs(ad - fd) / np.maximum(1.0, np.abs(ad))
    assert rel.max() < 1e-4


def test_batch_stat_gradient_full_jacobian():
    # d sum(f) / dx via AD must match FD through the whole-tensor mean/std
    e = ex.parse("(mul x (batch-std (mul x x)))")
    x = SeededRng(19).uniform(4, 3, 0.5, 2.0)
    _, ad = ex.forward_backward(e, x)
    h = 1e-6
    fd = np.zeros_like(x)
    for i in range(x.shape[0]):
        for j in range(x.shape[1]):
            xp, xm = x.copy(), x.copy()
            xp[i, j] += h
            xm[i, j] -= h
            fd[i, j] = (ex.forward(e, xp).sum() - ex.forward(e, xm).sum()) / (2 * h)
    assert np.abs(ad - fd).max() / max(1.0, np.abs(ad).max()) < 1e-4


def test_batch_std_gradient_constant_batch_is_zero():
    e = ex.parse("(batch-std x)")
    _, g = ex.forward_backward(e, np.full((3, 3), 2.0))
    assert np.array_equal(g, np.zeros((3, 3)))


def test_gradient_purity():
    e = ex.parse(GELUSINE)
    x = SeededRng(23).uniform(8, 8, -3.0, 3.0)
    out1, g1 = ex.forward_backward(e, x)
    out2, g2 = ex.forward_backward(e, x)
    assert np.array_equal(out1, out2) and np.array_equal(g1, g2)


# ---------------------------------------------------------------------------
# structural helpers


def test_positions_and_replace():
    e = ex.parse(GELUSINE)
    paths = ex.positions(e)
    assert () in paths
    for p in paths:
        sub = ex.subtree_at(e, p)
        rebuilt = ex.replace_at(e, p, sub)
        assert rebuilt == e


def test_positions_skip_pow_exponent():
    e = ex.parse("(pow (sin x) 2.0)")
    paths = ex.positions(e)
    assert (1,) not in paths  # the exponent slot
    assert (1,) in ex.positions(e, skip_pow_exponent=False)


def test_depth_and_count():
    e = ex.parse(GELUSINE)
    assert ex.depth(e) == 4
    assert ex.count_nodes(e) == 7


def test_validate_rejects_bad_trees():
    with pytest.raises(ex.ExprError):
        ex.validate(Unary("frob", Input()))
    with pytest.raises(NonConstExponent):
        ex.validate(Binary("pow", Input(), Input()))
    with pytest.raises(ex.ExprError):
        ex.validate(Const(float("nan")))
