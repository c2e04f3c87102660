import numpy as np
import pytest

from actlab.tensor import (
    BadRange,
    SeededRng,
    ShapeMismatch,
    add_row_bias,
    elementwise,
    matmul,
    reduce_mean,
    reduce_std,
    tensor2,
)


def naive_matmul(a, b):
    out = np.zeros((a.shape[0], b.shape[1]))
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            acc = 0.0
            for k in range(a.shape[1]):
                acc += a[i, k] * b[k, j]
            out[i, j] = acc
    return out


def test_tensor2_validation():
    t = tensor2([[1, 2], [3, 4]])
    assert t.dtype == np.float64 and t.shape == (2, 2)
    with pytest.raises(ShapeMismatch):
        tensor2([1.0, 2.0])
    with pytest.raises(ShapeMismatch):
        tensor2(np.empty((0, 3)))
    with pytest.raises(ShapeMismatch):
        tensor2(np.empty((3, 0)))


def test_matmul_scalar_case():
    assert matmul(tensor2([[2.0]]), tensor2([[3.0]]))[0, 0] == 6.0


def test_matmul_identity():
    rng = SeededRng(1)
    a = rng.normal(4, 4)
    assert np.array_equal(matmul(a, np.eye(4)), a)


def test_matmul_matches_triple_loop_oracle():
    rng = SeededRng(7)
    a = rng.uniform(3, 2, -1.0, 1.0)
    b = rng.uniform(2, 4, -1.0, 1.0)
    assert np.abs(matmul(a, b) - naive_matmul(a, b)).max() < 1e-12


def test_matmul_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_reductions():
    assert reduce_mean(tensor2([[1.0, 2.0], [3.0, 4.0]])) == 2.5
    assert reduce_std(np.full((3, 3), 1.7)) == 0.0
    assert reduce_std(tensor2([[0.0, 2.0]])) == 1.0  # population variance


def test_elementwise():
    a = tensor2([[1.0, -2.0]])
    b = tensor2([[3.0, 5.0]])
    assert np.array_equal(elementwise(a, b, "add"), [[4.0, 3.0]])
    assert np.array_equal(elementwise(a, 2.0, "mul"), [[2.0, -4.0]])
    assert np.array_equal(elementwise(a, b, "max"), [[3.0, 5.0]])
    with pytest.raises(ShapeMismatch):
        elementwise(a, np.ones((2, 2)), "add")
    with pytest.raises(ValueError):
        elementwise(a, b, "hypot")


def test_add_row_bias():
    a = np.zeros((3, 2))
    out = add_row_bias(a, np.array([[1.0, -1.0]]))
    assert np.array_equal(out, np.tile([1.0, -1.0], (3, 1)))
    with pytest.raises(ShapeMismatch):
        add_row_bias(a, np.array([[1.0, 2.0, 3.0]]))


def test_rng_same_seed_bit_identical():
    a = SeededRng(42).uniform(16, 4, -1.0, 1.0)
    b = SeededRng(42).uniform(16, 4, -1.0, 1.0)
    assert np.array_equal(a, b)


def test_rng_substreams_independent_of_order():
    r1 = SeededRng(3)
    r1.substream("other").uniform(10, 10)  # consume an unrelated stream
    a = r1.substream("inputs").uniform(5, 5)
    b = SeededRng(3).substream("inputs").uniform(5, 5)
    assert np.array_equal(a, b)


def test_rng_distinct_labels_differ():
    r = SeededRng(0)
    a = r.substream("a").uniform(8, 8)
    b = r.substream("b").uniform(8, 8)
    assert not np.array_equal(a, b)


def test_uniform_large_sample_mean():
    # 1e5 draws; 6 sigma of a U(0,1) mean is ~0.0057, bound at 0.01
    draws = SeededRng(11).uniform(100_000, 1, 0.0, 1.0)
    assert abs(draws.mean() - 0.5) < 0.01


def test_uniform_half_open():
    draws = SeededRng(5).uniform(10_000, 1, 0.0, 0.5)
    assert draws.min() >= 0.0
    assert draws.max() < 0.5


def test_bad_ranges():
    rng = SeededRng(0)
    with pytest.raises(BadRange):
        rng.uniform(2, 2, 1.0, 1.0)
    with pytest.raises(BadRange):
        rng.normal(2, 2, 0.0, -1.0)


def test_normal_moments():
    draws = SeededRng(13).normal(50_000, 1, 2.0, 3.0)
    assert abs(draws.mean() - 2.0) < 0.1
    assert abs(draws.std() - 3.0) < 0.1
