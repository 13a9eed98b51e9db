import numpy as np
import pytest

from ssdsim.numerics import (NumericsError, ParameterError, ShapeError,
                             finite_diff_gradient, l2_normalize_rows,
                             make_rng, matmul, rng_dirichlet, rng_gaussian,
                             singular_values, softmax_row)


def test_matmul_identity():
    a = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(matmul(np.eye(2), a), a)


def test_matmul_direct():
    out = matmul([[1, 2], [3, 4]], [[1], [1]])
    assert np.array_equal(out, [[3], [7]])


def test_matmul_against_triple_loop():
    rng = make_rng(7)
    a = rng.normal(size=(5, 7))
    b = rng.normal(size=(7, 3))
    expected = np.zeros((5, 3))
    for i in range(5):
        for j in range(3):
            for k in range(7):
                expected[i, j] += a[i, k] * b[k, j]
    assert np.max(np.abs(matmul(a, b) - expected)) < 1e-12


def test_matmul_shape_error_names_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
        matmul(np.zeros((2, 3)), np.zeros((2, 3)))


def test_matmul_associative():
    rng = make_rng(3)
    a, b, c = rng.normal(size=(4, 5)), rng.normal(size=(5, 6)), rng.normal(size=(6, 3))
    left = matmul(matmul(a, b), c)
    right = matmul(a, matmul(b, c))
    assert np.max(np.abs(left - right)) / np.max(np.abs(left)) < 1e-9


def test_l2_normalize_345():
    out = l2_normalize_rows([[3.0, 4.0]])
    assert np.allclose(out, [[0.6, 0.8]], atol=1e-12)


def test_l2_normalize_zero_row_preserved():
    out = l2_normalize_rows([[0.0, 0.0]])
    assert np.array_equal(out, [[0.0, 0.0]])


def test_l2_normalize_unit_norms():
    rng = make_rng(11)
    out = l2_normalize_rows(rng.normal(size=(20, 6)))
    assert np.max(np.abs(np.linalg.norm(out, axis=1) - 1.0)) < 1e-12


def test_l2_normalize_idempotent():
    rng = make_rng(12)
    m = rng.normal(size=(10, 4))
    once = l2_normalize_rows(m)
    assert np.max(np.abs(l2_normalize_rows(once) - once)) < 1e-12


def test_softmax_uniform():
    assert np.allclose(softmax_row([0.0, 0.0, 0.0, 0.0]), 0.25, atol=1e-12)


def test_softmax_ratio():
    out = softmax_row([5.0, 5.0 + np.log(2.0)])
    assert np.allclose(out, [1 / 3, 2 / 3], atol=1e-12)


def test_softmax_large_inputs_stable():
    out = softmax_row([1000.0, 1001.0])
    assert np.all(np.isfinite(out))
    assert np.allclose(out, softmax_row([0.0, 1.0]), atol=1e-12)


def test_softmax_shift_invariant():
    rng = make_rng(4)
    v = rng.normal(size=8)
    assert np.max(np.abs(softmax_row(v) - softmax_row(v + 17.3))) < 1e-12


def test_singular_values_diagonal():
    sv = singular_values(np.diag([3.0, 2.0, 1.0]))
    assert np.allclose(sv, [3.0, 2.0, 1.0], atol=1e-10)


def test_singular_values_rank_one():
    u = np.array([2.0, 0.0, 0.0])
    v = np.array([0.0, 3.0])
    sv = singular_values(np.outer(u, v))
    assert abs(sv[0] - 6.0) < 1e-10
    assert np.all(np.abs(sv[1:]) < 1e-10)


def test_singular_values_against_gram_eigenvalues():
    rng = make_rng(21)
    m = rng.normal(size=(8, 5))
    sv = singular_values(m)
    eig = np.sort(np.linalg.eigvalsh(m.T @ m))[::-1]
    assert np.max(np.abs(sv**2 - eig)) < 1e-8


def test_singular_values_transpose_agree():
    rng = make_rng(22)
    m = rng.normal(size=(6, 4))
    a, b = singular_values(m), singular_values(m.T)
    assert np.max(np.abs(a[:4] - b[:4])) < 1e-9


def test_finite_diff_quadratic():
    grad = finite_diff_gradient(lambda v: float(v @ v), np.array([1.0, 2.0]))
    assert np.allclose(grad, [2.0, 4.0], atol=1e-6)


def test_finite_diff_constant():
    grad = finite_diff_gradient(lambda v: 3.0, np.zeros(5))
    assert np.array_equal(grad, np.zeros(5))


def test_finite_diff_nonfinite_raises():
    with pytest.raises(NumericsError):
        finite_diff_gradient(lambda v: float("nan"), np.zeros(2))


def test_gaussian_zero_stddev():
    out = rng_gaussian(make_rng(0), 3, 3, mean=2.5, stddev=0.0)
    assert np.all(out == 2.5)


def test_gaussian_deterministic():
    a = rng_gaussian(make_rng(9), 4, 4)
    b = rng_gaussian(make_rng(9), 4, 4)
    assert np.array_equal(a, b)


def test_gaussian_moments():
    out = rng_gaussian(make_rng(1), 1000, 100)
    assert abs(out.mean()) < 0.02
    assert abs(out.var() - 1.0) < 0.05


def test_gaussian_negative_stddev():
    with pytest.raises(ParameterError):
        rng_gaussian(make_rng(0), 2, 2, stddev=-1.0)


def test_dirichlet_length_one():
    out = rng_dirichlet(make_rng(0), [3.0])
    assert np.allclose(out, [1.0])


def test_dirichlet_sums_to_one():
    rng = make_rng(5)
    for _ in range(10):
        out = rng_dirichlet(rng, [0.5, 1.5, 2.0])
        assert abs(out.sum() - 1.0) < 1e-12
        assert np.all(out >= 0)


def test_dirichlet_concentration_limit():
    rng = make_rng(6)
    draws = np.array([rng_dirichlet(rng, [1000.0] * 5) for _ in range(100)])
    assert np.max(np.abs(draws.mean(axis=0) - 0.2)) < 0.05


def test_dirichlet_sparse_small_alpha():
    rng = make_rng(7)
    maxes = [rng_dirichlet(rng, [0.1, 0.1]).max() for _ in range(1000)]
    assert np.mean(maxes) > 0.8


def test_dirichlet_nonpositive_raises():
    with pytest.raises(ParameterError):
        rng_dirichlet(make_rng(0), [1.0, 0.0])
