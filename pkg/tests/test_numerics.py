import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import array_shapes, arrays

from spsmvg.errors import DimensionError, TrainingDivergenceError
from spsmvg.numerics import (
    ParamTensor,
    finite_diff_grad,
    matmul,
    relative_error,
    relu,
    relu_backward,
    sigmoid,
    sigmoid_backward,
    softmax_row,
    softmax_row_backward,
)

finite_matrices = arrays(
    np.float64,
    array_shapes(min_dims=2, max_dims=2, min_side=1, max_side=6),
    elements=st.floats(-1e6, 1e6),
)


def test_matmul_identity():
    m = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(matmul(np.eye(2), m), m)


def test_matmul_hand_example():
    out = matmul(np.array([[1.0, 2.0], [3.0, 4.0]]), np.array([[1.0], [1.0]]))
    np.testing.assert_array_equal(out, [[3.0], [7.0]])


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 2\)"):
        matmul(np.zeros((2, 3)), np.zeros((2, 2)))


def test_relu_sign_split():
    np.testing.assert_array_equal(relu(np.array([[-1.0, 2.0]])), [[0.0, 2.0]])


def test_relu_identity_on_nonnegative():
    m = np.array([[0.0, 1.0, 3.5]])
    np.testing.assert_array_equal(relu(m), m)


def test_relu_backward_mask():
    grad = relu_backward(np.array([[1.0, 1.0]]), np.array([[-1.0, 2.0]]))
    np.testing.assert_array_equal(grad, [[0.0, 1.0]])


def test_relu_subgradient_at_zero_is_zero():
    assert relu_backward(np.array([1.0]), np.array([0.0]))[0] == 0.0


def test_sigmoid_at_zero():
    assert sigmoid(np.array([0.0]))[0] == 0.5


def test_sigmoid_scalar_value():
    assert sigmoid(np.array([2.0]))[0] == pytest.approx(0.8807970779778823, abs=1e-12)


@given(st.floats(-700, 700))
def test_sigmoid_symmetry(x):
    s = sigmoid(np.array([x, -x]))
    assert s.sum() == pytest.approx(1.0, abs=1e-12)


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_sigmoid_finite_and_in_unit_interval(x):
    s = sigmoid(np.array([x]))[0]
    assert np.isfinite(s) and 0.0 <= s <= 1.0


def test_softmax_equal_entries():
    out = softmax_row(np.zeros((1, 5)))
    np.testing.assert_allclose(out, 0.2)


def test_softmax_scalar_values():
    out = softmax_row(np.array([[1.0, 0.0, 0.0]]))
    np.testing.assert_allclose(out, [[0.5761, 0.2119, 0.2119]], atol=1e-4)


@given(finite_matrices)
def test_softmax_rows_sum_to_one(m):
    out = softmax_row(m)
    np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-9)
    assert np.all(out >= 0) and np.all(out <= 1.0)
    assert np.all(np.isfinite(out))


@given(
    arrays(
        np.float64,
        array_shapes(min_dims=2, max_dims=2, min_side=1, max_side=6),
        elements=st.floats(-50, 50),
    )
)
def test_softmax_strictly_positive_without_underflow(m):
    assert np.all(softmax_row(m) > 0)


@given(finite_matrices, st.floats(-1e6, 1e6))
def test_softmax_shift_invariance(m, c):
    np.testing.assert_allclose(softmax_row(m + c), softmax_row(m), atol=1e-12)


def test_softmax_backward_matches_finite_differences():
    rng = np.random.default_rng(3)
    x = ParamTensor(rng.normal(size=(3, 4)))
    up = rng.normal(size=(3, 4))

    def loss():
        return float((softmax_row(x.value) * up).sum())

    fd = finite_diff_grad(loss, [("x", x)])["x"]
    analytic = softmax_row_backward(up, softmax_row(x.value))
    assert relative_error(analytic, fd) < 1e-6


def test_sigmoid_backward_matches_finite_differences():
    rng = np.random.default_rng(4)
    x = ParamTensor(rng.normal(size=(2, 3)))
    up = rng.normal(size=(2, 3))

    def loss():
        return float((sigmoid(x.value) * up).sum())

    fd = finite_diff_grad(loss, [("x", x)])["x"]
    analytic = sigmoid_backward(up, sigmoid(x.value))
    assert relative_error(analytic, fd) < 1e-6


def test_finite_diff_quadratic():
    theta = ParamTensor(np.array([[3.0]]))
    fd = finite_diff_grad(lambda: float(theta.value[0, 0] ** 2), [("t", theta)])
    assert fd["t"][0, 0] == pytest.approx(6.0, rel=1e-6)


def test_finite_diff_constant_loss():
    theta = ParamTensor(np.ones((2, 2)))
    fd = finite_diff_grad(lambda: 1.0, [("t", theta)])
    np.testing.assert_array_equal(fd["t"], 0.0)


def test_finite_diff_rejects_nonpositive_eps():
    with pytest.raises(ValueError):
        finite_diff_grad(lambda: 0.0, [], eps=0.0)


def test_finite_diff_nonfinite_loss_names_parameter():
    theta = ParamTensor(np.array([0.0]))

    def loss():
        return float("nan")

    with pytest.raises(TrainingDivergenceError, match=r"t\[0\]"):
        finite_diff_grad(loss, [("t", theta)])


def test_param_tensor_shape_guard():
    with pytest.raises(DimensionError):
        ParamTensor(np.zeros((2, 2)), np.zeros((3, 2)))


def test_param_tensor_zero_grad():
    t = ParamTensor(np.ones(3), np.ones(3))
    t.zero_grad()
    np.testing.assert_array_equal(t.grad, 0.0)
