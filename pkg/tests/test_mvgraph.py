import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from spsmvg.errors import DegenerateViewError
from spsmvg.mvgraph import apply_threshold, build_adjacency, build_affinity, cosine_sim, normalize

view_matrices = arrays(
    np.float64,
    st.tuples(st.integers(2, 6), st.integers(2, 8)),
    elements=st.floats(-100, 100),
).filter(lambda V: bool(np.all(np.linalg.norm(V, axis=1) > 1e-6)))


def test_cosine_self_similarity():
    assert cosine_sim([3.0, -4.0], [3.0, -4.0]) == pytest.approx(1.0)


def test_cosine_orthogonal():
    assert cosine_sim([1.0, 0.0], [0.0, 1.0]) == 0.0


def test_cosine_hand_value():
    assert cosine_sim([1.0, 0.0], [1.0, 1.0]) == pytest.approx(1 / math.sqrt(2))


def test_cosine_zero_norm_rejected():
    with pytest.raises(DegenerateViewError):
        cosine_sim([0.0, 0.0], [1.0, 0.0])


def test_affinity_identical_rows():
    A = build_affinity(np.array([[1.0, 2.0], [1.0, 2.0]]))
    np.testing.assert_allclose(A, 0.5)


def test_affinity_softmax_row_value():
    # rows: one view orthogonal to two identical others -> sims [1, 0, 0]
    V = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 1.0]])
    A = build_affinity(V)
    np.testing.assert_allclose(A[0], [0.5761, 0.2119, 0.2119], atol=1e-4)


@given(view_matrices)
@settings(max_examples=50)
def test_affinity_rows_sum_to_one(V):
    A = build_affinity(V)
    np.testing.assert_allclose(A.sum(axis=1), 1.0, atol=1e-9)
    assert np.all(A > 0) and np.all(A < 1)


@given(view_matrices)
@settings(max_examples=50)
def test_affinity_scale_invariance(V):
    np.testing.assert_allclose(build_affinity(V), build_affinity(7.0 * V), atol=1e-12)


def test_threshold_noop_at_zero():
    A = build_affinity(np.array([[1.0, 0.0], [0.3, 1.0]]))
    np.testing.assert_array_equal(apply_threshold(A, 0.0), A)


def test_threshold_keeps_central_and_diagonal():
    A = np.array(
        [[0.5, 0.25, 0.25], [0.25, 0.5, 0.25], [0.25, 0.25, 0.5]]
    )
    out = apply_threshold(A, 0.3, central_index=0)
    # central row/column and diagonal survive; the rest fall below 0.3
    expected = np.array(
        [[0.5, 0.25, 0.25], [0.25, 0.5, 0.0], [0.25, 0.0, 0.5]]
    )
    np.testing.assert_array_equal(out, expected)


def test_threshold_limiting_case():
    A = build_affinity(np.random.default_rng(0).normal(size=(4, 5)))
    out = apply_threshold(A, 0.999999, central_index=0)
    mask = out != 0
    expected = np.zeros((4, 4), dtype=bool)
    expected[0, :] = expected[:, 0] = True
    np.fill_diagonal(expected, True)
    np.testing.assert_array_equal(mask, expected)


def test_threshold_rejects_bad_lambda():
    with pytest.raises(ValueError):
        apply_threshold(np.eye(2), 1.0)


def test_normalize_single_node():
    np.testing.assert_allclose(normalize(np.array([[1.0]])), [[1.0]])


def test_normalize_hand_example():
    # A_bar with zero diagonal and off-diagonal 1: A_tilde = ones(2,2), D=2
    A_thr = np.array([[0.0, 1.0], [1.0, 0.0]])
    np.testing.assert_allclose(normalize(A_thr), [[0.5, 0.5], [0.5, 0.5]])


@given(view_matrices, st.sampled_from([0.0, 0.25, 0.9]))
@settings(max_examples=50)
def test_normalize_symmetric_positive_diagonal(V, lam):
    S = build_adjacency(V, lam)
    np.testing.assert_allclose(S, S.T, atol=1e-9)
    assert np.all(np.isfinite(S))
    assert np.all(np.diag(S) > 0) and np.all(np.diag(S) <= 1)


@given(view_matrices)
@settings(max_examples=50)
def test_central_node_never_disconnected(V):
    l = V.shape[0]
    A = build_affinity(V)
    for lam in (0.0, 1.0 / l, 0.9):
        out = apply_threshold(A, lam, central_index=0)
        assert np.all(out[0, :] > 0) and np.all(out[:, 0] > 0)
