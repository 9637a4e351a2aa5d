import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from marlvm.errors import DegenerateRowError, DependentRowsError, InvalidArgumentError
from marlvm.linalg import (
    gram_det,
    non_obtuse_angle,
    orth_decompose,
    pairwise_angles,
    project_rows_unit,
    row_gram,
    signed_angle,
    signed_angles_rowwise,
)
from strategies import unit_matrices, vectors


def test_non_obtuse_angle_examples():
    assert non_obtuse_angle([1, 0], [0, 1]) == pytest.approx(math.pi / 2)
    assert non_obtuse_angle([1, 0], [-1, 0]) == 0.0
    assert non_obtuse_angle([1, 0], [-1, 1]) == pytest.approx(math.pi / 4)
    assert non_obtuse_angle([1, 0], [1, math.sqrt(3)]) == pytest.approx(math.pi / 3)


def test_signed_angle_keeps_orientation():
    assert signed_angle([1, 0], [-1, 0]) == pytest.approx(math.pi)
    assert signed_angle([1, 0], [-1, 1]) == pytest.approx(3 * math.pi / 4)


def test_zero_vector_rejected():
    with pytest.raises(InvalidArgumentError):
        non_obtuse_angle([0, 0], [1, 0])
    with pytest.raises(DegenerateRowError):
        pairwise_angles([[0.0, 0.0], [1.0, 0.0]])
    with pytest.raises(DegenerateRowError):
        project_rows_unit([[0.0, 0.0], [1.0, 0.0]])


def test_non_finite_rejected():
    with pytest.raises(InvalidArgumentError):
        pairwise_angles([[np.nan, 1.0], [1.0, 0.0]])


@given(vectors, st.floats(1e-3, 1e3), st.floats(1e-3, 1e3), st.booleans(), st.booleans())
def test_angle_scale_and_sign_invariant(xy, s, t, fs, ft):
    x, y = xy
    s = -s if fs else s
    t = -t if ft else t
    a = non_obtuse_angle(x, y)
    assert 0.0 <= a <= math.pi / 2
    assert abs(non_obtuse_angle(s * x, t * y) - a) < 1e-7
    assert non_obtuse_angle(y, x) == pytest.approx(a, abs=1e-12)


def test_pairwise_order():
    A = np.array([[1.0, 0, 0], [0, 1.0, 0], [1.0, 1.0, 0]])
    np.testing.assert_allclose(pairwise_angles(A), [math.pi / 2, math.pi / 4, math.pi / 4])


def test_gram_det_examples():
    assert gram_det(np.eye(3)) == pytest.approx(1.0)
    a = 0.7
    A = np.array([[1.0, 0.0], [math.cos(a), math.sin(a)]])
    assert gram_det(A) == pytest.approx(math.sin(a) ** 2)
    assert gram_det([[1.0, 0.0], [2.0, 0.0]]) == 0.0
    # more rows than dimensions are always dependent
    assert gram_det(np.ones((3, 2)) + np.eye(3, 2)) == pytest.approx(0.0, abs=1e-12)


def test_row_gram_symmetric():
    A = np.random.default_rng(0).standard_normal((4, 6))
    M = row_gram(A)
    np.testing.assert_array_equal(M, M.T)
    np.testing.assert_allclose(M, A @ A.T)


@given(unit_matrices(k_min=1, k_max=8, d_max=8))
def test_gram_det_in_unit_interval(A):
    assert 0.0 <= gram_det(A) <= 1.0 + 1e-10


@given(unit_matrices(k_min=2, k_max=6, d_max=8))
def test_determinant_expansion(A):
    det = gram_det(A)
    for i in range(A.shape[0]):
        dec = orth_decompose(A, i)
        rest = gram_det(np.delete(A, i, axis=0))
        assert abs(det - rest * dec.residual_norm * float(dec.residual_dir @ A[i])) < 1e-8
        np.testing.assert_allclose(dec.parallel_part + dec.residual_norm * dec.residual_dir, A[i], atol=1e-10)
        # residual is orthogonal to every other row
        assert np.max(np.abs(np.delete(A, i, axis=0) @ dec.residual_dir)) < 1e-9


def test_orth_decompose_dependent_and_range():
    A = np.array([[1.0, 0.0], [1.0, 0.0]])
    with pytest.raises(DependentRowsError):
        orth_decompose(A, 0)
    with pytest.raises(InvalidArgumentError):
        orth_decompose(np.eye(2), 2)


def test_orth_decompose_single_row():
    dec = orth_decompose([[3.0, 4.0]], 0)
    assert dec.residual_norm == pytest.approx(5.0)
    np.testing.assert_allclose(dec.residual_dir, [0.6, 0.8])


def test_rowwise_signed_angles_match_scalar():
    rng = np.random.default_rng(0)
    X, Y = rng.standard_normal((2, 50, 4))
    ref = [signed_angle(x, y) for x, y in zip(X, Y)]
    np.testing.assert_allclose(signed_angles_rowwise(X, Y), ref, atol=1e-15)
    with pytest.raises(InvalidArgumentError):
        signed_angles_rowwise(X, Y[:, :3])
    with pytest.raises(InvalidArgumentError):
        signed_angles_rowwise(np.zeros((1, 2)), np.ones((1, 2)))


def test_small_angles_are_accurate():
    assert non_obtuse_angle([1.0, 0.0], [1.0, 1e-10]) == pytest.approx(1e-10, rel=1e-9)
    assert non_obtuse_angle([1.0, 0.0], [-1.0, 1e-10]) == pytest.approx(1e-10, rel=1e-9)
    assert signed_angle([1.0, 0.0], [-1.0, 1e-10]) == pytest.approx(math.pi - 1e-10, abs=1e-15)
    assert pairwise_angles([[1.0, 0.0], [1.0, 1e-10]])[0] == pytest.approx(1e-10, rel=1e-9)
