"""Dense linear-algebra primitives on component matrices.

A component matrix is a ``(K, D)`` array whose rows are the component
vectors. Everything here is a pure function of its arguments.
"""

from dataclasses import dataclass

import numpy as np

from marlvm.errors import DegenerateRowError, DependentRowsError, InvalidArgumentError

UNIT_TOL = 1e-12
HALF_PI = 0.5 * np.pi
DEPENDENCE_TOL = 1e-10
ZERO_ROW_TOL = 1e-12


def as_components(A):
    """Validate and return ``A`` as a finite 2-D float array."""
    A = np.asarray(A, dtype=float)
    if A.ndim == 1:
        A = A[None, :]
    if A.ndim != 2 or A.shape[0] < 1 or A.shape[1] < 1:
        raise InvalidArgumentError(f"expected a non-empty K x D matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InvalidArgumentError("component matrix has non-finite entries")
    return A


def check_unit_rows(A, tol=UNIT_TOL):
    norms = np.linalg.norm(A, axis=1)
    worst = np.max(np.abs(norms - 1.0))
    if worst > tol:
        raise InvalidArgumentError(f"rows must be unit-norm (max deviation {worst:.3e})")


def _unit(v):
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if not np.isfinite(n):
        raise InvalidArgumentError("non-finite input vector")
    if n == 0.0:
        raise InvalidArgumentError("angle undefined for a zero vector")
    return v / n


def _kahan_angle(u, v):
    # 2 atan2(|u - v|, |u + v|) for unit u, v: accurate over the whole range,
    # unlike arccos of the dot product near 0 and pi
    return 2.0 * np.arctan2(np.linalg.norm(u - v, axis=-1), np.linalg.norm(u + v, axis=-1))


def non_obtuse_angle(x, y):
    """Angle in ``[0, pi/2]`` between the lines spanned by ``x`` and ``y``."""
    u, v = _unit(x), _unit(y)
    if u.shape != v.shape:
        raise InvalidArgumentError("vectors differ in dimension")
    if float(u @ v) < 0:
        v = -v
    return float(min(_kahan_angle(u, v), HALF_PI))


def signed_angle(x, y):
    """Ordinary angle between ``x`` and ``y`` in ``[0, pi]``."""
    u, v = _unit(x), _unit(y)
    if u.shape != v.shape:
        raise InvalidArgumentError("vectors differ in dimension")
    return float(_kahan_angle(u, v))


def signed_angles_rowwise(X, Y):
    """:func:`signed_angle` between matching rows of two ``(N, D)`` arrays."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if X.shape != Y.shape:
        raise InvalidArgumentError("row arrays must have the same shape")
    nx = np.linalg.norm(X, axis=1, keepdims=True)
    ny = np.linalg.norm(Y, axis=1, keepdims=True)
    if np.any(nx == 0.0) or np.any(ny == 0.0):
        raise InvalidArgumentError("angle undefined for a zero vector")
    return _kahan_angle(X / nx, Y / ny)


def pairwise_angles(A):
    """Non-obtuse angles between all unordered row pairs ``i < j``.

    Returned in ``np.triu_indices(K, 1)`` order.
    """
    A = as_components(A)
    norms = np.linalg.norm(A, axis=1)
    if np.any(norms <= ZERO_ROW_TOL):
        raise DegenerateRowError("zero row: pairwise angle undefined")
    U = A / norms[:, None]
    i, j = np.triu_indices(A.shape[0], 1)
    sign = np.where(np.einsum("ij,ij->i", U[i], U[j]) < 0, -1.0, 1.0)
    return np.minimum(_kahan_angle(U[i], sign[:, None] * U[j]), HALF_PI)


def row_gram(A):
    """``K x K`` matrix of row inner products."""
    A = as_components(A)
    M = A @ A.T
    return 0.5 * (M + M.T)


def _gram_det_from(M):
    try:
        L = np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        # not numerically positive definite: fall back to LU, report <= 0 as 0
        return max(float(np.linalg.det(M)), 0.0)
    return float(np.prod(np.diag(L)) ** 2)


def gram_det(A):
    """Determinant of the row Gram matrix (0 for dependent rows)."""
    return _gram_det_from(row_gram(A))


def project_rows_unit(A):
    """Scale every row to unit Euclidean norm."""
    A = as_components(A)
    norms = np.linalg.norm(A, axis=1)
    bad = np.flatnonzero(norms <= ZERO_ROW_TOL)
    if bad.size:
        raise DegenerateRowError(f"row {int(bad[0])} has near-zero norm; direction undefined")
    return A / norms[:, None]


@dataclass(frozen=True)
class OrthDecomposition:
    """Split of row ``i`` into a part in the span of the other rows and an
    orthogonal residual: ``a_i = parallel_part + residual_norm * residual_dir``.

    ``coefficients`` expresses ``parallel_part`` in the other rows (in their
    original order with row ``i`` skipped).
    """

    parallel_part: np.ndarray
    residual_norm: float
    residual_dir: np.ndarray
    coefficients: np.ndarray


def orth_decompose(A, i):
    A = as_components(A)
    K = A.shape[0]
    if not 0 <= i < K:
        raise InvalidArgumentError(f"row index {i} out of range for K={K}")
    a = A[i]
    others = np.delete(A, i, axis=0)
    if others.shape[0] == 0:
        coef = np.zeros(0)
        parallel = np.zeros_like(a)
    else:
        coef, *_ = np.linalg.lstsq(others.T, a, rcond=None)
        parallel = others.T @ coef
    residual = a - parallel
    l = float(np.linalg.norm(residual))
    if l < DEPENDENCE_TOL:
        raise DependentRowsError(f"row {i} lies in the span of the other rows")
    e = residual / l
    # e . a_i = l > 0 by construction, matching the positive sign convention
    return OrthDecomposition(parallel_part=parallel, residual_norm=l, residual_dir=e, coefficients=coef)
