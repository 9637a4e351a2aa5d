"""Mutual angular regularizer, its determinant surrogate, and ascent steps.

The regularizer of a set of components is the mean of their pairwise
non-obtuse angles minus ``gamma`` times the variance of those angles::

    omega = mean(theta_ij) - gamma * var(theta_ij)

It is non-smooth, so optimization uses the smooth lower bound

    gamma_surrogate = g(det(Gram)),  g(x) = asin(sqrt x) - gamma * (pi/2 - asin(sqrt x))**2

which agrees with ``omega`` (both equal pi/2) when the rows are orthonormal.
"""

import math
from dataclasses import dataclass

import numpy as np

from marlvm.errors import DependentRowsError, InvalidArgumentError
from marlvm.linalg import (
    _gram_det_from,
    as_components,
    check_unit_rows,
    pairwise_angles,
    project_rows_unit,
    row_gram,
)

HALF_PI = 0.5 * math.pi


@dataclass(frozen=True)
class MarBreakdown:
    mean_angle: float
    angle_variance: float
    omega: float
    gamma: float


@dataclass(frozen=True)
class SurrogateConfig:
    gamma: float = 1.0
    det_clamp: float = 1e-6

    def __post_init__(self):
        if not self.gamma > 0:
            raise InvalidArgumentError("gamma must be positive")
        if not 0 < self.det_clamp < 0.5:
            raise InvalidArgumentError("det_clamp must lie in (0, 0.5)")


def mar_breakdown(A, gamma=1.0):
    """Mean angle, angle variance and regularizer value of the rows of ``A``.

    Uses all unordered pairs; the variance is the population variance.
    Row scale does not matter.
    """
    A = as_components(A)
    if A.shape[0] < 2:
        raise InvalidArgumentError("the regularizer needs at least two components")
    if not gamma > 0:
        raise InvalidArgumentError("gamma must be positive")
    theta = pairwise_angles(A)
    mean = float(np.mean(theta))
    var = float(np.mean((theta - mean) ** 2))
    return MarBreakdown(mean_angle=mean, angle_variance=var, omega=mean - gamma * var, gamma=float(gamma))


def _check_unit_interval(x):
    if not (-1e-12 <= x <= 1.0 + 1e-12):
        raise InvalidArgumentError(f"surrogate argument {x!r} outside [0, 1]")
    return min(max(x, 0.0), 1.0)


def surrogate_g(x, gamma=1.0):
    x = _check_unit_interval(float(x))
    s = math.asin(math.sqrt(x))
    return s - gamma * (HALF_PI - s) ** 2


def surrogate_g_prime(x, gamma=1.0):
    """Derivative of :func:`surrogate_g`; diverges at both ends of [0, 1]."""
    x = _check_unit_interval(float(x))
    s = math.asin(math.sqrt(x))
    return (1.0 + 2.0 * gamma * (HALF_PI - s)) / (2.0 * math.sqrt(x * (1.0 - x)))


def _checked_det(A_unit, require_unit=True):
    A = as_components(A_unit)
    if require_unit:
        check_unit_rows(A)
    K, D = A.shape
    if K > D:
        raise DependentRowsError(f"K={K} rows in D={D} dimensions cannot be independent")
    M = row_gram(A)
    # det of the unit-diagonal Gram: rows are unit up to rounding, and dropping
    # that rounding keeps asin(sqrt(det)) accurate next to det = 1
    d = np.sqrt(np.diag(M))
    C = M / np.outer(d, d)
    np.fill_diagonal(C, 1.0)
    det = _gram_det_from(C)
    if det <= 0.0:
        raise DependentRowsError("rows are linearly dependent (Gram determinant is 0)")
    return A, M, det


def surrogate(A_unit, gamma=1.0):
    """Smooth lower bound of the regularizer for unit, independent rows."""
    _, _, det = _checked_det(A_unit)
    return surrogate_g(min(det, 1.0), gamma)


def surrogate_gradient(A_unit, cfg=None):
    """Gradient of the surrogate w.r.t. the (unconstrained) row matrix.

    ``d det / dA = 2 det M^{-1} A`` with ``M`` the row Gram; the outer
    derivative is evaluated at det clamped into ``[eps, 1 - eps]``.
    Row ``i`` of the result is a positive multiple of the component of
    ``a_i`` orthogonal to the other rows.
    """
    cfg = cfg or SurrogateConfig()
    A, M, det = _checked_det(A_unit)
    clamped = min(max(det, cfg.det_clamp), 1.0 - cfg.det_clamp)
    scale = surrogate_g_prime(clamped, cfg.gamma) * 2.0 * det
    try:
        dual = np.linalg.solve(M, A)
    except np.linalg.LinAlgError as exc:
        raise DependentRowsError("singular Gram matrix") from exc
    return scale * dual


def ascent_step(A_unit, eta, cfg=None):
    """One projected gradient step on the surrogate: ``P(A + eta * G)``."""
    if eta < 0:
        raise InvalidArgumentError("step size must be non-negative")
    A = as_components(A_unit)
    if eta == 0:
        check_unit_rows(A)
        return A.copy()
    G = surrogate_gradient(A, cfg)
    return project_rows_unit(A + eta * G)
