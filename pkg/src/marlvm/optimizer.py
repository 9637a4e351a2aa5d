"""Alternating magnitude/direction optimization of a regularized objective.

Any model whose parameters are a component matrix ``A`` can be trained by
maximizing ``L(A) + lam * omega(A)``. Writing ``A = diag(g) @ A_unit``, the
optimizer alternates between

* a magnitude step: projected gradient ascent on ``L(diag(g) A_unit)`` over
  ``g >= g_floor``;
* a direction step: projected gradient ascent on
  ``L(diag(g) A_unit) + lam * surrogate(A_unit)`` with unit-norm rows.

Deterministic models use Armijo backtracking, so every accepted step is
non-decreasing. Stochastic models (``model.stochastic = True``) use fixed
steps.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from marlvm.errors import DependentRowsError, InvalidArgumentError, NumericalFailureError
from marlvm.linalg import DEPENDENCE_TOL, as_components, gram_det, project_rows_unit
from marlvm.regularizer import SurrogateConfig, surrogate, surrogate_gradient

log = logging.getLogger(__name__)

ARMIJO_C = 1e-4
MAX_PERTURB = 5
PERTURB_SCALE = 1e-6


class LossModel:
    """Objective to maximize, as a function of a ``(K, D)`` component matrix."""

    stochastic = False

    def objective(self, A):
        raise NotImplementedError

    def gradient(self, A):
        raise NotImplementedError


class ZeroLoss(LossModel):
    """``L == 0``: the optimizer then maximizes the regularizer alone."""

    def objective(self, A):
        return 0.0

    def gradient(self, A):
        return np.zeros_like(np.asarray(A, dtype=float))


class FunctionLoss(LossModel):
    def __init__(self, objective, gradient, stochastic=False):
        self._objective = objective
        self._gradient = gradient
        self.stochastic = stochastic

    def objective(self, A):
        return float(self._objective(A))

    def gradient(self, A):
        return np.asarray(self._gradient(A), dtype=float)


@dataclass
class OptimizerConfig:
    lam: float = 0.0
    gamma: float = 1.0
    outer_iters: int = 100
    inner_g_iters: int = 50
    inner_a_iters: int = 50
    step_g: float = 1.0
    step_a: float = 1.0
    backtrack: float = 0.5
    max_halvings: int = 30
    g_floor: float = 1e-8
    rel_tol: float = 1e-6
    seed: int = 0
    det_clamp: float = 1e-6

    def __post_init__(self):
        if self.lam < 0:
            raise InvalidArgumentError("lam must be non-negative")
        if not self.g_floor > 0:
            raise InvalidArgumentError("g_floor must be positive")
        if not (self.step_g > 0 and self.step_a > 0):
            raise InvalidArgumentError("step sizes must be positive")
        if not 0 < self.backtrack < 1:
            raise InvalidArgumentError("backtrack factor must lie in (0, 1)")
        self.surrogate_cfg = SurrogateConfig(self.gamma, self.det_clamp)


@dataclass
class OptimizeResult:
    A: np.ndarray
    trace: list = field(default_factory=list)
    converged: bool = False


def split_magnitude_direction(A):
    """Return ``(g, A_unit)`` with ``A == diag(g) @ A_unit``."""
    A = as_components(A)
    A_unit = project_rows_unit(A)
    return np.linalg.norm(A, axis=1), A_unit


def _finite(value, what):
    if not np.isfinite(value):
        raise NumericalFailureError(f"non-finite {what}")
    return value


def _mar_active(K, D, lam):
    if lam == 0:
        return False
    if K < 2:
        log.warning("K=%d < 2: mutual angular regularizer disabled", K)
        return False
    if K > D:
        raise InvalidArgumentError(f"surrogate needs K <= D (got K={K}, D={D})")
    return True


def g_step(model, A_unit, g0, cfg):
    """Ascend ``L(diag(g) A_unit)`` over ``g >= g_floor``."""
    A_unit = np.asarray(A_unit, dtype=float)
    g = np.maximum(np.asarray(g0, dtype=float), cfg.g_floor)

    def value(gv):
        return _finite(model.objective(gv[:, None] * A_unit), "objective")

    def grad(gv):
        return np.sum(model.gradient(gv[:, None] * A_unit) * A_unit, axis=1)

    if model.stochastic:
        for _ in range(cfg.inner_g_iters):
            g = np.maximum(g + cfg.step_g * grad(g), cfg.g_floor)
        return g

    f = value(g)
    for _ in range(cfg.inner_g_iters):
        d = grad(g)
        step = cfg.step_g
        for _ in range(cfg.max_halvings + 1):
            cand = np.maximum(g + step * d, cfg.g_floor)
            delta = cand - g
            if not np.any(delta):
                return g
            fc = model.objective(cand[:, None] * A_unit)
            if np.isfinite(fc) and fc >= f + ARMIJO_C * max(float(d @ delta), 0.0):
                g, f = cand, fc
                break
            step *= cfg.backtrack
        else:
            break
    return g


def flip_collapsed_rows(model, g, A_unit, cfg):
    """Negate directions whose magnitude sits on the floor but wants to go
    below zero. Row sign does not change the regularizer, so this only
    lets ``g`` regrow through the positivity constraint."""
    at_floor = g <= cfg.g_floor * (1.0 + 1e-9)
    if not np.any(at_floor):
        return A_unit
    dg = np.sum(model.gradient(g[:, None] * A_unit) * A_unit, axis=1)
    flip = at_floor & (dg < 0)
    if not np.any(flip):
        return A_unit
    cand = A_unit.copy()
    cand[flip] *= -1.0
    if model.objective(g[:, None] * cand) >= model.objective(g[:, None] * A_unit):
        return cand
    return A_unit


def perturb_until_independent(A_unit, rng):
    A = A_unit
    if A.shape[0] > A.shape[1]:
        raise NumericalFailureError(f"{A.shape[0]} rows in {A.shape[1]} dimensions are always dependent")
    for _ in range(MAX_PERTURB):
        if gram_det(A) > DEPENDENCE_TOL ** 2:
            return A
        A = project_rows_unit(A + PERTURB_SCALE * rng.standard_normal(A.shape))
    if gram_det(A) > DEPENDENCE_TOL ** 2:
        return A
    raise NumericalFailureError("component rows remain linearly dependent after perturbation")


def a_step(model, g, A_unit0, cfg, rng=None):
    """Ascend ``L(diag(g) A_unit) + lam * surrogate(A_unit)`` on unit rows."""
    g = np.asarray(g, dtype=float)
    A = as_components(A_unit0)
    K, D = A.shape
    use_mar = _mar_active(K, D, cfg.lam)
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    if use_mar:
        A = perturb_until_independent(A, rng)

    def value(Au):
        f = model.objective(g[:, None] * Au)
        if use_mar:
            f += cfg.lam * surrogate(Au, cfg.gamma)
        return f

    def grad(Au):
        G = g[:, None] * model.gradient(g[:, None] * Au)
        if use_mar:
            G = G + cfg.lam * surrogate_gradient(Au, cfg.surrogate_cfg)
        return G

    if model.stochastic:
        for _ in range(cfg.inner_a_iters):
            A = project_rows_unit(A + cfg.step_a * grad(A))
            if use_mar:
                A = perturb_until_independent(A, rng)
        return A

    f = _finite(value(A), "objective")
    for _ in range(cfg.inner_a_iters):
        d = grad(A)
        step = cfg.step_a
        for _ in range(cfg.max_halvings + 1):
            try:
                cand = project_rows_unit(A + step * d)
                delta = cand - A
                if not np.any(delta):
                    return A
                fc = value(cand)
            except DependentRowsError:
                fc = -math.inf
            if np.isfinite(fc) and fc >= f + ARMIJO_C * max(float(np.sum(d * delta)), 0.0):
                A, f = cand, fc
                break
            step *= cfg.backtrack
        else:
            break
    return A


def total_objective(model, g, A_unit, cfg):
    """``L(diag(g) A_unit) + lam * surrogate(A_unit)`` (the traced quantity)."""
    K, D = A_unit.shape
    f = model.objective(g[:, None] * A_unit)
    if _mar_active(K, D, cfg.lam):
        f += cfg.lam * surrogate(A_unit, cfg.gamma)
    return float(f)


def optimize(model, A0, cfg=None):
    """Run the alternating scheme from ``A0``.

    Stops when the relative change of the traced objective drops below
    ``cfg.rel_tol`` or after ``cfg.outer_iters`` rounds. The trace holds one
    objective value per completed round.
    """
    cfg = cfg or OptimizerConfig()
    A0 = as_components(A0)
    if cfg.outer_iters <= 0:
        return OptimizeResult(A=A0.copy(), trace=[], converged=False)
    rng = np.random.default_rng(cfg.seed)
    g, A_unit = split_magnitude_direction(A0)
    g = np.maximum(g, cfg.g_floor)
    trace = []
    converged = False
    prev = None
    for _ in range(cfg.outer_iters):
        g = g_step(model, A_unit, g, cfg)
        if not model.stochastic:
            A_unit = flip_collapsed_rows(model, g, A_unit, cfg)
        A_unit = a_step(model, g, A_unit, cfg, rng)
        cur = _finite(total_objective(model, g, A_unit, cfg), "objective")
        trace.append(cur)
        if prev is not None and abs(cur - prev) <= cfg.rel_tol * max(abs(prev), 1e-12):
            converged = True
            break
        prev = cur
    return OptimizeResult(A=g[:, None] * A_unit, trace=trace, converged=converged)
