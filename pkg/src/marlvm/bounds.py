"""Generalization-error bound evaluators for one-hidden-layer (and deeper)
networks whose hidden units have pairwise angles at least ``theta``.

Setting: ``f(x) = sum_j alpha_j h(w_j . x)`` with ``||x|| <= C1``,
``|y| <= C2``, ``||w_j|| <= C3``, ``||alpha|| <= C4``, ``h`` L-Lipschitz and
``h0 = |h(0)|``. The angle lower bound holds with probability ``tau``.

All functions are pure. The estimation bounds shrink as ``theta`` grows and
the approximation bound grows with it.
"""

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from marlvm.errors import InvalidArgumentError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class BoundInputs:
    m: int = 4
    n: int = 1000
    L: float = 0.25
    C1: float = 1.0
    C2: float = 1.0
    C3: float = 1.0
    C4: float = 1.0
    h0: float = 0.5
    theta: float = math.pi / 4
    tau: float = 0.9
    delta: float = 0.05
    gamma_moments: tuple = None
    C: float = 1.0
    Kclasses: int = 2

    def __post_init__(self):
        if self.m < 1 or self.n < 1:
            raise InvalidArgumentError("m and n must be positive")
        for name in ("L", "C1", "C2", "C3", "C4", "C"):
            if not getattr(self, name) > 0:
                raise InvalidArgumentError(f"{name} must be positive")
        if self.h0 < 0:
            raise InvalidArgumentError("h0 is |h(0)| and must be non-negative")
        if not 0 < self.tau <= 1:
            raise InvalidArgumentError("tau must lie in (0, 1]")
        if not 0 < self.delta < 1:
            raise InvalidArgumentError("delta must lie in (0, 1)")
        if not 0 <= self.theta <= math.pi / 2:
            raise InvalidArgumentError("theta must lie in [0, pi/2]")
        if self.Kclasses < 2:
            raise InvalidArgumentError("Kclasses must be at least 2")

    def with_theta(self, theta):
        return replace(self, theta=theta)


@dataclass(frozen=True)
class Layer:
    m: int
    C3: float
    theta: float
    tau: float = 1.0

    def __post_init__(self):
        if self.m < 1 or not self.C3 > 0:
            raise InvalidArgumentError("layer needs m >= 1 and C3 > 0")
        if not 0 <= self.theta <= math.pi / 2:
            raise InvalidArgumentError("theta must lie in [0, pi/2]")
        if not 0 < self.tau <= 1:
            raise InvalidArgumentError("tau must lie in (0, 1]")


@dataclass(frozen=True)
class LayerSpec:
    """Hidden layers ``p = 0..P-1`` plus the weight-norm bound ``C_out`` of the
    output unit (``C3^P`` in the recursion; ``C4`` for a single layer)."""

    layers: tuple
    C_out: float

    def __post_init__(self):
        if len(self.layers) == 0:
            raise InvalidArgumentError("LayerSpec needs at least one hidden layer")
        object.__setattr__(self, "layers", tuple(self.layers))
        if not self.C_out > 0:
            raise InvalidArgumentError("C_out must be positive")

    @property
    def P(self):
        return len(self.layers)

    @classmethod
    def from_inputs(cls, inputs):
        """The single-layer network described by ``inputs``."""
        return cls((Layer(inputs.m, inputs.C3, inputs.theta, inputs.tau),), inputs.C4)


def theta_lower_bound(mu, sigma, tau):
    """Chebyshev angle bound ``mu - sqrt(sigma / (1 - tau))``.

    ``sigma`` is the variance. The result may be negative; it is returned as-is
    with a warning so callers can decide how to clamp.
    """
    if sigma < 0:
        raise InvalidArgumentError("sigma (a variance) must be non-negative")
    if not 0 < tau < 1:
        raise InvalidArgumentError("tau must lie in (0, 1)")
    theta = mu - math.sqrt(sigma / (1.0 - tau))
    if theta < 0:
        log.warning("angle lower bound %.6g is negative", theta)
    return theta


def _spread(m, theta):
    # (m - 1) cos(theta) + 1
    return (m - 1) * math.cos(theta) + 1


def j_single(inputs):
    """Squared sup-norm bound ``J`` on the network output."""
    m, L, C1, C3, C4, h0 = inputs.m, inputs.L, inputs.C1, inputs.C3, inputs.C4, inputs.h0
    c = _spread(m, inputs.theta)
    return (m * C4**2 * h0**2
            + L**2 * C4**2 * c * (C1**2 * C3**2)
            + 2 * math.sqrt(m) * C4**2 * L * h0 * (math.sqrt(c) * (C1 * C3)))


def j_multilayer(spec, L, C1, h0):
    """``J^P`` by the layer recursion, starting from ``J^0 = C1^2 (C3^0)^2``.

    The recursion carries ``sqrt(J^p)`` alongside ``J^p`` so that a single
    layer reproduces :func:`j_single` exactly.
    """
    first = spec.layers[0]
    J = C1**2 * first.C3**2
    root = C1 * first.C3
    out_bounds = [layer.C3 for layer in spec.layers[1:]] + [spec.C_out]
    for prev, Cp in zip(spec.layers, out_bounds):
        c = _spread(prev.m, prev.theta)
        J = (prev.m * Cp**2 * h0**2
             + L**2 * Cp**2 * c * J
             + 2 * math.sqrt(prev.m) * Cp**2 * L * h0 * (math.sqrt(c) * root))
        root = math.sqrt(J)
    return J


def _confidence(delta, n):
    return math.sqrt(2 * math.log(2 / delta) / n)


def _complexity_single(inputs):
    # (2 L C1 C3 C4 + C4 |h(0)|) sqrt(m), arranged like the multilayer sum
    sm = math.sqrt(inputs.m)
    return 2 * inputs.L * inputs.C1 * inputs.C4 * (sm * inputs.C3) + inputs.h0 * (sm * inputs.C4)


def _complexity_multi(spec, L, C1, h0):
    P = spec.P
    bounds = [layer.C3 for layer in spec.layers] + [spec.C_out]
    prod = 1.0
    for p in range(P):
        prod *= math.sqrt(spec.layers[p].m) * bounds[p]
    lead = (2 * L) ** P * C1 * bounds[P] * prod
    tail = 0.0
    for p in range(P):
        inner = 1.0
        for j in range(p, P):
            inner *= math.sqrt(spec.layers[j].m) * bounds[j + 1]
        tail += (2 * L) ** (P - 1 - p) * inner
    return lead + h0 * tail


def _squared_loss_bound(J, C2, complexity, n, delta):
    s = math.sqrt(J) + C2
    return 8 * s * complexity / math.sqrt(n) + s**2 * _confidence(delta, n)


def estimation_bound_squared(inputs):
    """Squared-loss estimation error bound and the probability it holds with."""
    J = j_single(inputs)
    bound = _squared_loss_bound(J, inputs.C2, _complexity_single(inputs), inputs.n, inputs.delta)
    return bound, (1 - inputs.delta) * inputs.tau


def estimation_bound_multilayer(spec, inputs):
    """Squared-loss bound for ``P`` hidden layers.

    ``inputs`` supplies ``n, L, C1, C2, h0, delta``; the per-layer quantities
    come from ``spec``.
    """
    J = j_multilayer(spec, inputs.L, inputs.C1, inputs.h0)
    comp = _complexity_multi(spec, inputs.L, inputs.C1, inputs.h0)
    bound = _squared_loss_bound(J, inputs.C2, comp, inputs.n, inputs.delta)
    prob = 1.0
    for layer in spec.layers:
        prob *= layer.tau
    return bound, (1 - inputs.delta) * prob


def estimation_bound_logistic(inputs):
    """Bound for the logistic loss ``log(1 + exp(-y f(x)))``, ``y in {-1, 1}``."""
    r = math.sqrt(j_single(inputs))
    lip = 4 / (1 + math.exp(-r))
    bound = (lip * _complexity_single(inputs) / math.sqrt(inputs.n)
             + float(np.logaddexp(0.0, r)) * _confidence(inputs.delta, inputs.n))
    return bound, (1 - inputs.delta) * inputs.tau


def estimation_bound_hinge(inputs):
    """Bound for the hinge loss ``max(0, 1 - y f(x))``."""
    r = math.sqrt(j_single(inputs))
    bound = (4 * _complexity_single(inputs) / math.sqrt(inputs.n)
             + (1 + r) * _confidence(inputs.delta, inputs.n))
    return bound, (1 - inputs.delta) * inputs.tau


def cross_entropy_constants(inputs):
    """``(lipschitz, loss_bound)`` of softmax cross-entropy with ``K`` classes.

    The loss bound ``log(1 + (K-1) exp(2 sqrt(J)))`` is evaluated in log space.
    """
    K = inputs.Kclasses
    r2 = 2 * math.sqrt(j_single(inputs))
    lipschitz = (K - 1) / (K - 1 + math.exp(-r2))
    loss_bound = float(np.logaddexp(0.0, math.log(K - 1) + r2))
    return lipschitz, loss_bound


def max_units_for_angle(theta):
    """Largest ``m`` allowed at angle ``theta``: ``2 (floor((pi/2 - theta)/theta) + 1)``.

    Unbounded (``inf``) at ``theta = 0``.
    """
    ratio = (math.pi / 2 - theta) / theta if theta > 0 else math.inf
    if math.isinf(ratio):  # theta = 0 or subnormal
        return math.inf
    return 2 * (math.floor(ratio) + 1)


def approximation_conditions(inputs):
    """The three preconditions of the approximation bound, by name."""
    C1C3 = inputs.C1 * inputs.C3
    return {
        "C1C3_at_least_1": C1C3 >= 1,
        "C4_large_enough": inputs.C4 >= 2 * math.sqrt(inputs.m) * inputs.C,
        "m_within_cap": inputs.m <= max_units_for_angle(inputs.theta),
    }


def approximation_bound(inputs):
    """Approximation error bound for Barron-class targets and whether its
    preconditions hold.

    ``inputs.n`` is used inside the Barron term ``1/sqrt(n)``; its meaning
    there is ambiguous (see the README), so it is an explicit input.
    """
    C, C1C3, m = inputs.C, inputs.C1 * inputs.C3, inputs.m
    theta_p = min(3 * m * inputs.theta, math.pi)
    barron = 2 * C * (1 / math.sqrt(inputs.n) + (1 + 2 * math.log(C1C3)) / C1C3)
    bound = barron + 4 * m * C * C1C3 * math.sin(theta_p / 2)
    return bound, all(approximation_conditions(inputs).values())


ESTIMATORS = {
    "squared": estimation_bound_squared,
    "logistic": estimation_bound_logistic,
    "hinge": estimation_bound_hinge,
}


@dataclass
class ScanRow:
    theta: float
    estimation: float
    approximation: float
    total: float
    feasible: bool


@dataclass
class ScanTable:
    rows: list = field(default_factory=list)

    def column(self, name):
        return np.array([getattr(r, name) for r in self.rows], dtype=float)

    def best_index(self, feasible_only=True):
        """Row index minimizing ``total`` (ties go to the smaller theta)."""
        idx = [i for i, r in enumerate(self.rows) if r.feasible or not feasible_only]
        if not idx:
            return None
        return min(idx, key=lambda i: (self.rows[i].total, i))

    def as_dicts(self):
        return [r.__dict__.copy() for r in self.rows]


def tradeoff_scan(inputs, theta_grid, loss="squared"):
    """Estimation and approximation bounds across an increasing ``theta`` grid.

    Raises if the estimation column increases or the approximation column
    decreases anywhere along the grid (up to rounding).
    """
    if loss not in ESTIMATORS:
        raise InvalidArgumentError(f"unknown loss {loss!r}")
    grid = [float(t) for t in theta_grid]
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise InvalidArgumentError("theta grid must be strictly increasing")
    table = ScanTable()
    for t in grid:
        point = inputs.with_theta(t)
        est, _ = ESTIMATORS[loss](point)
        app, ok = approximation_bound(point)
        table.rows.append(ScanRow(t, est, app, est + app, ok))
    est, app = table.column("estimation"), table.column("approximation")
    slack = 1e-12 * max(1.0, float(np.max(np.abs(np.r_[est, app]), initial=0.0)))
    if np.any(np.diff(est) > slack) or np.any(np.diff(app) < -slack):
        raise AssertionError("bound monotonicity in theta violated")
    return table
