"""One-hidden-layer network with diversified hidden units.

Classification model: ``p(y | x) = softmax(V sigmoid(W x + b) + c)``, trained
on mean cross-entropy minus ``lam * Gamma(rows of W, normalized)``. Because
the regularizer depends only on directions, its gradient is pushed through
the row normalization ``u = w / ||w||``: ``dGamma/dw = (G - (G.u) u) / ||w||``.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, log_softmax, softmax

from marlvm.errors import DependentRowsError, InvalidArgumentError, NumericalFailureError
from marlvm.linalg import pairwise_angles, project_rows_unit
from marlvm.regularizer import SurrogateConfig, mar_breakdown, surrogate, surrogate_gradient

log = logging.getLogger(__name__)

SIGMOID_LIPSCHITZ = 0.25
SIGMOID_AT_ZERO = 0.5


@dataclass
class MlpParams:
    hidden_W: np.ndarray
    hidden_b: np.ndarray
    out_W: np.ndarray
    out_b: np.ndarray

    def __post_init__(self):
        self.hidden_W = np.atleast_2d(np.asarray(self.hidden_W, dtype=float))
        m = self.hidden_W.shape[0]
        self.hidden_b = np.zeros(m) if self.hidden_b is None else np.asarray(self.hidden_b, dtype=float)
        self.out_W = np.atleast_2d(np.asarray(self.out_W, dtype=float))
        c = self.out_W.shape[0]
        self.out_b = np.zeros(c) if self.out_b is None else np.asarray(self.out_b, dtype=float)
        if self.hidden_b.shape != (m,) or self.out_W.shape[1] != m or self.out_b.shape != (c,):
            raise InvalidArgumentError("inconsistent layer shapes")
        if not all(np.all(np.isfinite(a)) for a in self.arrays()):
            raise InvalidArgumentError("parameters must be finite")

    @property
    def m(self):
        return self.hidden_W.shape[0]

    @property
    def d(self):
        return self.hidden_W.shape[1]

    @property
    def n_classes(self):
        return self.out_W.shape[0]

    def arrays(self):
        return self.hidden_W, self.hidden_b, self.out_W, self.out_b

    def copy(self):
        return MlpParams(*(a.copy() for a in self.arrays()))

    @classmethod
    def zeros(cls, d, m, c):
        return cls(np.zeros((m, d)), np.zeros(m), np.zeros((c, m)), np.zeros(c))


def _inputs(params, X):
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != params.d:
        raise InvalidArgumentError(f"inputs have d={X.shape[1]}, network expects d={params.d}")
    return X, single


def _logits(params, X):
    H = expit(X @ params.hidden_W.T + params.hidden_b)
    return H, H @ params.out_W.T + params.out_b


def forward(params, X):
    """Class probabilities for one input (``d``) or a batch (``N x d``)."""
    X, single = _inputs(params, X)
    _, Z = _logits(params, X)
    P = softmax(Z, axis=1)
    return P[0] if single else P


def predict(params, X):
    return np.argmax(np.atleast_2d(forward(params, X)), axis=1)


def accuracy(params, X, y):
    return float(np.mean(predict(params, X) == np.asarray(y)))


def mar_applicable(m, d, lam, warn=True):
    """Whether the surrogate can be used for ``m`` hidden units in ``d`` dims."""
    if lam <= 0:
        return False
    if m < 2 or m > d:
        if warn:
            log.warning("m=%d, d=%d: surrogate needs 2 <= m <= d, training without it", m, d)
        return False
    return True


def surrogate_term(hidden_W, gamma=1.0, det_clamp=1e-6):
    """``(Gamma, dGamma/dW)`` for the row-normalized hidden weights."""
    r = np.linalg.norm(hidden_W, axis=1)
    U = project_rows_unit(hidden_W)
    G = surrogate_gradient(U, SurrogateConfig(gamma, det_clamp))
    G_w = (G - np.sum(G * U, axis=1, keepdims=True) * U) / r[:, None]
    return surrogate(U, gamma), G_w


def loss_and_grad(params, X, y, lam=0.0, gamma=1.0, det_clamp=1e-6):
    """Mean cross-entropy minus ``lam * Gamma`` and its gradient (as :class:`MlpParams`).

    The regularizer is silently skipped when it does not apply (``m < 2`` or
    ``m > d``); :func:`train_nn` warns about that once up front.
    """
    X, _ = _inputs(params, X)
    y = np.asarray(y, dtype=np.int64)
    if y.shape != (X.shape[0],):
        raise InvalidArgumentError("one label per input row required")
    if np.any((y < 0) | (y >= params.n_classes)):
        raise InvalidArgumentError("labels out of range")
    n = X.shape[0]
    H, Z = _logits(params, X)
    logp = log_softmax(Z, axis=1)
    loss = -float(np.mean(logp[np.arange(n), y]))
    dZ = np.exp(logp)
    dZ[np.arange(n), y] -= 1.0
    dZ /= n
    g_out_W = dZ.T @ H
    g_out_b = dZ.sum(axis=0)
    dA = (dZ @ params.out_W) * H * (1.0 - H)
    g_hid_W = dA.T @ X
    g_hid_b = dA.sum(axis=0)
    if mar_applicable(params.m, params.d, lam, warn=False):
        gam, G_w = surrogate_term(params.hidden_W, gamma, det_clamp)
        loss -= lam * gam
        g_hid_W = g_hid_W - lam * G_w
    if not math.isfinite(loss):
        raise NumericalFailureError("non-finite loss")
    return loss, MlpParams(g_hid_W, g_hid_b, g_out_W, g_out_b)


@dataclass
class NnConfig:
    m: int = 8
    lam: float = 0.0
    gamma: float = 1.0
    lr: float = 0.1
    minibatch: int = 100
    epochs: int = 100
    seed: int = 0
    det_clamp: float = 1e-6


def init_params(d, m, c, rng):
    """Uniform(-1/sqrt(d), 1/sqrt(d)) hidden weights, zero output layer."""
    s = 1.0 / math.sqrt(d)
    return MlpParams(rng.uniform(-s, s, size=(m, d)), np.zeros(m), np.zeros((c, m)), np.zeros(c))


def train_nn(X, y, cfg=None, n_classes=None):
    """Minibatch SGD. Returns ``(params, trace)`` with the full-data objective
    after each epoch."""
    cfg = cfg or NnConfig()
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=np.int64)
    c = int(n_classes if n_classes is not None else y.max() + 1)
    if c < 2:
        raise InvalidArgumentError("need at least two classes")
    lam = cfg.lam if mar_applicable(cfg.m, X.shape[1], cfg.lam) else 0.0
    rng = np.random.default_rng(cfg.seed)
    params = init_params(X.shape[1], cfg.m, c, rng)
    trace = []
    for _ in range(cfg.epochs):
        order = rng.permutation(len(y))
        for start in range(0, len(order), cfg.minibatch):
            idx = order[start:start + cfg.minibatch]
            try:
                _, grad = loss_and_grad(params, X[idx], y[idx], lam, cfg.gamma, cfg.det_clamp)
            except DependentRowsError:
                # rows collapsed onto each other; nudge them apart and retry once
                params.hidden_W += 1e-6 * rng.standard_normal(params.hidden_W.shape)
                _, grad = loss_and_grad(params, X[idx], y[idx], lam, cfg.gamma, cfg.det_clamp)
            for p, g in zip(params.arrays(), grad.arrays()):
                p -= cfg.lr * g
        trace.append(loss_and_grad(params, X, y, lam, cfg.gamma, cfg.det_clamp)[0])
    return params, trace


@dataclass(frozen=True)
class HiddenDiversity:
    breakdown: object
    min_angle: float
    mu: float
    sigma: float


def measure_hidden_diversity(params, gamma=1.0):
    """Angle statistics of the hidden units; ``sigma`` is the angle variance."""
    W = params.hidden_W if isinstance(params, MlpParams) else np.asarray(params, dtype=float)
    if W.shape[0] < 2:
        raise InvalidArgumentError("need at least two hidden units")
    angles = pairwise_angles(W)
    return HiddenDiversity(mar_breakdown(W, gamma), float(angles.min()), float(angles.mean()), float(angles.var()))


def regression_output(W, alpha, X, activation=expit):
    """Univariate regression head ``f(x) = sum_j alpha_j h(w_j . x)``."""
    return activation(np.atleast_2d(X) @ np.asarray(W, dtype=float).T) @ np.asarray(alpha, dtype=float)


def _random_ball_points(rng, count, dim, radius):
    v = rng.standard_normal((count, dim))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    # half on the sphere (the extreme case), half strictly inside
    r = np.where(rng.random(count) < 0.5, 1.0, rng.random(count) ** (1.0 / dim))
    return radius * r[:, None] * v


def sample_constrained_network(inputs, d, rng, max_tries=1000):
    """Draw ``(W, alpha)`` with ``||w_j|| <= C3``, ``||alpha|| <= C4`` and all
    pairwise angles at least ``theta`` (rejection sampling on directions)."""
    for _ in range(max_tries):
        W = _random_ball_points(rng, inputs.m, d, inputs.C3)
        if np.any(np.linalg.norm(W, axis=1) == 0):
            continue
        if inputs.m < 2 or pairwise_angles(W).min() >= inputs.theta:
            alpha = _random_ball_points(rng, 1, inputs.m, inputs.C4)[0]
            return W, alpha
    raise NumericalFailureError("could not sample weights meeting the angle constraint")


def sup_norm_check(inputs, d=10, draws=10_000, seed=0):
    """Monte-Carlo check of ``|f(x)| <= sqrt(J)`` for sigmoid networks.

    ``inputs`` must use the sigmoid constants ``L = 0.25``, ``h0 = 0.5``. Each
    draw takes one constrained network and one input with ``||x|| <= C1``;
    half of the draws also align ``alpha`` with the hidden activations, which
    maximizes ``f`` for that ``W`` and ``x``. Returns
    ``(violations, worst ratio |f| / sqrt(J))``.
    """
    from marlvm.bounds import j_single

    if inputs.L != SIGMOID_LIPSCHITZ or inputs.h0 != SIGMOID_AT_ZERO:
        raise InvalidArgumentError("sup-norm check is defined for the sigmoid constants")
    rng = np.random.default_rng(seed)
    limit = math.sqrt(j_single(inputs))
    violations, worst = 0, 0.0
    for k in range(draws):
        W, alpha = sample_constrained_network(inputs, d, rng)
        x = _random_ball_points(rng, 1, d, inputs.C1)
        if k % 2:
            h = expit(x @ W.T)[0]
            alpha = inputs.C4 * h / np.linalg.norm(h)
        f = abs(float(regression_output(W, alpha, x)[0]))
        worst = max(worst, f / limit)
        violations += f > limit
    return int(violations), worst
