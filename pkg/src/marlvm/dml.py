"""Distance metric learning with mutual angular regularization.

The metric is ``d(x, y) = ||A x - A y||^2`` with ``A`` of shape ``(K, D)``.
Similar pairs are pulled together; the margin constraint on dissimilar
pairs, ``d(x, y) >= margin``, is enforced as a hinge penalty with weight
``hinge_weight``. The objective is returned in maximization form so it plugs
directly into :func:`marlvm.optimizer.optimize`, which adds the regularizer.
"""

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from marlvm.errors import InvalidArgumentError
from marlvm.optimizer import LossModel, OptimizerConfig, optimize

log = logging.getLogger(__name__)


@dataclass
class PairSet:
    similar: list
    dissimilar: list

    def differences(self):
        """Stacked ``x - y`` arrays for the similar and dissimilar pairs."""
        return _diffs(self.similar), _diffs(self.dissimilar)


def _diffs(pairs):
    if len(pairs) == 0:
        return np.zeros((0, 0))
    return np.asarray([np.asarray(x, float) - np.asarray(y, float) for x, y in pairs])


@dataclass
class DmlConfig:
    K: int = 10
    lam: float = 0.0
    gamma: float = 1.0
    hinge_weight: float = 1.0
    margin: float = 1.0
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)

    def __post_init__(self):
        if self.K < 1:
            raise InvalidArgumentError("K must be at least 1")
        if not self.hinge_weight > 0:
            raise InvalidArgumentError("hinge_weight must be positive")


def pair_distance(A, x, y):
    A = np.asarray(A, dtype=float)
    d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    if d.shape != (A.shape[1],):
        raise InvalidArgumentError(f"pair of dimension {d.shape} does not match A with D={A.shape[1]}")
    z = A @ d
    return float(z @ z)


def transform(A, X):
    """Latent representations ``X @ A.T``, one row per input row."""
    A = np.asarray(A, dtype=float)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != A.shape[1]:
        raise InvalidArgumentError(f"data has D={X.shape[1]}, A expects D={A.shape[1]}")
    return X @ A.T


class PairLoss(LossModel):
    """Penalized pair objective as a :class:`LossModel` over ``A``."""

    def __init__(self, pairs, hinge_weight=1.0, margin=1.0):
        S, Dis = pairs.differences() if isinstance(pairs, PairSet) else pairs
        if len(S) == 0 or len(Dis) == 0:
            raise InvalidArgumentError("both similar and dissimilar pair sets must be non-empty")
        if S.shape[1] != Dis.shape[1]:
            raise InvalidArgumentError("similar and dissimilar pairs differ in dimension")
        self.S = S
        self.Dis = Dis
        self.hinge_weight = hinge_weight
        self.margin = margin
        # the similar term only depends on A through this scatter matrix
        self._S_scatter = S.T @ S / len(S)

    def _check(self, A):
        A = np.asarray(A, dtype=float)
        if A.ndim != 2 or A.shape[1] != self.S.shape[1]:
            raise InvalidArgumentError(f"A must have {self.S.shape[1]} columns")
        return A

    def objective(self, A):
        A = self._check(A)
        sim = float(np.sum((A @ self._S_scatter) * A))
        dd = np.sum((self.Dis @ A.T) ** 2, axis=1)
        hinge = float(np.mean(np.maximum(0.0, self.margin - dd)))
        return -(sim + self.hinge_weight * hinge)

    def gradient(self, A):
        A = self._check(A)
        grad = 2.0 * A @ self._S_scatter
        Z = self.Dis @ A.T
        dd = np.sum(Z**2, axis=1)
        # a pair sitting exactly at the margin counts as inactive
        active = dd < self.margin
        if np.any(active):
            Za = Z[active]
            grad -= self.hinge_weight * 2.0 * (Za.T @ self.Dis[active]) / len(self.Dis)
        return -grad


def dml_objective(A, pairs, cfg=None):
    cfg = cfg or DmlConfig()
    return PairLoss(pairs, cfg.hinge_weight, cfg.margin).objective(A)


def dml_gradient(A, pairs, cfg=None):
    cfg = cfg or DmlConfig()
    return PairLoss(pairs, cfg.hinge_weight, cfg.margin).gradient(A)


def sample_pair_indices(labels, n_similar, n_dissimilar, rng):
    """Sample index pairs ``(i, j)``, ``i < j``, without replacement.

    Similar pairs share a label, dissimilar pairs do not. Counts are capped
    at the number of available pairs.
    """
    labels = np.asarray(labels)
    classes, counts = np.unique(labels, return_counts=True)
    if classes.size < 2:
        raise InvalidArgumentError("pair generation needs at least two classes")
    for c, n in zip(classes, counts):
        if n < 2:
            log.warning("class %s has fewer than 2 members; no similar pairs drawn from it", c)
    i, j = np.triu_indices(labels.size, 1)
    same = labels[i] == labels[j]
    sim_idx = np.flatnonzero(same)
    dis_idx = np.flatnonzero(~same)
    ns = min(n_similar, sim_idx.size)
    nd = min(n_dissimilar, dis_idx.size)
    sim = np.sort(rng.choice(sim_idx, size=ns, replace=False))
    dis = np.sort(rng.choice(dis_idx, size=nd, replace=False))
    return np.stack([i[sim], j[sim]], 1), np.stack([i[dis], j[dis]], 1)


def pairs_from_indices(X, sim_idx, dis_idx):
    X = np.asarray(X, dtype=float)
    return PairSet(
        similar=[(X[a], X[b]) for a, b in sim_idx],
        dissimilar=[(X[a], X[b]) for a, b in dis_idx],
    )


def train_mar_dml(features, labels, cfg=None, n_similar=1000, n_dissimilar=1000, seed=0, return_result=False):
    """Fit ``A`` on pairs sampled from labelled features.

    Initialization is uniform on ``(-0.1, 0.1)``; all randomness flows from
    ``seed``. With ``K < 2`` the regularizer is disabled (with a warning).
    """
    cfg = cfg or DmlConfig()
    X = np.asarray(features, dtype=float)
    rng = np.random.default_rng(seed)
    sim_idx, dis_idx = sample_pair_indices(labels, n_similar, n_dissimilar, rng)
    if len(sim_idx) == 0 or len(dis_idx) == 0:
        raise InvalidArgumentError("could not form both similar and dissimilar pairs")
    loss = PairLoss((X[sim_idx[:, 0]] - X[sim_idx[:, 1]], X[dis_idx[:, 0]] - X[dis_idx[:, 1]]),
                    cfg.hinge_weight, cfg.margin)
    lam = cfg.lam
    if cfg.K < 2 and lam > 0:
        log.warning("K=%d: regularizer undefined, training without it", cfg.K)
        lam = 0.0
    opt_cfg = replace(cfg.optimizer, lam=lam, gamma=cfg.gamma, seed=seed)
    A0 = rng.uniform(-0.1, 0.1, size=(cfg.K, X.shape[1]))
    result = optimize(loss, A0, opt_cfg)
    return result if return_result else result.A
