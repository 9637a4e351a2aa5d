"""Replicated-softmax RBM over word counts, with diversified hidden units.

A document of ``D`` tokens over a vocabulary of ``J`` words enters only
through its count vector ``n`` (``sum(n) == D``). With weights ``W`` (J x K),
visible biases ``alpha`` and hidden biases ``beta``::

    p(h_k = 1 | n) = sigmoid(D * beta_k + n @ W[:, k])
    p(token = j | h) = softmax(alpha + W @ h)_j

The diversity regularizer acts on the hidden-unit weight vectors, i.e. the
columns of ``W``.
"""

import logging
import math
from itertools import combinations
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, gammaln, logsumexp, softmax

from marlvm.errors import CapacityError, DependentRowsError, InvalidArgumentError
from marlvm.linalg import pairwise_angles, project_rows_unit
from marlvm.optimizer import perturb_until_independent
from marlvm.regularizer import SurrogateConfig, surrogate, surrogate_gradient

log = logging.getLogger(__name__)

MAX_ENUMERATION = 10**6


@dataclass
class RsmParams:
    W: np.ndarray
    vis_bias: np.ndarray
    hid_bias: np.ndarray

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=float)
        self.vis_bias = np.asarray(self.vis_bias, dtype=float)
        self.hid_bias = np.asarray(self.hid_bias, dtype=float)
        J, K = self.W.shape
        if self.vis_bias.shape != (J,) or self.hid_bias.shape != (K,):
            raise InvalidArgumentError("bias shapes do not match W")
        if not all(np.all(np.isfinite(a)) for a in (self.W, self.vis_bias, self.hid_bias)):
            raise InvalidArgumentError("parameters must be finite")

    @property
    def J(self):
        return self.W.shape[0]

    @property
    def K(self):
        return self.W.shape[1]

    @classmethod
    def zeros(cls, J, K):
        return cls(np.zeros((J, K)), np.zeros(J), np.zeros(K))

    def copy(self):
        return RsmParams(self.W.copy(), self.vis_bias.copy(), self.hid_bias.copy())


@dataclass
class DocBatch:
    """Documents as a dense ``(N, J)`` count matrix; label -1 means unlabeled."""

    counts: np.ndarray
    labels: np.ndarray = None
    J: int = None

    def __post_init__(self):
        self.counts = np.atleast_2d(np.asarray(self.counts, dtype=np.int64))
        if self.J is None:
            self.J = self.counts.shape[1]
        if self.counts.shape[1] != self.J:
            raise InvalidArgumentError("count matrix width differs from vocabulary size")
        if np.any(self.counts < 0):
            raise InvalidArgumentError("word counts must be non-negative")
        if np.any(self.counts.sum(axis=1) < 1):
            raise InvalidArgumentError("every document needs at least one token")
        if self.labels is None:
            self.labels = np.full(len(self.counts), -1, dtype=np.int64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.labels.shape != (len(self.counts),):
            raise InvalidArgumentError("one label per document required")

    @property
    def lengths(self):
        return self.counts.sum(axis=1)

    def __len__(self):
        return len(self.counts)

    def subset(self, idx):
        return DocBatch(self.counts[idx], self.labels[idx], self.J)


def _counts_2d(counts, params):
    counts = np.asarray(counts, dtype=float)
    single = counts.ndim == 1
    counts = np.atleast_2d(counts)
    if counts.shape[1] != params.J:
        raise InvalidArgumentError(f"count vector of width {counts.shape[1]} for J={params.J}")
    return counts, single


def hidden_logits(counts, D, params):
    counts, single = _counts_2d(counts, params)
    D = np.broadcast_to(np.asarray(D, dtype=float), (counts.shape[0],))
    x = D[:, None] * params.hid_bias[None, :] + counts @ params.W
    return x[0] if single else x


def hidden_probs(counts, D, params):
    return expit(hidden_logits(counts, D, params))


def visible_dist(h, params):
    """Per-token word distribution given a hidden configuration."""
    h = np.asarray(h, dtype=float)
    logits = h @ params.W.T + params.vis_bias
    return softmax(logits, axis=-1)


def gibbs_step(counts, D, params, rng):
    """Sample ``h`` given the document, then ``D`` fresh tokens given ``h``."""
    p = hidden_probs(counts, D, params)
    h = (rng.random(p.shape) < p).astype(float)
    probs = np.atleast_2d(visible_dist(h, params))
    Ds = np.broadcast_to(np.asarray(D, dtype=np.int64), (probs.shape[0],))
    recon = np.stack([rng.multinomial(int(d), pr / pr.sum()) for d, pr in zip(Ds, probs)])
    if np.ndim(counts) == 1:
        return h, recon[0]
    return h, recon


def cd1_gradient(batch, params, rng):
    """One-step contrastive divergence estimate of the mean log-likelihood gradient.

    Returns ``(dW, dalpha, dbeta)``. The hidden-bias term is scaled by the
    document length, as the bias enters the energy as ``D * beta``.
    """
    v = batch.counts.astype(float)
    D = batch.lengths.astype(float)
    p_data = hidden_probs(v, D, params)
    _, v_model = gibbs_step(v, D, params, rng)
    v_model = v_model.astype(float)
    p_model = hidden_probs(v_model, D, params)
    n = len(v)
    dW = (v.T @ p_data - v_model.T @ p_model) / n
    dalpha = (v - v_model).mean(axis=0)
    dbeta = (D[:, None] * (p_data - p_model)).mean(axis=0)
    return dW, dalpha, dbeta


def compositions(D, J):
    """All count vectors of length ``J`` summing to ``D`` (stars and bars)."""
    total = math.comb(D + J - 1, J - 1)
    if total > MAX_ENUMERATION:
        raise CapacityError(f"{total} count vectors exceed the enumeration budget of {MAX_ENUMERATION}")
    if J == 1:
        return np.array([[D]], dtype=np.int64)
    bars = np.array(list(combinations(range(D + J - 1), J - 1)), dtype=np.int64)
    edges = np.concatenate([np.full((len(bars), 1), -1), bars, np.full((len(bars), 1), D + J - 1)], axis=1)
    return np.diff(edges, axis=1) - 1


def log_multinomial(counts):
    counts = np.atleast_2d(counts)
    return gammaln(counts.sum(axis=1) + 1) - gammaln(counts + 1).sum(axis=1)


def unnormalized_log_prob(counts, params):
    """Log of the hidden-marginalized weight of one token sequence with these counts."""
    counts, single = _counts_2d(counts, params)
    D = counts.sum(axis=1)
    out = counts @ params.vis_bias + np.logaddexp(0.0, hidden_logits(counts, D, params)).sum(axis=1)
    return out[0] if single else out


def exact_log_partition(params, D):
    """Log normalizer over all token sequences of length ``D`` (exact enumeration)."""
    n = compositions(int(D), params.J)
    return float(logsumexp(log_multinomial(n) + unnormalized_log_prob(n, params)))


def count_vector_log_probs(params, D):
    """``(counts, log p(counts))`` for every count vector of length ``D``."""
    n = compositions(int(D), params.J)
    w = log_multinomial(n) + unnormalized_log_prob(n, params)
    return n, w - logsumexp(w)


def doc_log_probs(batch, params):
    """Exact log probability of each document's token sequence."""
    lengths = batch.lengths
    log_z = {int(d): exact_log_partition(params, d) for d in np.unique(lengths)}
    return unnormalized_log_prob(batch.counts, params) - np.array([log_z[int(d)] for d in lengths])


def perplexity(batch, params):
    """Per-word perplexity ``exp(-sum log p(doc) / sum D)``."""
    return float(np.exp(-doc_log_probs(batch, params).sum() / batch.lengths.sum()))


def mean_hidden_angle(params):
    """Mean pairwise non-obtuse angle between the hidden-unit weight vectors."""
    return float(np.mean(pairwise_angles(params.W.T)))


def top_words(params, n=10):
    """Indices of the ``n`` largest weights for each hidden unit."""
    return np.argsort(-params.W, axis=0, kind="stable")[:n].T


@dataclass
class RbmConfig:
    lam: float = 0.0
    gamma: float = 1.0
    lr: float = 1e-4
    mar_lr: float = None
    minibatch: int = 100
    epochs: int = 10
    seed: int = 0
    det_clamp: float = 1e-6
    init_scale: float = 0.01
    trace_exact: bool = False


def _mar_direction_step(params, step, scfg, rng, max_halvings=30):
    """Ascend the surrogate on the column directions of ``W``, keeping column norms."""
    norms = np.linalg.norm(params.W, axis=0)
    U = perturb_until_independent(project_rows_unit(params.W.T), rng)
    base = surrogate(U, scfg.gamma)
    G = surrogate_gradient(U, scfg)
    for _ in range(max_halvings + 1):
        try:
            cand = project_rows_unit(U + step * G)
            if surrogate(cand, scfg.gamma) >= base:
                U = cand
                break
        except DependentRowsError:
            pass
        step *= 0.5
    params.W = (norms[:, None] * U).T


def train_mar_rbm(batch, K, cfg=None, return_trace=False):
    """Minibatch CD-1 training with an interleaved diversity step.

    After every CD update, the columns of ``W`` take one magnitude-preserving
    ascent step on ``lam * surrogate`` (step ``mar_lr * lam``, default
    ``mar_lr = lr``). The Gibbs chain and the perturbation noise use separate
    streams derived from ``seed``, so ``lam`` does not change the sampling.
    """
    cfg = cfg or RbmConfig()
    J = batch.J
    lam = cfg.lam
    if lam > 0 and K < 2:
        log.warning("K=%d: regularizer undefined, training without it", K)
        lam = 0.0
    if lam > 0 and K > J:
        raise InvalidArgumentError(f"surrogate needs K <= J (got K={K}, J={J})")
    init_rng, sample_rng, order_rng, mar_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(cfg.seed).spawn(4))
    params = RsmParams(init_rng.uniform(-cfg.init_scale, cfg.init_scale, size=(J, K)), np.zeros(J), np.zeros(K))
    scfg = SurrogateConfig(cfg.gamma, cfg.det_clamp)
    mar_lr = cfg.lr if cfg.mar_lr is None else cfg.mar_lr
    trace = []
    if cfg.trace_exact:
        trace.append(float(doc_log_probs(batch, params).mean()))
    for _ in range(cfg.epochs):
        order = order_rng.permutation(len(batch))
        for start in range(0, len(order), cfg.minibatch):
            mb = batch.subset(order[start:start + cfg.minibatch])
            dW, da, db = cd1_gradient(mb, params, sample_rng)
            params.W += cfg.lr * dW
            params.vis_bias += cfg.lr * da
            params.hid_bias += cfg.lr * db
            if lam > 0:
                _mar_direction_step(params, mar_lr * lam, scfg, mar_rng)
        if cfg.trace_exact:
            trace.append(float(doc_log_probs(batch, params).mean()))
    return (params, trace) if return_trace else params
