"""Synthetic long-tail data: a few frequent patterns, many rare ones."""

import numpy as np

from marlvm.errors import InvalidArgumentError
from marlvm.harness.io import DenseDataset
from marlvm.rbm import DocBatch


def longtail_sizes(n_topics, power_exponent, n_items):
    """Group sizes proportional to ``rank ** -power_exponent`` (largest remainder,
    every group gets at least one item)."""
    if n_topics < 2:
        raise InvalidArgumentError("need at least two topics/classes")
    if n_items < n_topics:
        raise InvalidArgumentError("need at least one item per topic")
    w = np.arange(1, n_topics + 1, dtype=float) ** -float(power_exponent)
    share = (n_items - n_topics) * w / w.sum()
    sizes = np.floor(share).astype(int)
    rest = n_items - n_topics - sizes.sum()
    sizes[np.argsort(-(share - sizes), kind="stable")[:rest]] += 1
    return sizes + 1


def _labels(sizes, rng):
    labels = np.repeat(np.arange(len(sizes)), sizes)
    return labels[rng.permutation(labels.size)]


def topic_word_matrix(n_topics, vocab, block_mass=0.8):
    """Each topic puts ``block_mass`` on its own block of words, the rest spread
    uniformly over the vocabulary. Blocks wrap around when ``vocab < n_topics``."""
    block = max(1, vocab // n_topics)
    P = np.full((n_topics, vocab), (1.0 - block_mass) / vocab)
    for t in range(n_topics):
        idx = (t * block + np.arange(block)) % vocab
        P[t, idx] += block_mass / block
    return P / P.sum(axis=1, keepdims=True)


def synth_longtail(n_topics, power_exponent, n, vocab_or_dim, mode="features", seed=0,
                   doc_length=20, block_mass=0.8, separation=3.0, noise=1.0,
                   nuisance_dims=0, nuisance_scale=5.0):
    """Generate a long-tail corpus (``mode="docs"``) or labelled point cloud
    (``mode="features"``).

    In feature mode class ``c`` is centred at ``separation * u_c`` for distinct
    directions ``u_c`` (orthonormal when the dimension allows), with shared
    isotropic noise. ``nuisance_dims`` extra coordinates of pure noise with
    standard deviation ``nuisance_scale`` are appended; they carry no label
    information, so Euclidean distance alone is a poor metric.
    """
    rng = np.random.default_rng(seed)
    sizes = longtail_sizes(n_topics, power_exponent, n)
    labels = _labels(sizes, rng)
    if mode == "docs":
        P = topic_word_matrix(n_topics, vocab_or_dim, block_mass)
        counts = np.stack([rng.multinomial(doc_length, P[c]) for c in labels])
        return DocBatch(counts, labels, vocab_or_dim)
    if mode != "features":
        raise InvalidArgumentError(f"unknown mode {mode!r}")
    d = vocab_or_dim
    if n_topics <= d:
        Q, _ = np.linalg.qr(rng.standard_normal((d, n_topics)))
        U = Q.T
    else:
        U = rng.standard_normal((n_topics, d))
        U /= np.linalg.norm(U, axis=1, keepdims=True)
    X = separation * U[labels] + noise * rng.standard_normal((n, d))
    if nuisance_dims:
        X = np.hstack([X, nuisance_scale * rng.standard_normal((n, nuisance_dims))])
    return DenseDataset(X, labels)
