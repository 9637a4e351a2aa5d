import logging
import math

import numpy as np
import pytest

from marlvm.dml import (
    DmlConfig,
    PairSet,
    dml_gradient,
    dml_objective,
    pair_distance,
    pairs_from_indices,
    sample_pair_indices,
    train_mar_dml,
    transform,
)
from marlvm.errors import InvalidArgumentError
from marlvm.harness.verify import fd_gradient, rel_error
from marlvm.optimizer import OptimizerConfig
from marlvm.regularizer import mar_breakdown


def loop_objective(A, pairs, mu=1.0, margin=1.0):
    sim = sum(pair_distance(A, x, y) for x, y in pairs.similar) / len(pairs.similar)
    hinge = sum(max(0.0, margin - pair_distance(A, x, y)) for x, y in pairs.dissimilar) / len(pairs.dissimilar)
    return -(sim + mu * hinge)


def random_pairs(rng, n, D, scale=1.0):
    mk = lambda: [(scale * rng.standard_normal(D), scale * rng.standard_normal(D)) for _ in range(n)]
    return PairSet(mk(), mk())


def sweep_ap(d, y):
    """AP by walking every threshold (distinct distances, no ties)."""
    order = np.argsort(d)
    hits, total = 0, 0.0
    for rank, idx in enumerate(order, start=1):
        if y[idx]:
            hits += 1
            total += hits / rank
    return total / y.sum()


def test_pair_distance_examples():
    assert pair_distance(np.eye(2), [1, 0], [1, 0]) == 0.0
    assert pair_distance(np.eye(2), [1, 0], [0, 1]) == 2.0
    assert pair_distance(2 * np.eye(2), [1, 0], [0, 1]) == 8.0
    with pytest.raises(InvalidArgumentError):
        pair_distance(np.eye(2), [1, 0, 0], [0, 1, 0])


def test_objective_examples():
    far = [(np.array([0.0, 0.0]), np.array([2.0, 0.0]))]
    same = PairSet([(np.array([1.0, 1.0]), np.array([1.0, 1.0]))], far)
    assert dml_objective(np.eye(2), same) == 0.0
    one = PairSet([(np.array([1.0, 0.0]), np.array([0.0, 0.0]))], far)
    assert dml_objective(np.eye(2), one) == -1.0
    with pytest.raises(InvalidArgumentError):
        dml_objective(np.eye(2), PairSet([], far))


@pytest.mark.parametrize("seed", range(5))
def test_objective_matches_loop(seed):
    rng = np.random.default_rng(seed)
    pairs = random_pairs(rng, 12, 4, scale=0.3)
    A = rng.standard_normal((3, 4))
    cfg = DmlConfig(K=3, hinge_weight=2.5)
    assert dml_objective(A, pairs, cfg) == pytest.approx(loop_objective(A, pairs, 2.5), rel=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_gradient_matches_fd(seed):
    rng = np.random.default_rng(seed)
    pairs = random_pairs(rng, 10, 5, scale=0.3)
    A = rng.standard_normal((3, 5))
    cfg = DmlConfig(K=3, hinge_weight=1.5)
    ref = fd_gradient(lambda B: dml_objective(B, pairs, cfg), A)
    assert rel_error(dml_gradient(A, pairs, cfg), ref) < 1e-4


def test_inactive_hinge_gradient_is_similar_term():
    rng = np.random.default_rng(0)
    pairs = random_pairs(rng, 5, 3, scale=10.0)
    A = np.eye(3)
    S, _ = pairs.differences()
    np.testing.assert_allclose(dml_gradient(A, pairs), -2 * A @ S.T @ S / len(S))


def test_pair_at_margin_is_inactive():
    pairs = PairSet([(np.array([0.0, 0.0]), np.array([0.0, 0.0]))],
                    [(np.array([1.0, 0.0]), np.array([0.0, 0.0]))])
    np.testing.assert_array_equal(dml_gradient(np.eye(2), pairs), np.zeros((2, 2)))


def test_hinge_invariance():
    x = np.array([0.0, 0.0])
    sim = [(np.array([1.0, 0.0]), x)]
    base = dml_objective(np.eye(2), PairSet(sim, [(np.array([1.5, 0.0]), x)]))
    for r in (2.0, 5.0, 100.0):
        assert dml_objective(np.eye(2), PairSet(sim, [(np.array([r, 0.0]), x)])) == base


def test_transform():
    X = np.random.default_rng(0).standard_normal((4, 3))
    np.testing.assert_array_equal(transform(np.eye(3), X), X)
    np.testing.assert_array_equal(transform(np.zeros((2, 3)), X), np.zeros((4, 2)))
    A = np.random.default_rng(1).standard_normal((2, 3))
    loop = np.array([[A[k] @ x for k in range(2)] for x in X])
    np.testing.assert_allclose(transform(A, X), loop)
    with pytest.raises(InvalidArgumentError):
        transform(A, np.ones((2, 4)))


def test_pair_sampling():
    labels = np.array([0, 0, 0, 1, 1, 2])
    sim, dis = sample_pair_indices(labels, 100, 5, np.random.default_rng(0))
    assert len(sim) == 4  # only 3 + 1 same-label pairs exist
    assert len(dis) == 5
    assert np.all(labels[sim[:, 0]] == labels[sim[:, 1]])
    assert np.all(labels[dis[:, 0]] != labels[dis[:, 1]])
    assert np.all(sim[:, 0] < sim[:, 1])
    assert len({tuple(p) for p in dis}) == 5
    with pytest.raises(InvalidArgumentError):
        sample_pair_indices(np.zeros(5), 1, 1, np.random.default_rng(0))


def test_singleton_class_warns(caplog):
    with caplog.at_level(logging.WARNING):
        sample_pair_indices(np.array([0, 0, 1]), 1, 1, np.random.default_rng(0))
    assert "fewer than 2" in caplog.text


def two_gaussians(rng, n):
    y = rng.integers(0, 2, n)
    X = 0.5 * rng.standard_normal((n, 2))
    X[:, 0] += np.where(y == 1, 3.0, -3.0)
    return X, y


def test_two_gaussian_pair_ap():
    rng = np.random.default_rng(0)
    X, y = two_gaussians(rng, 200)
    Xt, yt = two_gaussians(rng, 200)
    cfg = DmlConfig(K=2, lam=1.0, optimizer=OptimizerConfig(outer_iters=30))
    A = train_mar_dml(X, y, cfg, n_similar=300, n_dissimilar=300, seed=0)
    i, j = np.triu_indices(len(yt), 1)
    Z = transform(A, Xt)
    d = np.sum((Z[i] - Z[j]) ** 2, axis=1)
    assert sweep_ap(d, yt[i] == yt[j]) >= 0.95


def test_regularizer_spreads_rows():
    rng = np.random.default_rng(0)
    X, y = two_gaussians(rng, 200)
    opt = OptimizerConfig(outer_iters=30)
    angles = [mar_breakdown(train_mar_dml(X, y, DmlConfig(K=2, lam=lam, optimizer=opt),
                                          n_similar=300, n_dissimilar=300, seed=0)).mean_angle
              for lam in (0.0, 1.0)]
    assert angles[1] > angles[0]
    assert angles[1] > math.pi / 2 - 1e-3


def test_training_deterministic():
    rng = np.random.default_rng(3)
    X, y = two_gaussians(rng, 60)
    cfg = DmlConfig(K=2, lam=0.1, optimizer=OptimizerConfig(outer_iters=5))
    A1 = train_mar_dml(X, y, cfg, 50, 50, seed=7)
    A2 = train_mar_dml(X, y, cfg, 50, 50, seed=7)
    np.testing.assert_array_equal(A1, A2)


def test_k1_disables_regularizer(caplog):
    rng = np.random.default_rng(0)
    X, y = two_gaussians(rng, 40)
    with caplog.at_level(logging.WARNING):
        A = train_mar_dml(X, y, DmlConfig(K=1, lam=1.0, optimizer=OptimizerConfig(outer_iters=3)), 20, 20)
    assert A.shape == (1, 2)
    assert "regularizer undefined" in caplog.text


def test_pairs_from_indices():
    X = np.arange(6.0).reshape(3, 2)
    ps = pairs_from_indices(X, np.array([[0, 1]]), np.array([[1, 2]]))
    S, D = ps.differences()
    np.testing.assert_array_equal(S, [[-2.0, -2.0]])
    np.testing.assert_array_equal(D, [[-2.0, -2.0]])
