import logging
import math

import numpy as np
import pytest
from scipy.special import expit

from marlvm.bounds import BoundInputs
from marlvm.errors import InvalidArgumentError
from marlvm.harness.synth import synth_longtail
from marlvm.harness.verify import fd_gradient, rel_error
from marlvm.nn import (
    MlpParams,
    NnConfig,
    accuracy,
    forward,
    init_params,
    loss_and_grad,
    measure_hidden_diversity,
    regression_output,
    sup_norm_check,
    surrogate_term,
    train_nn,
)
from marlvm.regularizer import mar_breakdown


def random_params(rng, d=5, m=3, c=4):
    return MlpParams(rng.standard_normal((m, d)), rng.standard_normal(m),
                     rng.standard_normal((c, m)), rng.standard_normal(c))


def test_forward_zero_params_uniform():
    P = forward(MlpParams.zeros(3, 2, 4), np.ones(3))
    np.testing.assert_allclose(P, 0.25)


def test_forward_one_hidden_unit_by_hand():
    p = MlpParams([[2.0, -1.0]], [0.5], [[1.0], [-1.0]], [0.0, 0.2])
    x = np.array([0.3, 0.4])
    h = expit(2 * 0.3 - 0.4 + 0.5)
    z1, z2 = h, -h + 0.2
    assert forward(p, x)[0] == pytest.approx(math.exp(z1) / (math.exp(z1) + math.exp(z2)))


def test_forward_normalized_batch():
    rng = np.random.default_rng(0)
    P = forward(random_params(rng), rng.standard_normal((7, 5)))
    np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-12)
    with pytest.raises(InvalidArgumentError):
        forward(random_params(rng), np.ones(4))


@pytest.mark.parametrize("lam", [0.0, 0.7])
@pytest.mark.parametrize("seed", range(3))
def test_gradient_matches_fd(lam, seed):
    rng = np.random.default_rng(seed)
    params = random_params(rng)
    X = rng.standard_normal((5, 5))
    y = rng.integers(0, 4, 5)
    _, grad = loss_and_grad(params, X, y, lam)
    for k, (arr, g) in enumerate(zip(params.arrays(), grad.arrays())):
        def f(a, k=k):
            parts = list(params.copy().arrays())
            parts[k] = a
            return loss_and_grad(MlpParams(*parts), X, y, lam)[0]
        assert rel_error(g, fd_gradient(f, arr)) < 1e-4


def test_objective_linear_in_lambda():
    rng = np.random.default_rng(0)
    params = random_params(rng)
    X, y = rng.standard_normal((5, 5)), rng.integers(0, 4, 5)
    gam, _ = surrogate_term(params.hidden_W)
    l0 = loss_and_grad(params, X, y, 0.0)[0]
    for lam in (0.1, 1.0, 3.0):
        assert loss_and_grad(params, X, y, lam)[0] == pytest.approx(l0 - lam * gam, abs=1e-12)


def test_surrogate_term_scale_free():
    rng = np.random.default_rng(0)
    W = rng.standard_normal((3, 5))
    g1, G1 = surrogate_term(W)
    g2, G2 = surrogate_term(W * np.array([[2.0], [0.5], [3.0]]))
    assert g1 == pytest.approx(g2)
    # gradient through the normalization is orthogonal to each row
    np.testing.assert_allclose(np.sum(G1 * W, axis=1), 0.0, atol=1e-10)


def test_label_validation():
    params = MlpParams.zeros(2, 2, 2)
    with pytest.raises(InvalidArgumentError):
        loss_and_grad(params, np.ones((2, 2)), [0, 2])
    with pytest.raises(InvalidArgumentError):
        loss_and_grad(params, np.ones((2, 2)), [0])


def test_xor():
    rng = np.random.default_rng(0)
    X = rng.uniform(-1, 1, (200, 2))
    y = (X[:, 0] * X[:, 1] > 0).astype(int)
    params, trace = train_nn(X, y, NnConfig(m=4, lr=1.0, epochs=500, minibatch=20, seed=0))
    assert accuracy(params, X, y) >= 0.95
    assert len(trace) == 500


def test_zero_epochs_return_init():
    X = np.random.default_rng(0).standard_normal((10, 3))
    y = np.arange(10) % 2
    params, trace = train_nn(X, y, NnConfig(m=2, epochs=0, seed=5))
    ref = init_params(3, 2, 2, np.random.default_rng(5))
    np.testing.assert_array_equal(params.hidden_W, ref.hidden_W)
    assert trace == []


def test_regularizer_disabled_when_m_exceeds_d(caplog):
    X = np.random.default_rng(0).standard_normal((10, 2))
    with caplog.at_level(logging.WARNING):
        train_nn(X, np.arange(10) % 2, NnConfig(m=4, lam=1.0, epochs=1))
    assert "training without it" in caplog.text


def test_min_angle_grows_with_lambda():
    ds = synth_longtail(10, 1.5, 200, 10, "features", seed=0, separation=2.5)
    angles = []
    for lam in (0.0, 0.01, 0.1):
        params, _ = train_nn(ds.X, ds.labels, NnConfig(m=8, lam=lam, lr=0.5, epochs=100, minibatch=50, seed=0), 10)
        angles.append(measure_hidden_diversity(params).min_angle)
    assert angles[0] <= angles[1] <= angles[2]


def test_diversity_measures():
    div = measure_hidden_diversity(np.eye(3))
    assert div.breakdown.mean_angle == pytest.approx(math.pi / 2)
    W = np.random.default_rng(0).standard_normal((4, 6))
    assert measure_hidden_diversity(W).breakdown == mar_breakdown(W)
    assert measure_hidden_diversity(np.array([[1.0, 2.0], [1.0, 2.0], [0.0, 1.0]])).min_angle == pytest.approx(0.0, abs=1e-7)
    with pytest.raises(InvalidArgumentError):
        measure_hidden_diversity(np.ones((1, 3)))


def test_regression_output():
    W = np.array([[1.0, 0.0], [0.0, 1.0]])
    f = regression_output(W, [2.0, -1.0], np.array([[0.0, 0.0]]))
    assert f[0] == pytest.approx(0.5)


def test_sup_norm_check_small():
    inputs = BoundInputs(m=3, C1=1.5, C3=1.2, C4=1.0, theta=0.7)
    violations, worst = sup_norm_check(inputs, d=6, draws=500, seed=1)
    assert violations == 0 and 0 < worst <= 1
    with pytest.raises(InvalidArgumentError):
        sup_norm_check(BoundInputs(L=1.0), draws=1)
