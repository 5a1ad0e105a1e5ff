import io

import numpy as np
import pytest

from ragek.learner import (
    SGD,
    Adam,
    ModelSpec,
    NumericalError,
    evaluate,
    flatten,
    init_params,
    loss_and_gradient,
    read_model,
    unflatten,
    write_model,
)
from ragek.vectors import StructuralError

from oracles import finite_difference_grad, max_rel_error, random_problem


def test_mnist_network_param_count():
    assert ModelSpec([784, 50, 10]).num_params == 39760


def test_uniform_softmax_loss():
    spec = ModelSpec([5, 10])
    X = np.random.default_rng(0).random((7, 5))
    y = np.arange(7) % 10
    loss, _ = loss_and_gradient(spec, np.zeros(spec.num_params), X, y)
    assert loss == pytest.approx(np.log(10), abs=1e-12)
    acc, mean_loss = evaluate(spec, np.zeros(spec.num_params), X, y)
    assert mean_loss == pytest.approx(np.log(10), abs=1e-12)


@pytest.mark.parametrize("sizes", [[6, 5, 3], [4, 3], [3, 7, 6, 2]])
def test_gradient_matches_finite_differences(sizes):
    rng = np.random.default_rng(sum(sizes))
    spec, theta, X, y = random_problem(rng, sizes)
    _, g = loss_and_gradient(spec, theta, X, y)
    coords = np.arange(spec.num_params)
    assert max_rel_error(g[coords], finite_difference_grad(spec, theta, X, y, coords)) <= 1e-4


def test_duplicated_and_permuted_batch():
    rng = np.random.default_rng(1)
    spec, theta, X, y = random_problem(rng, [6, 5, 3])
    l1, g1 = loss_and_gradient(spec, theta, X, y)
    l2, g2 = loss_and_gradient(spec, theta, np.repeat(X, 2, axis=0), np.repeat(y, 2))
    assert l1 == pytest.approx(l2, rel=1e-13)
    np.testing.assert_allclose(g1, g2, rtol=1e-12, atol=1e-15)
    perm = rng.permutation(len(y))
    l3, g3 = loss_and_gradient(spec, theta, X[perm], y[perm])
    assert l1 == pytest.approx(l3, rel=1e-13)
    np.testing.assert_allclose(g1, g3, rtol=1e-12, atol=1e-15)


def test_flat_layout_round_trip():
    spec = ModelSpec([3, 4, 2])
    theta = np.arange(spec.num_params, dtype=float)
    layers = unflatten(spec, theta)
    # layer-major, weights row-major then bias
    np.testing.assert_array_equal(layers[0][0], np.arange(12.0).reshape(3, 4))
    np.testing.assert_array_equal(layers[0][1], [12, 13, 14, 15])
    np.testing.assert_array_equal(flatten(layers), theta)


def test_shape_errors():
    spec = ModelSpec([3, 2])
    with pytest.raises(StructuralError):
        loss_and_gradient(spec, np.zeros(8), np.zeros((1, 4)), [0])
    with pytest.raises(StructuralError):
        loss_and_gradient(spec, np.zeros(8), np.zeros((1, 3)), [2])
    with pytest.raises(StructuralError):
        unflatten(spec, np.zeros(7))


def test_sgd_step():
    opt = SGD(0.1)
    np.testing.assert_allclose(opt.apply(np.array([1.0, 1.0]), np.array([1.0, -1.0])), [0.9, 1.1])
    assert opt.steps == 1
    theta = np.array([0.3, -2.0])
    np.testing.assert_array_equal(SGD(0.5).apply(theta, np.zeros(2)), theta)


@pytest.mark.parametrize("c", [1e-3, 1.0, 250.0])
def test_adam_first_step_is_lr(c):
    opt = Adam(0.01)
    theta = np.zeros(5)
    new = opt.apply(theta, np.full(5, c))
    np.testing.assert_allclose(theta - new, 0.01, rtol=1e-5)
    assert opt.steps == 1 and opt.m.shape == (5,)


def test_non_finite_gradient_rejected():
    with pytest.raises(NumericalError):
        SGD(0.1).apply(np.zeros(2), np.array([np.nan, 0.0]))
    with pytest.raises(NumericalError):
        Adam(0.1).apply(np.zeros(2), np.array([np.inf, 0.0]))


def test_evaluate():
    spec = ModelSpec([2, 2])
    theta = np.array([1.0, 0.0, 0.0, 1.0, 0.0, 0.0])
    acc, _ = evaluate(spec, theta, np.array([[1.0, 0.0]]), np.array([0]))
    assert acc == 1.0
    with pytest.raises(ValueError):
        evaluate(spec, theta, np.zeros((0, 2)), np.zeros(0, dtype=int))
    rng = np.random.default_rng(0)
    spec10 = ModelSpec([4, 10])
    X = rng.random((1000, 4))
    y = rng.integers(0, 10, size=1000)
    acc, loss = evaluate(spec10, np.zeros(spec10.num_params), X, y)
    # all-zero logits predict class 0 everywhere: chance level on balanced labels
    assert acc == pytest.approx(0.1, abs=0.03)
    assert loss == pytest.approx(np.log(10))


def test_trains_separable_problem():
    rng = np.random.default_rng(0)
    X = np.r_[rng.normal(-2, 0.5, (50, 2)), rng.normal(2, 0.5, (50, 2))]
    y = np.r_[np.zeros(50, int), np.ones(50, int)]
    spec = ModelSpec([2, 8, 2])
    theta = init_params(spec, rng)
    opt = SGD(0.5)
    for _ in range(500):
        _, g = loss_and_gradient(spec, theta, X, y)
        theta = opt.apply(theta, g)
        if evaluate(spec, theta, X, y)[0] == 1.0:
            break
    assert evaluate(spec, theta, X, y)[0] == 1.0


def test_init_is_bounded_and_seeded():
    spec = ModelSpec([784, 50, 10])
    a = init_params(spec, np.random.default_rng(3))
    b = init_params(spec, np.random.default_rng(3))
    assert a.tobytes() == b.tobytes()
    W1, b1 = unflatten(spec, a)[0]
    assert np.abs(W1).max() <= np.sqrt(6 / 834)
    assert not b1.any()


def test_model_checkpoint_round_trip():
    spec = ModelSpec([5, 4, 3])
    theta = np.random.default_rng(0).standard_normal(spec.num_params)
    buf = io.BytesIO()
    write_model(buf, spec, theta)
    buf.seek(0)
    spec2, theta2 = read_model(buf)
    assert spec2 == spec
    assert theta2.tobytes() == theta.tobytes()
