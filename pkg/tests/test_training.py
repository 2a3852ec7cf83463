import math

import numpy as np
import pytest

from sprknet.integrator import Trajectory
from sprknet.network import NetParams, init_params
from sprknet.tableau import builtin_tableau
from sprknet.training import (ClassificationProblem, LossSpec, NonFiniteGradientError,
                              OptimizerState, TrainingDivergedError, loss_classification,
                              loss_trajectory, optimizer_step, regularizer, train)

from _oracles import central_diff, rel_err


def test_classification_loss_at_zero():
    loss, grad = loss_classification(np.array([0.0]), 1)
    assert loss == pytest.approx(math.log(2), rel=1e-15)
    assert grad[0] == -0.5


def test_classification_loss_saturates():
    loss, grad = loss_classification(np.array([800.0]), 1)
    assert loss == 0.0 and grad[0] == 0.0
    loss, _ = loss_classification(np.array([-800.0]), 1)
    assert loss == pytest.approx(800.0)


def test_classification_loss_gradient_fd():
    rng = np.random.default_rng(0)
    out = rng.normal(size=(5, 1))
    y = np.array([0, 1, 1, 0, 1])
    _, grad = loss_classification(out, y)
    fd = central_diff(lambda o: loss_classification(o.reshape(5, 1), y)[0], out.ravel(), eps=1e-5)
    assert rel_err(grad.ravel(), fd) <= 1e-8


def test_classification_loss_rejects_non_finite():
    with pytest.raises(FloatingPointError):
        loss_classification(np.array([np.nan]), 0)


def test_trajectory_loss_hand_values():
    a = np.zeros((1, 4))
    b = np.array([[3.0, 4.0, 0.0, 0.0]])
    loss, grad = loss_trajectory(b, a)
    assert loss == 25.0
    np.testing.assert_array_equal(grad, [[6.0, 8.0, 0.0, 0.0]])
    assert loss_trajectory(b, b)[0] == 0.0


def test_trajectory_loss_gradient_fd():
    rng = np.random.default_rng(1)
    zp, zo = rng.normal(size=(2, 7, 4))
    _, grad = loss_trajectory(zp, zo)
    fd = central_diff(lambda v: loss_trajectory(v.reshape(7, 4), zo)[0], zp.ravel(), eps=1e-5)
    assert rel_err(grad.ravel(), fd) <= 1e-8


def test_trajectory_loss_grid_mismatch():
    t1 = Trajectory([0.0, 1.0], np.zeros((2, 2)), np.zeros((2, 2)))
    t2 = Trajectory([0.0, 2.0], np.zeros((2, 2)), np.zeros((2, 2)))
    with pytest.raises(ValueError):
        loss_trajectory(t1, t2)
    with pytest.raises(ValueError):
        loss_trajectory(np.zeros((3, 4)), np.zeros((2, 4)))


def scalar_net(value):
    u = np.full((1, 1, 1, 1), value)
    z = np.zeros((1, 1, 1))
    return NetParams(u, np.zeros_like(u), z.copy(), z.copy(), z.copy(), z.copy(),
                     W0=np.zeros((1, 2)), b0=np.zeros(1), h=0.1, tableau=builtin_tableau("euler1"))


def test_regularizer_hand_values():
    r, g = regularizer(scalar_net(3.0), 1.0)
    assert r == 9.0 and g["W1"].item() == 6.0
    r, g = regularizer(scalar_net(0.0), 1.0)
    assert r == 0.0
    r, g = regularizer(scalar_net(3.0), 0.0)
    assert r == 0.0 and all(not np.any(v) for v in g.values())


def test_regularizer_gradient_fd():
    net = init_params(2, 2, "sprk2", rng=0)

    def value(v):
        trial = net.copy()
        trial.set_flat(v)
        return regularizer(trial, 0.3)[0]

    _, g = regularizer(net, 0.3)
    an = np.concatenate([a.ravel() for a in g.values()])
    assert rel_err(an, central_diff(value, net.flat(), eps=1e-5)) <= 1e-8


def test_sgd_hand_value_and_zero_gradient():
    net = scalar_net(1.0)
    grads = {k: np.zeros_like(a) for k, a in net.arrays().items()}
    before = net.flat()
    optimizer_step(OptimizerState("sgd", 0.1), net, grads)
    assert np.array_equal(net.flat(), before)
    grads["W1"][...] = 1.0
    optimizer_step(OptimizerState("sgd", 0.1), net, grads)
    assert net.W1.item() == pytest.approx(0.9, abs=1e-16)


def test_adam_first_step_magnitude():
    net = init_params(2, 2, "sprk3", rng=0)
    before = net.flat()
    grads = {k: np.ones_like(a) for k, a in net.arrays().items()}
    optimizer_step(OptimizerState("adam", 0.01), net, grads)
    # m_hat = v_hat = 1 after bias correction, so each step is lr / (1 + eps)
    np.testing.assert_allclose(before - net.flat(), 0.01 / (1 + 1e-8), rtol=1e-12)


def test_optimizer_rejects_non_finite():
    net = scalar_net(1.0)
    grads = {k: np.zeros_like(a) for k, a in net.arrays().items()}
    grads["W1"][...] = np.inf
    with pytest.raises(NonFiniteGradientError):
        optimizer_step(OptimizerState("sgd", 0.1), net, grads)


def test_bad_specs_rejected():
    with pytest.raises(ValueError):
        LossSpec("hinge")
    with pytest.raises(ValueError):
        LossSpec(regularizer_weight=math.inf)
    with pytest.raises(ValueError):
        OptimizerState("rmsprop")


def toy_data():
    # linearly separable in the first coordinate
    rng = np.random.default_rng(3)
    X = np.c_[np.r_[rng.uniform(0.5, 1.5, 5), rng.uniform(-1.5, -0.5, 5)], rng.normal(size=10)]
    y = np.r_[np.ones(5), np.zeros(5)]
    return X, y


def test_zero_learning_rate_keeps_parameters():
    X, y = toy_data()
    net = init_params(2, 3, "sprk2", m=1, share_stages=True, rng=1)
    before = net.flat()
    _, metrics = train(net, (X, y), LossSpec(), OptimizerState("adam", 0.0), 5, 4, seed=0)
    assert np.array_equal(net.flat(), before)
    assert len(set(metrics.column("loss"))) == 1


def test_training_is_deterministic(tmp_path):
    X, y = toy_data()
    runs = []
    for k in range(2):
        net = init_params(2, 3, "sprk3", m=1, share_stages=True, rng=1)
        _, metrics = train(net, (X, y), LossSpec(), OptimizerState("adam", 0.01), 10, 3, seed=4)
        path = tmp_path / f"m{k}.csv"
        metrics.to_csv(path)
        runs.append((net.flat(), path.read_bytes()))
    assert np.array_equal(runs[0][0], runs[1][0])
    assert runs[0][1] == runs[1][1]


def test_toy_set_reaches_full_accuracy():
    X, y = toy_data()
    net = init_params(2, 4, "sprk2", m=1, h=0.5, share_stages=True, rng=0)
    _, metrics = train(net, (X, y), LossSpec(), OptimizerState("adam", 0.01), 200, 10, seed=0)
    assert metrics.final.test_metric == 100.0
    assert metrics.min_layer_norm >= 1 - 1e-8
    assert len(metrics) == 200


def test_regularized_problem_gradient_fd():
    X, y = toy_data()
    net = init_params(2, 2, "sprk2", m=1, rng=2)
    prob = ClassificationProblem(X, y, lam=0.05)
    idx = np.arange(10)
    _, g = prob.loss_and_grad(net, idx)

    def value(v):
        trial = net.copy()
        trial.set_flat(v)
        return prob.loss_and_grad(trial, idx)[0]

    an = np.concatenate([a.ravel() for a in g.values()])
    assert rel_err(an, central_diff(value, net.flat())) <= 1e-5


def test_divergence_guard():
    # contradictory labels: a huge step overshoots and the loss grows with the logits
    X = np.repeat(toy_data()[0][:3], 2, axis=0)
    y = np.tile([0.0, 1.0], 3)
    net = init_params(2, 2, "euler1", m=1, rng=0)
    with pytest.raises(TrainingDivergedError) as info:
        train(net, (X, y), LossSpec(), OptimizerState("sgd", 1e3), 20, 1, seed=0,
              divergence_factor=1.5)
    assert len(info.value.metrics) >= 1


def test_train_argument_checks():
    X, y = toy_data()
    net = init_params(2, 2, "euler1", m=1, rng=0)
    with pytest.raises(ValueError):
        train(net, (X, y), LossSpec(), OptimizerState(), 0, 4, seed=0)
    with pytest.raises(ValueError):
        train(net, (X, y), LossSpec(), OptimizerState(), 1, 0, seed=0)
