import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from causalaug import augment as aug
from causalaug.datasets import DomainDataset
from causalaug.errors import DivergenceError, EmptyDatasetError, SingularSystemError
from causalaug.models import (
    LinearRegressor, Mlp, TrainConfig, dumps_model, evaluate, glorot_uniform, gradient_check,
    model_from_dict, ols_fit, train_erm,
)
from oracles import ols_lstsq


def test_ols_trivial():
    m = ols_fit(np.array([[0.0], [1.0]] * 2), np.array([0.0, 1.0] * 2))
    assert m.weights[0] == pytest.approx(1.0, abs=1e-12) and m.bias == pytest.approx(0.0, abs=1e-12)
    X = np.random.default_rng(0).standard_normal((50, 3))
    m = ols_fit(X, np.full(50, 2.5))
    np.testing.assert_allclose(m.weights, 0.0, atol=1e-12)
    assert m.bias == pytest.approx(2.5)


def test_ols_optimality_and_oracle(rng):
    X = rng.standard_normal((200, 10))
    t = X @ rng.standard_normal(10) + 0.3 * rng.standard_normal(200) + 1.0
    m = ols_fit(X, t)
    resid = X @ m.weights + m.bias - t
    assert np.abs(X.T @ resid).max() < 1e-8
    assert abs(resid.sum()) < 1e-8
    w, b = ols_lstsq(X, t)
    np.testing.assert_allclose(m.weights, w, atol=1e-10)
    assert m.bias == pytest.approx(b, abs=1e-10)


def test_ols_rank_deficient(rng):
    X = rng.standard_normal((30, 2))
    with pytest.raises(SingularSystemError):
        ols_fit(np.column_stack([X, X[:, 0]]), rng.standard_normal(30))
    with pytest.raises(SingularSystemError):
        ols_fit(np.ones((30, 1)), rng.standard_normal(30))
    with pytest.raises(SingularSystemError):
        ols_fit(rng.standard_normal((3, 3)), rng.standard_normal(3))


def test_glorot_bounds(rng):
    W = glorot_uniform(30, 20, rng)
    assert W.shape == (30, 20) and np.abs(W).max() <= np.sqrt(6 / 50)


def test_gradient_check_linear_layer(rng):
    m = Mlp.create([4, 1], rng, output="identity")
    X, t = rng.standard_normal((8, 4)), rng.standard_normal(8)
    assert gradient_check(m, X, t, 1e-5) < 1e-7
    lin = LinearRegressor(rng.standard_normal(4), 0.3)
    assert gradient_check(lin, X, t, 1e-5) < 1e-7


@pytest.mark.parametrize("sizes,output", [([5, 7, 3], "softmax"), ([5, 6, 4, 1], "identity"), ([6, 8, 2], "softmax")])
def test_gradient_check_mlp(rng, sizes, output):
    m = Mlp.create(sizes, rng, output=output)
    for b in m.biases:
        b += 0.05  # keep pre-activations away from the ReLU kink
    X = rng.standard_normal((10, sizes[0]))
    t = rng.integers(0, sizes[-1], 10) if output == "softmax" else rng.standard_normal(10)
    assert gradient_check(m, X, t, 1e-5) < 1e-4


def test_gradient_check_zero_network():
    m = Mlp([3, 4, 2], [np.zeros((3, 4)), np.zeros((4, 2))], [np.zeros(4), np.zeros(2)])
    X = np.zeros((5, 3))
    t = np.array([0, 1, 0, 1, 1])
    _, grads = m.loss_and_grads(X, t)
    assert all(np.all(np.isfinite(g)) for g in grads)
    assert gradient_check(m, X, t) < 1e-6


def test_zero_learning_rate_leaves_params(rng):
    m = Mlp.create([4, 5, 2], rng)
    before = [p.copy() for p in m.params]
    X, y = rng.standard_normal((40, 4)), rng.integers(0, 2, 40)
    train_erm(m, (X, y), TrainConfig(learning_rate=0.0, epochs=3), rng)
    for a, b in zip(before, m.params):
        np.testing.assert_array_equal(a, b)


def test_separable_toy_reaches_full_accuracy():
    rng = np.random.default_rng(0)
    X = rng.uniform(-1, 1, (200, 2))
    X = X[np.abs(X[:, 0] + X[:, 1]) > 0.2]
    y = (X[:, 0] + X[:, 1] > 0).astype(int)
    m = Mlp.create([2, 2], rng)
    train_erm(m, (X, y), TrainConfig(learning_rate=0.5, epochs=100, batch_size=16), rng)
    assert evaluate(m, (X, y)).accuracy == 1.0


def test_training_determinism(rng):
    X, y = rng.standard_normal((60, 4)), rng.integers(0, 3, 60)
    models = []
    for _ in range(2):
        r = np.random.default_rng(7)
        m = Mlp.create([4, 6, 3], r)
        models.append(train_erm(m, (X, y), TrainConfig(0.1, 4, 8), r))
    for a, b in zip(models[0].params, models[1].params):
        np.testing.assert_array_equal(a, b)


def test_linear_regressor_gd_monotone(rng):
    X = rng.standard_normal((100, 3))
    t = X @ np.array([1.0, -2.0, 0.5]) + 0.1 * rng.standard_normal(100)
    m = LinearRegressor.zeros(3)
    losses = []
    for _ in range(50):
        loss, grads = m.loss_and_grads(X, t)
        losses.append(loss)
        m.apply_update(grads, 0.05)
    assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))


def test_divergence_and_empty(rng):
    X, t = rng.standard_normal((20, 2)) * 1e3, rng.standard_normal(20) * 1e3
    with pytest.raises(DivergenceError) as info:
        with np.errstate(all="ignore"):
            train_erm(LinearRegressor.zeros(2), (X, t), TrainConfig(learning_rate=10.0, epochs=50, batch_size=20), rng)
    assert info.value.epoch >= 0
    with pytest.raises(EmptyDatasetError):
        train_erm(LinearRegressor.zeros(2), (np.zeros((0, 2)), np.zeros(0)), TrainConfig(), rng)
    with pytest.raises(EmptyDatasetError):
        evaluate(LinearRegressor.zeros(2), (np.zeros((0, 2)), np.zeros(0)))


def test_evaluate_against_loop(rng):
    m = Mlp.create([3, 4, 2], rng)
    X, y = rng.standard_normal((10, 3)), rng.integers(0, 2, 10)
    probs = m.predict_proba(X)
    loop_acc = sum(int(np.argmax(probs[i]) == y[i]) for i in range(10)) / 10
    assert evaluate(m, (X, y)).accuracy == loop_acc
    lin = LinearRegressor(rng.standard_normal(3), 0.2)
    t = rng.standard_normal(10)
    loop_mse = sum((float(X[i] @ lin.weights) + lin.bias - t[i]) ** 2 for i in range(10)) / 10
    assert evaluate(lin, (X, t)).mse == pytest.approx(loop_mse, abs=1e-12)


def test_evaluate_trivial():
    X = np.eye(4)
    y = np.array([0, 1, 0, 1])
    const = Mlp([4, 2], [np.zeros((4, 2))], [np.array([1.0, 0.0])])
    assert evaluate(const, (X, y)).accuracy == 0.5
    perfect = Mlp([4, 2], [np.array([[1, 0], [0, 1], [1, 0], [0, 1]], dtype=float)], [np.zeros(2)])
    assert evaluate(perfect, (X, y)).accuracy == 1.0
    assert evaluate(LinearRegressor(np.ones(4), 0.0), (X, np.ones(4))).mse == 0.0


class _CountingSpec(aug.Augmentation):
    """Records every batch it is asked to transform."""

    name = "counting"

    def __init__(self):
        self.seen = []

    def apply(self, batch, rng):
        self.seen.append(batch.copy())
        return batch


def test_augmentation_touches_training_batches_only(rng):
    x = rng.random((30, 4, 4, 1))
    train = DomainDataset(x, rng.integers(0, 2, 30), np.zeros(30, dtype=int), 1, 2)
    held = rng.random((12, 4, 4, 1))
    held_copy = held.copy()
    spec = _CountingSpec()
    m = Mlp.create([16, 3, 2], rng)
    train_erm(m, train, TrainConfig(0.1, 2, 8, augmentations=[spec]), rng)
    assert sum(len(b) for b in spec.seen) == 2 * 30
    evaluate(m, (held, np.zeros(12, dtype=int)))
    assert sum(len(b) for b in spec.seen) == 60
    np.testing.assert_array_equal(held, held_copy)


def test_empty_augmentation_list_equals_plain(rng):
    x = rng.random((30, 4, 4, 1))
    ds = DomainDataset(x, rng.integers(0, 2, 30), np.zeros(30, dtype=int), 1, 2)
    out = []
    for augs in ([], None):
        r = np.random.default_rng(3)
        m = Mlp.create([16, 3, 2], r)
        cfg = TrainConfig(0.1, 2, 8) if augs is None else TrainConfig(0.1, 2, 8).with_augmentations(augs)
        out.append(train_erm(m, ds, cfg, r))
    for a, b in zip(out[0].params, out[1].params):
        np.testing.assert_array_equal(a, b)


def test_serialization_roundtrip(rng):
    m = Mlp.create([3, 5, 2], rng)
    back = model_from_dict(json.loads(dumps_model(m)))
    X = rng.standard_normal((7, 3))
    np.testing.assert_array_equal(back.predict_proba(X), m.predict_proba(X))
    lin = LinearRegressor(rng.standard_normal(3), 1.5)
    back = model_from_dict(json.loads(dumps_model(lin)))
    np.testing.assert_array_equal(back.predict(X), lin.predict(X))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), hidden=st.integers(1, 6), classes=st.integers(2, 4))
def test_gradient_property(seed, hidden, classes):
    rng = np.random.default_rng(seed)
    m = Mlp.create([3, hidden, classes], rng)
    X = rng.standard_normal((6, 3))
    z = X @ m.weights[0] + m.biases[0]
    if np.abs(z).min() < 1e-3:  # too close to a ReLU kink for finite differences
        return
    assert gradient_check(m, X, rng.integers(0, classes, 6), 1e-6) < 1e-4
