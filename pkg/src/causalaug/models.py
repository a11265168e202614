"""From-scratch models and ERM training.

Two model families:

* ``LinearRegressor``: closed-form least squares (``ols_fit``) or SGD.
* ``Mlp``: fully connected network with rectifier hidden layers, trained
  with minibatch SGD and hand-written backpropagation.  The output head is
  either identity (mean squared error) or softmax (cross-entropy).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .augment import Augmentation, apply_augmentation
from .errors import DivergenceError, EmptyDatasetError, InvalidDimensionError, SingularSystemError


# --------------------------------------------------------------------------
# linear regression


@dataclass
class LinearRegressor:
    weights: np.ndarray
    bias: float = 0.0

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float).reshape(-1)
        self.bias = float(self.bias)

    @classmethod
    def zeros(cls, n_features: int) -> "LinearRegressor":
        return cls(np.zeros(n_features), 0.0)

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float).reshape(len(X), -1)
        if X.shape[1] != self.weights.shape[0]:
            raise InvalidDimensionError(f"expected {self.weights.shape[0]} features, got {X.shape[1]}")
        return X @ self.weights + self.bias

    @property
    def params(self) -> list[np.ndarray]:
        return [self.weights, np.array([self.bias])]

    def loss_and_grads(self, X, t):
        X = np.asarray(X, dtype=float).reshape(len(X), -1)
        resid = self.predict(X) - t
        loss = float(np.mean(resid**2))
        g = 2.0 * resid / len(X)
        return loss, [X.T @ g, np.array([g.sum()])]

    def apply_update(self, grads, lr):
        self.weights = self.weights - lr * grads[0]
        self.bias = self.bias - lr * float(grads[1][0])

    def to_dict(self) -> dict:
        return {"kind": "linear", "weights": self.weights.tolist(), "bias": self.bias}


def ols_fit(X: np.ndarray, t: np.ndarray) -> LinearRegressor:
    """Least squares with intercept, solved through the normal equations."""
    X = np.asarray(X, dtype=float)
    t = np.asarray(t, dtype=float).reshape(-1)
    if X.ndim != 2 or X.shape[0] != t.shape[0]:
        raise InvalidDimensionError(f"design {X.shape} does not match targets {t.shape}")
    n, p = X.shape
    if n <= p:
        raise SingularSystemError(f"need more samples than features, got n={n}, p={p}")
    design = np.column_stack([X, np.ones(n)])
    if np.linalg.matrix_rank(design) < p + 1:
        raise SingularSystemError("design matrix (with intercept column) is rank deficient")
    gram = design.T @ design
    rhs = design.T @ t
    coef = np.linalg.solve(gram, rhs)
    # one step of iterative refinement keeps the optimality residual tiny
    coef += np.linalg.solve(gram, design.T @ (t - design @ coef))
    return LinearRegressor(coef[:-1], coef[-1])


# --------------------------------------------------------------------------
# multilayer perceptron


def glorot_uniform(fan_in: int, fan_out: int, rng: np.random.Generator) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


@dataclass
class Mlp:
    layer_sizes: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    output: str = "softmax"

    def __post_init__(self):
        if self.output not in ("softmax", "identity"):
            raise ValueError(f"unknown output head {self.output!r}")
        if len(self.weights) != len(self.layer_sizes) - 1:
            raise InvalidDimensionError("need one weight matrix per layer transition")
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.shape != (self.layer_sizes[i], self.layer_sizes[i + 1]) or b.shape != (self.layer_sizes[i + 1],):
                raise InvalidDimensionError(f"layer {i} parameters do not conform to {self.layer_sizes}")

    @classmethod
    def create(cls, layer_sizes: Sequence[int], rng: np.random.Generator, output: str = "softmax") -> "Mlp":
        sizes = [int(s) for s in layer_sizes]
        if len(sizes) < 2 or min(sizes) < 1:
            raise InvalidDimensionError(f"invalid layer sizes {sizes}")
        weights = [glorot_uniform(a, b, rng) for a, b in zip(sizes[:-1], sizes[1:])]
        biases = [np.zeros(b) for b in sizes[1:]]
        return cls(sizes, weights, biases, output)

    @property
    def params(self) -> list[np.ndarray]:
        return [p for pair in zip(self.weights, self.biases) for p in pair]

    def forward(self, X: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        a = np.asarray(X, dtype=float).reshape(len(X), -1)
        if a.shape[1] != self.layer_sizes[0]:
            raise InvalidDimensionError(f"expected {self.layer_sizes[0]} inputs, got {a.shape[1]}")
        acts = [a]
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ W + b
            a = z if i == last else np.maximum(z, 0.0)
            acts.append(a)
        return a, acts

    def predict(self, X: np.ndarray) -> np.ndarray:
        out, _ = self.forward(X)
        if self.output == "softmax":
            return out.argmax(axis=1)
        return out[:, 0] if out.shape[1] == 1 else out

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        out, _ = self.forward(X)
        return softmax(out)

    def loss_and_grads(self, X: np.ndarray, targets: np.ndarray) -> tuple[float, list[np.ndarray]]:
        logits, acts = self.forward(X)
        n = logits.shape[0]
        if self.output == "softmax":
            targets = np.asarray(targets, dtype=int)
            probs = softmax(logits)
            loss = float(-np.mean(np.log(np.clip(probs[np.arange(n), targets], 1e-300, None))))
            delta = probs
            delta[np.arange(n), targets] -= 1.0
            delta /= n
        else:
            t = np.asarray(targets, dtype=float).reshape(n, -1)
            resid = logits - t
            loss = float(np.mean(resid**2))
            delta = 2.0 * resid / resid.size
        grads_w, grads_b = [], []
        for i in range(len(self.weights) - 1, -1, -1):
            grads_w.append(acts[i].T @ delta)
            grads_b.append(delta.sum(axis=0))
            if i > 0:
                delta = (delta @ self.weights[i].T) * (acts[i] > 0)
        grads = []
        for gw, gb in zip(reversed(grads_w), reversed(grads_b)):
            grads += [gw, gb]
        return loss, grads

    def apply_update(self, grads, lr):
        for i in range(len(self.weights)):
            self.weights[i] -= lr * grads[2 * i]
            self.biases[i] -= lr * grads[2 * i + 1]

    def copy(self) -> "Mlp":
        return Mlp(list(self.layer_sizes), [w.copy() for w in self.weights], [b.copy() for b in self.biases], self.output)

    def to_dict(self) -> dict:
        return {
            "kind": "mlp",
            "layer_sizes": list(self.layer_sizes),
            "output": self.output,
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }


def model_from_dict(data: dict) -> LinearRegressor | Mlp:
    if data["kind"] == "linear":
        return LinearRegressor(np.array(data["weights"]), data["bias"])
    if data["kind"] == "mlp":
        return Mlp(
            list(data["layer_sizes"]),
            [np.array(w, dtype=float).reshape(a, b) for w, a, b in
             zip(data["weights"], data["layer_sizes"][:-1], data["layer_sizes"][1:])],
            [np.array(b, dtype=float) for b in data["biases"]],
            data["output"],
        )
    raise ValueError(f"unknown model kind {data['kind']!r}")


def dumps_model(model) -> str:
    return json.dumps(model.to_dict())


# --------------------------------------------------------------------------
# training


@dataclass
class TrainConfig:
    learning_rate: float = 0.1
    epochs: int = 10
    batch_size: int = 64
    seed: int = 0
    augmentations: list[Augmentation] = field(default_factory=list)

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")

    def with_augmentations(self, augmentations) -> "TrainConfig":
        return TrainConfig(self.learning_rate, self.epochs, self.batch_size, self.seed, list(augmentations))


@dataclass
class EvalMetrics:
    n: int
    accuracy: float | None = None
    mse: float | None = None


def _unpack(data, label: str):
    """Accept a DomainDataset or an ``(X, targets)`` pair."""
    if isinstance(data, tuple):
        X, t = data
        return np.asarray(X, dtype=float), np.asarray(t)
    return data.x, getattr(data, label)


def augment_batch(xb: np.ndarray, augmentations: Sequence[Augmentation], rng: np.random.Generator) -> np.ndarray:
    """Apply every augmentation in order, each with fresh per-sample randomness."""
    for spec in augmentations:
        xb = apply_augmentation(spec, xb, rng, gray_passthrough=True)
    return xb


def train_erm(model, data, config: TrainConfig, rng: np.random.Generator | None = None, *, label: str = "y"):
    """Minibatch SGD on the empirical risk; returns the trained model (updated in place).

    ``data`` is a ``DomainDataset`` (targets taken from attribute ``label``,
    e.g. ``"d"`` for a domain classifier) or an ``(X, targets)`` pair.
    Augmentations touch only the training minibatches.
    """
    from .rng import make_rng

    X, targets = _unpack(data, label)
    n = len(X)
    if n == 0:
        raise EmptyDatasetError("cannot train on an empty dataset")
    rng = make_rng(config.seed) if rng is None else rng
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            xb = X[idx]
            if config.augmentations:
                xb = augment_batch(xb, config.augmentations, rng)
            loss, grads = model.loss_and_grads(xb.reshape(len(idx), -1), targets[idx])
            if not np.isfinite(loss):
                raise DivergenceError(epoch, loss)
            if config.learning_rate:
                model.apply_update(grads, config.learning_rate)
    return model


def evaluate(model, data, *, label: str = "y") -> EvalMetrics:
    X, targets = _unpack(data, label)
    n = len(X)
    if n == 0:
        raise EmptyDatasetError("cannot evaluate on an empty dataset")
    preds = model.predict(X.reshape(n, -1))
    if isinstance(model, Mlp) and model.output == "softmax":
        return EvalMetrics(n=n, accuracy=float(np.mean(preds == np.asarray(targets))))
    return EvalMetrics(n=n, mse=float(np.mean((preds - np.asarray(targets, dtype=float)) ** 2)))


def gradient_check(model, X: np.ndarray, targets: np.ndarray, epsilon: float = 1e-5) -> float:
    """Max relative error between backprop and central finite differences.

    The relative error of each entry is ``|a - n| / max(|a|, |n|, 1e-8)``, so
    entries whose gradients are both essentially zero compare absolutely.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    _, analytic = model.loss_and_grads(X, targets)
    worst = 0.0
    for param, grad in zip(model.params, analytic):
        flat = param.reshape(-1)
        numeric = np.empty_like(flat)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + epsilon
            _sync(model, param)
            up, _ = model.loss_and_grads(X, targets)
            flat[i] = old - epsilon
            _sync(model, param)
            down, _ = model.loss_and_grads(X, targets)
            flat[i] = old
            _sync(model, param)
            numeric[i] = (up - down) / (2 * epsilon)
        a = grad.reshape(-1)
        denom = np.maximum(np.maximum(np.abs(a), np.abs(numeric)), 1e-8)
        worst = max(worst, float(np.max(np.abs(a - numeric) / denom)))
    return worst


def _sync(model, param):
    # LinearRegressor exposes its bias as a fresh array; write it back.
    if isinstance(model, LinearRegressor) and param.shape == (1,) and param is not model.weights:
        model.bias = float(param[0])
