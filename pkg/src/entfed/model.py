"""Small supervised models, their losses and gradients, and local SGD training.

Parameters are always carried as a flat float64 vector. The layout is
row-major per layer:

* linear:  ``W (C x f) | b (C)``
* mlp:     ``W1 (h x f) | b1 (h) | W2 (C x h) | b2 (C)`` with a tanh hidden layer
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ContractError

ParamVector = np.ndarray


@dataclass(frozen=True)
class Architecture:
    id: str
    input_dim: int
    hidden_dim: int
    class_count: int

    def __post_init__(self):
        if self.class_count < 2:
            raise ContractError("class_count must be >= 2")
        if self.input_dim < 1 or self.hidden_dim < 0:
            raise ContractError("invalid layer sizes")

    @property
    def n_params(self) -> int:
        f, h, c = self.input_dim, self.hidden_dim, self.class_count
        if h == 0:
            return c * f + c
        return h * f + h + c * h + c


LINEAR = Architecture("linear", 8, 0, 2)
MLP16 = Architecture("mlp16", 16, 16, 10)
MLP32 = Architecture("mlp32", 16, 32, 10)
ARCHITECTURES = {a.id: a for a in (LINEAR, MLP16, MLP32)}


@dataclass
class Hyperparams:
    """Training and protocol hyperparameters with their standard defaults."""

    learning_rate: float = 0.01
    momentum: float = 0.9
    batch_train: int = 64
    batch_test: int = 128
    epochs: int = 30
    rounds: int = 50
    enterprises: int = 100
    malicious_rate: float = 0.2
    quant_clusters: int = 5
    select_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ContractError("learning_rate must be positive")
        if not 0 <= self.momentum < 1:
            raise ContractError("momentum must be in [0, 1)")
        if not 0 <= self.malicious_rate < 1:
            raise ContractError("malicious_rate must be in [0, 1)")
        if self.quant_clusters < 2:
            raise ContractError("quant_clusters must be >= 2")
        if not 0 < self.select_fraction <= 1:
            raise ContractError("select_fraction must be in (0, 1]")
        if self.batch_train < 1 or self.batch_test < 1 or self.epochs < 0:
            raise ContractError("batch sizes must be positive and epochs non-negative")


@dataclass
class LocalDataset:
    features: np.ndarray
    labels: np.ndarray
    data_type: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2:
            raise ContractError("features must be a 2-D matrix")
        if len(self.features) != len(self.labels):
            raise ContractError("features and labels disagree in length")

    @property
    def size(self) -> int:
        return len(self.labels)

    def subset(self, idx) -> "LocalDataset":
        idx = np.asarray(idx, dtype=np.int64)
        return LocalDataset(self.features[idx], self.labels[idx], self.data_type)


def init_params(arch: Architecture, rng: np.random.Generator) -> ParamVector:
    return rng.uniform(-0.05, 0.05, size=arch.n_params)


def _unpack(params: ParamVector, arch: Architecture):
    params = np.asarray(params, dtype=np.float64)
    if params.ndim != 1 or params.shape[0] != arch.n_params:
        raise ContractError(
            f"parameter vector has length {params.shape}, architecture {arch.id} needs {arch.n_params}"
        )
    f, h, c = arch.input_dim, arch.hidden_dim, arch.class_count
    if h == 0:
        return params[: c * f].reshape(c, f), params[c * f:]
    o = 0
    w1 = params[o:o + h * f].reshape(h, f); o += h * f
    b1 = params[o:o + h]; o += h
    w2 = params[o:o + c * h].reshape(c, h); o += c * h
    b2 = params[o:o + c]
    return w1, b1, w2, b2


def _check_data(arch: Architecture, data: LocalDataset):
    if data.features.shape[1] != arch.input_dim:
        raise ContractError(
            f"features have {data.features.shape[1]} columns, architecture {arch.id} expects {arch.input_dim}"
        )
    if data.size and (data.labels.min() < 0 or data.labels.max() >= arch.class_count):
        raise ContractError("label outside the architecture's class range")


def _log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def logits(params: ParamVector, arch: Architecture, x: np.ndarray) -> np.ndarray:
    parts = _unpack(params, arch)
    if arch.hidden_dim == 0:
        w, b = parts
        return x @ w.T + b
    w1, b1, w2, b2 = parts
    return np.tanh(x @ w1.T + b1) @ w2.T + b2


def predict(params: ParamVector, arch: Architecture, x: np.ndarray) -> np.ndarray:
    return np.argmax(logits(params, arch, np.asarray(x, dtype=np.float64)), axis=1)


def loss(params: ParamVector, arch: Architecture, data: LocalDataset) -> float:
    """Mean cross-entropy of the model over ``data``."""
    _check_data(arch, data)
    if data.size == 0:
        raise ContractError("loss of an empty dataset is undefined")
    lp = _log_softmax(logits(params, arch, data.features))
    return float(-lp[np.arange(data.size), data.labels].mean())


def gradient(params: ParamVector, arch: Architecture, batch: LocalDataset) -> ParamVector:
    """Analytic gradient of :func:`loss` with respect to the flat parameters."""
    _check_data(arch, batch)
    n = batch.size
    if n == 0:
        raise ContractError("gradient of an empty batch is undefined")
    x, y = batch.features, batch.labels
    parts = _unpack(params, arch)
    if arch.hidden_dim == 0:
        w, b = parts
        z = x @ w.T + b
        e = np.exp(_log_softmax(z))
        e[np.arange(n), y] -= 1.0
        e /= n
        return np.concatenate([(e.T @ x).ravel(), e.sum(axis=0)])
    w1, b1, w2, b2 = parts
    a = np.tanh(x @ w1.T + b1)
    e = np.exp(_log_softmax(a @ w2.T + b2))
    e[np.arange(n), y] -= 1.0
    e /= n
    gw2 = e.T @ a
    gb2 = e.sum(axis=0)
    da = (e @ w2) * (1.0 - a * a)
    gw1 = da.T @ x
    gb1 = da.sum(axis=0)
    return np.concatenate([gw1.ravel(), gb1, gw2.ravel(), gb2])


def sgd_step(params, grad, velocity, lr: float, momentum: float):
    """One heavy-ball step: ``v' = momentum*v + g``, ``w' = w - lr*v'``."""
    params = np.asarray(params, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    velocity = np.asarray(velocity, dtype=np.float64)
    if not (params.shape == grad.shape == velocity.shape):
        raise ContractError("params, grad and velocity must have equal lengths")
    v = momentum * velocity + grad
    return params - lr * v, v


def local_train(global_params: ParamVector, arch: Architecture, data: LocalDataset,
                hyper: Hyperparams, seed=None) -> ParamVector:
    """Run ``hyper.epochs`` epochs of minibatch SGD with momentum from ``global_params``.

    The minibatch order is reshuffled each epoch from ``seed`` (falls back to
    ``hyper.seed``), so a given seed and dataset always give the same result.
    """
    _check_data(arch, data)
    w = np.array(global_params, dtype=np.float64, copy=True)
    _unpack(w, arch)
    if data.size == 0:
        raise ContractError("cannot train on an empty dataset")
    rng = np.random.default_rng(hyper.seed if seed is None else seed)
    v = np.zeros_like(w)
    bs = hyper.batch_train
    for _ in range(hyper.epochs):
        order = rng.permutation(data.size)
        for start in range(0, data.size, bs):
            idx = order[start:start + bs]
            batch = LocalDataset(data.features[idx], data.labels[idx])
            w, v = sgd_step(w, gradient(w, arch, batch), v, hyper.learning_rate, hyper.momentum)
    return w


def global_loss(models: Sequence[tuple], archs: Sequence[Architecture],
                datasets: Sequence[LocalDataset]) -> float:
    """Dataset-size weighted mean of per-enterprise losses.

    ``models`` holds ``(params, size)`` pairs aligned with ``archs`` and ``datasets``.
    """
    if not models:
        raise ContractError("global loss over no enterprises")
    if not (len(models) == len(archs) == len(datasets)):
        raise ContractError("models, archs and datasets must align")
    total = 0.0
    weight = 0
    for (params, size), arch, data in zip(models, archs, datasets):
        if size <= 0:
            raise ContractError("dataset sizes must be positive")
        total += size * loss(params, arch, data)
        weight += size
    return total / weight
