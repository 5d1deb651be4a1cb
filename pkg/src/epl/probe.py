"""Downstream classifiers trained on true or pseudo labels.

Two probes: a one-vs-rest L2-regularized hinge classifier fitted by
deterministic full-batch subgradient descent (the linear-separability
check), and a single-hidden-layer softmax network fitted by minibatch SGD
with momentum and a linearly decaying step (the pseudo-label consumer).
Prediction is always argmax over class scores with ties resolved to the
lower class id.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import checkpoint as ckpt
from .dataset import UNLABELED, LabelVector


class ProbeError(ValueError):
    """Raised for unusable training inputs."""


def _labels_array(labels) -> np.ndarray:
    if isinstance(labels, LabelVector):
        return labels.values
    return np.asarray(labels, dtype=np.int64)


# ---------------------------------------------------------------------------
# Linear probe
# ---------------------------------------------------------------------------

@dataclass
class LinearModel:
    weights: np.ndarray  # (k, d)
    bias: np.ndarray     # (k,)
    lam: float
    epochs: int
    seed: int
    objective_trace: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def class_count(self) -> int:
        return self.weights.shape[0]

    def scores(self, X: np.ndarray) -> np.ndarray:
        return X @ self.weights.T + self.bias

    def save(self, path, config_lines: dict | None = None) -> None:
        arrays = {"weights": self.weights, "bias": self.bias,
                  "lam": np.array([self.lam]), "epochs": np.array([float(self.epochs)]),
                  "seed": np.array([float(self.seed)])}
        ckpt.save_checkpoint(path, ckpt.KIND_LINEAR, arrays, config_lines)

    @classmethod
    def load(cls, path) -> "LinearModel":
        kind, arrays = ckpt.load_checkpoint(path)
        if kind != ckpt.KIND_LINEAR:
            raise ProbeError(f"{path}: not a linear checkpoint")
        return cls(arrays["weights"], arrays["bias"], float(arrays["lam"][0]),
                   int(arrays["epochs"][0]), int(arrays["seed"][0]))


def train_linear(features, labels, lam: float = 1.0, epochs: int = 200,
                 seed: int = 0, class_count: int | None = None) -> LinearModel:
    """One-vs-rest hinge loss with an epoch-wise 1e-3 / sqrt(t) step.

    Full-batch subgradient descent from zero weights; the run is
    deterministic regardless of seed, which is recorded for provenance.
    The per-epoch regularized objective is kept on the model.
    """
    X = np.asarray(features, dtype=np.float64)
    y = _labels_array(labels)
    if (y == UNLABELED).any():
        raise ProbeError("linear probe requires labeled training samples")
    k = class_count if class_count is not None else int(y.max()) + 1
    if np.unique(y).size < 2:
        raise ProbeError("training set must contain at least 2 classes")
    n, d = X.shape
    target = np.full((n, k), -1.0)
    target[np.arange(n), y] = 1.0
    W = np.zeros((k, d))
    b = np.zeros(k)
    trace = np.empty(epochs)
    for t in range(1, epochs + 1):
        step = 1e-3 / np.sqrt(t)
        margins = target * (X @ W.T + b)
        viol = margins < 1.0
        coeff = target * viol
        grad_w = -(coeff.T @ X) / n + lam * W
        grad_b = -coeff.sum(axis=0) / n
        W -= step * grad_w
        b -= step * grad_b
        hinge = np.maximum(0.0, 1.0 - target * (X @ W.T + b)).mean(axis=0)
        trace[t - 1] = float((hinge + 0.5 * lam * (W ** 2).sum(axis=1)).mean())
    return LinearModel(W, b, lam, epochs, seed, trace)


# ---------------------------------------------------------------------------
# Softmax probe
# ---------------------------------------------------------------------------

@dataclass
class SoftmaxConfig:
    epochs: int = 15
    learning_rate: float = 0.1
    momentum: float = 0.9
    batch_size: int = 32
    hidden_dim: int = 64
    seed: int = 0


@dataclass
class SoftmaxModel:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    config: SoftmaxConfig
    # Input standardization fitted on the training set; the 0.1 step with
    # 0.9 momentum assumes unit-scale inputs and diverges without it.
    mean: np.ndarray | None = None
    scale: np.ndarray | None = None

    @property
    def class_count(self) -> int:
        return self.w2.shape[1]

    def _standardize(self, X: np.ndarray) -> np.ndarray:
        if self.mean is None:
            return X
        return (X - self.mean) / self.scale

    def scores(self, X: np.ndarray) -> np.ndarray:
        hidden = np.maximum(self._standardize(X) @ self.w1 + self.b1, 0.0)
        return hidden @ self.w2 + self.b2

    def save(self, path, config_lines: dict | None = None) -> None:
        arrays = {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}
        if self.mean is not None:
            arrays["mean"] = self.mean
            arrays["scale"] = self.scale
        ckpt.save_checkpoint(path, ckpt.KIND_SOFTMAX, arrays, config_lines)

    @classmethod
    def load(cls, path) -> "SoftmaxModel":
        kind, arrays = ckpt.load_checkpoint(path)
        if kind != ckpt.KIND_SOFTMAX:
            raise ProbeError(f"{path}: not a softmax checkpoint")
        return cls(arrays["w1"], arrays["b1"], arrays["w2"], arrays["b2"],
                   SoftmaxConfig(), arrays.get("mean"), arrays.get("scale"))


def softmax_probabilities(model: SoftmaxModel, features) -> np.ndarray:
    """Row-stochastic class probabilities."""
    scores = model.scores(np.atleast_2d(np.asarray(features, dtype=np.float64)))
    shifted = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _init_softmax(dim: int, k: int, config: SoftmaxConfig, rng) -> SoftmaxModel:
    lim1 = np.sqrt(6.0 / dim)
    lim2 = np.sqrt(6.0 / config.hidden_dim)
    return SoftmaxModel(
        w1=rng.uniform(-lim1, lim1, (dim, config.hidden_dim)),
        b1=np.zeros(config.hidden_dim),
        w2=rng.uniform(-lim2, lim2, (config.hidden_dim, k)),
        b2=np.zeros(k),
        config=config,
    )


def _softmax_loss_grads(model: SoftmaxModel, X: np.ndarray, y: np.ndarray):
    a1 = X @ model.w1 + model.b1
    h1 = np.maximum(a1, 0.0)
    scores = h1 @ model.w2 + model.b2
    shifted = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    probs = e / e.sum(axis=1, keepdims=True)
    n = X.shape[0]
    loss = float(-np.log(np.maximum(probs[np.arange(n), y], 1e-300)).mean())
    d_scores = probs.copy()
    d_scores[np.arange(n), y] -= 1.0
    d_scores /= n
    grads = {
        "w2": h1.T @ d_scores,
        "b2": d_scores.sum(axis=0),
    }
    d_h1 = d_scores @ model.w2.T
    d_a1 = d_h1 * (a1 > 0)
    grads["w1"] = X.T @ d_a1
    grads["b1"] = d_a1.sum(axis=0)
    return loss, grads


def train_softmax(features, labels, config: SoftmaxConfig | None = None,
                  class_count: int | None = None) -> SoftmaxModel:
    """Cross-entropy training with momentum SGD and a linear step decay.

    The step starts at learning_rate and decays by a factor (1 - e/E) each
    epoch. Pseudo-provenance labels are accepted; unlabeled entries are an
    error naming the first offending index.
    """
    cfg = config if config is not None else SoftmaxConfig()
    X = np.asarray(features, dtype=np.float64)
    y = _labels_array(labels)
    if (y == UNLABELED).any():
        bad = int(np.argmax(y == UNLABELED))
        raise ProbeError(f"training index {bad} is unlabeled")
    k = class_count if class_count is not None else int(y.max()) + 1
    rng = np.random.default_rng(cfg.seed)
    model = _init_softmax(X.shape[1], k, cfg, rng)
    model.mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale == 0] = 1.0
    model.scale = scale
    Xn = (X - model.mean) / model.scale
    velocity = {name: np.zeros_like(arr)
                for name, arr in (("w1", model.w1), ("b1", model.b1),
                                  ("w2", model.w2), ("b2", model.b2))}
    n = X.shape[0]
    for epoch in range(cfg.epochs):
        lr = cfg.learning_rate * (1.0 - epoch / cfg.epochs)
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            chunk = order[start:start + cfg.batch_size]
            _, grads = _softmax_loss_grads(model, Xn[chunk], y[chunk])
            for name, g in grads.items():
                v = velocity[name]
                v *= cfg.momentum
                v += g
                getattr(model, name)[...] -= lr * v
    return model


def predict(model, features) -> np.ndarray:
    """Argmax class per row for either probe; ties go to the lower class id."""
    X = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if isinstance(model, LinearModel):
        expected = model.weights.shape[1]
    elif isinstance(model, SoftmaxModel):
        expected = model.w1.shape[0]
    else:
        raise ProbeError(f"unknown model type {type(model).__name__}")
    if X.shape[1] != expected:
        raise ProbeError(f"feature dimension {X.shape[1]} != model dimension {expected}")
    return np.argmax(model.scores(X), axis=1).astype(np.int64)
