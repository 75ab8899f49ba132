"""Feedforward count regressor with from-scratch reverse-mode gradients.

Architecture: affine + rectifier per hidden layer, affine + softplus at
the single output, so predictions are always non-negative. Training
minimizes a Huber loss (delta = 1) plus an L2 penalty on the weights by
mini-batch gradient descent; MAE stays the reporting metric. Training is
single-threaded and bit-deterministic given the seeds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .featurize import NormStats

__all__ = [
    "RegressorParams",
    "TrainConfig",
    "init_params",
    "forward",
    "forward_batch",
    "loss_and_gradient",
    "train",
    "run_epochs",
    "epoch_order",
    "count_from_output",
    "predict_count",
]


@dataclass
class TrainConfig:
    learning_rate: float = 0.02
    batch_size: int = 16
    epochs: int = 400
    l2_penalty: float = 0.0
    shuffle_seed: int = 0
    patience: int = 60  # epochs without validation improvement before stopping

    def __post_init__(self) -> None:
        if not self.learning_rate >= 0.0:
            raise ValueError("learning_rate must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.l2_penalty < 0.0:
            raise ValueError("l2_penalty must be non-negative")
        if self.patience < 0:
            raise ValueError("patience must be non-negative")


@dataclass
class RegressorParams:
    """Layer sizes, weights (out x in) and biases, plus normalization reference."""

    layer_sizes: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    hidden_activation: str = "relu"
    output_activation: str = "softplus"
    init_seed: int = 0
    norm_stats: NormStats | None = None

    def __post_init__(self) -> None:
        self.layer_sizes = tuple(int(s) for s in self.layer_sizes)
        if len(self.layer_sizes) < 2 or any(s < 1 for s in self.layer_sizes):
            raise ValueError("layer_sizes needs at least input and output, all positive")
        if self.layer_sizes[-1] != 1:
            raise ValueError("output layer size must be 1")
        if self.hidden_activation != "relu" or self.output_activation != "softplus":
            raise ValueError("supported activations: relu hidden, softplus output")
        expected = list(zip(self.layer_sizes[1:], self.layer_sizes[:-1]))
        if len(self.weights) != len(expected) or len(self.biases) != len(expected):
            raise ValueError("weights/biases must match the layer count")
        for w, b, shape in zip(self.weights, self.biases, expected):
            if w.shape != shape or b.shape != (shape[0],):
                raise ValueError("weight/bias shapes disagree with layer_sizes")
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise ValueError("parameters must be finite")

    def copy(self) -> "RegressorParams":
        return RegressorParams(
            self.layer_sizes,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.hidden_activation,
            self.output_activation,
            self.init_seed,
            self.norm_stats,
        )


def init_params(layer_sizes, seed: int, norm_stats: NormStats | None = None) -> RegressorParams:
    """Glorot-uniform weights in +-sqrt(6/(fan_in+fan_out)), zero biases."""
    sizes = tuple(int(s) for s in layer_sizes)
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out, dtype=np.float64))
    return RegressorParams(sizes, weights, biases, init_seed=seed, norm_stats=norm_stats)


def _softplus(z: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, z)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # Numerically stable logistic; derivative of softplus.
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _forward_pass(params: RegressorParams, X: np.ndarray):
    # Returns pre-activations, activations and the (B,) output vector.
    pre: list[np.ndarray] = []
    act: list[np.ndarray] = [X]
    a = X
    for w, b in zip(params.weights[:-1], params.biases[:-1]):
        z = a @ w.T + b
        a = np.maximum(z, 0.0)
        pre.append(z)
        act.append(a)
    z_out = a @ params.weights[-1].T + params.biases[-1]
    pre.append(z_out)
    return pre, act, _softplus(z_out)[:, 0]


def _as_batch(params: RegressorParams, X) -> np.ndarray:
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != params.layer_sizes[0]:
        raise ValueError("input width must equal the network input size")
    return arr


def forward_batch(params: RegressorParams, X) -> np.ndarray:
    """Network outputs for a batch of feature rows; always non-negative."""
    arr = _as_batch(params, X)
    return _forward_pass(params, arr)[2]


def forward(params: RegressorParams, x) -> float:
    """Network output for one feature vector; softplus keeps it non-negative."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError("forward expects a single 1-D feature vector")
    return float(forward_batch(params, arr)[0])


def _huber(residual: np.ndarray) -> np.ndarray:
    a = np.abs(residual)
    return np.where(a <= 1.0, 0.5 * residual * residual, a - 0.5)


def loss_and_gradient(params: RegressorParams, batch_X, batch_y, l2: float = 0.0):
    """Huber(delta=1) batch loss plus l2*|W|^2/2, with reverse-mode gradients.

    Returns (loss, weight_gradients, bias_gradients) with gradients shaped
    exactly like the parameters. The L2 penalty covers weights only.
    """
    X = _as_batch(params, batch_X)
    y = np.asarray(batch_y, dtype=np.float64).reshape(-1)
    if X.shape[0] == 0:
        raise ValueError("batch must be non-empty")
    if y.shape[0] != X.shape[0]:
        raise ValueError("batch_X and batch_y must have the same length")
    n = X.shape[0]

    pre, act, y_hat = _forward_pass(params, X)
    residual = y_hat - y
    loss = float(np.mean(_huber(residual)))
    if l2 > 0.0:
        loss += 0.5 * l2 * sum(float(np.sum(w * w)) for w in params.weights)

    # dL/dy_hat for the mean Huber: clip(residual, -1, 1) / n
    d_yhat = np.clip(residual, -1.0, 1.0) / n
    # through the softplus head: d softplus(z) = sigmoid(z)
    delta = (d_yhat * _sigmoid(pre[-1])[:, 0])[:, None]

    grad_w = [np.zeros_like(w) for w in params.weights]
    grad_b = [np.zeros_like(b) for b in params.biases]
    for layer in range(len(params.weights) - 1, -1, -1):
        grad_w[layer] = delta.T @ act[layer]
        grad_b[layer] = delta.sum(axis=0)
        if layer > 0:
            delta = (delta @ params.weights[layer]) * (pre[layer - 1] > 0.0)
    if l2 > 0.0:
        for layer, w in enumerate(params.weights):
            grad_w[layer] += l2 * w
    return loss, grad_w, grad_b


def _data_loss(params: RegressorParams, X: np.ndarray, y: np.ndarray) -> float:
    return float(np.mean(_huber(forward_batch(params, X) - np.asarray(y, dtype=np.float64))))


def epoch_order(n_rows: int, rng: np.random.Generator) -> np.ndarray:
    """Shuffled index sequence defining the epoch's batches."""
    return rng.permutation(n_rows)


def run_epochs(params, train_set, val_set, config: TrainConfig, permutations):
    """Gradient-descent epochs over explicit per-epoch index permutations.

    Batches are consecutive slices of each permutation, so results depend
    only on the presented example sequence, not on storage order. Returns
    (best-validation params, history rows (epoch, train_objective,
    val_loss)). Exposed separately from ``train`` so the batching
    contract is testable with hand-built permutations.
    """
    X_train, y_train = train_set
    X_val, y_val = val_set
    X_train = _as_batch(params, X_train)
    X_val = _as_batch(params, X_val)
    y_train = np.asarray(y_train, dtype=np.float64).reshape(-1)
    y_val = np.asarray(y_val, dtype=np.float64).reshape(-1)
    if X_train.shape[0] == 0 or X_val.shape[0] == 0:
        raise ValueError("train and validation splits must be non-empty")

    current = params.copy()
    best = current.copy()
    best_val = _data_loss(current, X_val, y_val)
    history: list[tuple[int, float, float]] = []
    stale = 0
    for epoch, order in enumerate(permutations):
        for lo in range(0, len(order), config.batch_size):
            idx = order[lo : lo + config.batch_size]
            _, grad_w, grad_b = loss_and_gradient(
                current, X_train[idx], y_train[idx], config.l2_penalty
            )
            for w, gw in zip(current.weights, grad_w):
                w -= config.learning_rate * gw
            for b, gb in zip(current.biases, grad_b):
                b -= config.learning_rate * gb
        train_obj, _, _ = loss_and_gradient(current, X_train, y_train, config.l2_penalty)
        val_loss = _data_loss(current, X_val, y_val)
        history.append((epoch, train_obj, val_loss))
        if val_loss < best_val:
            best_val = val_loss
            best = current.copy()
            stale = 0
        else:
            stale += 1
            if stale > config.patience:
                break
    return best, history


def train(params: RegressorParams, train_set, val_set, config: TrainConfig):
    """Mini-batch gradient descent; returns best-validation parameters and history.

    Deterministic given the initial parameters and ``config.shuffle_seed``.
    """
    n_rows = np.asarray(train_set[0]).shape[0]
    rng = np.random.default_rng(config.shuffle_seed)
    permutations = (epoch_order(n_rows, rng) for _ in range(config.epochs))
    return run_epochs(params, train_set, val_set, config, permutations)


def count_from_output(y_hat: float) -> int:
    """Half-up rounding floored at zero: 0.49 -> 0, 0.5 -> 1, 3.2 -> 3."""
    return max(0, int(math.floor(y_hat + 0.5)))


def predict_count(params: RegressorParams, x) -> int:
    """Predicted number of running medical devices for one feature vector."""
    return count_from_output(forward(params, x))
