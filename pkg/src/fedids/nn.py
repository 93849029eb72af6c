"""Dense feed-forward network engine.

Implements the numerical substrate shared by the autoencoder and the
binary classifier: forward evaluation, backpropagation for MSE and
categorical cross-entropy, and RMSProp/Adam parameter updates. All math
is float64 and fully deterministic given seeded generators.

Parameter flattening order (used by checkpoints and by every parameter
exchange): for each layer l, weights[l] in row-major order followed by
biases[l].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, EmptyInputError, ShapeError

HIDDEN_ACTIVATIONS = ("relu", "sigmoid", "tanh")
OUTPUT_ACTIVATIONS = ("linear", "softmax")
LOSS_KINDS = ("mse", "cross_entropy")

# Probability floor applied before taking logs, and to softmax outputs so
# they stay strictly positive even when an exponent underflows.
PROB_EPS = 1e-12

CHECKPOINT_VERSION = 1


@dataclass
class ParamVector:
    """Flat parameter (or gradient) vector plus the example count behind it.

    ``count`` is the number of training examples the values were computed
    from; fusion uses it as the averaging weight.
    """

    values: np.ndarray
    count: int = 0

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1:
            raise ShapeError("ParamVector values must be one-dimensional")
        if self.count < 0:
            raise ShapeError("ParamVector count must be non-negative")


def _apply_hidden(kind: str, z: np.ndarray) -> np.ndarray:
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "sigmoid":
        out = np.empty_like(z)
        pos = z >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
        ez = np.exp(z[~pos])
        out[~pos] = ez / (1.0 + ez)
        return out
    if kind == "tanh":
        return np.tanh(z)
    raise ConfigError(f"unknown hidden activation: {kind!r}")


def _hidden_derivative(kind: str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    if kind == "relu":
        return (z > 0).astype(np.float64)
    if kind == "sigmoid":
        return a * (1.0 - a)
    if kind == "tanh":
        return 1.0 - a * a
    raise ConfigError(f"unknown hidden activation: {kind!r}")


def softmax(z: np.ndarray) -> np.ndarray:
    """Row-wise stable softmax with a strictly positive floor."""
    z = np.asarray(z, dtype=np.float64)
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=-1, keepdims=True)
    return np.maximum(p, PROB_EPS)


@dataclass
class DenseNet:
    """Fully connected network with a uniform hidden activation.

    weights[l] has shape (layer_sizes[l+1], layer_sizes[l]); biases[l]
    has length layer_sizes[l+1].
    """

    layer_sizes: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    hidden_activation: str = "relu"
    output_activation: str = "linear"

    @classmethod
    def create(
        cls,
        layer_sizes: list[int],
        hidden_activation: str = "relu",
        output_activation: str = "linear",
        rng: np.random.Generator | None = None,
    ) -> "DenseNet":
        """Build a net with Glorot-uniform weights and zero biases."""
        if len(layer_sizes) < 2 or any(s <= 0 for s in layer_sizes):
            raise ConfigError("layer_sizes needs >= 2 positive entries")
        if hidden_activation not in HIDDEN_ACTIVATIONS:
            raise ConfigError(f"unknown hidden activation: {hidden_activation!r}")
        if output_activation not in OUTPUT_ACTIVATIONS:
            raise ConfigError(f"unknown output activation: {output_activation!r}")
        rng = rng if rng is not None else np.random.default_rng()
        weights = []
        biases = []
        for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
            biases.append(np.zeros(fan_out))
        return cls(list(layer_sizes), weights, biases, hidden_activation, output_activation)

    @property
    def input_size(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_size(self) -> int:
        return self.layer_sizes[-1]

    def param_count(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def get_params(self) -> np.ndarray:
        """Flatten all parameters into one vector (copy)."""
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b)
        return np.concatenate(parts)

    def set_params(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (self.param_count(),):
            raise ShapeError(
                f"expected {self.param_count()} parameters, got {flat.size}"
            )
        i = 0
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            self.weights[l] = flat[i : i + w.size].reshape(w.shape).copy()
            i += w.size
            self.biases[l] = flat[i : i + b.size].copy()
            i += b.size

    def copy(self) -> "DenseNet":
        return DenseNet(
            list(self.layer_sizes),
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.hidden_activation,
            self.output_activation,
        )

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Evaluate the net on a single vector or a matrix of row vectors."""
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        a = x[None, :] if single else x
        if a.ndim != 2 or a.shape[1] != self.input_size:
            raise ShapeError(
                f"input width {x.shape[-1] if x.ndim else 0} does not match "
                f"net input size {self.input_size}"
            )
        n_layers = len(self.weights)
        for l in range(n_layers):
            z = a @ self.weights[l].T + self.biases[l]
            if l < n_layers - 1:
                a = _apply_hidden(self.hidden_activation, z)
            elif self.output_activation == "softmax":
                a = softmax(z)
            else:
                a = z
        return a[0] if single else a


def forward(net: DenseNet, x: np.ndarray) -> np.ndarray:
    return net.forward(x)


def mse_loss(x: np.ndarray, x_hat: np.ndarray) -> float:
    """Mean squared componentwise difference."""
    x = np.asarray(x, dtype=np.float64)
    x_hat = np.asarray(x_hat, dtype=np.float64)
    if x.shape != x_hat.shape:
        raise ShapeError(f"length mismatch: {x.shape} vs {x_hat.shape}")
    d = x - x_hat
    return float(np.mean(d * d))


def cross_entropy_loss(probs: np.ndarray, label: int) -> float:
    """Negative log-probability of the true class, clamped away from log(0)."""
    probs = np.asarray(probs, dtype=np.float64)
    if probs.shape != (2,):
        raise ShapeError("probs must be a 2-vector of class probabilities")
    if label not in (0, 1):
        raise ShapeError("label must be 0 or 1")
    p = min(max(float(probs[label]), PROB_EPS), 1.0)
    return -float(np.log(p))


def reconstruction_error(net: DenseNet, x: np.ndarray) -> np.ndarray:
    """Per-feature squared reconstruction error (x - x_hat)^2.

    The mean of the returned vector equals mse_loss(x, forward(net, x)).
    Accepts a single row or a matrix of rows.
    """
    if net.input_size != net.output_size:
        raise ShapeError("reconstruction_error requires an autoencoder (in == out)")
    x = np.asarray(x, dtype=np.float64)
    x_hat = net.forward(x)
    d = x - x_hat
    return d * d


def _forward_cached(net: DenseNet, a0: np.ndarray):
    """Forward pass keeping pre-activations and activations per layer."""
    zs = []
    activations = [a0]
    a = a0
    n_layers = len(net.weights)
    for l in range(n_layers):
        z = a @ net.weights[l].T + net.biases[l]
        zs.append(z)
        if l < n_layers - 1:
            a = _apply_hidden(net.hidden_activation, z)
        elif net.output_activation == "softmax":
            a = softmax(z)
        else:
            a = z
        activations.append(a)
    return zs, activations


def _check_loss_pairing(net: DenseNet, loss_kind: str) -> None:
    if loss_kind not in LOSS_KINDS:
        raise ConfigError(f"unknown loss kind: {loss_kind!r}")
    if loss_kind == "mse" and net.output_activation != "linear":
        raise ConfigError("mse loss requires a linear output layer")
    if loss_kind == "cross_entropy" and net.output_activation != "softmax":
        raise ConfigError("cross-entropy loss requires a softmax output layer")


def _loss_and_grad(
    net: DenseNet, x: np.ndarray, target: np.ndarray, loss_kind: str
) -> tuple[float, np.ndarray]:
    """Mean loss over the batch and the gradient of that mean, flattened."""
    a0 = np.asarray(x, dtype=np.float64)
    if a0.ndim == 1:
        a0 = a0[None, :]
    if a0.shape[1] != net.input_size:
        raise ShapeError("input width does not match net input size")
    n = a0.shape[0]

    zs, activations = _forward_cached(net, a0)
    out = activations[-1]

    if loss_kind == "mse":
        t = np.asarray(target, dtype=np.float64)
        if t.ndim == 1:
            t = t[None, :]
        if t.shape != out.shape:
            raise ShapeError("target shape does not match net output")
        diff = out - t
        loss = float(np.mean(diff * diff))
        # d(mean over rows of per-row mean-squared error) / d out
        delta = 2.0 * diff / (out.shape[1] * n)
    else:
        labels = np.asarray(target)
        if labels.ndim == 0:
            labels = labels[None]
        labels = labels.astype(np.intp)
        if labels.shape != (n,):
            raise ShapeError("labels must have one entry per input row")
        clamped = np.minimum(np.maximum(out[np.arange(n), labels], PROB_EPS), 1.0)
        loss = float(np.mean(-np.log(clamped)))
        onehot = np.zeros_like(out)
        onehot[np.arange(n), labels] = 1.0
        # softmax + cross-entropy collapses to (p - onehot) at the logits
        delta = (out - onehot) / n

    grads_w = [None] * len(net.weights)
    grads_b = [None] * len(net.biases)
    for l in range(len(net.weights) - 1, -1, -1):
        grads_w[l] = delta.T @ activations[l]
        grads_b[l] = delta.sum(axis=0)
        if l > 0:
            delta = (delta @ net.weights[l]) * _hidden_derivative(
                net.hidden_activation, zs[l - 1], activations[l]
            )

    parts = []
    for gw, gb in zip(grads_w, grads_b):
        parts.append(gw.ravel())
        parts.append(gb)
    return loss, np.concatenate(parts)


def backward(
    net: DenseNet, x: np.ndarray, target: np.ndarray, loss_kind: str
) -> ParamVector:
    """Gradient of the mean batch loss w.r.t. all parameters, flattened.

    loss_kind must match the output activation: "mse" with linear output,
    "cross_entropy" with softmax output.
    """
    _check_loss_pairing(net, loss_kind)
    n = 1 if np.asarray(x).ndim == 1 else np.asarray(x).shape[0]
    _, grad = _loss_and_grad(net, x, target, loss_kind)
    return ParamVector(grad, count=n)


@dataclass(frozen=True)
class OptimizerConfig:
    """Hyperparameters for one optimizer; make_state builds a fresh state."""

    kind: str = "rmsprop"
    learning_rate: float = 1e-3
    decay: float = 0.9  # rmsprop accumulator decay
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self) -> None:
        if self.kind not in ("rmsprop", "adam"):
            raise ConfigError(f"unknown optimizer kind: {self.kind!r}")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        for name in ("decay", "beta1", "beta2"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ConfigError(f"{name} must lie in (0, 1)")
        if self.epsilon <= 0:
            raise ConfigError("epsilon must be positive")

    def make_state(self, n_params: int) -> "OptimizerState":
        return OptimizerState(
            kind=self.kind,
            learning_rate=self.learning_rate,
            decay=self.decay,
            beta1=self.beta1,
            beta2=self.beta2,
            epsilon=self.epsilon,
            sq_accum=np.zeros(n_params),
            momentum=np.zeros(n_params) if self.kind == "adam" else None,
        )


@dataclass
class OptimizerState:
    """Mutable per-parameter accumulators for RMSProp or Adam."""

    kind: str
    learning_rate: float
    decay: float
    beta1: float
    beta2: float
    epsilon: float
    sq_accum: np.ndarray
    momentum: np.ndarray | None = None
    step_count: int = 0


def optimizer_step(
    state: OptimizerState, params: np.ndarray, grads: np.ndarray
) -> np.ndarray:
    """Apply one RMSProp or Adam update; mutates state, returns new params.

    RMSProp: v <- d*v + (1-d)*g^2;  p <- p - lr * g / (sqrt(v) + eps)
    Adam:    bias-corrected first/second moments, standard update.
    """
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape:
        raise ShapeError("params and grads must have equal length")
    if params.shape != state.sq_accum.shape:
        raise ShapeError("optimizer state does not match parameter count")

    state.step_count += 1
    if state.kind == "rmsprop":
        state.sq_accum *= state.decay
        state.sq_accum += (1.0 - state.decay) * grads * grads
        return params - state.learning_rate * grads / (
            np.sqrt(state.sq_accum) + state.epsilon
        )

    t = state.step_count
    state.momentum *= state.beta1
    state.momentum += (1.0 - state.beta1) * grads
    state.sq_accum *= state.beta2
    state.sq_accum += (1.0 - state.beta2) * grads * grads
    m_hat = state.momentum / (1.0 - state.beta1**t)
    v_hat = state.sq_accum / (1.0 - state.beta2**t)
    return params - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)


def train_batch(
    net: DenseNet,
    batch: tuple[np.ndarray, np.ndarray],
    optimizer: OptimizerState,
) -> float:
    """One optimizer step on the mean batch gradient; returns pre-step loss.

    The loss kind follows the net's output activation (linear -> mse,
    softmax -> cross-entropy).
    """
    inputs, targets = batch
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.size == 0:
        raise EmptyInputError("train_batch received an empty batch")
    loss_kind = "cross_entropy" if net.output_activation == "softmax" else "mse"
    _check_loss_pairing(net, loss_kind)
    loss, grad = _loss_and_grad(net, inputs, targets, loss_kind)
    net.set_params(optimizer_step(optimizer, net.get_params(), grad))
    return loss


def save_checkpoint(net: DenseNet, path) -> None:
    """Write a versioned binary checkpoint (exact float64 round trip)."""
    np.savez(
        path,
        version=np.int64(CHECKPOINT_VERSION),
        layer_sizes=np.asarray(net.layer_sizes, dtype=np.int64),
        hidden_activation=np.str_(net.hidden_activation),
        output_activation=np.str_(net.output_activation),
        params=net.get_params(),
    )


def load_checkpoint(path) -> DenseNet:
    with np.load(path) as data:
        version = int(data["version"])
        if version != CHECKPOINT_VERSION:
            raise ConfigError(f"unsupported checkpoint version: {version}")
        layer_sizes = [int(s) for s in data["layer_sizes"]]
        net = DenseNet(
            layer_sizes,
            weights=[
                np.zeros((o, i))
                for i, o in zip(layer_sizes[:-1], layer_sizes[1:])
            ],
            biases=[np.zeros(o) for o in layer_sizes[1:]],
            hidden_activation=str(data["hidden_activation"]),
            output_activation=str(data["output_activation"]),
        )
        net.set_params(data["params"])
    return net
