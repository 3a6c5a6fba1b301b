"""Dense multi-layer perceptron with analytic backprop and Adam.

All math is float64 numpy.  A model is an immutable stack of fully-connected
layers; weights are stored as (out_dim, in_dim) matrices so a layer computes
``act(W @ x + b)``.

Parameter flattening order is canonical and fixed: layers in forward order,
each layer contributing its weight matrix in row-major (C) order followed by
its bias vector.  Gradient vectors returned by :func:`mlp_backward` use the
same order, so gradients of different losses are directly addable.

Gradient convention: ``mlp_backward`` is a plain vector-Jacobian product.
With ``upstream[i]`` equal to the derivative of the batch-mean loss with
respect to output i (the convention of :mod:`tandem.losses`), the result is
the gradient of the batch-mean loss, which makes it batch-size invariant.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import NumericError, ShapeError

RELU = "relu"
IDENTITY = "identity"
SIGMOID = "sigmoid"
ACTIVATIONS = (RELU, IDENTITY, SIGMOID)

REGRESSION_SCALAR = "regression-scalar"
BINARY_PROBABILITY = "binary-probability"
OUTPUT_KINDS = (REGRESSION_SCALAR, BINARY_PROBABILITY)


def _as_matrix(a, name: str) -> np.ndarray:
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"{name} must be 2-d, got shape {m.shape}")
    return m


def _as_vector(a, name: str) -> np.ndarray:
    v = np.asarray(a, dtype=np.float64)
    if v.ndim != 1:
        raise ShapeError(f"{name} must be 1-d, got shape {v.shape}")
    return v


def sigmoid(z: np.ndarray) -> np.ndarray:
    # Split by sign to avoid overflow in exp.
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _activate(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == RELU:
        return np.maximum(z, 0.0)
    if kind == IDENTITY:
        return z
    if kind == SIGMOID:
        return sigmoid(z)
    raise ValueError(f"unknown activation {kind!r}")


def _activation_grad(z: np.ndarray, a: np.ndarray, kind: str) -> np.ndarray:
    """d act(z) / d z, using the cached post-activation a where it helps."""
    if kind == RELU:
        return (z > 0.0).astype(np.float64)
    if kind == IDENTITY:
        return np.ones_like(z)
    if kind == SIGMOID:
        return a * (1.0 - a)
    raise ValueError(f"unknown activation {kind!r}")


@dataclass(frozen=True)
class Layer:
    """One dense layer: weight (out_dim, in_dim), bias (out_dim,), activation tag."""

    weight: np.ndarray
    bias: np.ndarray
    activation: str

    def __post_init__(self):
        w = _as_matrix(self.weight, "weight")
        b = _as_vector(self.bias, "bias")
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "bias", b)
        if w.shape[0] != b.shape[0]:
            raise ShapeError(f"bias length {b.shape[0]} != weight rows {w.shape[0]}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if not (np.isfinite(w).all() and np.isfinite(b).all()):
            raise NumericError("layer parameters must be finite")

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]


@dataclass(frozen=True)
class MlpModel:
    """A stack of dense layers ending in a single scalar output."""

    layers: tuple[Layer, ...]
    output_kind: str

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if not self.layers:
            raise ValueError("model needs at least one layer")
        if self.output_kind not in OUTPUT_KINDS:
            raise ValueError(f"unknown output kind {self.output_kind!r}")
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.out_dim != nxt.in_dim:
                raise ShapeError(
                    f"layer dims do not chain: {prev.out_dim} -> {nxt.in_dim}"
                )
        last = self.layers[-1]
        if last.out_dim != 1:
            raise ShapeError(f"final layer must output 1 value, got {last.out_dim}")
        expected = SIGMOID if self.output_kind == BINARY_PROBABILITY else IDENTITY
        if last.activation != expected:
            raise ValueError(
                f"output kind {self.output_kind!r} requires final activation "
                f"{expected!r}, got {last.activation!r}"
            )

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_dim


def init_mlp(
    input_dim: int,
    hidden: tuple[int, ...],
    output_kind: str,
    rng: np.random.Generator,
) -> MlpModel:
    """Build an MLP with ReLU hidden layers and a scalar output head.

    Weights are uniform in +-sqrt(6 / (fan_in + fan_out)), biases zero.
    """
    dims = [int(input_dim)] + [int(h) for h in hidden] + [1]
    final_act = SIGMOID if output_kind == BINARY_PROBABILITY else IDENTITY
    layers = []
    for k in range(len(dims) - 1):
        fan_in, fan_out = dims[k], dims[k + 1]
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        b = np.zeros(fan_out)
        act = RELU if k < len(dims) - 2 else final_act
        layers.append(Layer(w, b, act))
    return MlpModel(tuple(layers), output_kind)


def _forward_with_caches(model: MlpModel, X: np.ndarray):
    a = X
    caches = []
    for layer in model.layers:
        z = a @ layer.weight.T + layer.bias
        a_out = _activate(z, layer.activation)
        caches.append((a, z, a_out))
        a = a_out
    return a[:, 0], caches


def forward_batch(model: MlpModel, X) -> np.ndarray:
    """Model outputs for a batch, shape (N,)."""
    X = _as_matrix(X, "batch")
    if X.shape[1] != model.input_dim:
        raise ShapeError(
            f"batch has {X.shape[1]} features, model expects {model.input_dim}"
        )
    out, _ = _forward_with_caches(model, X)
    return out


def mlp_forward(model: MlpModel, x) -> float:
    """Scalar model output for a single input vector."""
    x = _as_vector(x, "input")
    return float(forward_batch(model, x[None, :])[0])


def mlp_backward(model: MlpModel, X, upstream) -> np.ndarray:
    """Parameter gradient via the chain rule, in canonical flat order.

    upstream[i] is dL/d f(x_i); the result is sum_i upstream[i] * df(x_i)/dtheta.
    """
    X = _as_matrix(X, "batch")
    upstream = _as_vector(upstream, "upstream")
    if X.shape[0] != upstream.shape[0]:
        raise ShapeError(
            f"upstream length {upstream.shape[0]} != batch rows {X.shape[0]}"
        )
    if X.shape[1] != model.input_dim:
        raise ShapeError(
            f"batch has {X.shape[1]} features, model expects {model.input_dim}"
        )
    _, caches = _forward_with_caches(model, X)

    grads = [np.empty(0)] * len(model.layers)
    delta = upstream[:, None]
    for k in range(len(model.layers) - 1, -1, -1):
        layer = model.layers[k]
        a_prev, z, a_out = caches[k]
        delta = delta * _activation_grad(z, a_out, layer.activation)
        dW = delta.T @ a_prev
        db = delta.sum(axis=0)
        grads[k] = np.concatenate([dW.ravel(), db])
        if k > 0:
            delta = delta @ layer.weight
    return np.concatenate(grads)


def param_count(model: MlpModel) -> int:
    return sum(l.weight.size + l.bias.size for l in model.layers)


def flatten_params(model: MlpModel) -> np.ndarray:
    """All parameters as one vector, canonical order."""
    parts = []
    for layer in model.layers:
        parts.append(layer.weight.ravel())
        parts.append(layer.bias)
    return np.concatenate(parts)


def unflatten_params(model: MlpModel, vector) -> MlpModel:
    """Rebuild a model with the same shape from a flat parameter vector."""
    vector = _as_vector(vector, "parameter vector")
    if vector.shape[0] != param_count(model):
        raise ShapeError(
            f"vector length {vector.shape[0]} != parameter count {param_count(model)}"
        )
    layers = []
    pos = 0
    for layer in model.layers:
        w_n = layer.weight.size
        w = vector[pos : pos + w_n].reshape(layer.weight.shape).copy()
        pos += w_n
        b = vector[pos : pos + layer.bias.size].copy()
        pos += layer.bias.size
        layers.append(Layer(w, b, layer.activation))
    return MlpModel(tuple(layers), model.output_kind)


@dataclass(frozen=True)
class AdamState:
    """Moment estimates for one flat parameter vector."""

    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ValueError("betas must lie in (0, 1)")
        if self.step_count < 0:
            raise ValueError("step_count must be nonnegative")
        if self.first_moment.shape != self.second_moment.shape:
            raise ShapeError("moment vectors must have equal length")


def adam_init(n_params: int, beta1: float = 0.9, beta2: float = 0.999,
              epsilon: float = 1e-8) -> AdamState:
    zeros = np.zeros(int(n_params))
    return AdamState(zeros, zeros.copy(), 0, beta1, beta2, epsilon)


def adam_step(params, grad, state: AdamState, lr: float):
    """One Adam update with bias correction; returns (new_params, new_state)."""
    params = _as_vector(params, "params")
    grad = _as_vector(grad, "grad")
    if params.shape != grad.shape or params.shape != state.first_moment.shape:
        raise ShapeError("params, grad and Adam state lengths must agree")
    if not np.isfinite(grad).all():
        raise NumericError("gradient has non-finite entries")
    t = state.step_count + 1
    m = state.beta1 * state.first_moment + (1.0 - state.beta1) * grad
    v = state.beta2 * state.second_moment + (1.0 - state.beta2) * grad * grad
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    new_params = params - lr * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return new_params, replace(state, first_moment=m, second_moment=v, step_count=t)


# ---------------------------------------------------------------------------
# Checkpoint format: versioned JSON, round-trips bit-exactly.

MLP_FORMAT = "tandem-mlp"
MLP_FORMAT_VERSION = 1


def mlp_to_dict(model: MlpModel) -> dict:
    return {
        "format": MLP_FORMAT,
        "version": MLP_FORMAT_VERSION,
        "output_kind": model.output_kind,
        "layers": [
            {
                "weight": layer.weight.tolist(),
                "bias": layer.bias.tolist(),
                "activation": layer.activation,
            }
            for layer in model.layers
        ],
    }


def mlp_from_dict(record: dict) -> MlpModel:
    if record.get("format") != MLP_FORMAT:
        raise ValueError(f"not a {MLP_FORMAT} record")
    layers = tuple(
        Layer(np.array(l["weight"]), np.array(l["bias"]), l["activation"])
        for l in record["layers"]
    )
    return MlpModel(layers, record["output_kind"])


def save_mlp(model: MlpModel, path) -> None:
    import json

    with open(path, "w") as fh:
        json.dump(mlp_to_dict(model), fh)


def load_mlp(path) -> MlpModel:
    import json

    with open(path) as fh:
        return mlp_from_dict(json.load(fh))
