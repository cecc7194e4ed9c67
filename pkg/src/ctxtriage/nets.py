"""Minimal dense-network substrate: forward passes, analytic gradients,
and the RMSProp/Adam/SGD update rules shared by classifiers, policies and
the discriminator.

Everything is plain numpy in float64 so that results are bit-reproducible
for a fixed seed. Networks are value-like: treat a ``Network`` you did not
create as read-only and train on your own copy.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "NetworkSpec",
    "Network",
    "Gradients",
    "OptimizerState",
    "init_network",
    "zero_network",
    "forward",
    "forward_batch",
    "backprop",
    "loss_gradients",
    "batch_loss",
    "optimizer_step",
    "sample_categorical",
    "softmax",
    "save_network",
    "load_network",
]


@dataclass(frozen=True)
class NetworkSpec:
    """Shape of a dense ReLU network: ``layer_sizes[0]`` inputs through
    ``layer_sizes[-1]`` outputs, with a linear or softmax output head."""

    layer_sizes: tuple[int, ...]
    activation: str = "relu"
    output_head: str = "linear"

    def __post_init__(self) -> None:
        if len(self.layer_sizes) < 2:
            raise ValueError("a network needs at least input and output layers")
        if any(s < 1 for s in self.layer_sizes):
            raise ValueError("all layer sizes must be >= 1")
        if self.activation != "relu":
            raise ValueError(f"unsupported activation {self.activation!r}")
        if self.output_head not in ("linear", "softmax"):
            raise ValueError(f"unsupported output head {self.output_head!r}")

    @property
    def input_size(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_size(self) -> int:
        return self.layer_sizes[-1]


@dataclass
class Network:
    spec: NetworkSpec
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def copy(self) -> "Network":
        return Network(self.spec, [w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def params(self) -> list[np.ndarray]:
        return self.weights + self.biases

    def check_finite(self) -> None:
        for p in self.params():
            if not np.all(np.isfinite(p)):
                raise FloatingPointError("network parameters contain non-finite values")


def init_network(spec: NetworkSpec, rng: np.random.Generator) -> Network:
    """Glorot-uniform weights in +-sqrt(6/(fan_in+fan_out)), zero biases."""
    weights, biases = [], []
    for fan_in, fan_out in zip(spec.layer_sizes[:-1], spec.layer_sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return Network(spec, weights, biases)


def zero_network(spec: NetworkSpec) -> Network:
    weights = [np.zeros((a, b)) for a, b in zip(spec.layer_sizes[:-1], spec.layer_sizes[1:])]
    biases = [np.zeros(b) for b in spec.layer_sizes[1:]]
    return Network(spec, weights, biases)


def softmax(z: np.ndarray) -> np.ndarray:
    """Row-wise softmax, shifted for stability; strictly positive output."""
    z = np.atleast_2d(z)
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def _forward_cached(net: Network, x: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
    """Returns (post-activation values per layer incl. input, final pre-activation)."""
    acts = [x]
    a = x
    n_layers = len(net.weights)
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = a @ w + b
        if i < n_layers - 1:
            a = np.maximum(z, 0.0)
            acts.append(a)
        else:
            return acts, z
    raise AssertionError("unreachable")


def forward_batch(net: Network, inputs: np.ndarray) -> np.ndarray:
    """Forward pass over a batch (rows are samples)."""
    inputs = np.asarray(inputs, dtype=float)
    if inputs.ndim != 2 or inputs.shape[1] != net.spec.input_size:
        raise ValueError(
            f"input has {inputs.shape[-1] if inputs.ndim else 0} features, "
            f"network expects {net.spec.input_size}"
        )
    if not np.all(np.isfinite(inputs)):
        raise ValueError("non-finite network input")
    _, z = _forward_cached(net, inputs)
    if net.spec.output_head == "softmax":
        return softmax(z)
    return z


def forward(net: Network, x: np.ndarray) -> np.ndarray:
    """Forward pass for a single input vector."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("forward expects a single vector; use forward_batch for batches")
    return forward_batch(net, x[None, :])[0]


@dataclass
class Gradients:
    d_weights: list[np.ndarray]
    d_biases: list[np.ndarray]

    def params(self) -> list[np.ndarray]:
        return self.d_weights + self.d_biases

    def check_finite(self) -> None:
        for g in self.params():
            if not np.all(np.isfinite(g)):
                raise FloatingPointError("non-finite gradients")

    def global_norm(self) -> float:
        return float(np.sqrt(sum(float(np.sum(g * g)) for g in self.params())))

    def clip_global_norm(self, max_norm: float) -> "Gradients":
        norm = self.global_norm()
        if norm > max_norm and norm > 0.0:
            scale = max_norm / norm
            for g in self.params():
                g *= scale
        return self

    def add_scaled(self, other: "Gradients", scale: float = 1.0) -> "Gradients":
        for mine, theirs in zip(self.params(), other.params()):
            mine += scale * theirs
        return self

    @staticmethod
    def zeros_like(net: Network) -> "Gradients":
        return Gradients(
            [np.zeros_like(w) for w in net.weights],
            [np.zeros_like(b) for b in net.biases],
        )


def backprop(net: Network, inputs: np.ndarray, d_out: np.ndarray) -> Gradients:
    """Parameter gradients given dLoss/d(output pre-activation) for a batch.

    ``d_out`` must already include any batch-mean factor. This is the one
    backward pass in the package; losses, policy gradients and the
    discriminator all reduce to choosing ``d_out``.
    """
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    acts, _ = _forward_cached(net, inputs)
    d_weights = [None] * len(net.weights)
    d_biases = [None] * len(net.biases)
    delta = np.atleast_2d(d_out)
    for i in range(len(net.weights) - 1, -1, -1):
        d_weights[i] = acts[i].T @ delta
        d_biases[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ net.weights[i].T) * (acts[i] > 0.0)
    return Gradients(d_weights, d_biases)


def _as_batch(batch) -> tuple[np.ndarray, list]:
    inputs = np.asarray([np.asarray(x, dtype=float) for x, _ in batch])
    targets = [t for _, t in batch]
    return inputs, targets


def batch_loss(net: Network, batch, loss: str) -> float:
    """Mean batch loss; cross_entropy targets are class ids, squared_error
    targets are vectors (0.5 * squared distance)."""
    inputs, targets = _as_batch(batch)
    if loss == "cross_entropy":
        if net.spec.output_head != "softmax":
            raise ValueError("cross_entropy requires a softmax head")
        probs = forward_batch(net, inputs)
        idx = np.asarray(targets, dtype=int)
        return float(np.mean(-np.log(probs[np.arange(len(idx)), idx])))
    if loss == "squared_error":
        out = forward_batch(net, inputs)
        t = np.asarray(targets, dtype=float)
        return float(np.mean(0.5 * np.sum((out - t) ** 2, axis=1)))
    raise ValueError(f"unknown loss {loss!r}")


def loss_gradients(net: Network, batch, loss: str) -> Gradients:
    """Gradients of the mean batch loss with respect to every parameter."""
    if len(batch) == 0:
        raise ValueError("empty batch")
    inputs, targets = _as_batch(batch)
    n = len(batch)
    if loss == "cross_entropy":
        if net.spec.output_head != "softmax":
            raise ValueError("cross_entropy requires a softmax head")
        probs = forward_batch(net, inputs)
        d_out = probs.copy()
        idx = np.asarray(targets, dtype=int)
        d_out[np.arange(n), idx] -= 1.0
        d_out /= n
    elif loss == "squared_error":
        out = forward_batch(net, inputs)
        d_out = (out - np.asarray(targets, dtype=float)) / n
    else:
        raise ValueError(f"unknown loss {loss!r}")
    return backprop(net, inputs, d_out)


@dataclass
class OptimizerState:
    """Accumulator state for sgd/rmsprop/adam, shaped like the network."""

    kind: str
    step_size: float
    beta1: float = 0.9
    beta2: float = 0.999
    decay: float = 0.99
    eps: float = 1e-8
    t: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @staticmethod
    def adam(net: Network, step_size: float = 1e-3, beta1: float = 0.9,
             beta2: float = 0.999, eps: float = 1e-8) -> "OptimizerState":
        return OptimizerState(
            kind="adam", step_size=step_size, beta1=beta1, beta2=beta2, eps=eps,
            m=[np.zeros_like(p) for p in net.params()],
            v=[np.zeros_like(p) for p in net.params()],
        )

    @staticmethod
    def rmsprop(net: Network, step_size: float = 7e-4, decay: float = 0.99,
                eps: float = 1e-5) -> "OptimizerState":
        return OptimizerState(
            kind="rmsprop", step_size=step_size, decay=decay, eps=eps,
            v=[np.zeros_like(p) for p in net.params()],
        )

    @staticmethod
    def sgd(net: Network, step_size: float) -> "OptimizerState":
        return OptimizerState(kind="sgd", step_size=step_size)


def optimizer_step(state: OptimizerState, net: Network, grads: Gradients) -> Network:
    """Applies one update in place and returns the network."""
    grads.check_finite()
    params = net.params()
    gs = grads.params()
    if state.kind == "sgd":
        for p, g in zip(params, gs):
            p -= state.step_size * g
        return net
    state.t += 1
    if state.kind == "adam":
        bc1 = 1.0 - state.beta1 ** state.t
        bc2 = 1.0 - state.beta2 ** state.t
        for p, g, m, v in zip(params, gs, state.m, state.v):
            m *= state.beta1
            m += (1.0 - state.beta1) * g
            v *= state.beta2
            v += (1.0 - state.beta2) * g * g
            p -= state.step_size * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        return net
    if state.kind == "rmsprop":
        for p, g, v in zip(params, gs, state.v):
            v *= state.decay
            v += (1.0 - state.decay) * g * g
            p -= state.step_size * g / (np.sqrt(v) + state.eps)
        return net
    raise ValueError(f"unknown optimizer kind {state.kind!r}")


def sample_categorical(probs: np.ndarray, rng: np.random.Generator) -> int:
    """Draws an index from a probability vector; deterministic per rng state."""
    probs = np.asarray(probs, dtype=float)
    if np.any(probs < 0.0):
        raise ValueError("negative probabilities")
    total = float(probs.sum())
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"probabilities sum to {total}, expected 1 within 1e-9")
    u = rng.random()
    acc = 0.0
    for i, p in enumerate(probs):
        acc += p
        if u < acc:
            return i
    return int(len(probs) - 1)


def save_network(net: Network, path: str | Path) -> None:
    """JSON checkpoint: spec plus row-major weight/bias arrays."""
    doc = {
        "spec": {
            "layer_sizes": list(net.spec.layer_sizes),
            "activation": net.spec.activation,
            "output_head": net.spec.output_head,
        },
        "weights": [w.tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True))


def load_network(path: str | Path) -> Network:
    doc = json.loads(Path(path).read_text())
    spec = NetworkSpec(
        layer_sizes=tuple(doc["spec"]["layer_sizes"]),
        activation=doc["spec"]["activation"],
        output_head=doc["spec"]["output_head"],
    )
    net = Network(
        spec,
        [np.asarray(w, dtype=float) for w in doc["weights"]],
        [np.asarray(b, dtype=float) for b in doc["biases"]],
    )
    net.check_finite()
    return net
