"""A small feed-forward network stack with hand-written backward passes.

Everything is float64 numpy. Layers are ``y = act(x @ W + b)`` with
``W`` stored as ``(fan_in, fan_out)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import kernels

CHECKPOINT_FORMAT = "fairspk-densenet"
CHECKPOINT_VERSION = 1

ACTIVATIONS = ("relu", "linear")


@dataclass
class Dense:
    weights: np.ndarray
    bias: np.ndarray
    activation: str = "relu"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[1],):
            raise ValueError("bias must match the weight matrix output width")

    @property
    def fan_in(self) -> int:
        return self.weights.shape[0]

    @property
    def fan_out(self) -> int:
        return self.weights.shape[1]


@dataclass
class Trace:
    """Inputs and pre-activations cached by a forward pass."""

    inputs: list[np.ndarray]
    pre: list[np.ndarray]
    output: np.ndarray

    @property
    def activations(self) -> list[np.ndarray]:
        return self.inputs[1:] + [self.output]


class DenseNet:
    """Multi-layer perceptron: ReLU hidden layers, configurable output activation."""

    def __init__(self, layers: Sequence[Dense]):
        layers = list(layers)
        if not layers:
            raise ValueError("a network needs at least one layer")
        for prev, nxt in zip(layers, layers[1:]):
            if prev.fan_out != nxt.fan_in:
                raise ValueError(f"layer widths do not chain: {prev.fan_out} -> {nxt.fan_in}")
        self.layers = layers

    @classmethod
    def build(cls, sizes: Sequence[int], rng: np.random.Generator, output_activation: str = "linear"):
        """He-style uniform init, U(-sqrt(6/fan_in), sqrt(6/fan_in)), zero biases."""
        if len(sizes) < 2:
            raise ValueError("need at least input and output sizes")
        layers = []
        for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            limit = np.sqrt(6.0 / fan_in)
            w = rng.uniform(-limit, limit, size=(fan_in, fan_out))
            act = output_activation if i == len(sizes) - 2 else "relu"
            layers.append(Dense(w, np.zeros(fan_out), act))
        return cls(layers)

    @property
    def sizes(self) -> list[int]:
        return [self.layers[0].fan_in] + [layer.fan_out for layer in self.layers]

    @property
    def in_dim(self) -> int:
        return self.layers[0].fan_in

    @property
    def out_dim(self) -> int:
        return self.layers[-1].fan_out

    def params(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out.extend([layer.weights, layer.bias])
        return out

    def copy(self) -> "DenseNet":
        return DenseNet([Dense(l.weights.copy(), l.bias.copy(), l.activation) for l in self.layers])

    def forward(self, x: np.ndarray) -> Trace:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ValueError(f"expected batch of width {self.in_dim}, got shape {x.shape}")
        inputs, pre = [], []
        h = x
        for layer in self.layers:
            inputs.append(h)
            z = h @ layer.weights + layer.bias
            pre.append(z)
            h = np.maximum(z, 0.0) if layer.activation == "relu" else z
        return Trace(inputs, pre, h)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x).output

    def backward(
        self, trace: Trace, grad_out: np.ndarray, need_input: bool = True
    ) -> tuple[list[np.ndarray], np.ndarray | None]:
        """Gradients for ``params()`` (same order) and for the network input."""
        grads: list[np.ndarray] = []
        g = grad_out
        first = self.layers[0]
        for layer, h, z in zip(reversed(self.layers), reversed(trace.inputs), reversed(trace.pre)):
            if layer.activation == "relu":
                g = g * (z > 0)
            grads.append(g.sum(axis=0))
            grads.append(h.T @ g)
            g = g @ layer.weights.T if (need_input or layer is not first) else None
        grads.reverse()
        return grads, g

    def input_grad(self, trace: Trace, grad_out: np.ndarray) -> np.ndarray:
        """Gradient for the input only (skips weight gradients)."""
        g = grad_out
        for layer, z in zip(reversed(self.layers), reversed(trace.pre)):
            if layer.activation == "relu":
                g = g * (z > 0)
            g = g @ layer.weights.T
        return g

    def to_dict(self) -> dict:
        return {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "layers": [
                {
                    "fan_in": l.fan_in,
                    "fan_out": l.fan_out,
                    "activation": l.activation,
                    "weights": l.weights.ravel().tolist(),
                    "bias": l.bias.tolist(),
                }
                for l in self.layers
            ],
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "DenseNet":
        if payload.get("format") != CHECKPOINT_FORMAT:
            raise ValueError("not a network checkpoint")
        if payload.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {payload.get('version')}")
        layers = []
        for spec in payload["layers"]:
            w = np.array(spec["weights"], dtype=np.float64).reshape(spec["fan_in"], spec["fan_out"])
            layers.append(Dense(w, np.array(spec["bias"], dtype=np.float64), spec["activation"]))
        return cls(layers)


def near_kink(trace: Trace, net: DenseNet, tol: float = 1e-6) -> bool:
    """True if any ReLU pre-activation is within ``tol`` of zero."""
    return any(
        layer.activation == "relu" and np.any(np.abs(z) < tol)
        for layer, z in zip(net.layers, trace.pre)
    )


# --------------------------------------------------------------------------- losses

def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax_xent(logits: np.ndarray, labels) -> tuple[float, np.ndarray]:
    """Mean categorical cross-entropy and its gradient w.r.t. the logits."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n, k = logits.shape
    if labels.shape != (n,):
        raise ValueError("one label per logit row required")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ValueError(f"labels must lie in [0, {k})")
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(n)
    loss = float(np.mean(log_z - shifted[rows, labels]))
    grad = np.exp(shifted - log_z[:, None])
    grad[rows, labels] -= 1.0
    return loss, grad / n


def mse(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean squared error over all entries, and its gradient w.r.t. ``pred``."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    diff = pred - target
    return float(np.mean(diff * diff)), 2.0 * diff / diff.size


def dropout_mask(shape, p_drop: float, seed) -> np.ndarray:
    """Inverted-dropout mask: kept entries are 1/(1-p_drop), dropped entries 0."""
    if not 0.0 <= p_drop < 1.0:
        raise ValueError(f"dropout probability must lie in [0, 1), got {p_drop}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    keep = rng.random(shape) >= p_drop
    return keep / (1.0 - p_drop)


# --------------------------------------------------------------------------- Adam

@dataclass
class AdamState:
    """Adam moments for a fixed list of parameter arrays; weight decay is decoupled."""

    lr: float
    weight_decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    first_moment: list[np.ndarray] = field(default_factory=list)
    second_moment: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, params: Sequence[np.ndarray], lr: float, weight_decay: float = 0.0):
        return cls(
            lr=lr,
            weight_decay=weight_decay,
            first_moment=[np.zeros_like(p) for p in params],
            second_moment=[np.zeros_like(p) for p in params],
        )


def adam_step(state: AdamState, params: Sequence[np.ndarray], grads: Sequence[np.ndarray]):
    """In-place Adam update of ``params``; returns them for convenience."""
    if len(params) != len(grads) or len(params) != len(state.first_moment):
        raise ValueError("params, grads and optimizer state must have equal length")
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    shrink = 1.0 - state.lr * state.weight_decay
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        if p.shape != g.shape or p.shape != m.shape:
            raise ValueError(f"shape mismatch: param {p.shape}, grad {g.shape}")
        kernels.adam_update(
            p.reshape(-1), np.ascontiguousarray(g, dtype=np.float64).reshape(-1),
            m.reshape(-1), v.reshape(-1), state.lr, b1, b2, c1, c2, state.eps, shrink,
        )
    return params


# --------------------------------------------------------------------------- gradient check

def grad_check(
    closure: Callable[[], tuple[float, Sequence[np.ndarray]]],
    params: Sequence[np.ndarray],
    epsilon: float = 1e-5,
) -> float:
    """Largest relative error between analytic and central-difference gradients.

    ``closure`` recomputes ``(loss, grads)`` from the current values of
    ``params``, which are perturbed in place and restored. The error for each
    array is ``|g_a - g_n| / max(|g_a|, |g_n|)`` in the Euclidean norm.
    """
    _, analytic = closure()
    analytic = [np.array(g, copy=True) for g in analytic]
    worst = 0.0
    for p, g in zip(params, analytic):
        numeric = np.zeros_like(p)
        flat = p.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + epsilon
            up = closure()[0]
            flat[i] = orig - epsilon
            down = closure()[0]
            flat[i] = orig
            numeric.reshape(-1)[i] = (up - down) / (2.0 * epsilon)
        scale = max(np.linalg.norm(g), np.linalg.norm(numeric))
        if scale == 0.0:
            continue
        worst = max(worst, float(np.linalg.norm(g - numeric) / scale))
    return worst
