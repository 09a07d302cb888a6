"""A small fully-connected network with explicit forward/backward passes.

Hidden layers use ReLU (subgradient 0 at exactly 0), the output layer is
linear, and the batch loss is a mean, so gradient magnitudes do not scale
with batch size.  This is all the model machinery the regression experiment
needs; there is deliberately no general autodiff here.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["MlpModel", "ForwardTape", "forward", "backward", "mse_loss"]

DEFAULT_LAYER_SIZES = (1, 50, 50, 50, 50, 50, 1)


class MlpModel:
    """Feedforward ReLU network.

    Args:
        layer_sizes: unit counts from input to output; ``len - 1`` linear
            layers are created.  A single-entry sequence yields an empty
            model whose forward pass is the identity.
        rng: numpy Generator for the He-uniform fan-in initialization
            (weights in +-sqrt(6/fan_in), biases zero).  Required whenever
            the model has at least one layer.
    """

    def __init__(self, layer_sizes=DEFAULT_LAYER_SIZES, rng=None):
        sizes = tuple(int(s) for s in layer_sizes)
        if len(sizes) < 1 or any(s < 1 for s in sizes):
            raise ValueError(f"Invalid layer sizes: {layer_sizes}")
        self.layer_sizes = sizes
        self.weights = []
        self.biases = []
        if len(sizes) > 1 and rng is None:
            raise ValueError("rng is required to initialize a non-empty model")
        for n_in, n_out in zip(sizes[:-1], sizes[1:]):
            limit = np.sqrt(6.0 / n_in)
            self.weights.append(rng.uniform(-limit, limit, size=(n_in, n_out)))
            self.biases.append(np.zeros(n_out))

    @property
    def n_layers(self) -> int:
        return len(self.weights)


@dataclass
class ForwardTape:
    """Per-layer inputs and pre-activations cached for one backward pass."""

    inputs: list = field(default_factory=list)
    pre_activations: list = field(default_factory=list)
    consumed: bool = False


def forward(model: MlpModel, x_batch):
    """Evaluate the network; returns (y_hat, tape).

    ``x_batch`` has shape (batch, n_in).  ReLU is applied after every layer
    except the last.
    """
    a = np.asarray(x_batch, dtype=np.float64)
    if a.ndim != 2 or (model.n_layers and a.shape[1] != model.layer_sizes[0]):
        raise ValueError(
            f"Expected input of shape (batch, {model.layer_sizes[0]}), got {a.shape}"
        )
    tape = ForwardTape()
    last = model.n_layers - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        tape.inputs.append(a)
        z = a @ w + b
        tape.pre_activations.append(z)
        a = z if i == last else np.maximum(z, 0.0)
    return a, tape


def backward(model: MlpModel, tape: ForwardTape, loss_grad):
    """Exact gradients of the batch loss w.r.t. every weight and bias.

    ``loss_grad`` is d(loss)/d(y_hat) from the loss function.  Returns a
    flat list (dW0, db0, dW1, db1, ...) matching the parameter-group order.
    The tape is single-use; a second backward on it raises.
    """
    if tape.consumed:
        raise ValueError("ForwardTape already consumed by a previous backward")
    if len(tape.inputs) != model.n_layers:
        raise ValueError(
            f"Tape length {len(tape.inputs)} does not match model depth {model.n_layers}"
        )
    tape.consumed = True
    delta = np.asarray(loss_grad, dtype=np.float64)
    grads = [None] * (2 * model.n_layers)
    for i in range(model.n_layers - 1, -1, -1):
        if i < model.n_layers - 1:
            # ReLU subgradient: strictly positive pre-activations pass.
            delta = delta * (tape.pre_activations[i] > 0.0)
        grads[2 * i] = tape.inputs[i].T @ delta
        grads[2 * i + 1] = delta.sum(axis=0)
        if i > 0:
            delta = delta @ model.weights[i].T
    return grads


def mse_loss(y_hat, y):
    """Mean squared error over every element; returns (loss, d loss/d y_hat)."""
    y_hat = np.asarray(y_hat, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if y_hat.shape != y.shape:
        raise ValueError(f"Shape mismatch: {y_hat.shape} vs {y.shape}")
    diff = y_hat - y
    n = diff.size
    return float(np.mean(diff**2)), 2.0 * diff / n
