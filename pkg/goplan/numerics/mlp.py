from __future__ import annotations

import copy
import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

from goplan.errors import ConfigurationError, UsageError
from goplan.numerics.param_tensor import ParamTensor
from goplan.numerics.rng_stream import RngStream


def _identity(x):
    return x


def _identity_grad(x, y):
    return np.ones_like(y)


def _relu(x):
    return np.maximum(x, 0)


def _relu_grad(x, y):
    return (x > 0).astype(x.dtype)


def _tanh(x):
    return np.tanh(x)


def _tanh_grad(x, y):
    return 1 - y * y


def _sigmoid(x):
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1 / (1 + np.exp(-x[pos]))
    exp_x = np.exp(x[~pos])
    out[~pos] = exp_x / (1 + exp_x)
    return out


def _sigmoid_grad(x, y):
    return y * (1 - y)


ACTIVATIONS: dict[str, tuple[Callable, Callable]] = {
    "identity": (_identity, _identity_grad),
    "relu": (_relu, _relu_grad),
    "tanh": (_tanh, _tanh_grad),
    "sigmoid": (_sigmoid, _sigmoid_grad),
}

HIDDEN_ACTIVATIONS = ("relu", "tanh")
OUTPUT_ACTIVATIONS = ("identity", "tanh", "sigmoid")


@dataclass
class _LayerRecord:
    inputs: np.ndarray
    pre_activation: np.ndarray
    outputs: np.ndarray


class Mlp:
    """Dense feed-forward network with a one-pass reverse-mode tape.

    Weights are stored ``(fan_in, fan_out)`` so a layer computes
    ``x @ W + b`` on row batches. ``forward`` records the tape consumed by
    ``backward``; ``predict`` is the tape-free pure variant that frozen
    copies use from several threads.
    """

    def __init__(
        self,
        name: str,
        widths: list[int],
        hidden_activation: str = "relu",
        output_activation: str = "identity",
        rng: RngStream | None = None,
        dtype=np.float32,
    ) -> None:
        self._log = logging.getLogger("goplan.numerics.Mlp")
        if len(widths) < 2 or any(int(w) <= 0 for w in widths):
            raise ConfigurationError(
                f"{name}: layer widths must be >= 2 positive ints, got {widths}"
            )
        if hidden_activation not in HIDDEN_ACTIVATIONS:
            raise ConfigurationError(
                f"{name}: unsupported hidden activation {hidden_activation!r}"
            )
        if output_activation not in OUTPUT_ACTIVATIONS:
            raise ConfigurationError(
                f"{name}: unsupported output activation {output_activation!r}"
            )

        self.name = name
        self.widths = [int(w) for w in widths]
        self.hidden_activation = hidden_activation
        self.output_activation = output_activation
        self.dtype = np.dtype(dtype)
        self.weights: list[ParamTensor] = []
        self.biases: list[ParamTensor] = []
        self._tape: list[_LayerRecord] | None = None
        self._squeeze_output = False

        rng = rng if rng is not None else RngStream(0)
        for index, (fan_in, fan_out) in enumerate(zip(self.widths, self.widths[1:])):
            bound = 1.0 / np.sqrt(fan_in)
            w = rng.uniform(-bound, bound, (fan_in, fan_out)).astype(self.dtype)
            b = rng.uniform(-bound, bound, (fan_out,)).astype(self.dtype)
            self.weights.append(ParamTensor(f"{name}/w{index}", w))
            self.biases.append(ParamTensor(f"{name}/b{index}", b))

    @property
    def input_dim(self) -> int:
        return self.widths[0]

    @property
    def output_dim(self) -> int:
        return self.widths[-1]

    @property
    def params(self) -> list[ParamTensor]:
        result = []
        for w, b in zip(self.weights, self.biases):
            result.extend((w, b))
        return result

    @property
    def parameter_count(self) -> int:
        return sum(p.size for p in self.params)

    @property
    def has_tape(self) -> bool:
        return self._tape is not None

    def _activation_for(self, layer: int) -> str:
        if layer == len(self.weights) - 1:
            return self.output_activation
        return self.hidden_activation

    def _as_batch(self, x) -> tuple[np.ndarray, bool]:
        x = np.asarray(x, dtype=self.dtype)
        squeeze = x.ndim == 1
        if squeeze:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise ConfigurationError(
                f"{self.name}: expected input width {self.input_dim}, got shape {x.shape}"
            )
        return x, squeeze

    def _run(self, x: np.ndarray, tape: list[_LayerRecord] | None) -> np.ndarray:
        h = x
        for layer, (w, b) in enumerate(zip(self.weights, self.biases)):
            pre = h @ w.values + b.values
            activate, _ = ACTIVATIONS[self._activation_for(layer)]
            out = activate(pre)
            if tape is not None:
                tape.append(_LayerRecord(h, pre, out))
            h = out
        return h

    def forward(self, x) -> np.ndarray:
        batch, squeeze = self._as_batch(x)
        tape: list[_LayerRecord] = []
        out = self._run(batch, tape)
        self._tape = tape
        self._squeeze_output = squeeze
        return out[0] if squeeze else out

    def predict(self, x) -> np.ndarray:
        batch, squeeze = self._as_batch(x)
        out = self._run(batch, None)
        return out[0] if squeeze else out

    __call__ = predict

    def backward(self, upstream_grad) -> np.ndarray:
        """Accumulate parameter gradients; returns the gradient w.r.t. the input."""
        if self._tape is None:
            raise UsageError(f"{self.name}: backward called without a recorded forward")

        grad = np.asarray(upstream_grad, dtype=self.dtype)
        if self._squeeze_output and grad.ndim == 1:
            grad = grad[None, :]
        expected = self._tape[-1].outputs.shape
        if grad.shape != expected:
            raise ConfigurationError(
                f"{self.name}: upstream gradient shape {grad.shape} != {expected}"
            )

        for layer in reversed(range(len(self.weights))):
            record = self._tape[layer]
            _, activation_grad = ACTIVATIONS[self._activation_for(layer)]
            grad = grad * activation_grad(record.pre_activation, record.outputs)
            self.weights[layer].accumulate(record.inputs.T @ grad)
            self.biases[layer].accumulate(
                np.sum(grad, axis=0, dtype=np.float64).astype(self.dtype)
            )
            grad = grad @ self.weights[layer].values.T

        self._tape = None
        return grad[0] if self._squeeze_output else grad

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def clear_tape(self):
        self._tape = None

    def copy(self) -> "Mlp":
        clone = copy.deepcopy(self)
        clone._tape = None
        return clone

    def astype(self, dtype) -> "Mlp":
        clone = self.copy()
        clone.dtype = np.dtype(dtype)
        for p in clone.params:
            p.values = p.values.astype(dtype)
            p.grad = np.zeros_like(p.values)
        return clone

    def fill(self, value: float):
        for p in self.params:
            p.values.fill(value)

    def polyak_from(self, source: "Mlp", rate: float):
        """self <- rate * self + (1 - rate) * source."""
        for target, online in zip(self.params, source.params):
            target.values *= rate
            target.values += (1 - rate) * online.values

    def _tensor_key(self, param: ParamTensor, prefix: str | None) -> str:
        if prefix is None:
            return param.name
        return f"{prefix}/{param.name[len(self.name) + 1 :]}"

    def state_tensors(self, prefix: str | None = None) -> dict[str, np.ndarray]:
        return {self._tensor_key(p, prefix): p.values.copy() for p in self.params}

    def load_state_tensors(self, tensors: dict[str, np.ndarray], prefix: str | None = None):
        for p in self.params:
            key = self._tensor_key(p, prefix)
            if key not in tensors:
                raise ConfigurationError(f"{self.name}: checkpoint lacks tensor {key!r}")
            values = np.asarray(tensors[key])
            if values.shape != p.shape:
                raise ConfigurationError(
                    f"{self.name}: tensor {key!r} has shape {values.shape}, expected {p.shape}"
                )
            p.values = values.astype(self.dtype).copy()
            p.grad = np.zeros_like(p.values)

    def __str__(self):
        return (
            f"Mlp(name={self.name}, widths={self.widths}, "
            f"hidden={self.hidden_activation}, output={self.output_activation})"
        )


def mlp_forward(net: Mlp, x) -> np.ndarray:
    return net.forward(x)


def mlp_backward(net: Mlp, upstream_grad) -> np.ndarray:
    return net.backward(upstream_grad)


def build_mlp(
    name: str,
    input_dim: int,
    output_dim: int,
    hidden: list[int],
    hidden_activation: str = "relu",
    output_activation: str = "identity",
    rng: RngStream | None = None,
    dtype=np.float32,
) -> Mlp:
    return Mlp(
        name,
        [input_dim, *hidden, output_dim],
        hidden_activation=hidden_activation,
        output_activation=output_activation,
        rng=rng,
        dtype=dtype,
    )
