"""Layers and the :class:`Model` container.

Shapes exclude the batch axis. Every layer implements ``infer(shape)``, which
returns its output shape or raises :class:`ShapeError`, so a mismatched stack
is rejected when the model is built rather than on the first forward pass.
"""

from __future__ import annotations

import copy
from collections import OrderedDict

import numpy as np

from . import functional as F
from .tensor import ShapeError, Tensor, parameter


class Layer:
    kind = "layer"

    def params(self) -> dict[str, Tensor]:
        return {}

    def children(self) -> list["Layer"]:
        return []

    def infer(self, shape: tuple) -> tuple:
        return shape

    def __call__(self, x: Tensor, ctx: "Context") -> Tensor:
        raise NotImplementedError

    def describe(self) -> dict:
        return {"kind": self.kind}


class Context:
    """Per-forward state shared by the layers: mode and the dropout stream."""

    def __init__(self, training: bool, rng: np.random.Generator):
        self.training = training
        self.rng = rng


class Identity(Layer):
    kind = "identity"

    def __call__(self, x, ctx):
        return x


class ReLU(Layer):
    kind = "relu"

    def __call__(self, x, ctx):
        return x.relu()


class Flatten(Layer):
    kind = "flatten"

    def infer(self, shape):
        return (int(np.prod(shape)),)

    def __call__(self, x, ctx):
        return F.flatten(x)


class Normalize(Layer):
    """Scale each sample by the inverse of its largest absolute entry."""

    kind = "normalize"

    def __call__(self, x, ctx):
        return F.normalize_max(x)


class Dropout(Layer):
    kind = "dropout"

    def __init__(self, rate: float = 0.1):
        if not 0.0 <= rate < 1.0:
            raise ValueError("dropout rate must be in [0, 1)")
        self.rate = rate

    def __call__(self, x, ctx):
        return F.dropout(x, self.rate, ctx.rng, ctx.training)

    def describe(self):
        return {"kind": self.kind, "rate": self.rate}


class Dense(Layer):
    kind = "dense"

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, dtype=np.float32, zero: bool = False):
        self.n_in, self.n_out = n_in, n_out
        w = np.zeros((n_in, n_out)) if zero else rng.standard_normal((n_in, n_out)) * np.sqrt(2.0 / n_in)
        self.weight = parameter(w.astype(dtype))
        self.bias = parameter(np.zeros(n_out, dtype=dtype))

    def params(self):
        return {"weight": self.weight, "bias": self.bias}

    def infer(self, shape):
        if shape != (self.n_in,):
            raise ShapeError(f"dense layer expects ({self.n_in},), got {shape}")
        return (self.n_out,)

    def __call__(self, x, ctx):
        return F.linear(x, self.weight, self.bias)

    def describe(self):
        return {"kind": self.kind, "in": self.n_in, "out": self.n_out}


class Conv2d(Layer):
    """'Same'-padded, stride-1 convolution for odd kernel sizes."""

    kind = "conv2d"

    def __init__(self, c_in: int, c_out: int, kernel: int, rng: np.random.Generator, dtype=np.float32,
                 weight: np.ndarray | None = None):
        if kernel % 2 != 1:
            raise ValueError("kernel size must be odd")
        self.c_in, self.c_out, self.kernel = c_in, c_out, kernel
        if weight is None:
            fan_in = c_in * kernel * kernel
            weight = rng.standard_normal((c_out, c_in, kernel, kernel)) * np.sqrt(2.0 / fan_in)
        self.weight = parameter(np.asarray(weight, dtype=dtype))
        self.bias = parameter(np.zeros(c_out, dtype=dtype))

    def params(self):
        return {"weight": self.weight, "bias": self.bias}

    def infer(self, shape):
        if len(shape) != 3 or shape[0] != self.c_in:
            raise ShapeError(f"conv expects ({self.c_in}, H, W), got {shape}")
        return (self.c_out,) + tuple(shape[1:])

    def __call__(self, x, ctx):
        return F.conv2d(x, self.weight, self.bias, self.kernel // 2)

    def describe(self):
        return {"kind": self.kind, "in": self.c_in, "out": self.c_out, "kernel": self.kernel}


class MaxPool2d(Layer):
    kind = "maxpool2d"

    def __init__(self, size=2):
        self.size = (size, size) if isinstance(size, int) else tuple(size)

    def infer(self, shape):
        if len(shape) != 3:
            raise ShapeError(f"max pooling expects (C, H, W), got {shape}")
        c, h, w = shape
        if h < self.size[0] or w < self.size[1]:
            raise ShapeError(f"pool window {self.size} larger than input {shape[1:]}")
        return (c, h // self.size[0], w // self.size[1])

    def __call__(self, x, ctx):
        return F.max_pool2d(x, self.size)

    def describe(self):
        return {"kind": self.kind, "size": list(self.size)}


class Sequential(Layer):
    kind = "sequential"

    def __init__(self, *layers: Layer):
        self.layers = list(layers)

    def children(self):
        return self.layers

    def infer(self, shape):
        for layer in self.layers:
            shape = layer.infer(shape)
        return shape

    def __call__(self, x, ctx):
        for layer in self.layers:
            x = layer(x, ctx)
        return x

    def describe(self):
        return {"kind": self.kind, "layers": [l.describe() for l in self.layers]}


class Residual(Layer):
    """``relu(body(x) + shortcut(x))``; the shortcut is a 1x1 conv when channel counts differ."""

    kind = "residual"

    def __init__(self, c_in: int, c_out: int, rng: np.random.Generator, kernel: int = 3, dtype=np.float32):
        self.body = Sequential(
            Conv2d(c_in, c_out, kernel, rng, dtype), ReLU(), Conv2d(c_out, c_out, kernel, rng, dtype)
        )
        self.shortcut = Identity() if c_in == c_out else Conv2d(c_in, c_out, 1, rng, dtype)

    def children(self):
        return [self.body, self.shortcut]

    def infer(self, shape):
        out = self.body.infer(shape)
        if self.shortcut.infer(shape) != out:
            raise ShapeError("residual branches disagree on shape")
        return out

    def __call__(self, x, ctx):
        return (self.body(x, ctx) + self.shortcut(x, ctx)).relu()

    def describe(self):
        return {"kind": self.kind, "body": self.body.describe(), "shortcut": self.shortcut.describe()}


def _collect(layer: Layer, prefix: str, out: "OrderedDict[str, Tensor]") -> None:
    for name, p in layer.params().items():
        out[f"{prefix}{name}"] = p
    for i, child in enumerate(layer.children()):
        _collect(child, f"{prefix}{i}.", out)


class Model:
    """A layer stack with a declared per-sample input shape.

    Parameters
    ----------
    layers : Layer or sequence of Layer
    input_shape : tuple
        Shape of one sample (no batch axis); checked at build time and on every call.
    seed : int
        Seeds the dropout stream.
    """

    def __init__(self, layers, input_shape: tuple, seed: int = 0, name: str = "model"):
        self.body = layers if isinstance(layers, Layer) else Sequential(*layers)
        self.input_shape = tuple(input_shape)
        self.output_shape = self.body.infer(self.input_shape)
        self.training = False
        self.name = name
        self._seed = seed
        self.rng = np.random.default_rng(seed)

    def parameters(self) -> "OrderedDict[str, Tensor]":
        out: OrderedDict[str, Tensor] = OrderedDict()
        _collect(self.body, "", out)
        return out

    def n_parameters(self) -> int:
        return sum(p.size for p in self.parameters().values())

    def train(self) -> "Model":
        self.training = True
        return self

    def eval(self) -> "Model":
        self.training = False
        return self

    def reseed(self, seed: int) -> None:
        self.rng = np.random.default_rng(seed)

    def forward(self, x) -> Tensor:
        x = x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=self.dtype))
        if tuple(x.shape[1:]) != self.input_shape:
            raise ShapeError(f"{self.name} expects input (batch, {self.input_shape}), got {x.shape}")
        return self.body(x, Context(self.training, self.rng))

    __call__ = forward

    @property
    def dtype(self):
        params = self.parameters()
        return next(iter(params.values())).dtype if params else np.float64

    def astype(self, dtype) -> "Model":
        for p in self.parameters().values():
            p.data = p.data.astype(dtype)
            p.grad = None
        return self

    def zero_grad(self) -> None:
        for p in self.parameters().values():
            p.grad = None

    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((k, p.data.copy()) for k, p in self.parameters().items())

    def load_state_dict(self, state) -> None:
        params = self.parameters()
        if set(state) != set(params):
            raise ShapeError("checkpoint parameter names do not match the model")
        for k, p in params.items():
            arr = np.asarray(state[k])
            if arr.shape != p.shape:
                raise ShapeError(f"parameter {k}: checkpoint shape {arr.shape} != model shape {p.shape}")
            p.data = arr.astype(p.dtype)

    def clone(self) -> "Model":
        return copy.deepcopy(self)

    def describe(self) -> dict:
        return {"name": self.name, "input_shape": list(self.input_shape), "body": self.body.describe()}
