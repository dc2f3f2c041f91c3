"""A small reverse-mode automatic differentiation core over numpy arrays."""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Raised when operand or layer shapes are incompatible."""


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and grad.shape[i] != 1:
            grad = grad.sum(axis=i, keepdims=True)
    return grad


class Tensor:
    """An array node in the computation graph.

    ``grad`` is filled by :meth:`backward` for every tensor created with
    ``requires_grad=True`` (parameters) and every intermediate that depends on one.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, parents=(), backward=None, name: str | None = None):
        self.data = data if isinstance(data, np.ndarray) else np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self._parents = parents if self.requires_grad else ()
        self._backward = backward if self.requires_grad else None
        self.name = name

    # -- array-like properties -------------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    # -- autodiff --------------------------------------------------------------
    def accumulate(self, g: np.ndarray) -> None:
        if not self.requires_grad:
            return
        g = _unbroadcast(g, self.shape)
        if self.grad is None:
            self.grad = g.astype(self.data.dtype, copy=True)
        else:
            self.grad += g

    def backward(self, grad=None) -> None:
        """Propagate gradients from this tensor to every ancestor."""
        if grad is None:
            if self.size != 1:
                raise ShapeError("backward() without a seed gradient requires a scalar")
            grad = np.ones_like(self.data)
        order, seen = [], set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.accumulate(np.asarray(grad, dtype=self.data.dtype))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
                # intermediates are not read after their backward step
                node.grad = None

    # -- elementwise arithmetic ------------------------------------------------
    def __add__(self, other):
        other = as_tensor(other, self.dtype)

        def back(g):
            self.accumulate(g)
            other.accumulate(g)
        return Tensor(self.data + other.data, parents=(self, other), backward=back)

    __radd__ = __add__

    def __neg__(self):
        return Tensor(-self.data, parents=(self,), backward=lambda g: self.accumulate(-g))

    def __sub__(self, other):
        return self + (-as_tensor(other, self.dtype))

    def __rsub__(self, other):
        return as_tensor(other, self.dtype) + (-self)

    def __mul__(self, other):
        other = as_tensor(other, self.dtype)

        def back(g):
            self.accumulate(g * other.data)
            other.accumulate(g * self.data)
        return Tensor(self.data * other.data, parents=(self, other), backward=back)

    __rmul__ = __mul__

    def square(self):
        return Tensor(self.data ** 2, parents=(self,), backward=lambda g: self.accumulate(2.0 * g * self.data))

    def __matmul__(self, other):
        other = as_tensor(other, self.dtype)
        if self.ndim != 2 or other.ndim != 2 or self.shape[1] != other.shape[0]:
            raise ShapeError(f"cannot matmul {self.shape} by {other.shape}")

        def back(g):
            self.accumulate(g @ other.data.T)
            other.accumulate(self.data.T @ g)
        return Tensor(self.data @ other.data, parents=(self, other), backward=back)

    # -- reductions and reshapes -----------------------------------------------
    def sum(self, axis=None, keepdims: bool = False):
        def back(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            self.accumulate(np.broadcast_to(g, self.shape))
        return Tensor(np.asarray(self.data.sum(axis=axis, keepdims=keepdims)), parents=(self,), backward=back)

    def mean(self, axis=None):
        n = self.size if axis is None else self.shape[axis]
        return self.sum(axis=axis) * (1.0 / n)

    def reshape(self, *shape):
        shape = shape[0] if len(shape) == 1 and isinstance(shape[0], tuple) else shape
        return Tensor(self.data.reshape(shape), parents=(self,),
                      backward=lambda g: self.accumulate(g.reshape(self.shape)))

    def transpose(self, *axes):
        inv = np.argsort(axes)
        return Tensor(self.data.transpose(axes), parents=(self,),
                      backward=lambda g: self.accumulate(g.transpose(inv)))

    def relu(self):
        mask = self.data > 0
        return Tensor(self.data * mask, parents=(self,), backward=lambda g: self.accumulate(g * mask))


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype if dtype is not None else np.float64))


def parameter(data: np.ndarray, name: str | None = None) -> Tensor:
    return Tensor(np.asarray(data), requires_grad=True, name=name)
