"""Momentum SGD and a generic epoch loop."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from .layers import Model
from .tensor import Tensor

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int, loss: float):
        super().__init__(f"non-finite loss {loss} at epoch {epoch}")
        self.epoch = epoch
        self.loss = loss


@dataclass
class TrainSettings:
    epochs: int = 10
    lr: float = 0.01
    momentum: float = 0.9
    batch_size: int = 32
    weight_decay: float = 0.0
    clip_norm: float | None = None
    seed: int = 0


@dataclass
class TrainResult:
    model: Model
    history: list[float] = field(default_factory=list)


class SGD:
    """``v <- mu v + g + wd p``; ``p <- p - lr v``."""

    def __init__(self, params, lr: float, momentum: float = 0.9, weight_decay: float = 0.0,
                 clip_norm: float | None = None):
        self.params = list(params)
        self.lr, self.momentum, self.weight_decay, self.clip_norm = lr, momentum, weight_decay, clip_norm
        self.velocity = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in self.params]
        if self.clip_norm is not None:
            norm = np.sqrt(sum(float((g.astype(np.float64) ** 2).sum()) for g in grads))
            if norm > self.clip_norm:
                grads = [g * (self.clip_norm / norm) for g in grads]
        for p, g, v in zip(self.params, grads, self.velocity):
            if self.weight_decay:
                g = g + self.weight_decay * p.data
            v *= self.momentum
            v += g
            p.data -= (self.lr * v).astype(p.dtype)


def array_batches(arrays, batch_size: int) -> Callable[[np.random.Generator], Iterable]:
    """Shuffled mini-batches over the first axis of equally long arrays."""
    arrays = tuple(np.asarray(a) for a in arrays)
    n = len(arrays[0])
    if any(len(a) != n for a in arrays):
        raise ValueError("arrays must share their first dimension")

    def gen(rng):
        order = rng.permutation(n)
        for i in range(0, n, batch_size):
            idx = order[i:i + batch_size]
            yield tuple(a[idx] for a in arrays)
    gen.n_samples = n
    return gen


def train(model: Model, dataset, loss_fn: Callable[[Model, object], Tensor], settings: TrainSettings,
          on_epoch: Callable[[int, float], None] | None = None) -> TrainResult:
    """Run ``settings.epochs`` passes of momentum SGD.

    Parameters
    ----------
    dataset
        Either a tuple of arrays (batched along axis 0) or a callable
        ``rng -> iterable of batches``.
    loss_fn
        ``(model, batch) -> scalar Tensor``.

    Returns
    -------
    TrainResult
        The (in-place) trained model and the mean batch loss per epoch.
    """
    batches = dataset if callable(dataset) else array_batches(dataset, settings.batch_size)
    rng = np.random.default_rng(settings.seed)
    model.reseed(settings.seed + 1)
    opt = SGD(model.parameters().values(), settings.lr, settings.momentum, settings.weight_decay, settings.clip_norm)
    result = TrainResult(model)
    model.train()
    try:
        for epoch in range(settings.epochs):
            total, count = 0.0, 0
            for batch in batches(rng):
                model.zero_grad()
                loss = loss_fn(model, batch)
                value = loss.item()
                if not np.isfinite(value):
                    raise TrainingDiverged(epoch, value)
                loss.backward()
                opt.step()
                total += value
                count += 1
            if count == 0:
                raise ValueError("dataset produced no batches")
            result.history.append(total / count)
            log.debug("epoch %d loss %.6f", epoch, result.history[-1])
            if on_epoch is not None:
                on_epoch(epoch, result.history[-1])
    finally:
        model.eval()
        model.zero_grad()
    return result
