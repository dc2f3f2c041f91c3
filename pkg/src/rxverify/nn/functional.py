"""Differentiable operations built on :class:`~rxverify.nn.tensor.Tensor`."""

from __future__ import annotations

import numpy as np

from .. import kernels
from .tensor import ShapeError, Tensor, as_tensor


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight + bias`` for a (batch, in) input and (in, out) weight."""
    out = x @ weight
    return out + bias if bias is not None else out


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None, padding: int) -> Tensor:
    """Stride-1 2-D convolution (cross-correlation), NCHW input, (O, C, kh, kw) weight."""
    n, c, h, w = x.shape
    o, ci, kh, kw = weight.shape
    if ci != c:
        raise ShapeError(f"conv expects {ci} input channels, got {c}")
    ho, wo = h + 2 * padding - kh + 1, w + 2 * padding - kw + 1
    cols = kernels.im2col(x.data, kh, kw, padding, padding)
    wm = weight.data.reshape(o, -1)
    out = cols @ wm.T
    if bias is not None:
        out += bias.data
    out = out.reshape(n, ho, wo, o).transpose(0, 3, 1, 2)
    parents = (x, weight) if bias is None else (x, weight, bias)

    def back(g):
        gm = g.transpose(0, 2, 3, 1).reshape(-1, o)
        if weight.requires_grad:
            weight.accumulate((gm.T @ cols).reshape(weight.shape))
        if bias is not None and bias.requires_grad:
            bias.accumulate(gm.sum(axis=0))
        if x.requires_grad:
            x.accumulate(kernels.col2im(gm @ wm, x.shape, kh, kw, padding, padding))
    return Tensor(np.ascontiguousarray(out), parents=parents, backward=back)


def max_pool2d(x: Tensor, size: tuple[int, int]) -> Tensor:
    kh, kw = size
    out, arg = kernels.maxpool_forward(x.data, kh, kw)
    return Tensor(out, parents=(x,),
                  backward=lambda g: x.accumulate(kernels.maxpool_backward(g, arg, x.shape, kh, kw)))


def dropout(x: Tensor, rate: float, rng: np.random.Generator, training: bool) -> Tensor:
    """Inverted dropout; identity outside training mode."""
    if not training or rate <= 0.0:
        return x
    keep = (rng.random(x.shape) >= rate).astype(x.dtype) / (1.0 - rate)
    return x * Tensor(keep)


def normalize_max(x: Tensor) -> Tensor:
    """Per-sample ``x / max(|x|)`` over all non-batch axes; all-zero samples pass through."""
    n = x.shape[0]
    flat = x.data.reshape(n, -1)
    idx = np.abs(flat).argmax(axis=1)
    peak = flat[np.arange(n), idx]
    m = np.abs(peak)
    zero = m == 0
    scale = np.where(zero, 1.0, m).astype(x.dtype)
    out = flat / scale[:, None]

    def back(g):
        g = g.reshape(n, -1)
        dx = g / scale[:, None]
        # d m / d x_peak = sign(x_peak); the peak element also rescales every output
        corr = -(g * flat).sum(axis=1) / scale**2 * np.sign(peak)
        corr[zero] = 0.0
        dx[np.arange(n), idx] += corr
        x.accumulate(dx.reshape(x.shape))
    return Tensor(out.reshape(x.shape), parents=(x,), backward=back)


def normalize_feature(x) -> np.ndarray:
    """``x / max(|x|)`` for one plain vector; the all-zero vector is returned unchanged."""
    x = np.asarray(x, dtype=np.float64)
    m = np.abs(x).max() if x.size else 0.0
    return x.copy() if m == 0 else x / m


def flatten(x: Tensor) -> Tensor:
    return x.reshape(x.shape[0], -1)


def bce_with_logits(logits: Tensor, targets, mask=None) -> Tensor:
    """Masked mean binary cross-entropy; ``logits`` are log-odds of target 1.

    Masked slots add neither loss nor gradient. A fully masked batch gives 0.
    """
    logits = as_tensor(logits)
    t = np.asarray(targets, dtype=logits.dtype)
    if t.shape != logits.shape:
        raise ShapeError(f"targets {t.shape} do not match logits {logits.shape}")
    m = np.ones_like(t) if mask is None else np.broadcast_to(np.asarray(mask, dtype=logits.dtype), t.shape)
    count = m.sum()
    z = logits.data
    per = np.maximum(z, 0) - t * z + np.log1p(np.exp(-np.abs(z)))
    loss = float((per * m).sum() / count) if count > 0 else 0.0

    def back(g):
        if count > 0:
            sig = 0.5 * (1.0 + np.tanh(0.5 * z))
            logits.accumulate(g * (sig - t) * m / count)
        else:
            logits.accumulate(np.zeros_like(z))
    return Tensor(np.asarray(loss, dtype=logits.dtype), parents=(logits,), backward=back)


def squared_distance(a: Tensor, b: Tensor) -> Tensor:
    """Row-wise squared Euclidean distance of two (batch, dim) tensors."""
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch {a.shape} vs {b.shape}")
    return (a - b).square().sum(axis=1)


def triplet_loss(anchor: Tensor, positive: Tensor, negative: Tensor, margin: float = 0.2) -> Tensor:
    """Mean of ``max(0, d(a,p)^2 - d(a,n)^2 + margin)`` over the batch."""
    if margin < 0:
        raise ValueError("margin must be non-negative")
    if not (anchor.shape == positive.shape == negative.shape):
        raise ShapeError("anchor, positive and negative must share a shape")
    anchor, positive, negative = (flatten(t) if t.ndim > 2 else t for t in (anchor, positive, negative))
    gap = squared_distance(anchor, positive) - squared_distance(anchor, negative) + margin
    return gap.relu().mean()
