"""Pure-numpy implementations of the hot kernels.

Every function here has a twin with the same signature in ``_ckernels.pyx``.
The two are checked against each other in the test suite.
"""

import numpy as np

BIN_EDGES = np.arange(1, 10) / 10.0


def maxlog_llr(x, var, points, labels):
    """Max-log LLRs, ``ln P(b=0)/P(b=1)`` approximated by nearest-point distances.

    Parameters
    ----------
    x : complex ndarray, shape (N,)
        Equalized symbols.
    var : float ndarray, shape (N,)
        Effective noise variance per symbol (must be positive).
    points : complex ndarray, shape (M,)
        Constellation.
    labels : uint8 ndarray, shape (M, B)
        Bit label of each constellation point.

    Returns
    -------
    float64 ndarray, shape (N, B)
    """
    x = np.asarray(x, dtype=np.complex128)
    var = np.asarray(var, dtype=np.float64)
    d2 = np.abs(x[:, None] - points[None, :]) ** 2
    n_bits = labels.shape[1]
    out = np.empty((x.shape[0], n_bits))
    for b in range(n_bits):
        one = labels[:, b].astype(bool)
        out[:, b] = d2[:, one].min(axis=1) - d2[:, ~one].min(axis=1)
    return out / var[:, None]


def bin_counts(probs):
    """Histogram counts over ``[0, .1), [.1, .2), ..., [.9, 1.0]``."""
    probs = np.asarray(probs, dtype=np.float64)
    idx = np.searchsorted(BIN_EDGES, probs, side="right")
    return np.bincount(idx, minlength=10).astype(np.int64)


def im2col(x, kh, kw, ph, pw):
    """Unfold stride-1 patches of an NCHW batch.

    Returns an array of shape ``(N * H_out * W_out, C * kh * kw)`` whose column
    order matches ``weight.reshape(out_channels, -1)``.
    """
    n, c, h, w = x.shape
    if ph or pw:
        x = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    win = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(2, 3))
    # win: (N, C, Ho, Wo, kh, kw) -> (N, Ho, Wo, C, kh, kw)
    ho, wo = win.shape[2], win.shape[3]
    return np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(n * ho * wo, c * kh * kw)


def col2im(cols, x_shape, kh, kw, ph, pw):
    """Adjoint of :func:`im2col`: scatter-add patch gradients back to NCHW."""
    n, c, h, w = x_shape
    hp, wp = h + 2 * ph, w + 2 * pw
    ho, wo = hp - kh + 1, wp - kw + 1
    cols = cols.reshape(n, ho, wo, c, kh, kw)
    out = np.zeros((n, c, hp, wp), dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i:i + ho, j:j + wo] += cols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    return out[:, :, ph:ph + h, pw:pw + w]


def maxpool_forward(x, kh, kw):
    """Non-overlapping max pooling; trailing rows/columns that do not fill a window are dropped.

    Returns ``(out, argmax)`` where ``argmax`` holds the flat in-window index of the winner.
    """
    n, c, h, w = x.shape
    ho, wo = h // kh, w // kw
    xv = x[:, :, :ho * kh, :wo * kw].reshape(n, c, ho, kh, wo, kw).transpose(0, 1, 2, 4, 3, 5)
    xv = xv.reshape(n, c, ho, wo, kh * kw)
    arg = xv.argmax(axis=-1)
    out = np.take_along_axis(xv, arg[..., None], axis=-1)[..., 0]
    return np.ascontiguousarray(out), arg.astype(np.int64)


def maxpool_backward(grad_out, argmax, x_shape, kh, kw):
    n, c, h, w = x_shape
    ho, wo = grad_out.shape[2], grad_out.shape[3]
    g = np.zeros((n, c, ho, wo, kh * kw), dtype=grad_out.dtype)
    np.put_along_axis(g, argmax[..., None], grad_out[..., None], axis=-1)
    g = g.reshape(n, c, ho, wo, kh, kw).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, ho * kh, wo * kw)
    dx = np.zeros(x_shape, dtype=grad_out.dtype)
    dx[:, :, :ho * kh, :wo * kw] = g
    return dx


def knn_votes(queries, neighbor_idx, features, labels, centers, radii):
    """Per-neighbor ID votes: neighbor k votes ID iff ``d_y <= d_k`` and ``d_y <= r_j``.

    Parameters
    ----------
    queries : (Q, I) float64
    neighbor_idx : (Q, K) int64, indices into ``features``
    features : (N, I) float64
    labels : (N,) int64, cluster index of each feature
    centers : (J, I) float64
    radii : (J,) float64

    Returns
    -------
    bool ndarray, shape (Q, K)
    """
    lab = labels[neighbor_idx]
    c = centers[lab]
    d_k = np.linalg.norm(features[neighbor_idx] - c, axis=-1)
    d_y = np.linalg.norm(queries[:, None, :] - c, axis=-1)
    return (d_y <= d_k) & (d_y <= radii[lab])
