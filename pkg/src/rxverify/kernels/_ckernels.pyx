# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled twins of the kernels in ``_pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, INFINITY

cnp.import_array()

ctypedef fused real:
    float
    double


def maxlog_llr(x, var, points, labels):
    cdef const double[::1] xr = np.ascontiguousarray(np.real(x), dtype=np.float64)
    cdef const double[::1] xi = np.ascontiguousarray(np.imag(x), dtype=np.float64)
    cdef const double[::1] v = np.ascontiguousarray(var, dtype=np.float64)
    cdef const double[::1] pr = np.ascontiguousarray(np.real(points), dtype=np.float64)
    cdef const double[::1] pi = np.ascontiguousarray(np.imag(points), dtype=np.float64)
    cdef const cnp.uint8_t[:, ::1] lab = np.ascontiguousarray(labels, dtype=np.uint8)
    cdef Py_ssize_t n = xr.shape[0], m = pr.shape[0], nb = lab.shape[1]
    out_arr = np.empty((n, nb), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double[64] m0
    cdef double[64] m1
    cdef Py_ssize_t i, p, b
    cdef double dr, di, d2
    if nb > 64:
        raise ValueError("at most 64 bits per symbol")
    for i in range(n):
        for b in range(nb):
            m0[b] = INFINITY
            m1[b] = INFINITY
        for p in range(m):
            dr = xr[i] - pr[p]
            di = xi[i] - pi[p]
            d2 = dr * dr + di * di
            for b in range(nb):
                if lab[p, b]:
                    if d2 < m1[b]:
                        m1[b] = d2
                elif d2 < m0[b]:
                    m0[b] = d2
        for b in range(nb):
            out[i, b] = (m1[b] - m0[b]) / v[i]
    return out_arr


def bin_counts(probs):
    cdef const double[::1] p = np.ascontiguousarray(probs, dtype=np.float64)
    counts_arr = np.zeros(10, dtype=np.int64)
    cdef cnp.int64_t[::1] counts = counts_arr
    cdef double[9] edges
    cdef Py_ssize_t i, b, n = p.shape[0]
    for b in range(9):
        edges[b] = (b + 1) / 10.0
    for i in range(n):
        b = 0
        while b < 9 and p[i] >= edges[b]:
            b += 1
        counts[b] += 1
    return counts_arr


cdef void _im2col(const real[:, :, :, ::1] x, real[:, ::1] out, int kh, int kw, int ph, int pw) noexcept nogil:
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t ho = h + 2 * ph - kh + 1, wo = w + 2 * pw - kw + 1
    cdef Py_ssize_t b, oy, ox, ch, i, j, row, col, iy, ix
    for b in range(n):
        for oy in range(ho):
            for ox in range(wo):
                row = (b * ho + oy) * wo + ox
                col = 0
                for ch in range(c):
                    for i in range(kh):
                        iy = oy + i - ph
                        for j in range(kw):
                            ix = ox + j - pw
                            if 0 <= iy < h and 0 <= ix < w:
                                out[row, col] = x[b, ch, iy, ix]
                            else:
                                out[row, col] = 0
                            col += 1


def im2col(x, int kh, int kw, int ph, int pw):
    x = np.ascontiguousarray(x)
    n, c, h, w = x.shape
    ho, wo = h + 2 * ph - kh + 1, w + 2 * pw - kw + 1
    out = np.empty((n * ho * wo, c * kh * kw), dtype=x.dtype)
    if x.dtype == np.float32:
        _im2col[float](x, out, kh, kw, ph, pw)
    elif x.dtype == np.float64:
        _im2col[double](x, out, kh, kw, ph, pw)
    else:
        raise TypeError(f"unsupported dtype {x.dtype}")
    return out


cdef void _col2im(const real[:, ::1] cols, real[:, :, :, ::1] out, int kh, int kw, int ph, int pw) noexcept nogil:
    cdef Py_ssize_t n = out.shape[0], c = out.shape[1], h = out.shape[2], w = out.shape[3]
    cdef Py_ssize_t ho = h + 2 * ph - kh + 1, wo = w + 2 * pw - kw + 1
    cdef Py_ssize_t b, oy, ox, ch, i, j, row, col, iy, ix
    for b in range(n):
        for oy in range(ho):
            for ox in range(wo):
                row = (b * ho + oy) * wo + ox
                col = 0
                for ch in range(c):
                    for i in range(kh):
                        iy = oy + i - ph
                        for j in range(kw):
                            ix = ox + j - pw
                            if 0 <= iy < h and 0 <= ix < w:
                                out[b, ch, iy, ix] += cols[row, col]
                            col += 1


def col2im(cols, x_shape, int kh, int kw, int ph, int pw):
    cols = np.ascontiguousarray(cols)
    out = np.zeros(tuple(x_shape), dtype=cols.dtype)
    if cols.dtype == np.float32:
        _col2im[float](cols, out, kh, kw, ph, pw)
    elif cols.dtype == np.float64:
        _col2im[double](cols, out, kh, kw, ph, pw)
    else:
        raise TypeError(f"unsupported dtype {cols.dtype}")
    return out


cdef void _pool_fwd(const real[:, :, :, ::1] x, real[:, :, :, ::1] out, cnp.int64_t[:, :, :, ::1] arg,
                    int kh, int kw) noexcept nogil:
    cdef Py_ssize_t n = out.shape[0], c = out.shape[1], ho = out.shape[2], wo = out.shape[3]
    cdef Py_ssize_t b, ch, oy, ox, i, j, best_k
    cdef real best, val
    for b in range(n):
        for ch in range(c):
            for oy in range(ho):
                for ox in range(wo):
                    best = x[b, ch, oy * kh, ox * kw]
                    best_k = 0
                    for i in range(kh):
                        for j in range(kw):
                            val = x[b, ch, oy * kh + i, ox * kw + j]
                            if val > best:
                                best = val
                                best_k = i * kw + j
                    out[b, ch, oy, ox] = best
                    arg[b, ch, oy, ox] = best_k


def maxpool_forward(x, int kh, int kw):
    x = np.ascontiguousarray(x)
    n, c, h, w = x.shape
    out = np.empty((n, c, h // kh, w // kw), dtype=x.dtype)
    arg = np.empty((n, c, h // kh, w // kw), dtype=np.int64)
    if x.dtype == np.float32:
        _pool_fwd[float](x, out, arg, kh, kw)
    elif x.dtype == np.float64:
        _pool_fwd[double](x, out, arg, kh, kw)
    else:
        raise TypeError(f"unsupported dtype {x.dtype}")
    return out, arg


cdef void _pool_bwd(const real[:, :, :, ::1] g, const cnp.int64_t[:, :, :, ::1] arg, real[:, :, :, ::1] dx,
                    int kh, int kw) noexcept nogil:
    cdef Py_ssize_t n = g.shape[0], c = g.shape[1], ho = g.shape[2], wo = g.shape[3]
    cdef Py_ssize_t b, ch, oy, ox, k
    for b in range(n):
        for ch in range(c):
            for oy in range(ho):
                for ox in range(wo):
                    k = arg[b, ch, oy, ox]
                    dx[b, ch, oy * kh + k // kw, ox * kw + k % kw] += g[b, ch, oy, ox]


def maxpool_backward(grad_out, argmax, x_shape, int kh, int kw):
    grad_out = np.ascontiguousarray(grad_out)
    argmax = np.ascontiguousarray(argmax, dtype=np.int64)
    dx = np.zeros(tuple(x_shape), dtype=grad_out.dtype)
    if grad_out.dtype == np.float32:
        _pool_bwd[float](grad_out, argmax, dx, kh, kw)
    elif grad_out.dtype == np.float64:
        _pool_bwd[double](grad_out, argmax, dx, kh, kw)
    else:
        raise TypeError(f"unsupported dtype {grad_out.dtype}")
    return dx


def knn_votes(queries, neighbor_idx, features, labels, centers, radii):
    cdef const double[:, ::1] q = np.ascontiguousarray(queries, dtype=np.float64)
    cdef const cnp.int64_t[:, ::1] nb = np.ascontiguousarray(neighbor_idx, dtype=np.int64)
    cdef const double[:, ::1] f = np.ascontiguousarray(features, dtype=np.float64)
    cdef const cnp.int64_t[::1] lab = np.ascontiguousarray(labels, dtype=np.int64)
    cdef const double[:, ::1] cen = np.ascontiguousarray(centers, dtype=np.float64)
    cdef const double[::1] rad = np.ascontiguousarray(radii, dtype=np.float64)
    cdef Py_ssize_t nq = nb.shape[0], kk = nb.shape[1], dim = q.shape[1]
    out_arr = np.zeros((nq, kk), dtype=np.bool_)
    cdef cnp.npy_bool[:, ::1] out = out_arr
    cdef Py_ssize_t a, k, i, idx, j
    cdef double sk, sy, t
    for a in range(nq):
        for k in range(kk):
            idx = nb[a, k]
            j = lab[idx]
            sk = 0.0
            sy = 0.0
            for i in range(dim):
                t = f[idx, i] - cen[j, i]
                sk += t * t
                t = q[a, i] - cen[j, i]
                sy += t * t
            out[a, k] = sqrt(sy) <= sqrt(sk) and sqrt(sy) <= rad[j]
    return out_arr
