import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rxverify import kernels
from rxverify.grid import qam16_constellation

py = kernels.python
c = kernels.compiled
needs_compiled = pytest.mark.skipif(c is None, reason="compiled kernels not built")


def test_backend_name():
    assert kernels.BACKEND in ("cython", "python")
    assert (kernels.BACKEND == "cython") == (c is not None)


@needs_compiled
class TestCrossBackend:
    @given(st.integers(1, 300), st.integers(0, 2**31))
    @settings(max_examples=100, deadline=None)
    def test_maxlog(self, n, seed):
        rng = np.random.default_rng(seed)
        pts, labels = qam16_constellation()
        x = rng.normal(0, 1.5, n) + 1j * rng.normal(0, 1.5, n)
        var = rng.uniform(1e-3, 5, n)
        np.testing.assert_allclose(c.maxlog_llr(x, var, pts, labels), py.maxlog_llr(x, var, pts, labels),
                                   rtol=1e-12, atol=1e-9)

    @given(st.lists(st.floats(0, 1, allow_nan=False), max_size=500))
    @settings(max_examples=100, deadline=None)
    def test_bins(self, probs):
        np.testing.assert_array_equal(c.bin_counts(np.array(probs)), py.bin_counts(np.array(probs)))

    @given(st.integers(1, 3), st.integers(1, 4), st.integers(3, 9), st.integers(3, 9),
           st.sampled_from([(1, 1, 0, 0), (3, 3, 1, 1), (3, 1, 1, 0)]), st.integers(0, 1000))
    @settings(max_examples=100, deadline=None)
    def test_im2col_col2im(self, n, ch, h, w, kp, seed):
        kh, kw, ph, pw = kp
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((n, ch, h, w))
        cols = py.im2col(x, kh, kw, ph, pw)
        np.testing.assert_allclose(c.im2col(x, kh, kw, ph, pw), cols, atol=1e-12)
        g = rng.standard_normal(cols.shape)
        np.testing.assert_allclose(c.col2im(g, x.shape, kh, kw, ph, pw), py.col2im(g, x.shape, kh, kw, ph, pw),
                                   atol=1e-10)

    @given(st.integers(1, 3), st.integers(1, 3), st.integers(2, 11), st.integers(2, 11), st.integers(0, 1000))
    @settings(max_examples=100, deadline=None)
    def test_maxpool(self, n, ch, h, w, seed):
        x = np.random.default_rng(seed).standard_normal((n, ch, h, w))
        out_c, arg_c = c.maxpool_forward(x, 2, 2)
        out_p, arg_p = py.maxpool_forward(x, 2, 2)
        np.testing.assert_array_equal(out_c, out_p)
        np.testing.assert_array_equal(arg_c, arg_p)
        g = np.random.default_rng(seed + 1).standard_normal(out_p.shape)
        np.testing.assert_array_equal(c.maxpool_backward(g, arg_c, x.shape, 2, 2),
                                      py.maxpool_backward(g, arg_p, x.shape, 2, 2))

    @given(st.integers(1, 20), st.integers(2, 8), st.integers(1, 5), st.integers(0, 1000))
    @settings(max_examples=100, deadline=None)
    def test_knn_votes(self, q, dim, k, seed):
        rng = np.random.default_rng(seed)
        feats = rng.standard_normal((40, dim))
        labels = rng.integers(0, 2, 40)
        centers = np.stack([feats[labels == j].mean(0) if np.any(labels == j) else np.zeros(dim) for j in range(2)])
        radii = rng.uniform(0.5, 3, 2)
        queries = rng.standard_normal((q, dim))
        idx = rng.integers(0, 40, (q, k))
        np.testing.assert_array_equal(c.knn_votes(queries, idx, feats, labels, centers, radii),
                                      py.knn_votes(queries, idx, feats, labels, centers, radii))

    def test_self_vote_exact(self):
        # a stored feature queried verbatim must see d_y == d_k in both backends
        rng = np.random.default_rng(0)
        feats = rng.standard_normal((30, 64)).astype(np.float32).astype(np.float64)
        labels = np.zeros(30, dtype=np.int64)
        centers = feats.mean(0, keepdims=True)
        radii = np.array([100.0])
        idx = np.arange(30)[:, None]
        for impl in (c, py):
            assert impl.knn_votes(feats, idx, feats, labels, centers, radii).all()


def test_python_bins_edges():
    np.testing.assert_array_equal(py.bin_counts(np.array([0.0, 0.1, 0.9, 1.0, 0.0999])), [2, 1, 0, 0, 0, 0, 0, 0, 0, 2])


def test_python_maxpool_drops_remainder():
    x = np.arange(25, dtype=float).reshape(1, 1, 5, 5)
    out, _ = py.maxpool_forward(x, 2, 2)
    np.testing.assert_array_equal(out[0, 0], [[6, 8], [16, 18]])
