import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rxverify import comparator as K

probs = st.lists(st.floats(0, 1, allow_nan=False), min_size=0, max_size=300)
llr_lists = st.lists(st.floats(-60, 60, allow_nan=False), min_size=1, max_size=300)


def llrs_for_prob(p):
    """Inverse of the probability map, so a block lands in chosen bins."""
    p = np.asarray(p, dtype=float)
    return np.log((1 - p) / p)


def synthetic_frame(rng, sigma, bits=None, n=36_000):
    """BPSK-like soft bits: LLR = 2y/sigma^2 with y = +-1 + noise. Returns (llrs, bits)."""
    if bits is None:
        bits = rng.integers(0, 2, n).astype(np.uint8)
    y = (1.0 - 2.0 * bits) + sigma * rng.standard_normal(bits.size)
    return 2 * y / sigma**2, bits


class TestProbability:
    def test_examples(self):
        assert K.llr_to_prob([0.0])[0] == 0.5
        assert K.hard_decision(K.llr_to_prob([0.0]))[0] == 0
        assert K.llr_to_prob([np.log(3)])[0] == pytest.approx(0.25)
        p = K.llr_to_prob([-20.0])[0]
        assert p > 0.999 and K.hard_decision([p])[0] == 1

    def test_non_finite(self):
        with pytest.raises(K.ComparatorError):
            K.llr_to_prob([np.inf])

    @given(llr_lists)
    @settings(max_examples=100, deadline=None)
    def test_monotone_and_sign_consistent(self, llrs):
        llr = np.sort(np.array(llrs))
        p = K.llr_to_prob(llr)
        assert np.all((p >= 0) & (p <= 1))
        assert np.all(np.diff(p) <= 0)
        np.testing.assert_array_equal(K.hard_decision(p), (llr < 0).astype(np.uint8))

    def test_strictly_decreasing_on_distinct_moderate_values(self):
        p = K.llr_to_prob(np.linspace(-10, 10, 1001))
        assert np.all(np.diff(p) < 0)


class TestBins:
    def test_edges(self):
        np.testing.assert_array_equal(K.bin_probabilities([0.0]), np.eye(10, dtype=int)[0])
        np.testing.assert_array_equal(K.bin_probabilities([0.1]), np.eye(10, dtype=int)[1])
        np.testing.assert_array_equal(K.bin_probabilities([1.0]), np.eye(10, dtype=int)[9])
        np.testing.assert_array_equal(K.bin_probabilities([0.9]), np.eye(10, dtype=int)[9])

    def test_uniform_grid(self):
        np.testing.assert_array_equal(K.bin_probabilities(np.arange(10) / 10 + 0.05), np.ones(10))

    def test_out_of_range(self):
        with pytest.raises(K.ComparatorError):
            K.bin_probabilities([1.01])
        with pytest.raises(K.ComparatorError):
            K.bin_probabilities([-0.01])

    @given(probs)
    @settings(max_examples=100, deadline=None)
    def test_partition(self, ps):
        p = np.array(ps, dtype=float)
        bins = K.bin_probabilities(p)
        assert bins.sum() == p.size
        edges = np.arange(11) / 10
        idx = np.clip(np.searchsorted(edges, p, side="right") - 1, 0, 9)
        np.testing.assert_array_equal(bins, np.bincount(idx, minlength=10))

    @given(probs)
    @settings(max_examples=100, deadline=None)
    def test_u_identity(self, ps):
        bins = K.bin_probabilities(ps)
        assert K.uncertainty_count(bins) == bins.sum() - bins[0] - bins[9]


class TestUncertainty:
    def test_confident(self):
        assert K.uncertainty_count(K.bin_probabilities([0.01, 0.99] * 50)) == 0

    def test_all_half(self):
        assert K.uncertainty_count(K.bin_probabilities([0.5] * 77)) == 77

    def test_bad_shape(self):
        with pytest.raises(K.ComparatorError):
            K.uncertainty_count(np.zeros(9))


class TestCompare:
    def test_identical_not_needed(self):
        x = np.random.default_rng(0).normal(0, 3, 1000)
        d = K.compare(x, x)
        assert d.u_neural == d.u_trad and not d.needed

    def test_confident_neural(self):
        d = K.compare(np.full(100, 30.0), np.zeros(100))
        assert d.retraining is K.Retraining.NOT_NEEDED

    def test_fig13_ratio(self):
        n = 36_000
        neural = llrs_for_prob(np.r_[np.full(680, 0.5), np.full(n - 680, 0.01)])
        trad = llrs_for_prob(np.r_[np.full(6, 0.5), np.full(n - 6, 0.01)])
        assert K.compare(neural, trad).needed
        assert not K.compare(trad, neural).needed
        assert not K.compare(neural, neural).needed

    def test_length_mismatch(self):
        with pytest.raises(K.ComparatorError):
            K.compare(np.zeros(3), np.zeros(4))

    @given(st.integers(0, 500), st.integers(0, 500), st.integers(500, 2000))
    @settings(max_examples=100, deadline=None)
    def test_decision_rule(self, un, ut, n):
        neural = llrs_for_prob(np.r_[np.full(un, 0.4), np.full(n - un, 0.999)])
        trad = llrs_for_prob(np.r_[np.full(ut, 0.6), np.full(n - ut, 0.001)])
        d = K.compare(neural, trad)
        assert (d.u_neural, d.u_trad) == (un, ut)
        assert d.needed == (un > ut)

    def test_compare_frames(self):
        a = np.zeros(72_000)
        b = np.full(72_000, 30.0)
        ds = K.compare_frames(a, b)
        assert len(ds) == 2 and all(d.needed for d in ds)
        assert len(K.compare_frames(a, b, window=2)) == 1
        with pytest.raises(K.ComparatorError):
            K.compare_frames(np.zeros(10), np.zeros(10))

    def test_scale_free_bootstrap(self):
        rng = np.random.default_rng(3)
        neural, _ = synthetic_frame(rng, 0.7)
        trad, _ = synthetic_frame(rng, 0.5)
        for size in (3_600, 36_000, 360_000):
            votes = [K.compare(rng.choice(neural, size), rng.choice(trad, size)).needed for _ in range(20)]
            assert all(votes)


class TestAccuracy:
    def test_all_correct(self):
        ds = [K.Retraining.NEEDED, K.Retraining.NOT_NEEDED]
        assert K.comparator_accuracy(ds, [(0.2, 0.1), (0.1, 0.1)]) == 1.0

    def test_tie_boundary(self):
        assert not K.decision_correct(K.Retraining.NEEDED, 0.1, 0.1)
        assert K.decision_correct(K.Retraining.NOT_NEEDED, 0.1, 0.1)

    def test_misaligned(self):
        with pytest.raises(K.ComparatorError):
            K.comparator_accuracy([K.Retraining.NEEDED], [])
        with pytest.raises(K.ComparatorError):
            K.comparator_accuracy([], [])

    def test_ten_fold_gap(self):
        rng = np.random.default_rng(11)
        decisions, bers = [], []
        for i in range(100):
            good, bad = (0.4, 0.8)
            neural_worse = bool(i % 2)
            ln, bits = synthetic_frame(rng, bad if neural_worse else good)
            lt, _ = synthetic_frame(rng, good if neural_worse else bad, bits)
            bn = np.mean((ln < 0) != bits)
            bt = np.mean((lt < 0) != bits)
            assert max(bn, bt) >= 10 * min(bn, bt)
            decisions.append(K.compare(ln, lt))
            bers.append((bn, bt))
        assert K.comparator_accuracy(decisions, bers) >= 0.95

    @given(st.lists(st.tuples(st.booleans(), st.floats(0, 0.5), st.floats(0, 0.5)), min_size=1, max_size=50))
    @settings(max_examples=100, deadline=None)
    def test_accuracy_range(self, rows):
        ds = [K.Retraining.NEEDED if n else K.Retraining.NOT_NEEDED for n, _, _ in rows]
        acc = K.comparator_accuracy(ds, [(a, b) for _, a, b in rows])
        assert 0.0 <= acc <= 1.0


def test_decision_log_round_trip(tmp_path):
    ds = [K.ComparatorDecision(5, 3, K.Retraining.NEEDED), K.ComparatorDecision(1, 3, K.Retraining.NOT_NEEDED)]
    path = tmp_path / "log.csv"
    K.write_decision_log(path, ds, [(0.1, 0.05), (0.0, 0.01)], start_frame=10)
    rows = K.read_decision_log(path)
    assert [r["frame"] for r in rows] == [10, 11]
    assert rows[0]["decision"] is K.Retraining.NEEDED and rows[1]["u_neural"] == 1
    assert rows[1]["ber_trad"] == 0.01
    K.write_decision_log(path, ds)
    assert K.read_decision_log(path)[0]["ber_neural"] is None
