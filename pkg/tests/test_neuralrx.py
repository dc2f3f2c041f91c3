import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rxverify import neuralrx as R
from rxverify import nn
from rxverify.channel import add_awgn
from rxverify.grid import PILOT_PATTERNS, GridSpec, build_tx_frame, extract_masks, make_pilot_sequence
from rxverify.tradrx import tradrx_decode

SPEC = GridSpec()
PILOTS = make_pilot_sequence(SPEC, 0)


@pytest.fixture(scope="module")
def small_model():
    return R.build_receiver(SPEC, width=8, n_blocks=1, seed=1)


def frame_ber(llrs, bits):
    return np.mean((np.asarray(llrs) < 0) != bits)


class TestInput:
    def test_zero_grid(self):
        inp = R.build_rx_input(np.zeros((14, 72)), PILOTS[0], SPEC)
        assert not inp.raw_channel.any() and not inp.rx_grid.any()
        assert inp.tensor.shape == (14, 72, 6)

    def test_unit_channel_raw_is_one(self):
        tx = build_tx_frame(SPEC, 0)
        inp = R.build_rx_input(tx.grid[:14], PILOTS[0], SPEC)
        pilot, _ = extract_masks(SPEC)
        np.testing.assert_allclose(inp.raw_channel[pilot], np.tile([1.0, 0.0], (108, 1)), atol=1e-6)

    def test_bad_shape(self):
        with pytest.raises(nn.ShapeError):
            R.build_rx_input(np.zeros((14, 70)), PILOTS[0], SPEC)

    def test_frame_inputs_match_single(self):
        rng = np.random.default_rng(0)
        y = rng.standard_normal((140, 72)) + 1j * rng.standard_normal((140, 72))
        batch = R.build_frame_inputs(y, PILOTS, SPEC)
        assert batch.shape == (10, 6, 14, 72)
        for s in (0, 4, 9):
            np.testing.assert_array_equal(batch[s], R.build_rx_input(y[14 * s:14 * s + 14], PILOTS[s], SPEC)
                                          .channels_first())

    @given(st.sampled_from(sorted(PILOT_PATTERNS)), st.integers(0, 1000))
    @settings(max_examples=100, deadline=None)
    def test_zero_off_pilot(self, pattern, seed):
        spec = GridSpec.pattern(pattern)
        pilots = make_pilot_sequence(spec, seed)
        rng = np.random.default_rng(seed)
        y = rng.standard_normal((14, 72)) + 1j * rng.standard_normal((14, 72))
        inp = R.build_rx_input(y, pilots[0], spec)
        pilot, _ = extract_masks(spec)
        assert not inp.raw_channel[~pilot].any() and not inp.tx_pilots[~pilot].any()
        np.testing.assert_allclose(inp.raw_channel[pilot][:, 0] + 1j * inp.raw_channel[pilot][:, 1],
                                   (y[pilot] / pilots[0].ravel()).astype(np.complex64), rtol=1e-5, atol=1e-6)


class TestOutputContract:
    def test_counts_pattern_c(self, small_model):
        tx = build_tx_frame(SPEC, 0)
        out = R.neuralrx_forward(small_model, R.build_rx_input(tx.grid[:14], PILOTS[0], SPEC), SPEC)
        assert out.llrs_raw.size == 8064 and out.llrs_raw.shape == (14, 72, 8)
        assert len(out.llrs_valid) == 3600
        assert len(R.neuralrx_decode(small_model, tx.grid, PILOTS, SPEC)) == 36_000

    @pytest.mark.parametrize("pattern", sorted(PILOT_PATTERNS))
    def test_counts_every_pattern(self, pattern):
        spec = GridSpec.pattern(pattern)
        model = R.build_receiver(spec, width=4, n_blocks=1)
        pilots = make_pilot_sequence(spec, 0)
        tx = build_tx_frame(spec, 0)
        assert R.valid_llr_mask(spec).sum() == spec.n_data_res * 4
        assert len(R.neuralrx_decode(model, tx.grid, pilots, spec)) == spec.bits_per_frame

    def test_deterministic_eval(self, small_model):
        tx = build_tx_frame(SPEC, 3)
        a = R.neuralrx_decode(small_model, tx.grid, PILOTS, SPEC).llrs
        np.testing.assert_array_equal(a, R.neuralrx_decode(small_model, tx.grid, PILOTS, SPEC).llrs)

    def test_decode_matches_forward(self, small_model):
        tx = build_tx_frame(SPEC, 3)
        whole = R.neuralrx_decode(small_model, tx.grid, PILOTS, SPEC).llrs
        parts = np.concatenate([R.neuralrx_forward(small_model, R.build_rx_input(tx.grid[14 * s:14 * s + 14],
                                                                                 PILOTS[s], SPEC), SPEC).llrs_valid.llrs
                                for s in range(10)])
        np.testing.assert_allclose(whole, parts, rtol=1e-5, atol=1e-6)

    def test_targets_layout(self):
        bits = np.random.default_rng(0).integers(0, 2, (2, 3600)).astype(np.uint8)
        t = R.subframe_targets(bits, SPEC)
        assert t.shape == (2, 8, 14, 72)
        np.testing.assert_array_equal(t.transpose(0, 2, 3, 1)[:, R.valid_llr_mask(SPEC)], bits)
        with pytest.raises(nn.ShapeError):
            R.subframe_targets(bits[:, :10], SPEC)


class TestTraining:
    def test_zero_epochs_unchanged(self):
        model = R.build_receiver(SPEC, width=4, n_blocks=1)
        before = {k: v.copy() for k, v in model.state_dict().items()}
        x = R.build_frame_inputs(build_tx_frame(SPEC, 0).grid, PILOTS, SPEC)
        R.train_neuralrx(model, x, build_tx_frame(SPEC, 0).payload_bits.reshape(10, -1),
                         R.default_settings(epochs=0), SPEC)
        for k, v in model.state_dict().items():
            np.testing.assert_array_equal(v, before[k])

    @pytest.mark.slow
    def test_noiseless_overfit_bit_order(self, tmp_path):
        # sign convention and payload ordering: one noiseless frame must be learned exactly
        tx = build_tx_frame(SPEC, 7)
        x = R.build_frame_inputs(tx.grid, PILOTS, SPEC)
        model = R.build_receiver(SPEC, width=16, n_blocks=2, seed=0)
        ckpt = tmp_path / "rx.ckpt"
        res = R.train_neuralrx(model, x, tx.payload_bits.reshape(10, -1),
                               R.default_settings(epochs=400, batch_size=5), SPEC, checkpoint=ckpt)
        assert res.history[-1] < res.history[0]
        llrs = R.neuralrx_decode(model, tx.grid, PILOTS, SPEC).llrs
        assert frame_ber(llrs, tx.payload_bits) == 0.0
        loaded, header = R.load_receiver(ckpt, SPEC)
        assert header["meta"]["kind"] == "neuralrx"
        np.testing.assert_array_equal(R.neuralrx_decode(loaded, tx.grid, PILOTS, SPEC).llrs, llrs)

    def test_same_seed_same_result(self):
        tx = build_tx_frame(SPEC, 1)
        x = R.build_frame_inputs(tx.grid, PILOTS, SPEC)
        runs = []
        for _ in range(2):
            model = R.build_receiver(SPEC, width=4, n_blocks=1, seed=3)
            runs.append(R.train_neuralrx(model, x, tx.payload_bits.reshape(10, -1),
                                         R.default_settings(epochs=2, seed=3), SPEC).history)
        assert runs[0] == runs[1]

    @pytest.mark.slow
    def test_awgn_ber_close_to_tradrx(self):
        ebn0 = 10.0
        train, test = [], []
        for i in range(60):
            tx = build_tx_frame(SPEC, i)
            y, var = add_awgn(tx.grid, ebn0, 4, 10_000 + i)
            (train if i < 40 else test).append((tx, y, var))
        x = np.concatenate([R.build_frame_inputs(y, PILOTS, SPEC) for _, y, _ in train])
        b = np.concatenate([tx.payload_bits.reshape(10, -1) for tx, _, _ in train])
        model = R.build_receiver(SPEC, seed=0)
        R.train_neuralrx(model, x, b, R.default_settings(epochs=16), SPEC)
        ber_n = np.mean([frame_ber(R.neuralrx_decode(model, y, PILOTS, SPEC).llrs, tx.payload_bits)
                         for tx, y, _ in test])
        ber_t = np.mean([frame_ber(tradrx_decode(y, PILOTS, var, SPEC).llrs, tx.payload_bits) for tx, y, var in test])
        print(f"AWGN 10 dB: BER neural {ber_n:.4g}, BER trad {ber_t:.4g}")
        assert ber_n <= 1.5 * ber_t
