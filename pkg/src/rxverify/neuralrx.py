"""Compact convolutional receiver: subframe grid + raw channel + pilots in, 8 LLRs per RE out.

LLRs follow the same convention as the traditional chain, ``ln P(b=0)/P(b=1)``,
so a positive value favours bit 0. Only the first ``bits_per_symbol`` of the
8 output slots are meaningful for a data RE; pilot REs carry no data bits.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import nn
from .grid import GridSpec, extract_masks
from .tradrx import SoftBitBlock

N_LLR_SLOTS = 8
N_INPUT_CHANNELS = 6


def _split(z: np.ndarray) -> np.ndarray:
    return np.stack([z.real, z.imag], axis=-1).astype(np.float32)


@dataclass
class RxInput:
    """Per-subframe model input; each part is (14, 72, 2) real (re, im)."""

    rx_grid: np.ndarray
    raw_channel: np.ndarray
    tx_pilots: np.ndarray

    @property
    def tensor(self) -> np.ndarray:
        """The (14, 72, 6) concatenation."""
        return np.concatenate([self.rx_grid, self.raw_channel, self.tx_pilots], axis=-1)

    def channels_first(self) -> np.ndarray:
        return np.ascontiguousarray(self.tensor.transpose(2, 0, 1))


@dataclass
class RxOutput:
    llrs_raw: np.ndarray
    llrs_valid: SoftBitBlock


def _pilot_plane(pilot_table: np.ndarray, spec: GridSpec) -> np.ndarray:
    plane = np.zeros((spec.n_symbols, spec.n_subcarriers), dtype=np.complex128)
    plane[np.ix_(spec.pilot_symbol_indices, spec.pilot_subcarrier_indices)] = pilot_table
    return plane


def build_rx_input(rx_subframe: np.ndarray, pilot_table: np.ndarray, spec: GridSpec | None = None) -> RxInput:
    """Assemble the three input planes for one subframe.

    ``pilot_table`` holds this subframe's pilots, shape (pilot symbols, pilot subcarriers).
    """
    spec = spec or GridSpec()
    y = np.asarray(rx_subframe)
    if y.shape != (spec.n_symbols, spec.n_subcarriers):
        raise nn.ShapeError(f"subframe must be {(spec.n_symbols, spec.n_subcarriers)}, got {y.shape}")
    pilot_mask, _ = extract_masks(spec)
    x = _pilot_plane(pilot_table, spec)
    raw = np.zeros_like(x)
    raw[pilot_mask] = y[pilot_mask] / x[pilot_mask]
    return RxInput(_split(y), _split(raw), _split(x))


def build_frame_inputs(rx_frame: np.ndarray, pilots: np.ndarray, spec: GridSpec | None = None) -> np.ndarray:
    """All subframes of one or more stacked frames as a channels-first batch (n_sf, 6, 14, 72)."""
    spec = spec or GridSpec()
    y = np.asarray(rx_frame)
    n = spec.n_symbols
    n_sf = y.shape[0] // n
    pilot_mask, _ = extract_masks(spec)
    y = y.reshape(n_sf, n, spec.n_subcarriers)
    x = np.zeros_like(y, dtype=np.complex128)
    table = np.asarray(pilots).reshape(-1, len(spec.pilot_symbol_indices), len(spec.pilot_subcarrier_indices))
    reps = n_sf // table.shape[0]
    x[:, pilot_mask] = np.tile(table.reshape(table.shape[0], -1), (reps, 1))
    raw = np.zeros_like(x)
    raw[:, pilot_mask] = y[:, pilot_mask] / x[:, pilot_mask]
    planes = [y.real, y.imag, raw.real, raw.imag, x.real, x.imag]
    return np.stack(planes, axis=1).astype(np.float32)


def valid_llr_mask(spec: GridSpec | None = None) -> np.ndarray:
    """Boolean (14, 72, 8): data REs, first ``bits_per_symbol`` slots."""
    spec = spec or GridSpec()
    _, data = extract_masks(spec)
    mask = np.zeros((spec.n_symbols, spec.n_subcarriers, N_LLR_SLOTS), dtype=bool)
    mask[data, :spec.bits_per_symbol] = True
    return mask


def build_receiver(spec: GridSpec | None = None, width: int = 32, n_blocks: int = 3, seed: int = 0,
                   dtype=np.float32) -> nn.Model:
    """Input conv -> residual conv blocks -> 8-channel output conv, all 3x3 same-padded."""
    spec = spec or GridSpec()
    rng = np.random.default_rng(seed)
    layers = [nn.Conv2d(N_INPUT_CHANNELS, width, 3, rng, dtype), nn.ReLU()]
    layers += [nn.Residual(width, width, rng, dtype=dtype) for _ in range(n_blocks)]
    head = nn.Conv2d(width, N_LLR_SLOTS, 3, rng, dtype)
    # a small output layer keeps initial LLRs near zero; He-scaled outputs saturate the loss
    head.weight.data *= 0.1
    layers.append(head)
    return nn.Model(layers, (N_INPUT_CHANNELS, spec.n_symbols, spec.n_subcarriers), seed=seed, name="neuralrx")


def default_settings(**overrides) -> nn.TrainSettings:
    """Training settings that converge for the compact receiver at desk scale."""
    base = dict(epochs=20, lr=0.1, momentum=0.9, batch_size=16, clip_norm=1.0)
    base.update(overrides)
    return nn.TrainSettings(**base)


def _raw_llrs(model: nn.Model, batch: np.ndarray, batch_size: int = 64) -> np.ndarray:
    outs = [model(batch[i:i + batch_size]).data for i in range(0, len(batch), batch_size)]
    return np.concatenate(outs).transpose(0, 2, 3, 1)


def neuralrx_forward(model: nn.Model, inp: RxInput, spec: GridSpec | None = None) -> RxOutput:
    """Evaluate one subframe; ``llrs_valid`` follows the payload bit order."""
    raw = _raw_llrs(model, inp.channels_first()[None])[0]
    return RxOutput(raw, SoftBitBlock(raw[valid_llr_mask(spec)].astype(np.float64)))


def neuralrx_decode(model: nn.Model, rx_frame: np.ndarray, pilots: np.ndarray, spec: GridSpec | None = None,
                    batch_size: int = 64) -> SoftBitBlock:
    """Valid LLRs of a (140, 72) frame, ordered like ``TxFrame.payload_bits``."""
    spec = spec or GridSpec()
    raw = _raw_llrs(model, build_frame_inputs(rx_frame, pilots, spec), batch_size)
    return SoftBitBlock(raw[:, valid_llr_mask(spec)].ravel().astype(np.float64))


def subframe_targets(bits: np.ndarray, spec: GridSpec | None = None) -> np.ndarray:
    """Scatter per-subframe payload bits (N, bits_per_subframe) into (N, 8, 14, 72) targets."""
    spec = spec or GridSpec()
    bits = np.asarray(bits)
    if bits.ndim != 2 or bits.shape[1] != spec.bits_per_subframe:
        raise nn.ShapeError(f"expected (N, {spec.bits_per_subframe}) bits, got {bits.shape}")
    t = np.zeros((len(bits), spec.n_symbols, spec.n_subcarriers, N_LLR_SLOTS), dtype=np.float32)
    t[:, valid_llr_mask(spec)] = bits
    return t.transpose(0, 3, 1, 2)


def receiver_loss(model: nn.Model, inputs: np.ndarray, bits: np.ndarray, spec: GridSpec | None = None) -> nn.Tensor:
    """Masked BCE over valid slots; logits are ``-LLR`` so target 1 drives the LLR negative."""
    spec = spec or GridSpec()
    out = model(inputs)
    mask = valid_llr_mask(spec).transpose(2, 0, 1)
    return nn.bce_with_logits(-out, subframe_targets(bits, spec), mask[None])


def train_neuralrx(model: nn.Model, inputs: np.ndarray, bits: np.ndarray, settings: nn.TrainSettings,
                   spec: GridSpec | None = None, checkpoint: str | Path | None = None,
                   on_epoch=None) -> nn.TrainResult:
    """Train on subframe inputs (N, 6, 14, 72) and their payload bits (N, bits_per_subframe).

    Raises :class:`nn.TrainingDiverged` on a non-finite loss. When ``checkpoint``
    is given the trained parameters are written there.
    """
    spec = spec or GridSpec()
    inputs = np.asarray(inputs, dtype=model.dtype)
    bits = np.asarray(bits, dtype=np.uint8)
    if len(inputs) != len(bits):
        raise nn.ShapeError("inputs and bits disagree on the number of subframes")
    result = nn.train(model, (inputs, bits), lambda m, b: receiver_loss(m, b[0], b[1], spec), settings, on_epoch)
    if checkpoint is not None:
        nn.save_checkpoint(checkpoint, model, {"kind": "neuralrx", "history": result.history,
                                               "pilot_symbols": list(spec.pilot_symbol_indices)})
    return result


def load_receiver(path: str | Path, spec: GridSpec | None = None) -> tuple[nn.Model, dict]:
    """Rebuild a receiver from a checkpoint; width and depth are read off the stored shapes."""
    state, header = nn.read_checkpoint(path)
    shapes = list(state.values())
    width = shapes[0].shape[0]
    n_blocks = (len(shapes) - 4) // 4
    model = build_receiver(spec, width=width, n_blocks=n_blocks)
    model.load_state_dict(state)
    return model, header
