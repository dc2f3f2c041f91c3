"""Traditional receiver: LS pilot estimates, linear interpolation, LMMSE, max-log demapping.

LLR convention throughout the package: ``LLR = ln P(b=0) / P(b=1)``, so a
positive value favours bit 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .grid import GridSpec, extract_masks, qam16_constellation

MIN_VARIANCE = 1e-10


class DemapError(ValueError):
    pass


@dataclass
class ChannelEstimate:
    H_hat: np.ndarray
    raw_pilot_estimates: np.ndarray


@dataclass
class SoftBitBlock:
    """LLRs for the valid data bits of one or more frames, in payload order."""

    llrs: np.ndarray

    def __len__(self):
        return self.llrs.size

    def hard_bits(self) -> np.ndarray:
        return (self.llrs < 0).astype(np.uint8)


def _interp_extrap(x_known: np.ndarray, values: np.ndarray, x_all: np.ndarray, axis: int) -> np.ndarray:
    """Piecewise-linear interpolation along ``axis``; linear extrapolation from the outer pairs."""
    values = np.moveaxis(values, axis, 0)
    if x_known.size == 1:
        out = np.broadcast_to(values[:1], (x_all.size,) + values.shape[1:]).copy()
        return np.moveaxis(out, 0, axis)
    seg = np.clip(np.searchsorted(x_known, x_all, side="right") - 1, 0, x_known.size - 2)
    x0, x1 = x_known[seg], x_known[seg + 1]
    w = ((x_all - x0) / (x1 - x0)).reshape((-1,) + (1,) * (values.ndim - 1))
    out = (1 - w) * values[seg] + w * values[seg + 1]
    return np.moveaxis(out, 0, axis)


def ls_estimate(rx: np.ndarray, pilots: np.ndarray, spec: GridSpec) -> ChannelEstimate:
    """LS channel estimate for a (140, 72) frame, subframe by subframe.

    Raw estimates Y/X at pilot REs are interpolated linearly in frequency across
    the pilot comb, then linearly in time across the pilot symbols; REs outside
    the pilot span are linearly extrapolated.
    """
    n = spec.n_symbols
    psym = np.asarray(spec.pilot_symbol_indices)
    psub = np.asarray(spec.pilot_subcarrier_indices)
    n_sf = rx.shape[0] // n
    sub = rx.reshape(n_sf, n, spec.n_subcarriers)
    raw = sub[:, psym][:, :, psub] / pilots[:n_sf]
    h_f = _interp_extrap(psub.astype(float), raw, np.arange(spec.n_subcarriers, dtype=float), axis=2)
    h = _interp_extrap(psym.astype(float), h_f, np.arange(n, dtype=float), axis=1)
    return ChannelEstimate(H_hat=h.reshape(rx.shape), raw_pilot_estimates=raw)


def lmmse_equalize(y: np.ndarray, H_hat: np.ndarray, noise_var: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-RE scalar LMMSE: ``x = conj(H) y / (|H|^2 + s2)`` and error variance ``s2 / (|H|^2 + s2)``.

    The estimate is biased (shrunk by ``g = |H|^2/(|H|^2 + s2)``); see :func:`unbias`.
    """
    if noise_var < 0:
        raise DemapError("noise variance must be non-negative")
    p = np.abs(H_hat) ** 2
    den = p + noise_var
    den = np.where(den > 0, den, np.finfo(float).tiny)
    return np.conj(H_hat) * y / den, noise_var / den


def unbias(x_hat: np.ndarray, err_var: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Remove the LMMSE shrinkage for unit-energy symbols.

    With ``g = 1 - err_var`` the unbiased symbol is ``x_hat / g`` with noise
    variance ``err_var / g``.
    """
    g = np.clip(1.0 - err_var, np.finfo(float).eps, None)
    return x_hat / g, err_var / g


def demap_maxlog(x_hat: np.ndarray, var: np.ndarray, modulation: str = "qam16") -> SoftBitBlock:
    """Max-log LLRs ``(min_{S1}|x-s|^2 - min_{S0}|x-s|^2) / var``, 4 per symbol, symbol-major."""
    if modulation != "qam16":
        raise DemapError(f"unsupported modulation {modulation!r}")
    x_hat = np.asarray(x_hat).ravel()
    var = np.broadcast_to(np.asarray(var, dtype=float), x_hat.shape).ravel()
    if np.any(var <= 0):
        raise DemapError("effective noise variance must be positive")
    points, labels = qam16_constellation()
    return SoftBitBlock(kernels.maxlog_llr(x_hat, var, points, labels).ravel())


def data_positions(spec: GridSpec, n_subframes: int | None = None) -> np.ndarray:
    """Frame-level boolean data mask (row-major order equals payload order)."""
    _, data = extract_masks(spec)
    return np.tile(data, (n_subframes or spec.n_subframes_per_frame, 1))


def tradrx_decode(rx: np.ndarray, pilots: np.ndarray, noise_var: float, spec: GridSpec | None = None,
                  estimate: ChannelEstimate | None = None) -> SoftBitBlock:
    """Full chain for one (140, 72) frame; output ordered like ``TxFrame.payload_bits``.

    ``estimate`` overrides the LS estimate (e.g. genie channel knowledge).
    """
    spec = spec or GridSpec()
    if estimate is None:
        estimate = ls_estimate(rx, pilots, spec)
    mask = data_positions(spec, rx.shape[0] // spec.n_symbols)
    x_hat, err = lmmse_equalize(rx[mask], estimate.H_hat[mask], noise_var)
    x_hat, eff = unbias(x_hat, err)
    return demap_maxlog(x_hat, np.maximum(eff, MIN_VARIANCE))


def qam16_ber_awgn(ebn0_db) -> np.ndarray:
    """Closed-form uncoded BER of Gray 16QAM on AWGN with coherent detection."""
    from scipy.special import erfc

    def q(z):
        return 0.5 * erfc(z / np.sqrt(2.0))

    a = np.sqrt(0.8 * 10.0 ** (np.asarray(ebn0_db, dtype=float) / 10.0))
    return 0.75 * q(a) + 0.5 * q(3 * a) - 0.25 * q(5 * a)
