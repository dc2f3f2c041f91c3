"""Tap-delay-line fading channels applied per resource element, plus AWGN.

The five TDL power-delay profiles are the normalized tables of 3GPP TR 38.901
(Tables 7.7.2-1 to 7.7.2-5). Each non-LOS tap fades as an independent
sum-of-sinusoids process with a Jakes Doppler spectrum; the LOS tap of
``tdl_d``/``tdl_e`` is a constant-amplitude component with a Doppler shift.
The channel is evaluated directly on the (symbol, subcarrier) grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0

# (normalized delay, power dB); for LOS profiles the first row is the specular path.
_TDL_TABLES = {
    "tdl_a": (
        [0.0000, 0.3819, 0.4025, 0.5868, 0.4610, 0.5375, 0.6708, 0.5750, 0.7618, 1.5375, 1.8978, 2.2242,
         2.1718, 2.4942, 2.5119, 3.0582, 4.0810, 4.4579, 4.5695, 4.7966, 5.0066, 5.3043, 9.6586],
        [-13.4, 0.0, -2.2, -4.0, -6.0, -8.2, -9.9, -10.5, -7.5, -15.9, -6.6, -16.7, -12.4, -15.2, -10.8,
         -11.3, -12.7, -16.2, -18.3, -18.9, -16.6, -19.9, -29.7],
    ),
    "tdl_b": (
        [0.0000, 0.1072, 0.2155, 0.2095, 0.2870, 0.2986, 0.3752, 0.5055, 0.3681, 0.3697, 0.5700, 0.5283,
         1.1021, 1.2756, 1.5474, 1.7842, 2.0169, 2.8294, 3.0219, 3.6187, 4.1067, 4.2790, 4.7834],
        [0.0, -2.2, -4.0, -3.2, -9.8, -1.2, -3.4, -5.2, -7.6, -3.0, -8.9, -9.0, -4.8, -5.7, -7.5, -1.9,
         -7.6, -12.2, -9.8, -11.4, -14.9, -9.2, -11.3],
    ),
    "tdl_c": (
        [0.0000, 0.2099, 0.2219, 0.2329, 0.2176, 0.6366, 0.6448, 0.6560, 0.6584, 0.7935, 0.8213, 0.9336,
         1.2285, 1.3083, 2.1704, 2.7105, 4.2589, 4.6003, 5.4902, 5.6077, 6.3065, 6.6374, 7.0427, 8.6523],
        [-4.4, -1.2, -3.5, -5.2, -2.5, 0.0, -2.2, -3.9, -7.4, -7.1, -10.7, -11.1, -5.1, -6.8, -8.7, -13.2,
         -13.9, -13.9, -15.8, -17.1, -16.0, -15.7, -21.6, -22.8],
    ),
    "tdl_d": (
        [0.0, 0.0, 0.035, 0.612, 1.363, 1.405, 1.804, 2.596, 1.775, 4.042, 7.937, 9.424, 9.708, 12.525],
        [-0.2, -13.5, -18.8, -21.0, -22.8, -17.9, -20.1, -21.9, -22.9, -27.8, -23.6, -24.8, -30.0, -27.7],
    ),
    "tdl_e": (
        [0.0, 0.0, 0.5133, 0.5440, 0.5630, 0.5440, 0.7112, 1.9092, 1.9293, 1.9589, 2.6426, 3.7136, 5.4524,
         12.0034, 20.6519],
        [-0.03, -22.03, -15.8, -18.1, -19.8, -22.9, -22.4, -18.6, -20.8, -22.6, -22.3, -25.6, -20.2, -29.8,
         -29.2],
    ),
}
LOS_PROFILES = frozenset({"tdl_d", "tdl_e"})
PROFILES = tuple(_TDL_TABLES)


class ChannelError(ValueError):
    pass


@dataclass(frozen=True)
class ChannelConfig:
    profile: str = "tdl_d"
    speed: float = 0.0
    delay_spread: float = 100e-9
    ebn0_db: float = 10.0
    carrier_hz: float = 3.5e9
    subcarrier_spacing_hz: float = 15e3
    seed: int = 0
    n_sinusoids: int = 32
    los_angle: float = np.pi / 4

    def __post_init__(self):
        if self.profile not in _TDL_TABLES:
            raise ChannelError(f"unknown TDL profile {self.profile!r}")
        if self.speed < 0:
            raise ChannelError("speed must be non-negative")
        if self.delay_spread <= 0:
            raise ChannelError("delay spread must be positive")

    @property
    def max_doppler_hz(self) -> float:
        return self.speed * self.carrier_hz / SPEED_OF_LIGHT

    @property
    def symbol_duration(self) -> float:
        # 14 symbols (normal CP) per slot; a slot lasts 1 ms at 15 kHz.
        return 1e-3 * (15e3 / self.subcarrier_spacing_hz) / 14


@dataclass(frozen=True)
class TapSet:
    delays: np.ndarray
    powers: np.ndarray
    los_flag: bool

    @property
    def rms_delay_spread(self) -> float:
        return rms_delay_spread(self.delays, self.powers)


@dataclass
class ChannelRealization:
    H: np.ndarray
    config: ChannelConfig


def rms_delay_spread(delays, powers) -> float:
    p = np.asarray(powers, dtype=float) / np.sum(powers)
    tau = np.asarray(delays, dtype=float)
    mean = np.sum(p * tau)
    return float(np.sqrt(np.sum(p * tau**2) - mean**2))


def make_tapset(profile: str, delay_spread: float) -> TapSet:
    """Normalized power-delay profile rescaled to the requested RMS delay spread (seconds)."""
    if profile not in _TDL_TABLES:
        raise ChannelError(f"unknown TDL profile {profile!r}")
    if delay_spread <= 0:
        raise ChannelError("delay spread must be positive")
    norm_delays, powers_db = (np.asarray(v, dtype=float) for v in _TDL_TABLES[profile])
    powers = 10.0 ** (powers_db / 10.0)
    powers /= powers.sum()
    # The tables are only approximately unit-RMS; rescale exactly.
    delays = norm_delays * (delay_spread / rms_delay_spread(norm_delays, powers))
    order = np.argsort(delays, kind="stable")
    return TapSet(delays=delays[order], powers=powers[order], los_flag=profile in LOS_PROFILES)


def tap_gains(tapset: TapSet, config: ChannelConfig, times: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Complex tap coefficients a_l(t), shape (len(times), n_taps)."""
    n_taps = tapset.delays.size
    m = config.n_sinusoids
    wd = 2 * np.pi * config.max_doppler_hz
    theta = rng.uniform(0, 2 * np.pi, size=(n_taps, m))
    phi = rng.uniform(0, 2 * np.pi, size=(n_taps, m))
    # (T, L, M) phase tensor; L*M is at most a few hundred
    arg = wd * times[:, None, None] * np.cos(theta)[None] + phi[None]
    a = np.exp(1j * arg).sum(axis=-1) / np.sqrt(m)
    if tapset.los_flag:
        phi0 = rng.uniform(0, 2 * np.pi)
        a[:, 0] = np.exp(1j * (wd * np.cos(config.los_angle) * times + phi0))
    return a * np.sqrt(tapset.powers)[None, :]


def realize_channel(tapset: TapSet, config: ChannelConfig, frame_index: int = 0,
                    n_symbols: int = 140, n_subcarriers: int = 72) -> ChannelRealization:
    """Frequency response H(t, f) = sum_l a_l(t) exp(-j 2 pi f tau_l) on the resource grid.

    Randomness is keyed on ``(config.seed, frame_index)``, so frames can be
    generated in any order or in parallel.
    """
    rng = np.random.default_rng([int(config.seed), int(frame_index), 0])
    times = np.arange(n_symbols) * config.symbol_duration
    a = tap_gains(tapset, config, times, rng)
    freqs = np.arange(n_subcarriers) * config.subcarrier_spacing_hz
    steer = np.exp(-2j * np.pi * tapset.delays[:, None] * freqs[None, :])
    return ChannelRealization(H=a @ steer, config=config)


def apply_channel(frame, h) -> np.ndarray:
    """Per-RE multiplication Y = H X (no noise)."""
    x = frame.grid if hasattr(frame, "grid") else np.asarray(frame)
    H = h.H if hasattr(h, "H") else np.asarray(h)
    if np.ndim(H) and x.shape != np.shape(H):
        raise ChannelError(f"grid shape {x.shape} does not match channel shape {np.shape(H)}")
    return x * H


def noise_variance(ebn0_db: float, bits_per_symbol: int) -> float:
    """Per-RE complex noise variance for unit-energy symbols and unit code rate."""
    if bits_per_symbol <= 0:
        raise ChannelError("bits_per_symbol must be positive")
    return 1.0 / (10.0 ** (ebn0_db / 10.0) * bits_per_symbol)


def add_awgn(y: np.ndarray, ebn0_db: float, bits_per_symbol: int, seed) -> tuple[np.ndarray, float]:
    """Add circular complex Gaussian noise; returns the noisy grid and its variance."""
    var = noise_variance(ebn0_db, bits_per_symbol)
    rng = np.random.default_rng(seed)
    y = np.asarray(y)
    noise = rng.standard_normal(y.shape + (2,)) @ np.array([1.0, 1j])
    return y + np.sqrt(var / 2.0) * noise, var
