"""Resource grids: pilot layout, 16QAM mapping and transmit frames.

A subframe is 14 OFDM symbols by 72 subcarriers (6 PRBs). A frame is 10
subframes stacked along the time axis, so frame-level arrays are (140, 72).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

PILOT_PATTERNS = {
    "a": (2,),
    "b": (2, 11),
    "c": (2, 7, 11),
    "d": (2, 5, 8, 11),
}

QPSK_SCALE = 1.0 / np.sqrt(2.0)
QAM16_SCALE = 1.0 / np.sqrt(10.0)


class GridError(ValueError):
    """Raised for malformed grid specs or bit/symbol arrays of the wrong shape."""


@dataclass(frozen=True)
class GridSpec:
    """Static layout of a subframe and frame."""

    n_symbols: int = 14
    n_subcarriers: int = 72
    pilot_symbol_indices: tuple[int, ...] = PILOT_PATTERNS["c"]
    pilot_subcarrier_indices: tuple[int, ...] = tuple(range(0, 72, 2))
    n_subframes_per_frame: int = 10
    bits_per_symbol: int = 4

    def __post_init__(self):
        object.__setattr__(self, "pilot_symbol_indices", tuple(int(i) for i in self.pilot_symbol_indices))
        object.__setattr__(self, "pilot_subcarrier_indices", tuple(int(i) for i in self.pilot_subcarrier_indices))
        syms, subs = self.pilot_symbol_indices, self.pilot_subcarrier_indices
        if not syms or len(set(syms)) != len(syms) or not all(0 <= s < self.n_symbols for s in syms):
            raise GridError(f"invalid pilot symbol indices {syms}")
        if len(set(subs)) != len(subs) or not all(0 <= s < self.n_subcarriers for s in subs):
            raise GridError(f"invalid pilot subcarrier indices {subs}")
        if list(syms) != sorted(syms) or list(subs) != sorted(subs):
            raise GridError("pilot indices must be sorted ascending")
        if self.bits_per_symbol != 4:
            raise GridError("only 16QAM data (4 bits/symbol) is mapped")

    @classmethod
    def pattern(cls, name: str, **kwargs) -> "GridSpec":
        """Spec for one of the four pilot patterns ``'a'`` ... ``'d'``."""
        try:
            syms = PILOT_PATTERNS[name]
        except KeyError:
            raise GridError(f"unknown pilot pattern {name!r}") from None
        return cls(pilot_symbol_indices=syms, **kwargs)

    @property
    def n_pilot_res(self) -> int:
        return len(self.pilot_symbol_indices) * len(self.pilot_subcarrier_indices)

    @property
    def n_data_res(self) -> int:
        return self.n_symbols * self.n_subcarriers - self.n_pilot_res

    @property
    def bits_per_subframe(self) -> int:
        return self.n_data_res * self.bits_per_symbol

    @property
    def bits_per_frame(self) -> int:
        return self.bits_per_subframe * self.n_subframes_per_frame

    @property
    def frame_symbols(self) -> int:
        return self.n_symbols * self.n_subframes_per_frame


@dataclass
class ResourceGrid:
    symbols: np.ndarray
    spec: GridSpec
    subframe_index: int


@dataclass
class TxFrame:
    """One transmitted frame.

    ``grid`` is the (140, 72) complex frame; ``payload_bits`` are ordered
    subframe by subframe, data REs row-major within a subframe, 4 bits per RE.
    """

    grid: np.ndarray
    payload_bits: np.ndarray
    pilots: np.ndarray
    spec: GridSpec
    rng_seed: int
    subframes: list[ResourceGrid] = field(init=False, repr=False)

    def __post_init__(self):
        n = self.spec.n_symbols
        self.subframes = [
            ResourceGrid(self.grid[i * n:(i + 1) * n], self.spec, i)
            for i in range(self.spec.n_subframes_per_frame)
        ]


def extract_masks(spec: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    """Boolean (pilot, data) masks of one subframe; they partition the grid."""
    pilot = np.zeros((spec.n_symbols, spec.n_subcarriers), dtype=bool)
    pilot[np.ix_(spec.pilot_symbol_indices, spec.pilot_subcarrier_indices)] = True
    return pilot, ~pilot


def make_pilot_sequence(spec: GridSpec, seed: int) -> np.ndarray:
    """Pseudo-random QPSK pilots, shape (subframes, pilot symbols, pilot subcarriers).

    Drawn from a Philox counter-based stream keyed by ``seed`` so transmitter
    and receivers regenerate the same table.
    """
    rng = np.random.Generator(np.random.Philox(key=int(seed)))
    shape = (spec.n_subframes_per_frame, len(spec.pilot_symbol_indices), len(spec.pilot_subcarrier_indices))
    bits = rng.integers(0, 2, size=shape + (2,), dtype=np.int8)
    return QPSK_SCALE * ((1 - 2 * bits[..., 0]) + 1j * (1 - 2 * bits[..., 1]))


def qam16_constellation() -> tuple[np.ndarray, np.ndarray]:
    """All 16 points and their 4-bit labels, index = integer value of b0b1b2b3."""
    labels = ((np.arange(16)[:, None] >> np.arange(3, -1, -1)) & 1).astype(np.uint8)
    return _map16(labels), labels


def _map16(groups: np.ndarray) -> np.ndarray:
    b = groups.astype(np.int8)
    re = (1 - 2 * b[:, 0]) * (2 - (1 - 2 * b[:, 2]))
    im = (1 - 2 * b[:, 1]) * (2 - (1 - 2 * b[:, 3]))
    return QAM16_SCALE * (re + 1j * im)


def map_bits_16qam(bits: np.ndarray) -> np.ndarray:
    """Gray-mapped, unit-average-energy 16QAM (3GPP bit labelling)."""
    bits = np.asarray(bits)
    if bits.ndim != 1 or bits.size % 4:
        raise GridError(f"bit sequence length {bits.size} is not a multiple of 4")
    return _map16(bits.reshape(-1, 4))


def demap_hard_16qam(symbols: np.ndarray) -> np.ndarray:
    """Minimum-distance hard demapping, the inverse of :func:`map_bits_16qam`."""
    points, labels = qam16_constellation()
    nearest = np.argmin(np.abs(np.asarray(symbols).ravel()[:, None] - points[None, :]), axis=1)
    return labels[nearest].ravel()


def insert_pilots(grid: np.ndarray, pilots: np.ndarray, spec: GridSpec) -> np.ndarray:
    """Write the pilot table into a (frames*140, 72) or (140, 72) grid in place."""
    pilot_mask, _ = extract_masks(spec)
    n = spec.n_symbols
    for sf in range(spec.n_subframes_per_frame):
        grid[sf * n:(sf + 1) * n][pilot_mask] = pilots[sf].ravel()
    return grid


def frame_data_mask(spec: GridSpec) -> np.ndarray:
    """Data mask tiled over the whole frame, shape (140, 72)."""
    _, data = extract_masks(spec)
    return np.tile(data, (spec.n_subframes_per_frame, 1))


def frame_pilot_mask(spec: GridSpec) -> np.ndarray:
    pilot, _ = extract_masks(spec)
    return np.tile(pilot, (spec.n_subframes_per_frame, 1))


def build_tx_frame(spec: GridSpec, seed: int, pilot_seed: int = 0) -> TxFrame:
    """Random 16QAM payload plus pilots.

    ``seed`` drives the payload; ``pilot_seed`` is the deployment-wide pilot key,
    so frames with different payload seeds share identical pilots.
    """
    rng = np.random.default_rng(int(seed))
    bits = rng.integers(0, 2, size=spec.bits_per_frame, dtype=np.uint8)
    pilots = make_pilot_sequence(spec, pilot_seed)
    grid = np.zeros((spec.frame_symbols, spec.n_subcarriers), dtype=np.complex128)
    grid[frame_data_mask(spec)] = map_bits_16qam(bits)
    insert_pilots(grid, pilots, spec)
    return TxFrame(grid=grid, payload_bits=bits, pilots=pilots, spec=spec, rng_seed=int(seed))
