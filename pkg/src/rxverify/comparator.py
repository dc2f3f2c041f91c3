"""Label-free comparison of two receivers from their bit probabilities.

Each LLR becomes a probability ``P = 1 / (1 + exp(LLR))`` of the bit being 1.
Probabilities are counted into ten bins ``[0, .1), ..., [.8, .9), [.9, 1]``;
bins 2..9 form the uncertainty region whose count ``U`` is compared between
the neural and the traditional receiver.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.special import expit

from . import kernels


class ComparatorError(ValueError):
    pass


class Retraining(str, enum.Enum):
    NEEDED = "needed"
    NOT_NEEDED = "not_needed"


@dataclass
class ComparatorDecision:
    u_neural: int
    u_trad: int
    retraining: Retraining

    @property
    def needed(self) -> bool:
        return self.retraining is Retraining.NEEDED


def _llrs(block) -> np.ndarray:
    return np.asarray(getattr(block, "llrs", block), dtype=np.float64).ravel()


def llr_to_prob(block) -> np.ndarray:
    """Probability that each bit is 1; evaluated in float64, saturating cleanly."""
    llr = _llrs(block)
    if not np.all(np.isfinite(llr)):
        raise ComparatorError("LLRs must be finite")
    p = expit(-llr)
    # tiny negative LLRs round to exactly 0.5; keep them on the bit-1 side
    return np.where((llr < 0) & (p <= 0.5), np.nextafter(0.5, 1.0), p)


def hard_decision(probs: np.ndarray) -> np.ndarray:
    """Bit 1 iff P > 0.5 (P = 0.5 decodes to 0)."""
    return (np.asarray(probs) > 0.5).astype(np.uint8)


def bin_probabilities(probs) -> np.ndarray:
    """Counts per bin, index 0 is bin 1."""
    probs = np.asarray(probs, dtype=np.float64).ravel()
    if probs.size and (probs.min() < 0.0 or probs.max() > 1.0 or np.isnan(probs).any()):
        raise ComparatorError("probabilities must lie in [0, 1]")
    return kernels.bin_counts(probs)


def uncertainty_count(bins: np.ndarray) -> int:
    bins = np.asarray(bins)
    if bins.shape != (10,):
        raise ComparatorError("expected 10 histogram bins")
    return int(bins[1:9].sum())


def compare(neural, trad) -> ComparatorDecision:
    """Retraining is needed iff the neural receiver has more uncertain bits (ties favour it)."""
    ln, lt = _llrs(neural), _llrs(trad)
    if ln.size != lt.size:
        raise ComparatorError(f"block lengths differ: {ln.size} vs {lt.size}")
    u_n = uncertainty_count(bin_probabilities(llr_to_prob(ln)))
    u_t = uncertainty_count(bin_probabilities(llr_to_prob(lt)))
    return ComparatorDecision(u_n, u_t, Retraining.NOT_NEEDED if u_n <= u_t else Retraining.NEEDED)


def compare_frames(neural, trad, bits_per_frame: int = 36_000, window: int = 1) -> list[ComparatorDecision]:
    """One decision per group of ``window`` consecutive frames."""
    ln, lt = _llrs(neural), _llrs(trad)
    if ln.size != lt.size:
        raise ComparatorError(f"block lengths differ: {ln.size} vs {lt.size}")
    step = bits_per_frame * window
    if ln.size % bits_per_frame:
        raise ComparatorError("block length is not a whole number of frames")
    return [compare(ln[i:i + step], lt[i:i + step]) for i in range(0, ln.size, step)]


def decision_correct(decision: ComparatorDecision | Retraining, ber_neural: float, ber_trad: float) -> bool:
    needed = decision.needed if isinstance(decision, ComparatorDecision) else decision is Retraining.NEEDED
    return (ber_neural > ber_trad) if needed else (ber_neural <= ber_trad)


def comparator_accuracy(decisions: Sequence, ber_pairs: Sequence[tuple[float, float]]) -> float:
    """Fraction of frames whose decision agrees with the measured BER ordering."""
    if len(decisions) != len(ber_pairs):
        raise ComparatorError(f"{len(decisions)} decisions for {len(ber_pairs)} BER pairs")
    if not decisions:
        raise ComparatorError("no decisions to score")
    correct = sum(decision_correct(d, bn, bt) for d, (bn, bt) in zip(decisions, ber_pairs))
    return correct / len(decisions)


DECISION_LOG_FIELDS = ("frame", "u_neural", "u_trad", "decision", "ber_neural", "ber_trad")


def write_decision_log(path, decisions: Iterable[ComparatorDecision],
                       bers: Sequence[tuple[float, float]] | None = None, start_frame: int = 0) -> None:
    """CSV with one row per frame; BER columns are left empty when unknown."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(DECISION_LOG_FIELDS)
        for i, d in enumerate(decisions):
            bn, bt = bers[i] if bers is not None else ("", "")
            w.writerow([start_frame + i, d.u_neural, d.u_trad, d.retraining.value, bn, bt])


def read_decision_log(path) -> list[dict]:
    rows = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            rows.append({
                "frame": int(row["frame"]),
                "u_neural": int(row["u_neural"]),
                "u_trad": int(row["u_trad"]),
                "decision": Retraining(row["decision"]),
                "ber_neural": float(row["ber_neural"]) if row["ber_neural"] else None,
                "ber_trad": float(row["ber_trad"]) if row["ber_trad"] else None,
            })
    return rows
