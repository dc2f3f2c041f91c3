"""Simulation, training and evaluation drivers built on the receiver, monitor and comparator."""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .. import comparator, monitor, neuralrx, nn, tradrx
from ..channel import ChannelConfig, add_awgn, apply_channel, make_tapset, realize_channel
from ..grid import GridSpec, build_tx_frame, make_pilot_sequence
from .config import AWGN, Condition, ExperimentConfig
from .dataset import RecordedDataset, Recording

log = logging.getLogger(__name__)

SPLIT_IDS = {"train": 0, "test": 1, "stream": 2}


class InvariantViolation(RuntimeError):
    """A computed result broke a documented range or consistency invariant."""


def grid_spec(cfg: ExperimentConfig) -> GridSpec:
    return GridSpec.pattern(cfg.pilot_pattern)


# --------------------------------------------------------------------------- simulation

def frame_seeds(seed: int, split: str, cond_idx: int, eb_idx: int, frame: int) -> tuple[int, int, int]:
    """Independent (payload, channel, noise) seeds for one frame, derived only from its coordinates."""
    ss = np.random.SeedSequence([int(seed), SPLIT_IDS[split], cond_idx, eb_idx, frame])
    return tuple(int(s) for s in ss.generate_state(3))


def simulate_frame(cond: Condition, ebn0_db: float, seeds: tuple[int, int, int], spec: GridSpec,
                   pilot_seed: int = 0):
    """Returns (tx frame, received grid, noise variance)."""
    payload_seed, chan_seed, noise_seed = seeds
    tx = build_tx_frame(spec, payload_seed, pilot_seed)
    if cond.profile == AWGN:
        y = tx.grid.copy()
    else:
        ccfg = ChannelConfig(cond.profile, cond.speed, cond.delay_spread_ns * 1e-9, ebn0_db, seed=chan_seed)
        h = realize_channel(make_tapset(cond.profile, ccfg.delay_spread), ccfg, 0, spec.frame_symbols,
                            spec.n_subcarriers)
        y = apply_channel(tx, h)
    y, var = add_awgn(y, ebn0_db, spec.bits_per_symbol, noise_seed)
    return tx, y, var


def simulate_recording(cond: Condition, ebn0_db: float, n_frames: int, seed: int, split: str,
                       cond_idx: int, eb_idx: int, spec: GridSpec, pilot_seed: int = 0,
                       first_frame: int = 0) -> Recording:
    bits, txg, rxg, seeds = [], [], [], []
    var = 0.0
    for f in range(first_frame, first_frame + n_frames):
        s = frame_seeds(seed, split, cond_idx, eb_idx, f)
        tx, y, var = simulate_frame(cond, ebn0_db, s, spec, pilot_seed)
        bits.append(tx.payload_bits)
        txg.append(tx.grid)
        rxg.append(y)
        seeds.append(s[0])
    return Recording(cond, float(ebn0_db), float(var), seeds, np.stack(bits), np.stack(txg), np.stack(rxg))


def _sim_task(args):
    return simulate_recording(*args)


def generate_dataset(cfg: ExperimentConfig, split: str = "train", workers: int = 1) -> RecordedDataset:
    """All (condition, Eb/N0) recordings of a split; identical for any ``workers``."""
    spec = grid_spec(cfg)
    tasks = [
        (cond, eb, cfg.frames(split), cfg.seed, split, ci, ei, spec, cfg.pilot_seed)
        for ci, cond in enumerate(cfg.conditions(split))
        for ei, eb in enumerate(cfg.ebn0.values)
    ]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            recs = list(pool.map(_sim_task, tasks))
    else:
        recs = [_sim_task(t) for t in tasks]
    return RecordedDataset(recs, cfg, split)


# --------------------------------------------------------------------------- results

RESULT_FIELDS = ("profile", "speed", "delay_spread_ns", "ebn0_db", "metric", "k", "value", "n")
BER_METRICS = ("BER_trad", "BER_neural")
RATE_METRICS = ("OOD_rate", "comparator_accuracy")


@dataclass
class ResultTable:
    rows: list[dict] = field(default_factory=list)

    @staticmethod
    def check(metric: str, value: float, where: str) -> None:
        if metric in BER_METRICS and not 0.0 <= value <= 0.5:
            raise InvariantViolation(f"{metric}={value} outside [0, 0.5] for {where}")
        if metric in RATE_METRICS and not 0.0 <= value <= 1.0:
            raise InvariantViolation(f"{metric}={value} outside [0, 1] for {where}")

    def add(self, cond: Condition, ebn0_db: float, metric: str, value: float, n: int = 0, k: int | None = None,
            label: str | None = None) -> None:
        value = float(value)
        self.check(metric, value, f"{cond.label} at {ebn0_db} dB")
        self.rows.append({
            "profile": label or cond.profile, "speed": cond.speed, "delay_spread_ns": cond.delay_spread_ns,
            "ebn0_db": float(ebn0_db), "metric": metric, "k": "" if k is None else int(k), "value": value, "n": int(n),
        })

    def extend(self, other: "ResultTable") -> "ResultTable":
        self.rows.extend(other.rows)
        return self

    def select(self, metric: str, **where) -> list[dict]:
        return [r for r in self.rows if r["metric"] == metric and all(r[k] == v for k, v in where.items())]

    def value(self, metric: str, **where) -> float:
        rows = self.select(metric, **where)
        if len(rows) != 1:
            raise KeyError(f"{len(rows)} rows match {metric} {where}")
        return rows[0]["value"]

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=RESULT_FIELDS)
            w.writeheader()
            w.writerows(self.rows)

    @classmethod
    def read_csv(cls, path: str | Path) -> "ResultTable":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        for r in rows:
            for key in ("speed", "delay_spread_ns", "ebn0_db", "value"):
                r[key] = float(r[key])
            r["n"] = int(r["n"])
            r["k"] = int(r["k"]) if r["k"] != "" else ""
            cls.check(r["metric"], r["value"], f"{path} ({r['profile']} at {r['ebn0_db']} dB)")
        return cls(rows)


# --------------------------------------------------------------------------- receivers

CSI_MODES = ("ls", "genie")


def decode_recording(rec: Recording, spec: GridSpec, pilots: np.ndarray, model: nn.Model | None = None,
                     store: bool = True, csi: str = "ls") -> tuple[np.ndarray, np.ndarray | None]:
    """Per-frame LLRs (n_frames, bits_per_frame) of the traditional and (optionally) neural receiver.

    ``csi="genie"`` hands TradRx the true channel instead of its LS estimate;
    it is only defined for AWGN recordings, where the channel is 1 by construction.
    """
    if csi not in CSI_MODES:
        raise ValueError(f"csi must be one of {CSI_MODES}")
    estimate = None
    if csi == "genie":
        if rec.condition.profile != AWGN:
            raise ValueError("genie CSI is only available for AWGN recordings")
        estimate = tradrx.ChannelEstimate(np.ones(rec.rx_grid.shape[1:], dtype=complex), None)
    trad = np.stack([tradrx.tradrx_decode(y, pilots, rec.noise_var, spec, estimate).llrs for y in rec.rx_grid])
    neural = None
    if model is not None:
        neural = np.stack([neuralrx.neuralrx_decode(model, y, pilots, spec).llrs for y in rec.rx_grid])
    if store:
        rec.llrs["trad"] = trad
        if neural is not None:
            rec.llrs["neural"] = neural
    return trad, neural


def bit_errors(llrs: np.ndarray, bits: np.ndarray) -> np.ndarray:
    """Errors per frame (hard decision: bit 1 iff LLR < 0)."""
    return ((np.asarray(llrs) < 0).astype(np.uint8) != bits).sum(axis=-1)


def sweep_ber(dataset: RecordedDataset, model: nn.Model | None = None, csi: str = "ls") -> ResultTable:
    """BER of each receiver per (condition, Eb/N0) over all frames of the recording."""
    spec = grid_spec(dataset.config)
    pilots = make_pilot_sequence(spec, dataset.config.pilot_seed)
    table = ResultTable()
    for rec in dataset:
        trad, neural = decode_recording(rec, spec, pilots, model, csi=csi)
        n_bits = rec.tx_bits.size
        table.add(rec.condition, rec.ebn0_db, "BER_trad", bit_errors(trad, rec.tx_bits).sum() / n_bits, n_bits)
        if neural is not None:
            table.add(rec.condition, rec.ebn0_db, "BER_neural", bit_errors(neural, rec.tx_bits).sum() / n_bits, n_bits)
    return table


def receiver_training_arrays(dataset: RecordedDataset) -> tuple[np.ndarray, np.ndarray]:
    """Subframe inputs (N, 6, 14, 72) and payload bits (N, bits_per_subframe)."""
    spec = grid_spec(dataset.config)
    pilots = make_pilot_sequence(spec, dataset.config.pilot_seed)
    xs, bs = [], []
    for rec in dataset:
        for y, bits in zip(rec.rx_grid, rec.tx_bits):
            xs.append(neuralrx.build_frame_inputs(y, pilots, spec))
            bs.append(bits.reshape(spec.n_subframes_per_frame, -1))
    return np.concatenate(xs), np.concatenate(bs)


def train_receiver(dataset: RecordedDataset, checkpoint: str | Path | None = None, on_epoch=None):
    """Build and train the compact receiver on every frame of ``dataset``."""
    cfg = dataset.config
    hp = cfg.receiver
    spec = grid_spec(cfg)
    model = neuralrx.build_receiver(spec, width=hp.width, n_blocks=hp.n_blocks, seed=cfg.seed)
    x, b = receiver_training_arrays(dataset)
    settings = nn.TrainSettings(epochs=hp.epochs, lr=hp.lr, momentum=hp.momentum, batch_size=hp.batch_size,
                                clip_norm=hp.clip_norm, seed=cfg.seed)
    result = neuralrx.train_neuralrx(model, x, b, settings, spec, checkpoint, on_epoch)
    return model, result


# --------------------------------------------------------------------------- comparator

@dataclass
class FrameOutcome:
    condition: Condition
    ebn0_db: float
    frame: int
    decision: comparator.ComparatorDecision
    ber_neural: float
    ber_trad: float

    @property
    def correct(self) -> bool:
        return comparator.decision_correct(self.decision, self.ber_neural, self.ber_trad)


def comparator_outcomes(dataset: RecordedDataset, model: nn.Model) -> list[FrameOutcome]:
    """One comparator decision per frame, scored against true bits."""
    spec = grid_spec(dataset.config)
    pilots = make_pilot_sequence(spec, dataset.config.pilot_seed)
    out = []
    for rec in dataset:
        trad = rec.llrs.get("trad")
        neural = rec.llrs.get("neural")
        if trad is None or neural is None:
            trad, neural = decode_recording(rec, spec, pilots, model)
        et, en = bit_errors(trad, rec.tx_bits), bit_errors(neural, rec.tx_bits)
        n = rec.tx_bits.shape[1]
        for f in range(rec.n_frames):
            d = comparator.compare(neural[f], trad[f])
            out.append(FrameOutcome(rec.condition, rec.ebn0_db, f, d, en[f] / n, et[f] / n))
    return out


def outcomes_table(outcomes: Sequence[FrameOutcome]) -> ResultTable:
    table = ResultTable()
    groups: dict[tuple, list[FrameOutcome]] = {}
    for o in outcomes:
        groups.setdefault((o.condition, o.ebn0_db), []).append(o)
    for (cond, eb), items in groups.items():
        acc = comparator.comparator_accuracy([o.decision for o in items], [(o.ber_neural, o.ber_trad) for o in items])
        table.add(cond, eb, "comparator_accuracy", acc, len(items))
    return table


def comparator_experiment(dataset: RecordedDataset, model: nn.Model) -> tuple[ResultTable, list[FrameOutcome]]:
    outcomes = comparator_outcomes(dataset, model)
    return outcomes_table(outcomes), outcomes


def write_outcome_log(path: str | Path, outcomes: Sequence[FrameOutcome]) -> None:
    comparator.write_decision_log(path, [o.decision for o in outcomes],
                                  [(o.ber_neural, o.ber_trad) for o in outcomes])


# --------------------------------------------------------------------------- monitor

def monitor_inputs(rx_frames: np.ndarray, spec: GridSpec) -> np.ndarray:
    """Non-overlapping 3-frame windows of a frame stack, shape (n_windows, 2, 90, 36)."""
    n = len(rx_frames) // monitor.N_FRAMES
    return np.stack([monitor.build_monitor_input(rx_frames[i * 3:i * 3 + 3], spec).tensor for i in range(n)]) \
        if n else np.zeros((0, 2, 3 * spec.n_subframes_per_frame * 3, 36), dtype=np.float32)


def monitor_class(cond: Condition, key: str) -> str:
    return {"profile": cond.profile, "speed": f"{cond.speed:g}mps", "delay_spread": f"{cond.delay_spread_ns:g}ns",
            "condition": cond.label}[key]


def monitor_config(cfg: ExperimentConfig) -> monitor.MonitorConfig:
    m = cfg.monitor
    return monitor.MonitorConfig(
        conv_channels=m.conv_channels, residual_channels=m.residual_channels, feature_dim=m.feature_dim,
        projection_dims=tuple(m.projection_dims), dropout=m.dropout, margin=m.margin, k=cfg.k, lam=cfg.lam,
    )


def monitor_training_classes(dataset: RecordedDataset) -> dict[str, np.ndarray]:
    spec = grid_spec(dataset.config)
    classes: dict[str, list[np.ndarray]] = {}
    for rec in dataset:
        name = monitor_class(rec.condition, dataset.config.monitor_classes)
        classes.setdefault(name, []).append(monitor_inputs(rec.rx_grid, spec))
    return {k: np.concatenate(v) for k, v in classes.items()}


def train_monitor(dataset: RecordedDataset, on_epoch=None) -> monitor.MonitorBundle:
    cfg = dataset.config
    m = cfg.monitor
    settings = nn.TrainSettings(epochs=m.epochs, lr=m.lr, momentum=m.momentum, batch_size=m.batch_size,
                                clip_norm=m.clip_norm, seed=cfg.seed)
    return monitor.train_monitor(monitor_training_classes(dataset), settings, monitor_config(cfg), on_epoch=on_epoch)


def characterize(dataset: RecordedDataset, encoder: nn.Model) -> monitor.OodModel:
    """Re-fit clusters and the neighbor store from a dataset with a trained encoder.

    The synthetic noise class is rebuilt the same way training builds it.
    """
    classes = monitor.with_noise_class(monitor_training_classes(dataset),
                                       np.random.default_rng([dataset.config.seed, 1]))
    names = list(classes)
    feats = np.concatenate([monitor.encode(encoder, classes[n]) for n in names])
    labels = np.repeat(names, [len(classes[n]) for n in names])
    return monitor.OodModel.fit(feats, labels, k=dataset.config.k, lam=dataset.config.lam, class_order=names)


def ood_rate(ood: monitor.OodModel, features: np.ndarray, k: int | None = None) -> float:
    if len(features) == 0:
        return 0.0
    return float(monitor.classify_batch(ood, features, k).mean())


def sweep_ood(dataset: RecordedDataset, encoder: nn.Model, ood: monitor.OodModel,
              ks: Iterable[int] = (5,)) -> ResultTable:
    """Fraction of monitor windows classified OOD per (condition, Eb/N0, k)."""
    spec = grid_spec(dataset.config)
    table = ResultTable()
    for rec in dataset:
        feats = monitor.encode(encoder, monitor_inputs(rec.rx_grid, spec))
        for k in ks:
            table.add(rec.condition, rec.ebn0_db, "OOD_rate", ood_rate(ood, feats, k), len(feats), k=k)
    return table


# --------------------------------------------------------------------------- monitored receiver loop

@dataclass
class StreamFrame:
    """What the deployed receiver sees: the received grid and the noise estimate, never the bits."""

    rx_grid: np.ndarray
    noise_var: float


@dataclass
class LoopResult:
    events: list[dict]
    llrs_neural: list[np.ndarray]
    llrs_trad: dict[int, np.ndarray]

    @property
    def activations(self) -> list[dict]:
        return [e for e in self.events if e["event"] == "tradrx_activated"]

    @property
    def retrain_flags(self) -> list[dict]:
        return [e for e in self.events if e["event"] == "retrain"]

    def first_ood_window(self) -> int | None:
        for e in self.events:
            if e["event"] == "monitor" and e["decision"] == monitor.Decision.OOD.value:
                return e["window"]
        return None

    def write_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.events, indent=1))


def run_monitored_loop(stream: Sequence[StreamFrame], encoder: nn.Model, ood: monitor.OodModel, model: nn.Model,
                spec: GridSpec | None = None, pilot_seed: int = 0, window: int = 50, ood_threshold: int = 1,
                k: int | None = None) -> LoopResult:
    """Monitor every 3-frame window; on a detected change run TradRx alongside for ``window`` frames.

    TradRx starts at the first frame of the window that completed the trigger.
    Each TradRx frame gets a comparator event; when the parallel run ends,
    a retrain event carries the comparator decision over all of its frames.
    """
    spec = spec or GridSpec()
    pilots = make_pilot_sequence(spec, pilot_seed)
    events: list[dict] = []
    neural = [neuralrx.neuralrx_decode(model, f.rx_grid, pilots, spec).llrs for f in stream]
    trad: dict[int, np.ndarray] = {}
    active_until = -1
    run_start = None
    consecutive = 0

    def close_run(end: int):
        frames = range(run_start, end)
        d = comparator.compare(np.concatenate([neural[i] for i in frames]), np.concatenate([trad[i] for i in frames]))
        events.append({"event": "retrain", "frame": end - 1, "start": run_start, "needed": d.needed,
                       "u_neural": d.u_neural, "u_trad": d.u_trad, "decision": d.retraining.value})

    n_windows = len(stream) // monitor.N_FRAMES
    for w in range(n_windows + 1):
        first = w * monitor.N_FRAMES
        if w < n_windows:
            inp = monitor.build_monitor_input([f.rx_grid for f in stream[first:first + monitor.N_FRAMES]], spec)
            feats = monitor.encode(encoder, inp)
            verdict = monitor.classify_ood(ood, feats, k)
            consecutive = consecutive + 1 if verdict.is_ood else 0
            events.append({"event": "monitor", "window": w, "frames": [first, first + 2],
                           "decision": verdict.decision.value})
            if consecutive >= ood_threshold and active_until < first:
                run_start, active_until = first, min(first + window, len(stream)) - 1
                events.append({"event": "tradrx_activated", "frame": first, "until": active_until, "window": w})
        span_end = min(first + monitor.N_FRAMES, len(stream)) if w < n_windows else len(stream)
        for i in range(first, span_end):
            if run_start is not None and run_start <= i <= active_until:
                trad[i] = tradrx.tradrx_decode(stream[i].rx_grid, pilots, stream[i].noise_var, spec).llrs
                d = comparator.compare(neural[i], trad[i])
                events.append({"event": "comparator", "frame": i, "u_neural": d.u_neural, "u_trad": d.u_trad,
                               "decision": d.retraining.value})
                if i == active_until:
                    close_run(i + 1)
                    run_start = None
    if run_start is not None:
        close_run(max(trad) + 1)
    return LoopResult(events, neural, trad)


def stream_from_recordings(recs: Iterable[Recording]) -> list[StreamFrame]:
    return [StreamFrame(y, r.noise_var) for r in recs for y in r.rx_grid]


def switching_stream(before: Condition, after: Condition, ebn0_db: float, n_before: int, n_after: int,
                     spec: GridSpec, seed: int = 0, pilot_seed: int = 0) -> tuple[list[StreamFrame], np.ndarray]:
    """A stream that changes channel generator at frame ``n_before``; also returns the true bits."""
    a = simulate_recording(before, ebn0_db, n_before, seed, "stream", 0, 0, spec, pilot_seed)
    b = simulate_recording(after, ebn0_db, n_after, seed, "stream", 1, 0, spec, pilot_seed, first_frame=n_before)
    return stream_from_recordings([a, b]), np.concatenate([a.tx_bits, b.tx_bits])
