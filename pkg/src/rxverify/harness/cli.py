"""Command-line entry point: ``rxverify <subcommand> ...``.

Exit codes: 0 success, 1 bad input or unreadable files, 2 usage error,
3 training diverged, 4 a result broke an invariant.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np

from .. import monitor, neuralrx, nn
from ..comparator import ComparatorDecision, Retraining, write_decision_log
from .config import ConfigError, Condition, EbN0Sweep, ExperimentConfig, load_config
from .dataset import DatasetError, RecordedDataset
from . import experiments as E

log = logging.getLogger("rxverify")

EXIT_ERROR, EXIT_USAGE, EXIT_DIVERGED, EXIT_INVARIANT = 1, 2, 3, 4

# flag -> field of the nested receiver / monitor hyperparameter block
RECEIVER_FLAGS = {"rx_width": "width", "rx_blocks": "n_blocks", "rx_epochs": "epochs", "rx_lr": "lr",
                  "rx_momentum": "momentum", "rx_batch_size": "batch_size", "rx_clip_norm": "clip_norm"}
MONITOR_FLAGS = {"mon_epochs": "epochs", "mon_lr": "lr", "mon_momentum": "momentum", "mon_batch_size": "batch_size",
                 "mon_feature_dim": "feature_dim", "mon_margin": "margin", "mon_dropout": "dropout",
                 "mon_clip_norm": "clip_norm"}
TOP_FLAGS = ("train_frames", "test_frames", "seed", "pilot_seed", "pilot_pattern", "k", "lam", "window",
             "ood_threshold", "monitor_classes")


def _condition(text: str) -> Condition:
    try:
        profile, speed, ds = text.split(",")
        return Condition(profile.strip(), float(speed), float(ds))
    except (ValueError, ConfigError) as exc:
        raise argparse.ArgumentTypeError(f"expected PROFILE,SPEED_MPS,DELAY_SPREAD_NS, got {text!r} ({exc})")


def config_flags() -> argparse.ArgumentParser:
    """Flags mirroring :class:`ExperimentConfig`; unset flags leave the loaded config untouched."""
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("experiment configuration (override the config file)")
    g.add_argument("--config", type=Path, help="JSON experiment config")
    g.add_argument("--train-condition", type=_condition, action="append", metavar="P,V,DS",
                   help="training condition profile,speed m/s,delay spread ns (repeatable)")
    g.add_argument("--test-condition", type=_condition, action="append", metavar="P,V,DS",
                   help="test condition (repeatable)")
    g.add_argument("--ebn0", type=float, nargs=3, metavar=("START", "STOP", "STEP"), help="Eb/N0 sweep in dB")
    g.add_argument("--train-frames", type=int)
    g.add_argument("--test-frames", type=int)
    g.add_argument("--seed", type=int)
    g.add_argument("--pilot-seed", type=int)
    g.add_argument("--pilot-pattern")
    g.add_argument("--k", type=int, help="neighbor count for OOD voting")
    g.add_argument("--lam", type=float, help="cluster radius quantile")
    g.add_argument("--window", type=int, help="frames TradRx runs alongside after a trigger")
    g.add_argument("--ood-threshold", type=int, help="consecutive OOD windows that trigger TradRx")
    g.add_argument("--monitor-classes", choices=("profile", "speed", "delay_spread", "condition"))
    for flag in RECEIVER_FLAGS:
        g.add_argument("--" + flag.replace("_", "-"), type=int if flag in ("rx_width", "rx_blocks", "rx_epochs",
                                                                             "rx_batch_size") else float)
    for flag in MONITOR_FLAGS:
        g.add_argument("--" + flag.replace("_", "-"), type=int if flag in ("mon_epochs", "mon_batch_size",
                                                                             "mon_feature_dim") else float)
    return p


def apply_overrides(cfg: ExperimentConfig, args: argparse.Namespace) -> ExperimentConfig:
    changes = {name: getattr(args, name) for name in TOP_FLAGS if getattr(args, name, None) is not None}
    if getattr(args, "train_condition", None):
        changes["train_conditions"] = args.train_condition
    if getattr(args, "test_condition", None):
        changes["test_conditions"] = args.test_condition
    if getattr(args, "ebn0", None):
        changes["ebn0"] = EbN0Sweep(*args.ebn0)
    rx = {f: getattr(args, a) for a, f in RECEIVER_FLAGS.items() if getattr(args, a, None) is not None}
    mon = {f: getattr(args, a) for a, f in MONITOR_FLAGS.items() if getattr(args, a, None) is not None}
    if rx:
        changes["receiver"] = dataclasses.replace(cfg.receiver, **rx)
    if mon:
        changes["monitor"] = dataclasses.replace(cfg.monitor, **mon)
    return dataclasses.replace(cfg, **changes) if changes else cfg


def _dataset(args) -> RecordedDataset:
    ds = RecordedDataset.load(args.data)
    ds.config = apply_overrides(ds.config, args)
    return ds


def _epoch_logger(kind: str):
    def report(epoch: int, loss: float):
        log.info("%s epoch %d loss %.5f", kind, epoch + 1, loss)
    return report


# --------------------------------------------------------------------------- subcommands

def cmd_generate(args) -> int:
    cfg = apply_overrides(load_config(args.config), args)
    splits = ("train", "test") if args.split == "both" else (args.split,)
    for split in splits:
        ds = E.generate_dataset(cfg, split, workers=args.workers)
        out = args.out / split if len(splits) > 1 else args.out
        ds.save(out)
        log.info("wrote %d %s frames to %s", ds.n_frames, split, out)
    return 0


def cmd_train_rx(args) -> int:
    ds = _dataset(args)
    _, result = E.train_receiver(ds, args.out, _epoch_logger("receiver"))
    final = result.history[-1] if result.history else float("nan")
    log.info("receiver checkpoint %s (final loss %.5f)", args.out, final)
    return 0


def cmd_train_monitor(args) -> int:
    ds = _dataset(args)
    bundle = E.train_monitor(ds, _epoch_logger("monitor"))
    monitor.save_encoder(args.encoder, bundle.encoder, bundle.config, {"history": bundle.history})
    bundle.ood.save(args.ood)
    log.info("encoder %s, OOD model %s with classes %s", args.encoder, args.ood, bundle.ood.class_names)
    return 0


def cmd_characterize(args) -> int:
    ds = _dataset(args)
    encoder, _ = monitor.load_encoder(args.encoder)
    ood = E.characterize(ds, encoder)
    ood.save(args.out)
    for c in ood.clusters:
        log.info("cluster %s: population %d radius %.5f", c.class_id, c.population, c.radius)
    return 0


def cmd_sweep_ber(args) -> int:
    ds = _dataset(args)
    model = neuralrx.load_receiver(args.model, E.grid_spec(ds.config))[0] if args.model else None
    table = E.sweep_ber(ds, model, args.csi)
    table.write_csv(args.out)
    log.info("%d rows written to %s", len(table.rows), args.out)
    return 0


def cmd_sweep_ood(args) -> int:
    ds = _dataset(args)
    encoder, _ = monitor.load_encoder(args.encoder)
    ood = monitor.OodModel.load(args.ood)
    table = E.sweep_ood(ds, encoder, ood, args.ks or [ds.config.k])
    table.write_csv(args.out)
    log.info("%d rows written to %s", len(table.rows), args.out)
    return 0


def cmd_compare(args) -> int:
    ds = _dataset(args)
    model, _ = neuralrx.load_receiver(args.model, E.grid_spec(ds.config))
    table, outcomes = E.comparator_experiment(ds, model)
    table.write_csv(args.out)
    if args.decision_log:
        E.write_outcome_log(args.decision_log, outcomes)
    log.info("%d frames compared, results in %s", len(outcomes), args.out)
    return 0


def cmd_run_loop(args) -> int:
    ds = _dataset(args)
    cfg = ds.config
    spec = E.grid_spec(cfg)
    model, _ = neuralrx.load_receiver(args.model, spec)
    encoder, _ = monitor.load_encoder(args.encoder)
    ood = monitor.OodModel.load(args.ood)
    stream = E.stream_from_recordings(ds.recordings)
    result = E.run_monitored_loop(stream, encoder, ood, model, spec, cfg.pilot_seed, cfg.window, cfg.ood_threshold,
                                  cfg.k)
    result.write_json(args.out)
    if args.decision_log:
        comp = [e for e in result.events if e["event"] == "comparator"]
        decisions = [ComparatorDecision(e["u_neural"], e["u_trad"], Retraining(e["decision"])) for e in comp]
        bits = np.concatenate([r.tx_bits for r in ds.recordings])
        # scoring only: true bits never feed back into the loop above
        bers = [(E.bit_errors(result.llrs_neural[e["frame"]], bits[e["frame"]]) / bits.shape[1],
                 E.bit_errors(result.llrs_trad[e["frame"]], bits[e["frame"]]) / bits.shape[1]) for e in comp]
        write_decision_log(args.decision_log, decisions, [(float(a), float(b)) for a, b in bers],
                           start_frame=comp[0]["frame"] if comp else 0)
    log.info("%d frames, %d TradRx activations, %d retrain flags (%d needed); events in %s", len(stream),
             len(result.activations), len(result.retrain_flags),
             sum(e["needed"] for e in result.retrain_flags), args.out)
    return 0


def cmd_report(args) -> int:
    table = E.ResultTable()
    for path in args.results:
        table.extend(E.ResultTable.read_csv(path))
    lines = report_lines(table)
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    return 0


def report_lines(table: E.ResultTable) -> list[str]:
    """One block per metric: rows are conditions (and k), columns Eb/N0."""
    lines = []
    metrics = list(dict.fromkeys(r["metric"] for r in table.rows))
    for metric in metrics:
        rows = table.select(metric)
        ebn0 = sorted({r["ebn0_db"] for r in rows})
        def key_of(r):
            return r["profile"], r["speed"], r["delay_spread_ns"], r["k"]
        keys = list(dict.fromkeys(key_of(r) for r in rows))
        lines.append(f"## {metric}")
        lines.append("| condition | k | " + " | ".join(f"{e:g} dB" for e in ebn0) + " |")
        lines.append("|---|---|" + "---|" * len(ebn0))
        for key in keys:
            vals = {r["ebn0_db"]: r["value"] for r in rows if key_of(r) == key}
            cells = [f"{vals[e]:.4g}" if e in vals else "" for e in ebn0]
            lines.append(f"| {key[0]}/{key[1]:g}mps/{key[2]:g}ns | {key[3]} | " + " | ".join(cells) + " |")
        lines.append("")
    return lines


# --------------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = config_flags()
    parser = argparse.ArgumentParser(prog="rxverify", description="Neural receiver verification experiments.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, parents=[common], help=help_text, description=help_text)
        p.set_defaults(func=func)
        return p

    p = add("generate", cmd_generate, "simulate and record a dataset")
    p.add_argument("--split", choices=("train", "test", "both"), default="train")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--workers", type=int, default=1)

    p = add("train-rx", cmd_train_rx, "train the neural receiver on a recorded dataset")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="checkpoint path")

    p = add("train-monitor", cmd_train_monitor, "train the monitor encoder and fit the OOD model")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--encoder", type=Path, required=True, help="encoder checkpoint to write")
    p.add_argument("--ood", type=Path, required=True, help="OOD model to write")

    p = add("characterize", cmd_characterize, "re-fit clusters and the neighbor store with a trained encoder")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--encoder", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)

    p = add("sweep-ber", cmd_sweep_ber, "BER per condition and Eb/N0")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--model", type=Path, help="neural receiver checkpoint (TradRx only when omitted)")
    p.add_argument("--csi", choices=E.CSI_MODES, default="ls", help="TradRx channel knowledge (genie: AWGN only)")
    p.add_argument("--out", type=Path, required=True)

    p = add("sweep-ood", cmd_sweep_ood, "OOD detection rate per condition, Eb/N0 and k")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--encoder", type=Path, required=True)
    p.add_argument("--ood", type=Path, required=True)
    p.add_argument("--ks", type=int, nargs="+")
    p.add_argument("--out", type=Path, required=True)

    p = add("compare", cmd_compare, "per-frame comparator decisions and accuracy")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--decision-log", type=Path)

    p = add("run-veritas", cmd_run_loop, "run the monitored receiver loop over a recorded stream")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--encoder", type=Path, required=True)
    p.add_argument("--ood", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="JSON event log")
    p.add_argument("--decision-log", type=Path, help="CSV of comparator decisions with measured BERs")

    p = sub.add_parser("report", help="summarise result CSVs as markdown tables")
    p.add_argument("results", type=Path, nargs="+")
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose > 1 else logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except nn.TrainingDiverged as exc:
        log.error("training diverged: %s", exc)
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except E.InvariantViolation as exc:
        print(f"error: invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (ConfigError, DatasetError, monitor.MonitorError, nn.CheckpointError, nn.ShapeError,
            OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
