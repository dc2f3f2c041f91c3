"""Configuration, dataset persistence, experiment drivers and the command line."""

from .config import AWGN, Condition, ConfigError, EbN0Sweep, ExperimentConfig, load_config, save_config
from .dataset import DatasetError, RecordedDataset, Recording
from .experiments import (
    InvariantViolation,
    ResultTable,
    StreamFrame,
    LoopResult,
    comparator_experiment,
    generate_dataset,
    run_monitored_loop,
    sweep_ber,
    sweep_ood,
    switching_stream,
    train_monitor,
    train_receiver,
)

__all__ = [
    "AWGN", "Condition", "ConfigError", "DatasetError", "EbN0Sweep", "ExperimentConfig", "InvariantViolation",
    "LoopResult", "RecordedDataset", "Recording", "ResultTable", "StreamFrame", "comparator_experiment",
    "generate_dataset", "load_config", "run_monitored_loop", "save_config", "sweep_ber", "sweep_ood",
    "switching_stream", "train_monitor", "train_receiver",
]
