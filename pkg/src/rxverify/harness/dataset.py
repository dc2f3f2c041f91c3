"""Recorded datasets in a SigMF-style layout.

Each (condition, Eb/N0) recording stores one metadata/data file pair per
processing stage::

    <dir>/dataset.json
    <dir>/<key>.<stage>.sigmf-meta     JSON: global / captures / annotations
    <dir>/<key>.<stage>.sigmf-data     raw little-endian samples

Grids are ``cf32_le`` (interleaved re/im float32), LLR stages ``rf32_le``
and bit stages ``ru8``. Extension fields live under the ``rxverify:``
namespace. In-memory grids are complex64 and LLRs float32, so a save/load
round trip is bit-exact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import Condition, ExperimentConfig

SIGMF_VERSION = "1.0.0"
DATATYPES = {"cf32_le": np.dtype("<c8"), "rf32_le": np.dtype("<f4"), "ru8": np.dtype("u1")}
GRID_STAGES = ("tx_grid", "rx_grid")
BIT_STAGES = ("tx_bits",)


class DatasetError(IOError):
    pass


def _stage_dtype(stage: str) -> str:
    if stage in GRID_STAGES:
        return "cf32_le"
    if stage in BIT_STAGES:
        return "ru8"
    return "rf32_le"


@dataclass
class Recording:
    """Frames of one condition at one Eb/N0, as stacked arrays with a leading frame axis."""

    condition: Condition
    ebn0_db: float
    noise_var: float
    frame_seeds: list[int]
    tx_bits: np.ndarray
    tx_grid: np.ndarray
    rx_grid: np.ndarray
    llrs: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self.tx_bits = np.asarray(self.tx_bits, dtype=np.uint8)
        self.tx_grid = np.asarray(self.tx_grid, dtype=np.complex64)
        self.rx_grid = np.asarray(self.rx_grid, dtype=np.complex64)
        self.llrs = {k: np.asarray(v, dtype=np.float32) for k, v in self.llrs.items()}
        n = len(self.frame_seeds)
        if not (len(self.tx_bits) == len(self.tx_grid) == len(self.rx_grid) == n):
            raise DatasetError("stage arrays disagree on the number of frames")

    @property
    def n_frames(self) -> int:
        return len(self.frame_seeds)

    @property
    def key(self) -> str:
        c = self.condition
        return f"{c.profile}_v{c.speed:g}_ds{c.delay_spread_ns:g}_eb{self.ebn0_db:g}"

    def stages(self) -> dict[str, np.ndarray]:
        out = {"tx_bits": self.tx_bits, "tx_grid": self.tx_grid, "rx_grid": self.rx_grid}
        out.update({f"llr_{k}": v for k, v in self.llrs.items()})
        return out


@dataclass
class RecordedDataset:
    recordings: list[Recording]
    config: ExperimentConfig
    split: str = "test"

    @property
    def n_frames(self) -> int:
        return sum(r.n_frames for r in self.recordings)

    def __iter__(self):
        return iter(self.recordings)

    def save(self, root: str | Path) -> Path:
        root = Path(root)
        try:
            root.mkdir(parents=True, exist_ok=True)
            index = {"split": self.split, "config": self.config.to_dict(), "recordings": []}
            for rec in self.recordings:
                stages = rec.stages()
                for stage, arr in stages.items():
                    write_stage(root / f"{rec.key}.{stage}", stage, arr, rec)
                index["recordings"].append({"key": rec.key, "stages": list(stages)})
            (root / "dataset.json").write_text(json.dumps(index, indent=2))
        except OSError as exc:
            raise DatasetError(f"cannot write dataset to {root}: {exc}") from exc
        return root

    @classmethod
    def load(cls, root: str | Path) -> "RecordedDataset":
        root = Path(root)
        try:
            index = json.loads((root / "dataset.json").read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise DatasetError(f"cannot read dataset index in {root}: {exc}") from exc
        cfg = ExperimentConfig.from_dict(index["config"])
        recs = []
        for entry in index["recordings"]:
            arrays, meta = {}, None
            for stage in entry["stages"]:
                arrays[stage], meta = read_stage(root / f"{entry['key']}.{stage}")
            g = meta["global"]
            recs.append(Recording(
                condition=Condition.parse(g["rxverify:condition"]),
                ebn0_db=g["rxverify:ebn0_db"],
                noise_var=g["rxverify:noise_var"],
                frame_seeds=g["rxverify:frame_seeds"],
                tx_bits=arrays.pop("tx_bits"),
                tx_grid=arrays.pop("tx_grid"),
                rx_grid=arrays.pop("rx_grid"),
                llrs={k.removeprefix("llr_"): v for k, v in arrays.items()},
            ))
        return cls(recs, cfg, index.get("split", "test"))


def write_stage(base: Path, stage: str, array: np.ndarray, rec: Recording) -> None:
    datatype = _stage_dtype(stage)
    arr = np.ascontiguousarray(array, dtype=DATATYPES[datatype])
    per_frame = int(np.prod(arr.shape[1:], dtype=np.int64))
    meta = {
        "global": {
            "core:datatype": datatype,
            "core:version": SIGMF_VERSION,
            "core:num_channels": 1,
            "core:description": f"{stage} for {rec.condition.label} at {rec.ebn0_db:g} dB",
            "rxverify:stage": stage,
            "rxverify:shape": list(arr.shape),
            "rxverify:sample_count": int(arr.size),
            "rxverify:condition": rec.condition.as_list(),
            "rxverify:ebn0_db": rec.ebn0_db,
            "rxverify:noise_var": rec.noise_var,
            "rxverify:frame_seeds": [int(s) for s in rec.frame_seeds],
        },
        "captures": [{"core:sample_start": i * per_frame, "rxverify:frame": i} for i in range(arr.shape[0])],
        "annotations": [],
    }
    base.with_name(base.name + ".sigmf-data").write_bytes(arr.tobytes())
    base.with_name(base.name + ".sigmf-meta").write_text(json.dumps(meta, indent=1))


def read_stage(base: Path) -> tuple[np.ndarray, dict]:
    try:
        meta = json.loads(base.with_name(base.name + ".sigmf-meta").read_text())
        raw = base.with_name(base.name + ".sigmf-data").read_bytes()
    except (OSError, json.JSONDecodeError) as exc:
        raise DatasetError(f"cannot read stage {base}: {exc}") from exc
    g = meta["global"]
    dtype = DATATYPES[g["core:datatype"]]
    count = len(raw) // dtype.itemsize
    if len(raw) % dtype.itemsize or count != g["rxverify:sample_count"]:
        raise DatasetError(f"{base}: metadata declares {g['rxverify:sample_count']} samples, file holds {count}")
    return np.frombuffer(raw, dtype=dtype).reshape(g["rxverify:shape"]).copy(), meta
