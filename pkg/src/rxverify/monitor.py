"""Environment-change monitor: pilot tensors, triplet-trained encoder, cluster/KNN OOD vote.

Pilots from three consecutive frames form a (2, 90, 36) tensor. An encoder
trained with triplet loss maps it to a max-abs normalised feature vector.
Each in-distribution class is summarised by its mean (center) and a
quantile radius. A test feature is in-distribution if any of its ``k``
nearest stored features votes for it: the test point must be no farther
from that neighbor's class center than the neighbor itself, and no farther
than the class radius.
"""

from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import kernels, nn
from .grid import GridSpec
from .nn.checkpoint import read_blob, take_f32, write_blob

N_FRAMES = 3
NOISE_CLASS = "uniform_noise"
OOD_MAGIC = b"RXOD"


class MonitorError(ValueError):
    pass


class Decision(str, enum.Enum):
    ID = "ID"
    OOD = "OOD"


@dataclass
class MonitorInput:
    """Real tensor (2, rows, pilot subcarriers): re/im planes of the received pilots."""

    tensor: np.ndarray


def build_monitor_input(frames: Sequence[np.ndarray], spec: GridSpec | None = None) -> MonitorInput:
    """Stack the received pilot REs of three consecutive (140, 72) frames.

    Rows run frame by frame, then subframe, then pilot symbol; columns are the
    pilot subcarriers.
    """
    spec = spec or GridSpec()
    if len(frames) != N_FRAMES:
        raise MonitorError(f"need exactly {N_FRAMES} frames, got {len(frames)}")
    if len(spec.pilot_symbol_indices) != 3 or len(spec.pilot_subcarrier_indices) != 36:
        raise MonitorError("monitor input needs a pattern with 3 pilot symbols on 36 subcarriers")
    n = spec.n_symbols
    rows = np.array([sf * n + s for sf in range(spec.n_subframes_per_frame) for s in spec.pilot_symbol_indices])
    cols = np.array(spec.pilot_subcarrier_indices)
    blocks = []
    for f in frames:
        f = np.asarray(f)
        if f.shape != (spec.frame_symbols, spec.n_subcarriers):
            raise MonitorError(f"frame shape {f.shape} != {(spec.frame_symbols, spec.n_subcarriers)}")
        blocks.append(f[np.ix_(rows, cols)])
    z = np.concatenate(blocks)
    return MonitorInput(np.stack([z.real, z.imag]).astype(np.float32))


def make_uniform_noise_aux(inp: MonitorInput | np.ndarray, rng: np.random.Generator) -> MonitorInput:
    """Same-shape i.i.d. uniform tensor spanning the source's overall [min, max]."""
    src = inp.tensor if isinstance(inp, MonitorInput) else np.asarray(inp)
    lo, hi = float(src.min()), float(src.max())
    return MonitorInput(rng.uniform(lo, hi, size=src.shape).astype(src.dtype))


@dataclass
class MonitorConfig:
    """Encoder/projection sizes and OOD-vote parameters."""

    input_shape: tuple[int, int, int] = (2, 90, 36)
    conv_channels: int = 16
    residual_channels: int = 32
    feature_dim: int = 512
    projection_dims: tuple[int, ...] = (256, 128)
    dropout: float = 0.1
    margin: float = 0.2
    k: int = 5
    lam: float = 0.95


def build_encoder(cfg: MonitorConfig | None = None, seed: int = 0, dtype=np.float32) -> nn.Model:
    cfg = cfg or MonitorConfig()
    rng = np.random.default_rng(seed)
    c, h, w = cfg.input_shape
    flat = cfg.residual_channels * (h // 2 // 2) * (w // 2 // 2)
    layers = [
        nn.Conv2d(c, cfg.conv_channels, 3, rng, dtype), nn.ReLU(), nn.MaxPool2d(2),
        nn.Residual(cfg.conv_channels, cfg.residual_channels, rng, dtype=dtype), nn.MaxPool2d(2),
        nn.Flatten(), nn.Dense(flat, cfg.feature_dim, rng, dtype), nn.Dropout(cfg.dropout), nn.Normalize(),
    ]
    return nn.Model(layers, cfg.input_shape, seed=seed, name="encoder")


def build_projection(cfg: MonitorConfig | None = None, seed: int = 0, dtype=np.float32) -> nn.Model:
    cfg = cfg or MonitorConfig()
    rng = np.random.default_rng(seed + 7919)
    layers, width = [], cfg.feature_dim
    for i, d in enumerate(cfg.projection_dims):
        layers.append(nn.Dense(width, d, rng, dtype))
        if i < len(cfg.projection_dims) - 1:
            layers.append(nn.ReLU())
        width = d
    layers.append(nn.Normalize())
    return nn.Model(layers, (cfg.feature_dim,), seed=seed, name="projection")


def encode(encoder: nn.Model, inputs, batch_size: int = 128) -> np.ndarray:
    """Normalised encoder features; a single input gives a vector, a batch a matrix.

    The encoder is run in evaluation mode regardless of its current mode.
    """
    x = inputs.tensor if isinstance(inputs, MonitorInput) else np.asarray(inputs)
    single = x.ndim == len(encoder.input_shape)
    if single:
        x = x[None]
    was_training = encoder.training
    encoder.eval()
    try:
        out = np.concatenate([encoder(x[i:i + batch_size]).data for i in range(0, len(x), batch_size)])
    finally:
        encoder.training = was_training
    # features are float32 values, the precision the OOD model stores them at
    out = out.astype(np.float32).astype(np.float64)
    return out[0] if single else out


@dataclass
class Cluster:
    class_id: str
    center: np.ndarray
    radius: float
    population: int


def _row_norms(a: np.ndarray) -> np.ndarray:
    return np.sqrt(np.einsum("ij,ij->i", a, a))


def _quantile_radius(dist: np.ndarray, lam: float) -> float:
    ranked = np.sort(dist)
    r = ranked[max(math.ceil(lam * len(ranked)), 1) - 1]
    # stored as float32: round up so every feature inside the exact radius stays inside
    r32 = np.float32(r)
    if float(r32) < r:
        r32 = np.nextafter(r32, np.float32(np.inf))
    return float(r32)


def characterize_clusters(features: np.ndarray, labels: Sequence, lam: float = 0.95,
                          class_order: Sequence | None = None) -> list[Cluster]:
    """Mean center and ``ceil(lam * N)``-th smallest center distance per class."""
    if not 0.0 < lam <= 1.0:
        raise MonitorError("lambda must lie in (0, 1]")
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    order = list(class_order) if class_order is not None else list(dict.fromkeys(labels.tolist()))
    clusters = []
    for cls in order:
        members = features[labels == cls]
        if len(members) == 0:
            raise MonitorError(f"class {cls!r} has no features")
        center = members.mean(axis=0)
        dist = _row_norms(members - center)
        clusters.append(Cluster(str(cls), center, _quantile_radius(dist, lam), len(members)))
    return clusters


@dataclass
class Verdict:
    decision: Decision
    votes: list[Decision]
    neighbor_ids: np.ndarray

    @property
    def is_ood(self) -> bool:
        return self.decision is Decision.OOD


@dataclass
class OodModel:
    """Clusters plus the stored in-distribution features the KNN searches."""

    clusters: list[Cluster]
    id_features: np.ndarray
    id_labels: np.ndarray
    k: int = 5
    lam: float = 0.95
    _centers: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.id_features = np.asarray(self.id_features, dtype=np.float32).astype(np.float64)
        self.id_labels = np.asarray(self.id_labels, dtype=np.int64)
        if self.k < 1:
            raise MonitorError("k must be at least 1")
        if len(self.id_features) != len(self.id_labels):
            raise MonitorError("features and labels differ in length")
        if len(self.id_labels) and (self.id_labels.min() < 0 or self.id_labels.max() >= len(self.clusters)):
            raise MonitorError("every stored feature needs a cluster")
        self._centers = np.stack([c.center for c in self.clusters]) if self.clusters else np.zeros((0, 0))

    @property
    def class_names(self) -> list[str]:
        return [c.class_id for c in self.clusters]

    @property
    def radii(self) -> np.ndarray:
        return np.array([c.radius for c in self.clusters])

    @property
    def feature_dim(self) -> int:
        return self.id_features.shape[1]

    @classmethod
    def fit(cls, features: np.ndarray, labels: Sequence, k: int = 5, lam: float = 0.95,
            class_order: Sequence | None = None) -> "OodModel":
        """Characterize clusters and store the features for the neighbor search."""
        labels = np.asarray(labels)
        # radii must be measured on the float32 values that are actually stored
        features = np.asarray(features, dtype=np.float32).astype(np.float64)
        clusters = characterize_clusters(features, labels, lam, class_order)
        index = {c.class_id: i for i, c in enumerate(clusters)}
        codes = np.array([index[str(v)] for v in labels.tolist()], dtype=np.int64)
        return cls(clusters, features, codes, k, lam)

    def save(self, path: str | Path) -> None:
        """Header (I, k, lambda, labels, populations) then f32 centers, radii, features, with int labels."""
        header = {
            "feature_dim": self.feature_dim, "k": self.k, "lambda": self.lam,
            "classes": self.class_names, "populations": [c.population for c in self.clusters],
            "n_features": len(self.id_features),
        }
        arrays = [self._centers, self.radii, self.id_features, self.id_labels.astype(np.float32)]
        write_blob(path, OOD_MAGIC, header, arrays)

    @classmethod
    def load(cls, path: str | Path) -> "OodModel":
        header, payload = read_blob(path, OOD_MAGIC)
        n_cls, dim, n = len(header["classes"]), header["feature_dim"], header["n_features"]
        centers, off = take_f32(payload, 0, (n_cls, dim))
        radii, off = take_f32(payload, off, (n_cls,))
        feats, off = take_f32(payload, off, (n, dim))
        labels, off = take_f32(payload, off, (n,))
        labels = labels.astype(np.int64)
        feats = feats.astype(np.float64)
        clusters = []
        for i, (name, pop) in enumerate(zip(header["classes"], header["populations"])):
            # the in-memory center is the float64 mean of the stored features, as at fit time
            center = feats[labels == i].mean(axis=0)
            if np.count_nonzero(labels == i) != pop or not np.array_equal(center.astype(np.float32), centers[i]):
                raise MonitorError(f"{path}: cluster {name!r} disagrees with its stored features")
            clusters.append(Cluster(name, center, float(radii[i]), pop))
        return cls(clusters, feats, labels, header["k"], header["lambda"])


def _check_k(model: OodModel, k: int | None) -> int:
    k = model.k if k is None else int(k)
    if not 1 <= k <= len(model.id_features):
        raise MonitorError(f"k={k} must lie in [1, {len(model.id_features)}]")
    return k


def knn_query(model: OodModel, y, k: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Exact Euclidean k nearest stored features; equal distances go to the lower index.

    ``y`` may be one vector or a (Q, I) batch; returns (indices, distances) with
    a matching leading shape.
    """
    k = _check_k(model, k)
    y = np.asarray(y, dtype=np.float64)
    single = y.ndim == 1
    ys = y[None] if single else y
    if ys.shape[1] != model.feature_dim:
        raise MonitorError(f"feature length {ys.shape[1]} != {model.feature_dim}")
    idx = np.empty((len(ys), k), dtype=np.int64)
    dist = np.empty((len(ys), k))
    for q, v in enumerate(ys):
        d = _row_norms(model.id_features - v)
        order = np.argsort(d, kind="stable")[:k]
        idx[q], dist[q] = order, d[order]
    return (idx[0], dist[0]) if single else (idx, dist)


def ood_votes(model: OodModel, ys: np.ndarray, k: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Per-neighbor ID votes (Q, k) and neighbor indices for a batch of features."""
    ys = np.atleast_2d(np.asarray(ys, dtype=np.float64))
    idx, _ = knn_query(model, ys, k)
    votes = kernels.knn_votes(ys, idx, model.id_features, model.id_labels, model._centers, model.radii)
    return np.asarray(votes, dtype=bool), idx


def classify_ood(model: OodModel, y, k: int | None = None) -> Verdict:
    """In-distribution iff at least one of the k nearest neighbors votes for it."""
    votes, idx = ood_votes(model, np.asarray(y)[None], k)
    v = [Decision.ID if b else Decision.OOD for b in votes[0]]
    return Verdict(Decision.ID if votes[0].any() else Decision.OOD, v, idx[0])


def classify_batch(model: OodModel, ys: np.ndarray, k: int | None = None) -> np.ndarray:
    """Boolean OOD flag per row of ``ys``."""
    votes, _ = ood_votes(model, ys, k)
    return ~votes.any(axis=1)


@dataclass
class MonitorBundle:
    encoder: nn.Model
    projection: nn.Model
    ood: OodModel
    history: list[float]
    config: MonitorConfig


def with_noise_class(classes: Mapping[str, np.ndarray], rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Add the synthetic uniform-noise class when fewer than two real classes exist."""
    out = {str(k): np.asarray(v, dtype=np.float32) for k, v in classes.items()}
    if not out:
        raise MonitorError("at least one in-distribution class is required")
    if len(out) == 1:
        (src,) = out.values()
        out[NOISE_CLASS] = np.stack([make_uniform_noise_aux(x, rng).tensor for x in src])
    return out


def triplet_batches(labels: np.ndarray, n_triplets: int, batch_size: int):
    """Uniform mining: anchor and positive from one class, negative from any other class."""
    labels = np.asarray(labels)
    by_class = {c: np.flatnonzero(labels == c) for c in np.unique(labels)}
    others = {c: np.flatnonzero(labels != c) for c in by_class}

    def gen(rng):
        anchors = rng.integers(0, len(labels), n_triplets)
        pos = np.array([rng.choice(by_class[labels[a]]) for a in anchors])
        neg = np.array([rng.choice(others[labels[a]]) for a in anchors])
        for i in range(0, n_triplets, batch_size):
            yield anchors[i:i + batch_size], pos[i:i + batch_size], neg[i:i + batch_size]
    return gen


def train_monitor(classes: Mapping[str, np.ndarray], settings: nn.TrainSettings,
                  cfg: MonitorConfig | None = None, triplets_per_epoch: int | None = None,
                  on_epoch=None) -> MonitorBundle:
    """Train encoder + projection with triplet loss, then fit the OOD model on encoder features.

    ``classes`` maps a class name to its (N, 2, 90, 36) monitor inputs. With a
    single class, a uniform-noise class derived from it is added.
    """
    cfg = cfg or MonitorConfig()
    data = with_noise_class(classes, np.random.default_rng([settings.seed, 1]))
    names = list(data)
    x = np.concatenate([data[n] for n in names])
    labels = np.repeat(np.arange(len(names)), [len(data[n]) for n in names])
    encoder = build_encoder(cfg, seed=settings.seed)
    projection = build_projection(cfg, seed=settings.seed)
    joint = nn.Model(nn.Sequential(encoder.body, projection.body), cfg.input_shape, seed=settings.seed, name="joint")
    batches = triplet_batches(labels, triplets_per_epoch or len(x), settings.batch_size)

    def loss_fn(model, batch):
        a, p, n = (model(x[i]) for i in batch)
        return nn.triplet_loss(a, p, n, cfg.margin)

    result = nn.train(joint, batches, loss_fn, settings, on_epoch)
    feats = encode(encoder, x)
    ood = OodModel.fit(feats, np.array(names)[labels], k=cfg.k, lam=cfg.lam, class_order=names)
    return MonitorBundle(encoder, projection, ood, result.history, cfg)


def save_encoder(path: str | Path, encoder: nn.Model, cfg: MonitorConfig, meta: dict | None = None) -> None:
    info = dict(meta or {})
    info["monitor_config"] = {**dataclasses.asdict(cfg), "input_shape": list(cfg.input_shape),
                              "projection_dims": list(cfg.projection_dims)}
    nn.save_checkpoint(path, encoder, info)


def load_encoder(path: str | Path) -> tuple[nn.Model, MonitorConfig]:
    """Rebuild an encoder from a checkpoint written by :func:`save_encoder`."""
    state, header = nn.read_checkpoint(path)
    raw = header["meta"].get("monitor_config")
    if raw is None:
        raise MonitorError(f"{path} is not an encoder checkpoint")
    cfg = MonitorConfig(**{**raw, "input_shape": tuple(raw["input_shape"]),
                           "projection_dims": tuple(raw["projection_dims"])})
    encoder = build_encoder(cfg)
    encoder.load_state_dict(state)
    return encoder, cfg
