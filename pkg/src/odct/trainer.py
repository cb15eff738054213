"""Online deep clustering loop for the three method variants.

``odc``             plain K-means init, vanilla momentum memory update
``odc_track_init``  track-constrained init, vanilla momentum memory update
``odct``            track-constrained init, track-weighted memory update

Per batch: forward, cross-entropy step against the stored pseudo-labels,
memory update with the post-step features, nearest-centroid relabelling of
the batch; every ``centroid_update_interval`` iterations the centroids are
recomputed and small clusters rebalanced.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import clustering, embedder, metrics, synth
from .memory import MemoryBank, l2_normalize

log = logging.getLogger(__name__)

VARIANTS = ("odc", "odc_track_init", "odct")
TRACE_COLUMNS = ("epoch", "change_ratio", "mean_track_entropy", "loss", "min_size", "max_size")


@dataclass(frozen=True)
class TrainConfig:
    variant: str = "odct"
    k_clusters: int = 30
    batch_size: int = 32
    epochs: int = 30
    momentum: float = 0.5
    centroid_update_interval: int = 10
    small_cluster_threshold: int = 20
    seed: int = 0
    # embedder
    d_feat: int = 32
    lr: float = 0.05
    sgd_momentum: float = 0.5
    weight_decay: float = 0.0
    dropout: float = 0.0
    activation: str = "tanh"
    augment_sigma: float = 0.0
    init_scale: float = 1.0
    # initial clustering
    kmeans_max_iters: int = 100
    kmeans_tol: float = 1e-4

    def validate(self) -> List[str]:
        errors = []
        if self.variant not in VARIANTS:
            errors.append(f"variant: {self.variant!r} is not one of {', '.join(VARIANTS)}")
        if self.k_clusters < 2:
            errors.append("k_clusters: must be >= 2")
        if self.batch_size < 1:
            errors.append("batch_size: must be >= 1")
        if self.epochs < 0:
            errors.append("epochs: must be >= 0")
        if not 0.0 < self.momentum <= 1.0:
            errors.append("momentum: must lie in (0, 1]")
        if self.centroid_update_interval < 1:
            errors.append("centroid_update_interval: must be >= 1")
        if self.small_cluster_threshold < 1:
            errors.append("small_cluster_threshold: must be >= 1")
        if self.d_feat < 1:
            errors.append("d_feat: must be >= 1")
        if self.lr < 0:
            errors.append("lr: must be >= 0")
        if not 0.0 <= self.sgd_momentum < 1.0:
            errors.append("sgd_momentum: must lie in [0, 1)")
        if not 0.0 <= self.dropout < 1.0:
            errors.append("dropout: must lie in [0, 1)")
        if self.activation not in ("tanh", "relu", "identity"):
            errors.append("activation: must be one of tanh, relu, identity")
        return errors

    def __post_init__(self):
        errors = self.validate()
        if errors:
            raise ValueError("invalid training config:\n  " + "\n  ".join(errors))


@dataclass
class EpochTrace:
    epoch: int
    change_ratio: float
    mean_track_entropy: float
    loss: float
    min_size: int
    max_size: int

    def row(self):
        return [self.epoch, repr(self.change_ratio), repr(self.mean_track_entropy), repr(self.loss), self.min_size, self.max_size]


def effective_threshold(threshold: int, n_samples: int, k: int) -> int:
    """Small-cluster threshold usable for ``n_samples`` points in ``k`` clusters.

    A threshold above the mean cluster size can never be satisfied by all
    clusters at once; it is then lowered to half the mean size.
    """
    mean_size = n_samples / k
    if threshold <= mean_size:
        return threshold
    return max(1, int(mean_size // 2))


class Trainer:
    """Owns every piece of mutable training state for one run."""

    def __init__(self, inputs, track_of, cfg: TrainConfig, model: Optional[embedder.EmbedderState] = None):
        self.cfg = cfg
        self.inputs = np.asarray(inputs, dtype=np.float64)
        self.track_of = np.asarray(track_of, dtype=np.int64)
        if self.inputs.ndim != 2 or self.inputs.shape[0] != self.track_of.shape[0]:
            raise ValueError("inputs must be (N, D_in) with one track id per row")
        n = self.inputs.shape[0]
        if n < cfg.k_clusters:
            raise ValueError(f"need at least k_clusters={cfg.k_clusters} samples, got {n}")
        self.threshold = effective_threshold(cfg.small_cluster_threshold, n, cfg.k_clusters)
        if self.threshold != cfg.small_cluster_threshold:
            log.info(
                "small-cluster threshold %d exceeds mean cluster size %.1f; using %d",
                cfg.small_cluster_threshold, n / cfg.k_clusters, self.threshold,
            )
        ss = np.random.SeedSequence(cfg.seed)
        model_ss, loop_ss = ss.spawn(2)
        self.rng = np.random.default_rng(loop_ss)
        if model is None:
            model = embedder.init_embedder(
                self.inputs.shape[1], cfg.d_feat, cfg.k_clusters,
                seed=int(model_ss.generate_state(1)[0]),
                lr=cfg.lr, momentum=cfg.sgd_momentum, weight_decay=cfg.weight_decay,
                dropout=cfg.dropout, activation=cfg.activation, init_scale=cfg.init_scale,
            )
        self.model = model
        self.bank: Optional[MemoryBank] = None
        self.iteration = 0
        self.epoch = 0
        self.iter_log: List[float] = []

    def initialize(self) -> MemoryBank:
        cfg = self.cfg
        X = self.inputs
        if cfg.augment_sigma > 0:
            X = synth.augment(X, cfg.augment_sigma, self.rng)
        feats, _ = embedder.forward(self.model, X)
        feats = l2_normalize(feats)
        km = dict(max_iters=cfg.kmeans_max_iters, tol=cfg.kmeans_tol)
        if cfg.variant == "odc":
            res = clustering.kmeans(feats, clustering.KMeansConfig(k=cfg.k_clusters, seed=cfg.seed, **km))
            centroids, labels = res.centroids, res.labels
        else:
            n_tracks = len(np.unique(self.track_of))
            if n_tracks < cfg.k_clusters:
                raise ValueError(f"need at least k_clusters={cfg.k_clusters} tracks, got {n_tracks}")
            centroids, labels = clustering.constrained_init(feats, self.track_of, cfg.k_clusters, cfg.seed, **km)
        self.bank = MemoryBank(feats, labels, centroids, self.track_of)
        return self.bank

    def _update_centroids(self):
        bank = self.bank
        bank.centroids = clustering.recompute_centroids(bank.features, bank.labels, bank.centroids)
        res = clustering.rebalance_small_clusters(
            bank.features, bank.centroids, bank.labels, self.threshold,
            seed=int(self.rng.integers(2**31)),
        )
        bank.centroids, bank.labels = res.centroids, res.labels

    def train_step(self, idx) -> float:
        cfg, bank = self.cfg, self.bank
        X = self.inputs[idx]
        if cfg.augment_sigma > 0:
            X = synth.augment(X, cfg.augment_sigma, self.rng)
        before = bank.labels.copy()
        drop_rng = self.rng if self.model.dropout > 0 else None
        _, loss = embedder.backward_step(self.model, X, bank.labels[idx], drop_rng)
        feats, _ = embedder.forward(self.model, X)
        snapshot = bank.features.copy()
        for i, f in zip(idx.tolist(), feats):
            if cfg.variant == "odct":
                bank.update_sample(i, f, cfg.momentum, snapshot)
            else:
                bank.vanilla_update_sample(i, f, cfg.momentum, snapshot)
        bank.relabel(idx)
        self.iteration += 1
        if self.iteration % cfg.centroid_update_interval == 0:
            self._update_centroids()
        self.iter_log.append(metrics.change_ratio(before, bank.labels))
        return loss

    def train_epoch(self) -> EpochTrace:
        if self.bank is None:
            raise RuntimeError("call initialize() first")
        cfg, bank = self.cfg, self.bank
        start = bank.labels.copy()
        order = self.rng.permutation(bank.n_samples)
        losses, weights = [], []
        for b in range(0, len(order), cfg.batch_size):
            idx = order[b:b + cfg.batch_size]
            losses.append(self.train_step(idx))
            weights.append(len(idx))
        sizes = metrics.cluster_sizes(bank.labels, bank.n_clusters)
        trace = EpochTrace(
            epoch=self.epoch,
            change_ratio=metrics.change_ratio(start, bank.labels),
            mean_track_entropy=metrics.mean_track_entropy(bank.labels, self.track_of, bank.n_clusters),
            loss=float(np.average(losses, weights=weights)),
            min_size=int(sizes.min()),
            max_size=int(sizes.max()),
        )
        self.epoch += 1
        return trace


@dataclass
class RunResult:
    traces: List[EpochTrace]
    trainer: Trainer
    initial_labels: np.ndarray = field(repr=False, default=None)

    @property
    def bank(self) -> MemoryBank:
        return self.trainer.bank

    @property
    def model(self) -> embedder.EmbedderState:
        return self.trainer.model


def write_trace_csv(path, traces) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for t in traces:
            w.writerow(t.row())


def read_trace_csv(path) -> List[EpochTrace]:
    with open(path, newline="") as fh:
        r = csv.DictReader(fh)
        return [
            EpochTrace(int(row["epoch"]), float(row["change_ratio"]), float(row["mean_track_entropy"]),
                       float(row["loss"]), int(row["min_size"]), int(row["max_size"]))
            for row in r
        ]


def run(inputs, track_of, cfg: TrainConfig, out_dir=None) -> RunResult:
    """Initialize and train for ``cfg.epochs`` epochs.

    With ``out_dir`` set, writes ``init_memory.bin`` before training and
    ``trace.csv``, ``iterations.csv``, ``memory.bin`` and ``embedder.bin``
    afterwards.
    """
    tr = Trainer(inputs, track_of, cfg)
    tr.initialize()
    init_labels = tr.bank.labels.copy()
    out = None
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        tr.bank.save(out / "init_memory.bin")
    traces = []
    for _ in range(cfg.epochs):
        traces.append(tr.train_epoch())
        t = traces[-1]
        log.debug("epoch %d change=%.3f H=%.3f loss=%.3f", t.epoch, t.change_ratio, t.mean_track_entropy, t.loss)
    if out is not None:
        write_trace_csv(out / "trace.csv", traces)
        with open(out / "iterations.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("iteration", "change_ratio"))
            for i, v in enumerate(tr.iter_log):
                w.writerow((i, repr(v)))
        tr.bank.save(out / "memory.bin")
        tr.model.save(out / "embedder.bin")
    return RunResult(traces, tr, init_labels)


def config_dict(cfg: TrainConfig) -> dict:
    return asdict(cfg)
