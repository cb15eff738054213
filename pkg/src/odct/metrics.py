"""Label-stability and cluster-purity diagnostics.

All entropies use the natural log over *normalized* counts, so every value
lies in ``[0, ln C]``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class EntropyReport:
    groups: np.ndarray  # group ids (track ids or class ids), sorted
    values: np.ndarray  # entropy per group
    n_clusters: int

    @property
    def mean(self) -> float:
        return float(self.values.mean())

    @property
    def upper_bound(self) -> float:
        return float(np.log(self.n_clusters))


def change_ratio(before, after) -> float:
    before = np.asarray(before)
    after = np.asarray(after)
    if before.shape != after.shape:
        raise ValueError(f"label snapshots differ in length: {before.shape} vs {after.shape}")
    if before.size == 0:
        return 0.0
    return float(np.count_nonzero(before != after)) / before.size


def entropy_of_counts(counts) -> float:
    counts = np.asarray(counts, dtype=np.float64)
    total = counts.sum()
    if total <= 0:
        raise ValueError("empty distribution")
    p = counts[counts > 0] / total
    h = -float(np.sum(p * np.log(p)))
    # a point mass gives -1*log(1) = -0.0
    return max(h, 0.0)


def _group_entropies(labels, groups, n_clusters) -> EntropyReport:
    labels = np.asarray(labels, dtype=np.int64)
    groups = np.asarray(groups)
    if labels.shape != groups.shape:
        raise ValueError("labels and group ids must have the same length")
    if labels.size and (labels.min() < 0 or labels.max() >= n_clusters):
        raise ValueError(f"labels must lie in [0, {n_clusters})")
    uniq, inv = np.unique(groups, return_inverse=True)
    counts = np.zeros((len(uniq), n_clusters), dtype=np.int64)
    np.add.at(counts, (inv, labels), 1)
    values = np.array([entropy_of_counts(row) for row in counts])
    return EntropyReport(uniq, values, n_clusters)


def track_entropy(labels, track_of, track_id, n_clusters: int) -> float:
    """Entropy of one track's sample distribution over the clusters."""
    labels = np.asarray(labels, dtype=np.int64)
    mask = np.asarray(track_of) == track_id
    if not mask.any():
        raise ValueError(f"unknown track id {track_id!r}")
    return entropy_of_counts(np.bincount(labels[mask], minlength=n_clusters))


def track_entropies(labels, track_of, n_clusters: int) -> EntropyReport:
    return _group_entropies(labels, track_of, n_clusters)


def mean_track_entropy(labels, track_of, n_clusters: int) -> float:
    if len(track_of) == 0:
        raise ValueError("need at least one track")
    return track_entropies(labels, track_of, n_clusters).mean


def intra_class_entropy(labels, class_labels, n_clusters: int) -> float:
    """Mean over ground-truth classes of the class's entropy over clusters.

    Evaluation only: class labels never feed back into training.
    """
    return _group_entropies(labels, class_labels, n_clusters).mean


def cluster_sizes(labels, n_clusters: int) -> np.ndarray:
    return np.bincount(np.asarray(labels, dtype=np.int64), minlength=n_clusters)
