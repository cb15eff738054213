"""Samples / Centroids / Track memories and the track-weighted momentum update."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import io as _io

EPS_DIST = 1e-12
MEMORY_MAGIC = "odct-memory"
MEMORY_VERSION = 1


def l2_normalize(v, axis=-1):
    v = np.asarray(v, dtype=np.float64)
    n = np.sqrt((v * v).sum(axis=axis, keepdims=True))
    if np.any(n == 0):
        raise ValueError("cannot normalize a zero-norm feature")
    return v / n


def weight_coeffs(f, member_feats) -> np.ndarray:
    """Per-member weights ``d(f, x') / d(f, x_j)`` with ``x'`` the nearest member.

    Distances are Euclidean and clamped below at 1e-12, so every weight lies in
    (0, 1] and the nearest member (and any member coinciding with ``f``) gets 1.
    """
    member_feats = np.atleast_2d(np.asarray(member_feats, dtype=np.float64))
    if member_feats.shape[0] == 0:
        raise ValueError("track has no members")
    d = np.linalg.norm(member_feats - np.asarray(f, dtype=np.float64), axis=1)
    d = np.maximum(d, EPS_DIST)
    return d.min() / d


def blend_track(f, member_feats, m: float) -> np.ndarray:
    """Track-weighted momentum update of one memory row (returned normalized).

    ``member_feats`` are the current memory rows of every sample in the track,
    the updated sample included.
    """
    if not 0.0 < m <= 1.0:
        raise ValueError(f"momentum must lie in (0, 1], got {m}")
    f_hat = l2_normalize(f)
    if m == 1.0:
        return f_hat
    member_feats = np.atleast_2d(np.asarray(member_feats, dtype=np.float64))
    d = weight_coeffs(f_hat, member_feats)
    hist = (d @ member_feats) / d.sum()
    return l2_normalize(m * f_hat + (1.0 - m) * hist)


def blend_vanilla(f, row, m: float) -> np.ndarray:
    if not 0.0 < m <= 1.0:
        raise ValueError(f"momentum must lie in (0, 1], got {m}")
    f_hat = l2_normalize(f)
    if m == 1.0:
        return f_hat
    return l2_normalize(m * f_hat + (1.0 - m) * np.asarray(row, dtype=np.float64))


def assign_label(row, centroids) -> int:
    """Nearest centroid by squared L2 distance; ties go to the lowest index."""
    centroids = np.atleast_2d(centroids)
    if centroids.shape[0] == 0:
        raise ValueError("no centroids")
    d = ((centroids - np.asarray(row)) ** 2).sum(axis=1)
    return int(np.argmin(d))


def assign_labels(rows, centroids) -> np.ndarray:
    """Vectorized :func:`assign_label` over the rows of a matrix."""
    rows = np.atleast_2d(rows)
    centroids = np.atleast_2d(centroids)
    d = ((rows[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    return np.argmin(d, axis=1).astype(np.int64)


@dataclass
class MemoryBank:
    """The three external memories.

    ``features`` (N x D, unit rows) and ``labels`` form the Samples Memory,
    ``centroids`` (C x D) the Centroids Memory and ``track_of`` the Track
    Memory.
    """

    features: np.ndarray
    labels: np.ndarray
    centroids: np.ndarray
    track_of: np.ndarray

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=np.float64)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        self.centroids = np.ascontiguousarray(self.centroids, dtype=np.float64)
        self.track_of = np.ascontiguousarray(self.track_of, dtype=np.int64)
        n = self.features.shape[0]
        if self.labels.shape != (n,) or self.track_of.shape != (n,):
            raise ValueError("labels and track_of must have one entry per sample")
        if self.centroids.ndim != 2 or self.centroids.shape[1] != self.features.shape[1]:
            raise ValueError("centroid dimension does not match feature dimension")
        if n and (self.labels.min() < 0 or self.labels.max() >= self.n_clusters):
            raise ValueError("pseudo-label out of range")
        self._members = None

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def n_clusters(self) -> int:
        return self.centroids.shape[0]

    def track_members(self, i: int) -> np.ndarray:
        if self._members is None:
            groups: dict = {}
            for j, t in enumerate(self.track_of.tolist()):
                groups.setdefault(t, []).append(j)
            self._members = {t: np.array(v, dtype=np.int64) for t, v in groups.items()}
        return self._members[int(self.track_of[i])]

    def update_sample(self, i: int, f, m: float, snapshot=None) -> np.ndarray:
        """Track-weighted update of row ``i``; labels are not touched.

        ``snapshot`` is the feature matrix weights are read from (defaults to
        the live memory).
        """
        src = self.features if snapshot is None else snapshot
        row = blend_track(f, src[self.track_members(i)], m)
        self.features[i] = row
        return row

    def vanilla_update_sample(self, i: int, f, m: float, snapshot=None) -> np.ndarray:
        src = self.features if snapshot is None else snapshot
        row = blend_vanilla(f, src[i], m)
        self.features[i] = row
        return row

    def relabel(self, idx) -> np.ndarray:
        idx = np.asarray(idx, dtype=np.int64)
        self.labels[idx] = assign_labels(self.features[idx], self.centroids)
        return self.labels[idx]

    # persistence

    def save(self, path) -> None:
        meta = {
            "N": self.n_samples,
            "D": self.dim,
            "C": self.n_clusters,
        }
        _io.save_arrays(
            path,
            MEMORY_MAGIC,
            MEMORY_VERSION,
            meta,
            {
                "features": self.features,
                "labels": self.labels,
                "track_of": self.track_of,
                "centroids": self.centroids,
            },
        )

    @classmethod
    def load(cls, path) -> "MemoryBank":
        meta, arrays = _io.load_arrays(path, MEMORY_MAGIC, MEMORY_VERSION)
        bank = cls(arrays["features"], arrays["labels"], arrays["centroids"], arrays["track_of"])
        if (bank.n_samples, bank.dim, bank.n_clusters) != (meta["N"], meta["D"], meta["C"]):
            raise ValueError(f"{path}: header shape does not match payload")
        return bank
