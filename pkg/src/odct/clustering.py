"""K-means, track-constrained initialization and small-cluster rebalancing."""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional

import numpy as np

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class KMeansConfig:
    k: int
    max_iters: int = 100
    tol: float = 1e-4
    seed: int = 0
    n_init: int = 1

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.n_init < 1:
            raise ValueError("n_init must be >= 1")


class KMeansResult(NamedTuple):
    centroids: np.ndarray
    labels: np.ndarray
    inertia: float
    history: List[float]


def _sq_dists(points, centroids):
    return ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)


def kmeans_plusplus(points, k, rng) -> np.ndarray:
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]))
    centers[0] = points[rng.integers(n)]
    closest = ((points - centers[0]) ** 2).sum(1)
    for c in range(1, k):
        total = closest.sum()
        if total > 0:
            idx = rng.choice(n, p=closest / total)
        else:
            idx = rng.integers(n)
        centers[c] = points[idx]
        closest = np.minimum(closest, ((points - centers[c]) ** 2).sum(1))
    return centers


def _fill_empty(points, centroids, labels, d):
    """Give every empty cluster the point farthest from its own centroid."""
    k = centroids.shape[0]
    sizes = np.bincount(labels, minlength=k)
    own = d[np.arange(len(labels)), labels]
    for c in np.flatnonzero(sizes == 0):
        movable = sizes[labels] > 1
        cand = np.where(movable, own, -np.inf)
        j = int(np.argmax(cand))
        sizes[labels[j]] -= 1
        labels[j] = c
        sizes[c] = 1
        own[j] = 0.0
        centroids[c] = points[j]
    return labels


def _lloyd(points, centroids, max_iters, tol):
    k = centroids.shape[0]
    history: List[float] = []
    labels = None
    for _ in range(max_iters):
        d = _sq_dists(points, centroids)
        prev_labels = labels
        labels = np.argmin(d, axis=1)
        labels = _fill_empty(points, centroids, labels, d)
        if prev_labels is not None and np.array_equal(labels, prev_labels):
            break
        for c in range(k):
            centroids[c] = points[labels == c].mean(axis=0)
        inertia = float(((points - centroids[labels]) ** 2).sum())
        prev = history[-1] if history else None
        history.append(inertia)
        if prev is not None and (prev - inertia) <= tol * max(prev, 1e-300):
            break
    return centroids, labels.astype(np.int64), history


def _check_points(points, k):
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise ValueError("points must be an (M, D) matrix")
    if points.shape[0] < k:
        raise ValueError(f"need at least k={k} points, got {points.shape[0]}")
    if not np.all(np.isfinite(points)):
        raise ValueError("points must be finite")
    return points


def kmeans(points, cfg: KMeansConfig) -> KMeansResult:
    """Lloyd's algorithm from k-means++ seeds.

    With ``cfg.n_init > 1`` the run is restarted from independent seeds drawn
    from ``cfg.seed`` and the lowest-inertia solution is kept. No cluster is
    ever returned empty.
    """
    points = _check_points(points, cfg.k)
    rng = np.random.default_rng(cfg.seed)
    best = None
    for _ in range(cfg.n_init):
        init = kmeans_plusplus(points, cfg.k, rng)
        centroids, labels, history = _lloyd(points, init, cfg.max_iters, cfg.tol)
        if best is None or history[-1] < best.inertia:
            best = KMeansResult(centroids, labels, history[-1], history)
    return best


def hartigan_refine(points, labels, k: int, max_passes: int = 100):
    """Single-point moves that lower the inertia, until none is left.

    Moving ``x`` from cluster ``a`` (size ``na``) to ``b`` (size ``nb``)
    changes the inertia by ``nb/(nb+1)*|x-cb|^2 - na/(na-1)*|x-ca|^2``.
    Every Hartigan optimum is also a Lloyd fixed point, but not the other
    way round.
    """
    labels = np.array(labels, dtype=np.int64, copy=True)
    sizes = np.bincount(labels, minlength=k).astype(np.float64)
    sums = np.zeros((k, points.shape[1]))
    np.add.at(sums, labels, points)
    for _ in range(max_passes):
        moved = False
        for i, x in enumerate(points):
            a = labels[i]
            if sizes[a] < 2:
                continue
            cents = sums / np.maximum(sizes, 1)[:, None]
            d = ((cents - x) ** 2).sum(axis=1)
            gain_out = sizes[a] / (sizes[a] - 1) * d[a]
            cost_in = sizes / (sizes + 1) * d
            cost_in[a] = np.inf
            b = int(np.argmin(cost_in))
            if cost_in[b] < gain_out * (1 - 1e-12):
                sums[a] -= x
                sums[b] += x
                sizes[a] -= 1
                sizes[b] += 1
                labels[i] = b
                moved = True
        if not moved:
            break
    return sums / sizes[:, None], labels


def kmeans_all_seeds(points, k: int, max_iters: int = 100, max_starts: int = 10000) -> KMeansResult:
    """Lloyd runs started from every set of ``k`` distinct data points.

    Each point serves as the first seed and the remaining seeds are
    enumerated rather than sampled, so the result no longer depends on a
    random draw. Only sensible for small ``M``; raises if the number of
    starts exceeds ``max_starts``.
    """
    points = _check_points(points, k)
    m = points.shape[0]
    if math.comb(m, k) > max_starts:
        raise ValueError(f"{math.comb(m, k)} seed sets exceed max_starts={max_starts}")
    best = None
    for idx in itertools.combinations(range(m), k):
        _, labels, history = _lloyd(points, points[list(idx)].copy(), max_iters, 0.0)
        centroids, labels = hartigan_refine(points, labels, k)
        history.append(float(((points - centroids[labels]) ** 2).sum()))
        if best is None or history[-1] < best.inertia:
            best = KMeansResult(centroids, labels, history[-1], history)
    return best


def constrained_init(features, track_of, k: int, seed: int = 0, **kmeans_kw):
    """K-means over one random representative per track.

    Every sample inherits the cluster of its track's representative, so all
    tracks start cluster-pure. Returns ``(centroids, labels)``.
    """
    features = np.asarray(features, dtype=np.float64)
    track_of = np.asarray(track_of)
    tracks, inv = np.unique(track_of, return_inverse=True)
    if len(tracks) < k:
        raise ValueError(f"need at least k={k} tracks, got {len(tracks)}")
    pick_rng = np.random.default_rng([seed, 0x7ac])
    reps = np.empty(len(tracks), dtype=np.int64)
    for t in range(len(tracks)):
        members = np.flatnonzero(inv == t)
        reps[t] = members[pick_rng.integers(len(members))] if len(members) > 1 else members[0]
    res = kmeans(features[reps], KMeansConfig(k=k, seed=seed, **kmeans_kw))
    return res.centroids, res.labels[inv]


def recompute_centroids(features, labels, previous) -> np.ndarray:
    """Cluster means; clusters without members keep their previous centroid."""
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    out = np.array(previous, dtype=np.float64, copy=True)
    k = out.shape[0]
    sums = np.zeros_like(out)
    np.add.at(sums, labels, features)
    counts = np.bincount(labels, minlength=k)
    nz = counts > 0
    out[nz] = sums[nz] / counts[nz, None]
    return out


@dataclass
class RebalanceResult:
    centroids: np.ndarray
    labels: np.ndarray
    iterations: int = 0
    capped: bool = False
    small_clusters: List[int] = field(default_factory=list)

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.centroids.shape[0])


def rebalance_small_clusters(
    features, centroids, labels, threshold: int = 20, seed: int = 0, max_iters: Optional[int] = None
) -> RebalanceResult:
    """Empty clusters smaller than ``threshold`` and refill them by splitting.

    Each iteration takes one small cluster ``s``: its samples move to the
    nearest centroid among the clusters that are not small, then the largest
    of those clusters is split in two with 2-means. The larger half keeps the
    old index, the other half takes ``s``. At most ``max_iters`` iterations
    (default: number of clusters) are run; if small clusters remain after
    that, ``capped`` is set and they are listed in ``small_clusters``.
    """
    features = np.asarray(features, dtype=np.float64)
    centroids = np.array(centroids, dtype=np.float64, copy=True)
    labels = np.array(labels, dtype=np.int64, copy=True)
    k = centroids.shape[0]
    cap = k if max_iters is None else max_iters
    rng = np.random.default_rng(seed)
    it = 0
    while True:
        sizes = np.bincount(labels, minlength=k)
        small = np.flatnonzero(sizes < threshold)
        if len(small) == 0:
            return RebalanceResult(centroids, labels, it, False, [])
        if it >= cap:
            log.debug("rebalance cap of %d iterations reached; %d small clusters left", cap, len(small))
            return RebalanceResult(centroids, labels, it, True, small.tolist())
        normal = np.flatnonzero(sizes >= threshold)
        if len(normal) == 0:
            return RebalanceResult(centroids, labels, it, True, small.tolist())
        s = int(small[0])
        members = np.flatnonzero(labels == s)
        if len(members):
            d = _sq_dists(features[members], centroids[normal])
            labels[members] = normal[np.argmin(d, axis=1)]
        sizes = np.bincount(labels, minlength=k)
        # lowest index wins ties between equally large clusters
        big = int(normal[np.argmax(sizes[normal])])
        big_members = np.flatnonzero(labels == big)
        it += 1
        if len(big_members) < 2:
            continue
        sub = kmeans(features[big_members], KMeansConfig(k=2, seed=int(rng.integers(2**31))))
        part = [big_members[sub.labels == 0], big_members[sub.labels == 1]]
        part.sort(key=lambda m: (-len(m), m.mean()))
        labels[part[1]] = s
        centroids[big] = features[part[0]].mean(axis=0)
        centroids[s] = features[part[1]].mean(axis=0)
