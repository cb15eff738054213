"""Class-agnostic track generation from per-frame box proposals.

Proposals are linked across frames by a greedy IoU tracker. Before matching,
the last box of every live track is registered onto the current frame using
the (mean) optical-flow offset, and a Time-To-Live counter lets a track
survive a few frames without a match.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Mapping, Optional, Sequence, Tuple


@dataclass(frozen=True)
class BoundingBox:
    frame_index: int
    x: float
    y: float
    w: float
    h: float
    objectness: float = 1.0

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"box must have positive size, got w={self.w}, h={self.h}")
        if not 0.0 <= self.objectness <= 1.0:
            raise ValueError(f"objectness must lie in [0, 1], got {self.objectness}")
        if self.frame_index < 0:
            raise ValueError(f"frame_index must be >= 0, got {self.frame_index}")

    @property
    def area(self) -> float:
        return self.w * self.h


@dataclass(frozen=True)
class FlowOffset:
    """Mean displacement registering ``frame_index`` onto ``frame_index + 1``."""

    frame_index: int
    dx: float
    dy: float


@dataclass
class Track:
    id: int
    boxes: List[BoundingBox] = field(default_factory=list)
    snippet_id: str = ""

    @property
    def score(self) -> float:
        # S_t: mean objectness of member boxes
        return sum(b.objectness for b in self.boxes) / len(self.boxes)

    def __len__(self) -> int:
        return len(self.boxes)


@dataclass(frozen=True)
class TrackerConfig:
    iou_threshold: float = 0.35
    ttl: int = 3
    min_box_area: float = 10000.0
    min_len: int = 40
    max_len: int = 100
    top_k_tracks: int = 15
    samples_per_track: int = 10
    max_proposals_per_frame: int = 300
    nms_overlap: float = 0.5

    def __post_init__(self):
        errors = []
        if not 0.0 < self.iou_threshold < 1.0:
            errors.append("iou_threshold must lie in (0, 1)")
        if not 0.0 < self.nms_overlap < 1.0:
            errors.append("nms_overlap must lie in (0, 1)")
        if self.ttl < 0:
            errors.append("ttl must be >= 0")
        if not 0 < self.min_len <= self.max_len:
            errors.append("need 0 < min_len <= max_len")
        if self.top_k_tracks < 1:
            errors.append("top_k_tracks must be >= 1")
        if self.samples_per_track < 1:
            errors.append("samples_per_track must be >= 1")
        if self.max_proposals_per_frame < 1:
            errors.append("max_proposals_per_frame must be >= 1")
        if errors:
            raise ValueError("; ".join(errors))


def iou(a: BoundingBox, b: BoundingBox) -> float:
    ix = max(0.0, min(a.x + a.w, b.x + b.w) - max(a.x, b.x))
    iy = max(0.0, min(a.y + a.h, b.y + b.h) - max(a.y, b.y))
    inter = ix * iy
    union = a.area + b.area - inter
    return inter / union


def shift_box(b: BoundingBox, flow: FlowOffset) -> BoundingBox:
    """Translate ``b`` by ``flow``. The frame index is left untouched."""
    if flow.frame_index != b.frame_index:
        raise ValueError(
            f"flow is for frame {flow.frame_index} but box is in frame {b.frame_index}"
        )
    return replace(b, x=b.x + flow.dx, y=b.y + flow.dy)


def nms(proposals: Sequence[BoundingBox], overlap: float = 0.5) -> List[BoundingBox]:
    """Greedy non-maximum suppression by descending objectness."""
    if len({p.frame_index for p in proposals}) > 1:
        raise ValueError("nms expects proposals from a single frame")
    order = sorted(range(len(proposals)), key=lambda i: (-proposals[i].objectness, i))
    kept: List[BoundingBox] = []
    for i in order:
        box = proposals[i]
        if all(iou(box, k) <= overlap for k in kept):
            kept.append(box)
    return kept


def prepare_frame(proposals: Sequence[BoundingBox], cfg: TrackerConfig) -> List[BoundingBox]:
    """Cap the proposal count, run NMS and drop boxes below ``min_box_area``."""
    top = sorted(range(len(proposals)), key=lambda i: (-proposals[i].objectness, i))
    capped = [proposals[i] for i in top[: cfg.max_proposals_per_frame]]
    return [b for b in nms(capped, cfg.nms_overlap) if b.area >= cfg.min_box_area]


@dataclass
class _LiveTrack:
    track: Track
    ref: BoundingBox  # last matched box, flow-shifted up to the current frame
    misses: int = 0


def _flow_lookup(flows) -> Dict[int, Tuple[float, float]]:
    if flows is None:
        return {}
    if isinstance(flows, Mapping):
        return {int(k): (float(v[0]), float(v[1])) for k, v in flows.items()}
    return {f.frame_index: (f.dx, f.dy) for f in flows}


def associate(
    frames: Sequence[Sequence[BoundingBox]],
    flows=None,
    cfg: Optional[TrackerConfig] = None,
    snippet_id: str = "",
    first_track_id: int = 0,
) -> List[Track]:
    """Link per-frame proposals into tracks.

    ``frames[t]`` holds the (already prepared) proposals of frame ``t``; an
    empty list stands for a frame without proposals. ``flows`` is a list of
    :class:`FlowOffset` (or a mapping ``frame_index -> (dx, dy)``); missing
    entries mean zero motion.

    Live tracks are visited in order of descending score (ties: older track
    first) and each grabs the free proposal with the highest IoU against its
    registered last box, provided the IoU exceeds ``cfg.iou_threshold``.
    A track is closed once it has gone more than ``cfg.ttl`` consecutive
    frames without a match. Leftover proposals start new tracks.
    """
    cfg = cfg or TrackerConfig()
    motion = _flow_lookup(flows)
    live: List[_LiveTrack] = []
    done: List[Track] = []
    next_id = first_track_id

    for t, proposals in enumerate(frames):
        for b in proposals:
            if b.frame_index != t:
                raise ValueError(f"box with frame_index {b.frame_index} found in frame slot {t}")
        free = list(range(len(proposals)))
        still_live: List[_LiveTrack] = []
        for lt in sorted(live, key=lambda lt: (-lt.track.score, lt.track.id)):
            best, best_iou = None, -1.0
            for j in free:
                v = iou(lt.ref, proposals[j])
                if v > best_iou:
                    best, best_iou = j, v
            if best is not None and best_iou > cfg.iou_threshold:
                free.remove(best)
                lt.track.boxes.append(proposals[best])
                lt.ref = proposals[best]
                lt.misses = 0
                still_live.append(lt)
            else:
                lt.misses += 1
                if lt.misses > cfg.ttl:
                    done.append(lt.track)
                else:
                    still_live.append(lt)
        for j in free:
            still_live.append(_LiveTrack(Track(next_id, [proposals[j]], snippet_id), proposals[j]))
            next_id += 1

        # register every reference box onto frame t + 1
        dx, dy = motion.get(t, (0.0, 0.0))
        for lt in still_live:
            lt.ref = replace(lt.ref, frame_index=t + 1, x=lt.ref.x + dx, y=lt.ref.y + dy)
        live = still_live

    done.extend(lt.track for lt in live)
    done.sort(key=lambda tr: tr.id)
    return done


def filter_tracks(tracks: Sequence[Track], cfg: Optional[TrackerConfig] = None) -> List[Track]:
    """Keep tracks with ``min_len <= |t| <= max_len``, best ``top_k_tracks`` by score."""
    cfg = cfg or TrackerConfig()
    keep = [t for t in tracks if cfg.min_len <= len(t) <= cfg.max_len]
    keep.sort(key=lambda t: (-t.score, t.id))
    return keep[: cfg.top_k_tracks]


def subsample_indices(length: int, n: int) -> List[int]:
    if length < 1 or n < 1:
        raise ValueError("length and n must be >= 1")
    if n == 1:
        return [0]
    out: List[int] = []
    for i in range(n):
        # round half up, not banker's rounding
        k = int(math.floor(i * (length - 1) / (n - 1) + 0.5))
        if not out or out[-1] != k:
            out.append(k)
    return out


def subsample_track(t: Track, n: int) -> List[BoundingBox]:
    """Pick ``min(n, |t|)`` boxes equally spaced in time (first and last included)."""
    return [t.boxes[k] for k in subsample_indices(len(t), n)]


def generate_tracks(
    proposals: Mapping[str, Sequence[BoundingBox]],
    flows: Optional[Mapping[str, Sequence[FlowOffset]]] = None,
    cfg: Optional[TrackerConfig] = None,
) -> List[Track]:
    """Full pipeline over a set of snippets.

    ``proposals`` maps snippet id to a flat list of raw proposals. Each
    snippet is prepared, associated and filtered independently; track ids are
    unique across the returned list, which follows sorted snippet order.
    """
    cfg = cfg or TrackerConfig()
    flows = flows or {}
    out: List[Track] = []
    next_id = 0
    for sid in sorted(proposals):
        boxes = proposals[sid]
        n_frames = max((b.frame_index for b in boxes), default=-1) + 1
        per_frame: List[List[BoundingBox]] = [[] for _ in range(n_frames)]
        for b in boxes:
            per_frame[b.frame_index].append(b)
        per_frame = [prepare_frame(fr, cfg) for fr in per_frame]
        raw = associate(per_frame, flows.get(sid), cfg, snippet_id=sid, first_track_id=next_id)
        next_id += len(raw)
        out.extend(filter_tracks(raw, cfg))
    return out
