"""Deterministic synthetic data.

Two generators:

* :func:`gen_tracked_features` - track-structured feature vectors. Class
  means sit on a sphere; every track is a random walk that starts at its
  class mean, mimicking an object slowly changing viewpoint.
* :func:`gen_proposal_stream` - per-frame box proposals with planted moving
  objects, optional dropout frames and low-objectness distractors.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .trackgen import BoundingBox, FlowOffset


@dataclass(frozen=True)
class SynthSpec:
    n_classes: int = 10
    tracks_per_class: int = 5
    samples_per_track: int = 10
    d_in: int = 32
    intra_track_drift: float = 0.5
    class_separation: float = 3.0
    noise_sigma: float = 0.3
    seed: int = 0

    def __post_init__(self):
        for name in ("n_classes", "tracks_per_class", "samples_per_track", "d_in"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not self.class_separation > 0:
            raise ValueError("class_separation must be > 0")
        if self.intra_track_drift < 0:
            raise ValueError("intra_track_drift must be >= 0")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")

    @property
    def n_samples(self) -> int:
        return self.n_classes * self.tracks_per_class * self.samples_per_track


@dataclass
class TrackedDataset:
    inputs: np.ndarray  # N x d_in
    track_of: np.ndarray  # N
    classes: np.ndarray  # N, evaluation only


def gen_tracked_features(spec: SynthSpec) -> TrackedDataset:
    rng = np.random.default_rng(spec.seed)
    d = spec.d_in
    means = rng.standard_normal((spec.n_classes, d))
    means *= spec.class_separation / np.linalg.norm(means, axis=1, keepdims=True)

    n_tracks = spec.n_classes * spec.tracks_per_class
    inputs = np.empty((spec.n_samples, d))
    track_of = np.repeat(np.arange(n_tracks), spec.samples_per_track)
    classes = np.repeat(np.arange(spec.n_classes), spec.tracks_per_class * spec.samples_per_track)
    # step vectors have expected norm ~ intra_track_drift
    steps = rng.standard_normal((n_tracks, spec.samples_per_track, d)) * (spec.intra_track_drift / np.sqrt(d))
    steps[:, 0] = 0.0
    walk = np.cumsum(steps, axis=1)
    noise = rng.standard_normal((n_tracks, spec.samples_per_track, d)) * spec.noise_sigma
    for t in range(n_tracks):
        c = t // spec.tracks_per_class
        sl = slice(t * spec.samples_per_track, (t + 1) * spec.samples_per_track)
        inputs[sl] = means[c] + walk[t] + noise[t]
    return TrackedDataset(inputs, track_of, classes)


def augment(X, sigma: float, rng) -> np.ndarray:
    """Fresh additive Gaussian input noise, the stand-in for image augmentation."""
    return X + rng.standard_normal(np.shape(X)) * sigma


@dataclass(frozen=True)
class PlantedObject:
    x: float
    y: float
    w: float
    h: float
    vx: float = 0.0
    vy: float = 0.0
    start: int = 0
    stop: int = -1  # exclusive; -1 = until the last frame
    dropout: Tuple[int, ...] = ()  # frames where the object emits nothing
    objectness: float = 0.9


@dataclass(frozen=True)
class PlantedScene:
    n_frames: int
    objects: Tuple[PlantedObject, ...] = ()
    frame_size: Tuple[float, float] = (1000.0, 1000.0)
    distractors_per_frame: float = 0.0
    distractor_size: Tuple[float, float] = (110.0, 220.0)
    objectness_noise: float = 0.0
    position_noise: float = 0.0
    camera_motion: Tuple[float, float] = (0.0, 0.0)
    seed: int = 0

    def __post_init__(self):
        if self.n_frames < 1:
            raise ValueError("n_frames must be >= 1")
        if self.distractors_per_frame < 0:
            raise ValueError("distractors_per_frame must be >= 0")


@dataclass
class ProposalStream:
    frames: List[List[BoundingBox]]
    truth: List[List[int]]  # planted object index per proposal, -1 for distractors
    flows: List[FlowOffset] = field(default_factory=list)

    def flat(self) -> List[BoundingBox]:
        return [b for fr in self.frames for b in fr]


def gen_proposal_stream(scene: PlantedScene) -> ProposalStream:
    """Render planted objects (and distractors) into per-frame proposals.

    A global ``camera_motion`` shifts every planted box by ``(dx, dy)`` per
    frame; the matching flow offsets are returned alongside.
    """
    rng = np.random.default_rng(scene.seed)
    frames: List[List[BoundingBox]] = []
    truth: List[List[int]] = []
    cdx, cdy = scene.camera_motion
    for t in range(scene.n_frames):
        boxes, ids = [], []
        for k, ob in enumerate(scene.objects):
            stop = scene.n_frames if ob.stop < 0 else ob.stop
            if not ob.start <= t < stop or t in ob.dropout:
                continue
            x = ob.x + (ob.vx + cdx) * t
            y = ob.y + (ob.vy + cdy) * t
            if scene.position_noise:
                x += rng.normal(0, scene.position_noise)
                y += rng.normal(0, scene.position_noise)
            s = ob.objectness
            if scene.objectness_noise:
                s = float(np.clip(s + rng.normal(0, scene.objectness_noise), 0.0, 1.0))
            boxes.append(BoundingBox(t, float(x), float(y), ob.w, ob.h, s))
            ids.append(k)
        n_dis = rng.poisson(scene.distractors_per_frame) if scene.distractors_per_frame else 0
        lo, hi = scene.distractor_size
        for _ in range(n_dis):
            w, h = rng.uniform(lo, hi, size=2)
            x = rng.uniform(0, scene.frame_size[0] - w)
            y = rng.uniform(0, scene.frame_size[1] - h)
            boxes.append(BoundingBox(t, float(x), float(y), float(w), float(h), float(rng.uniform(0.0, 0.3))))
            ids.append(-1)
        frames.append(boxes)
        truth.append(ids)
    flows = [FlowOffset(t, cdx, cdy) for t in range(scene.n_frames - 1)]
    return ProposalStream(frames, truth, flows)


def grid_scene(n_objects: int, n_frames: int, size: float = 120.0, spacing: float = 300.0, **kw) -> PlantedScene:
    """Non-overlapping static objects laid out on a grid."""
    cols = int(np.ceil(np.sqrt(n_objects)))
    objs = []
    for k in range(n_objects):
        r, c = divmod(k, cols)
        objs.append(PlantedObject(x=c * spacing, y=r * spacing, w=size, h=size, objectness=0.5 + 0.4 * k / max(n_objects, 1)))
    extent = cols * spacing + size
    return PlantedScene(n_frames=n_frames, objects=tuple(objs), frame_size=(extent, extent), **kw)
