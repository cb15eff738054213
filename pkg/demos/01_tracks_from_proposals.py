#!/usr/bin/env python3
# From frame-wise proposals to object tracks.
#
# A scene with planted objects is rendered into per-frame box proposals,
# with a moving camera and random low-objectness clutter. The tracker
# registers each track box with the frame's flow offset and links it to the
# best-overlapping proposal in the next frame. Short and long tracks are
# filtered out and only the best-scoring ones per snippet survive.

import numpy as np

from odct.synth import PlantedObject, PlantedScene, gen_proposal_stream, grid_scene
from odct.trackgen import TrackerConfig, associate, generate_tracks, subsample_track

# %% a small scene: 4 objects, 12 frames, camera panning 70 px per frame
scene = grid_scene(4, 12, size=120, camera_motion=(70.0, 0.0))
stream = gen_proposal_stream(scene)
print("proposals per frame:", [len(f) for f in stream.frames])

# without flow registration the pan breaks every link (IoU 0.26 < 0.35),
# and tracks kept alive by the TTL latch onto the neighbouring object
no_flow = associate(stream.frames)
with_flow = associate(stream.frames, stream.flows)
print("tracks without flow:", len(no_flow), " with flow:", len(with_flow))

# %% the time-to-live counter bridges short dropouts
ttl = TrackerConfig().ttl
for gap in (ttl, ttl + 1):
    ob = PlantedObject(0, 0, 120, 120, dropout=tuple(range(5, 5 + gap)))
    s = gen_proposal_stream(PlantedScene(15, (ob,)))
    print(f"dropout of {gap} frames with ttl={ttl}: {len(associate(s.frames, s.flows))} track(s)")

# %% the full pipeline on a busy snippet
busy = grid_scene(25, 70, size=120, distractors_per_frame=10, distractor_size=(40, 160),
                  objectness_noise=0.05, position_noise=2.0, seed=1)
stream = gen_proposal_stream(busy)
tracks = generate_tracks({"demo": stream.flat()}, {"demo": stream.flows})
print(f"{len(tracks)} tracks kept out of 25 planted objects")
print("lengths:", sorted({len(t) for t in tracks}))
print("scores:", np.round([t.score for t in tracks], 3))

# each kept track contributes 10 evenly spaced boxes as training samples
frames = [b.frame_index for b in subsample_track(tracks[0], 10)]
print("sampled frames of the best track:", frames)
