#!/usr/bin/env python3
# What the track-weighted memory update does to one row.
#
# The vanilla update blends a sample's new feature with its own stored row.
# The track-weighted update blends it with a weighted mean of every stored
# row in the sample's track instead, weighting each row by how close it is
# to the new feature relative to the closest one.

import numpy as np

from odct.memory import blend_track, blend_vanilla, l2_normalize, weight_coeffs

rng = np.random.default_rng(0)

# %% a track of five samples drifting around a common direction
base = l2_normalize(rng.standard_normal(8))
track = l2_normalize(base + 0.3 * rng.standard_normal((5, 8)))
f = 2.5 * (base + 0.3 * rng.standard_normal(8))  # raw network output for sample 0

w = weight_coeffs(l2_normalize(f), track)
print("weights (nearest member gets 1):", np.round(w, 3))

# %% both updates at memory momentum 0.5
m = 0.5
van = blend_vanilla(f, track[0], m)
trk = blend_track(f, track, m)
print("cos to track direction, vanilla:", round(float(van @ base), 4))
print("cos to track direction, track  :", round(float(trk @ base), 4))

# %% extreme cases
print("m = 1 keeps only the new feature:", np.allclose(blend_track(f, track, 1.0), l2_normalize(f)))
print("a one-sample track is the vanilla update:",
      np.array_equal(blend_track(f, track[:1], m), blend_vanilla(f, track[0], m)))
