import pytest
from hypothesis import given, strategies as st

from odct.synth import PlantedObject, PlantedScene, gen_proposal_stream, grid_scene
from odct.trackgen import (
    BoundingBox,
    FlowOffset,
    Track,
    TrackerConfig,
    associate,
    filter_tracks,
    generate_tracks,
    iou,
    nms,
    shift_box,
    subsample_indices,
    subsample_track,
)


def box(x, y, w=10, h=10, s=1.0, f=0):
    return BoundingBox(f, x, y, w, h, s)


def test_box_invariants():
    with pytest.raises(ValueError):
        box(0, 0, w=0)
    with pytest.raises(ValueError):
        box(0, 0, s=1.5)


def test_iou_examples():
    assert iou(box(0, 0), box(0, 0)) == 1.0
    assert iou(box(0, 0), box(100, 100)) == 0.0
    # 5x10 overlap = 50, union = 150
    assert iou(box(0, 0), box(5, 0)) == pytest.approx(50 / 150)


boxes = st.builds(
    box,
    st.floats(-50, 50), st.floats(-50, 50),
    st.floats(0.5, 60), st.floats(0.5, 60),
)


@given(boxes, boxes)
def test_iou_symmetric_and_bounded(a, b):
    v = iou(a, b)
    assert v == pytest.approx(iou(b, a), abs=1e-12)
    assert 0.0 <= v <= 1.0 + 1e-12


def test_shift_box():
    b = box(10, 10, 5, 5)
    assert shift_box(b, FlowOffset(0, 0, 0)) == b
    s = shift_box(b, FlowOffset(0, 3, -2))
    assert (s.x, s.y, s.w, s.h, s.frame_index) == (13, 8, 5, 5, 0)
    assert iou(s, box(13, 8, 5, 5)) == 1.0
    with pytest.raises(ValueError):
        shift_box(b, FlowOffset(1, 0, 0))


def test_nms():
    assert nms([]) == []
    a, b = box(0, 0, s=0.9), box(0, 0, s=0.8)
    assert nms([b, a], 0.5) == [a]
    c = box(100, 100, s=0.7)
    assert nms([a, c], 0.5) == [a, c]
    # A and B overlap with IoU 0.6: 10x10 boxes offset by 2.5 px -> 75/125
    A, B, C = box(0, 0, s=0.9), box(2.5, 0, s=0.8), box(200, 0, s=0.7)
    assert iou(A, B) == pytest.approx(0.6)
    assert nms([C, B, A], 0.5) == [A, C]


def static_frames(n, positions, s=0.9, size=10):
    return [[BoundingBox(t, x, y, size, size, s) for x, y in positions] for t in range(n)]


def test_associate_static_object():
    tracks = associate(static_frames(5, [(0, 0)]), cfg=TrackerConfig(iou_threshold=0.35))
    assert len(tracks) == 1 and len(tracks[0]) == 5


def test_associate_ttl_gap():
    frames = [[box(0, 0, f=t)] if t in (0, 1, 2, 7, 8, 9) else [] for t in range(10)]
    tracks = associate(frames, cfg=TrackerConfig(ttl=3))
    assert [len(t) for t in tracks] == [3, 3]


def test_associate_two_objects():
    tracks = associate(static_frames(5, [(0, 0), (500, 500)]))
    assert sorted(len(t) for t in tracks) == [5, 5]
    for t in tracks:
        assert len({(b.x, b.y) for b in t.boxes}) == 1


def test_associate_empty():
    assert associate([]) == []


def test_flow_registration_recovers_fast_motion():
    # 10 px box moving 8 px/frame: IoU of consecutive raw boxes is 2/18 < 0.35
    scene = PlantedScene(n_frames=6, objects=(PlantedObject(0, 0, 10, 10),), camera_motion=(8, 0))
    stream = gen_proposal_stream(scene)
    assert len(associate(stream.frames, None)) == 6
    assert len(associate(stream.frames, stream.flows)) == 1


def test_associate_prefers_highest_iou():
    frames = [[box(0, 0, f=0)], [box(4, 0, f=1), box(1, 0, f=1)]]
    tracks = associate(frames)
    long = [t for t in tracks if len(t) == 2][0]
    assert long.boxes[1].x == 1


@given(st.lists(st.lists(st.tuples(st.integers(0, 6), st.integers(0, 6)), max_size=4), max_size=8),
       st.integers(0, 3))
def test_associate_partition_and_gaps(layout, ttl):
    frames = [[BoundingBox(t, 8.0 * x, 8.0 * y, 12, 12, 0.5) for x, y in fr] for t, fr in enumerate(layout)]
    tracks = associate(frames, cfg=TrackerConfig(ttl=ttl))
    used = [id(b) for t in tracks for b in t.boxes]
    assert len(used) == len(set(used)) == sum(len(fr) for fr in frames)
    for t in tracks:
        idx = [b.frame_index for b in t.boxes]
        assert all(0 < b - a <= ttl + 1 for a, b in zip(idx, idx[1:]))


def make_track(tid, n, s):
    return Track(tid, [BoundingBox(i, 0, 0, 10, 10, s) for i in range(n)])


def test_filter_tracks_length_and_topk():
    cfg = TrackerConfig()
    assert cfg.min_len == 40 and cfg.max_len == 100 and cfg.top_k_tracks == 15
    assert filter_tracks([make_track(0, 39, 0.9)], cfg) == []
    assert filter_tracks([make_track(0, 101, 0.9)], cfg) == []
    many = [make_track(i, 50, 0.02 + i / 25) for i in range(20)]
    kept = filter_tracks(many, cfg)
    assert [t.id for t in kept] == list(range(19, 4, -1))
    two = [make_track(0, 50, 0.5), make_track(1, 50, 0.9)]
    assert [t.id for t in filter_tracks(two, TrackerConfig(top_k_tracks=1))] == [1]


def test_track_score_is_mean_objectness():
    t = Track(0, [box(0, 0, s=0.2), box(0, 0, s=0.6, f=1)])
    assert t.score == pytest.approx(0.4)


def test_subsample():
    t = make_track(0, 10, 0.5)
    assert subsample_track(t, 10) == t.boxes
    assert subsample_indices(100, 10) == [0, 11, 22, 33, 44, 55, 66, 77, 88, 99]
    assert len(subsample_track(make_track(0, 1, 0.5), 10)) == 1
    assert subsample_indices(3, 10) == [0, 1, 2]


@given(st.integers(1, 300), st.integers(1, 30))
def test_subsample_properties(length, n):
    idx = subsample_indices(length, n)
    assert len(idx) == min(n, length)
    assert idx == sorted(set(idx))
    assert idx[0] == 0
    if length >= 2 and n >= 2:
        assert idx[-1] == length - 1


def test_planted_recovery_is_exact():
    scene = grid_scene(6, 20, size=120)
    stream = gen_proposal_stream(scene)
    tracks = associate(stream.frames, stream.flows)
    truth = {}
    for fr, ids in zip(stream.frames, stream.truth):
        for b, k in zip(fr, ids):
            truth.setdefault(k, []).append(b)
    assert sorted([t.boxes for t in tracks], key=lambda bs: bs[0].x + 1e4 * bs[0].y) == \
        sorted(truth.values(), key=lambda bs: bs[0].x + 1e4 * bs[0].y)


def test_generate_tracks_pipeline_filters():
    # 20 objects for 60 frames plus one short-lived object; distractors are too small
    scene = grid_scene(20, 60, size=120, distractors_per_frame=5, distractor_size=(20, 80), seed=3)
    objs = scene.objects + (PlantedObject(0, 2000, 120, 120, stop=30),)
    scene = PlantedScene(60, objs, frame_size=(2500, 2500), distractors_per_frame=5,
                         distractor_size=(20, 80), seed=3)
    stream = gen_proposal_stream(scene)
    tracks = generate_tracks({"s0": stream.flat()}, {"s0": stream.flows})
    assert len(tracks) == 15
    assert all(40 <= len(t) <= 100 for t in tracks)
    assert [t.score for t in tracks] == sorted((t.score for t in tracks), reverse=True)
