"""Acceptance suite: one test per criterion, each at its stated tolerance.

A verdict line per criterion is printed in the pytest terminal summary.
Running this file directly (``python3 tests/test_acceptance.py``) prints the
same lines without pytest.
"""
import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))
from conftest import record  # noqa: E402

from odct import cli, embedder
from odct.clustering import kmeans_all_seeds, rebalance_small_clusters, recompute_centroids
from odct.memory import MemoryBank, blend_vanilla
from odct.metrics import mean_track_entropy
from odct.synth import PlantedObject, PlantedScene, SynthSpec, gen_proposal_stream, gen_tracked_features, grid_scene
from odct.trackgen import BoundingBox, Track, TrackerConfig, associate, filter_tracks
from odct.trainer import VARIANTS, TrainConfig, Trainer, run

SEEDS = range(5)


@pytest.fixture(scope="module")
def default_runs():
    """All three variants on the default dataset for 5 seeds, 30 epochs, C=30."""
    out = {}
    t0 = time.perf_counter()
    for v in VARIANTS:
        out[v] = []
        for s in SEEDS:
            ds = gen_tracked_features(SynthSpec(seed=s))
            out[v].append(run(ds.inputs, ds.track_of, TrainConfig(variant=v, seed=s, epochs=30, k_clusters=30)))
    out["_seconds"] = time.perf_counter() - t0
    return out


def test_c1_constrained_init_zero_entropy():
    t0 = time.perf_counter()
    values = []
    for v in ("odct", "odc_track_init"):
        for s in SEEDS:
            ds = gen_tracked_features(SynthSpec(seed=s))
            bank = Trainer(ds.inputs, ds.track_of, TrainConfig(variant=v, seed=s)).initialize()
            values.append(mean_track_entropy(bank.labels, bank.track_of, bank.n_clusters))
    per_run = (time.perf_counter() - t0) / len(values)
    ok = all(h == 0.0 for h in values) and per_run < 1.0
    record(1, "constrained-init zero entropy", ok,
           f"max H at init = {max(values)!r} over {len(values)} runs, {per_run:.3f} s per init")
    assert ok


def test_c2_entropy_trend(default_runs):
    h = {v: float(np.mean([r.traces[-1].mean_track_entropy for r in default_runs[v]])) for v in VARIANTS}
    secs = default_runs["_seconds"] * 2 / 3  # odc and odct runs only
    ok = h["odct"] < h["odc"] and h["odct"] < 0.5 * h["odc"] and secs < 120
    record(2, "entropy trend", ok,
           f"final mean track entropy odct {h['odct']:.4f} vs odc {h['odc']:.4f} "
           f"(ratio {h['odct'] / h['odc']:.3f}, bar 0.5), odc_track_init {h['odc_track_init']:.4f}")
    assert ok


def test_c3_change_ratio_convergence(default_runs):
    parts, ok = [], default_runs["_seconds"] < 120
    for v in VARIANTS:
        first = float(np.mean([r.traces[0].change_ratio for r in default_runs[v]]))
        last = float(np.mean([r.traces[-1].change_ratio for r in default_runs[v]]))
        good = first >= 0.5 and last < 0.5 * first
        ok = ok and good
        parts.append(f"{v} {first:.3f}->{last:.3f}{'' if good else ' (miss)'}")
    record(3, "change-ratio convergence", ok, "epoch 0 -> final, 5-seed mean: " + ", ".join(parts))
    assert ok


def straight_line_update(f, members, m):
    """The track-weighted update written out with plain Python loops."""
    norm = math.sqrt(sum(x * x for x in f))
    fh = [x / norm for x in f]
    if m == 1.0:
        return fh
    dist = []
    for row in members:
        dist.append(max(math.sqrt(sum((a - b) ** 2 for a, b in zip(fh, row))), 1e-12))
    nearest = min(dist)
    w = [nearest / d for d in dist]
    total = sum(w)
    hist = [sum(w[j] * members[j][k] for j in range(len(members))) / total for k in range(len(f))]
    out = [m * a + (1 - m) * b for a, b in zip(fh, hist)]
    n = math.sqrt(sum(x * x for x in out))
    return [x / n for x in out]


def test_c4_update_algebra_oracle():
    rng = np.random.default_rng(2024)
    worst, exact_m1, bitwise = 0.0, True, True
    for _ in range(1000):
        d = int(rng.integers(2, 9))
        size = int(rng.integers(1, 8))
        feats = rng.standard_normal((size + 3, d))
        feats /= np.linalg.norm(feats, axis=1, keepdims=True)
        track_of = np.array([0] * size + [1, 1, 2])
        bank = MemoryBank(feats.copy(), np.zeros(size + 3, int), feats[:1], track_of)
        i = int(rng.integers(size))
        f = rng.standard_normal(d) * rng.uniform(0.1, 5)
        m = float(rng.uniform(0.01, 1.0))
        got = bank.update_sample(i, f, m, snapshot=feats)
        want = straight_line_update(f.tolist(), feats[:size].tolist(), m)
        worst = max(worst, float(np.abs(got - want).max()))
        one = MemoryBank(feats.copy(), np.zeros(size + 3, int), feats[:1], track_of).update_sample(i, f, 1.0)
        exact_m1 &= np.array_equal(one, f / np.sqrt(np.sum(f * f)))
        # the sample of track 2 is a singleton
        single = MemoryBank(feats.copy(), np.zeros(size + 3, int), feats[:1], track_of).update_sample(size + 2, f, m)
        bitwise &= np.array_equal(single, blend_vanilla(f, feats[size + 2], m))
    ok = worst <= 1e-10 and exact_m1 and bitwise
    record(4, "update algebra oracle", ok,
           f"max abs error {worst:.2e} (tol 1e-10) on 1000 instances, m=1 exact: {exact_m1}, "
           f"singleton bitwise equal: {bitwise}")
    assert ok


def partition_oracle(points):
    m = len(points)
    best = np.inf
    for mask in range(1, 2 ** (m - 1)):
        a = np.array([(mask >> i) & 1 for i in range(m)], bool)
        best = min(best, sum(((points[s] - points[s].mean(0)) ** 2).sum() for s in (a, ~a)))
    return best


def test_c5_kmeans_oracle():
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(50):
        m = int(rng.integers(2, 9))
        P = rng.standard_normal((m, int(rng.integers(1, 5)))) * rng.uniform(0.1, 10)
        worst = max(worst, abs(kmeans_all_seeds(P, 2).inertia - partition_oracle(P)))
    ok = worst <= 1e-9
    record(5, "k-means oracle", ok, f"max |inertia - exhaustive minimum| = {worst:.2e} on 50 instances (tol 1e-9)")
    assert ok


def blob_partition(sizes, rng):
    feats, labels = [], []
    for c, n in enumerate(sizes):
        feats.append(rng.standard_normal((n, 3)) * 0.5 + rng.standard_normal(3) * 4)
        labels += [c] * n
    F, L = np.vstack(feats), np.array(labels)
    return F, recompute_centroids(F, L, np.zeros((len(sizes), 3))), L


def test_c6_rebalance():
    rng = np.random.default_rng(6)
    cases = [[50, 45, 2], [25, 30, 21], [22, 3, 3, 3], [5, 1, 3], [120, 1, 1, 1, 1, 1], [40, 19, 19, 60]]
    cases += [list(rng.integers(1, 80, int(rng.integers(2, 9)))) for _ in range(40)]
    ok, capped = True, 0
    for sizes in cases:
        F, C, L = blob_partition(sizes, rng)
        r = rebalance_small_clusters(F, C, L, threshold=20, seed=int(rng.integers(1000)))
        conserved = r.sizes.sum() == sum(sizes) and len(r.labels) == sum(sizes)
        settled = r.sizes.min() >= 20 if not r.capped else bool(r.small_clusters)
        ok = ok and conserved and settled
        capped += r.capped
    record(6, "small-cluster rebalance", ok,
           f"{len(cases)} partitions, sample count conserved, {len(cases) - capped} settled, {capped} reported cap")
    assert ok


def test_c7_gradient_check():
    worst = 0.0
    for s in range(20):
        rng = np.random.default_rng(s)
        d_in, d_feat, c = (int(x) for x in rng.integers(2, 5, 3))
        state = embedder.init_embedder(d_in, d_feat, c, seed=s, activation=("tanh", "relu", "identity")[s % 3])
        state.b1[:] = rng.standard_normal(d_feat) * 0.3
        X = rng.standard_normal((int(rng.integers(2, 7)), d_in))
        worst = max(worst, embedder.gradient_check(state, X, rng.integers(0, c, len(X))))
    ok = worst < 1e-4
    record(7, "gradient check", ok, f"max relative error {worst:.2e} on 20 instances (tol 1e-4)")
    assert ok


def test_c8_tracker_recovery():
    exact = True
    for n_obj, cam in ((1, (0, 0)), (6, (0, 0)), (9, (7.0, -4.0))):
        stream = gen_proposal_stream(grid_scene(n_obj, 30, camera_motion=cam))
        got = sorted(tuple(b.x for b in t.boxes) for t in associate(stream.frames, stream.flows))
        truth = {}
        for fr, ids in zip(stream.frames, stream.truth):
            for b, k in zip(fr, ids):
                truth.setdefault(k, []).append(b.x)
        exact &= got == sorted(tuple(v) for v in truth.values())

    ttl_ok = True
    for ttl in (1, 2, 3, 5):
        for gap in range(0, ttl + 4):
            ob = PlantedObject(0, 0, 120, 120, dropout=tuple(range(10, 10 + gap)))
            stream = gen_proposal_stream(PlantedScene(30, (ob,)))
            n = len(associate(stream.frames, stream.flows, TrackerConfig(ttl=ttl)))
            ttl_ok &= n == (1 if gap <= ttl else 2)

    def mk(tid, n, s):
        return Track(tid, [BoundingBox(i, 0, 0, 120, 120, s) for i in range(n)])

    cfg = TrackerConfig()
    lengths = [39, 40, 100, 101] + [60] * 20
    kept = filter_tracks([mk(i, n, 0.3 + 0.02 * i) for i, n in enumerate(lengths)], cfg)
    filt_ok = (cfg.min_len, cfg.max_len, cfg.top_k_tracks) == (40, 100, 15) and len(kept) == 15 \
        and all(40 <= len(t) <= 100 for t in kept) and {1, 2}.isdisjoint(t.id for t in kept)
    ok = exact and ttl_ok and filt_ok
    record(8, "tracker recovery", ok,
           f"planted recovery exact: {exact}, TTL boundary counts: {ttl_ok}, filter l=40 L=100 top-15: {filt_ok}")
    assert ok


def test_c9_cli_determinism(tmp_path):
    t0 = time.perf_counter()
    assert cli.main(["synth", "--out", str(tmp_path / "d")]) == 0
    samples = str(tmp_path / "d" / "samples.jsonl")
    for name in ("a", "b"):
        assert cli.main(["train", "--samples", samples, "--seed", "11", "--out", str(tmp_path / name)]) == 0
    a = (tmp_path / "a" / "trace.csv").read_bytes()
    b = (tmp_path / "b" / "trace.csv").read_bytes()
    secs = time.perf_counter() - t0
    ok = a == b and len(a.splitlines()) == 31 and secs < 60
    record(9, "train determinism", ok, f"two default runs, trace CSVs byte-identical: {a == b}, {secs:.1f} s")
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
