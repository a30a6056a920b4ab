import numpy as np
import pytest

from sim2art.errors import DomainError
from sim2art.featurize import (FeaturizeConfig, Neighborhood,
                               build_neighborhood, farthest_point_sample,
                               featurize_sequence, keypoint_raw_features,
                               normalize_annotation, normalize_sequence)
from sim2art.sequence import PointCloudSequence


def greedy_fps_oracle(points, n_k, seed_index):
    """Independent plain-python greedy FPS used as the reference."""
    chosen = [seed_index]
    n = len(points)
    d2 = [sum((points[i][c] - points[seed_index][c]) ** 2 for c in range(3))
          for i in range(n)]
    while len(chosen) < n_k:
        best, arg = -1.0, 0
        for i in range(n):
            if d2[i] > best:
                best, arg = d2[i], i
        chosen.append(arg)
        for i in range(n):
            nd = sum((points[i][c] - points[arg][c]) ** 2 for c in range(3))
            if nd < d2[i]:
                d2[i] = nd
    return chosen


# --- normalization ---

def test_normalize_unit_cube(laptop_scene):
    cams = laptop_scene.sequence.cameras[:2]
    pts = (np.stack(np.meshgrid(*[np.linspace(-0.5, 0.5, 4)] * 3), axis=-1)
           .reshape(1, -1, 3))
    pts = np.concatenate([pts, pts])
    seq = PointCloudSequence(pts, np.zeros_like(pts), np.zeros_like(pts),
                             np.zeros(pts.shape[:2], dtype=np.int64), cams)
    out, info = normalize_sequence(seq)
    assert abs(info.scale - 0.5) < 1e-12
    assert np.abs(info.centroid).max() < 1e-12
    assert np.all(np.abs(out.points) <= 1.0)


def test_normalize_roundtrip_and_flow_scaling(laptop_scene):
    seq = laptop_scene.sequence
    out, info = normalize_sequence(seq)
    assert np.abs(info.denormalize(out.points) - seq.points).max() < 1e-7
    assert np.abs(out.flow * info.scale - seq.flow).max() < 1e-12
    assert np.all(np.abs(out.points) <= 1.0)


def test_normalize_annotation_keeps_axes(laptop_scene):
    seq, ann = laptop_scene.sequence, laptop_scene.annotation
    _, info = normalize_sequence(seq)
    ann_n = normalize_annotation(ann, info)
    assert np.array_equal(ann_n.axes, ann.axes)
    assert np.array_equal(ann_n.motion, ann.motion)
    movable = ann.joint_types != 2
    assert np.abs(info.denormalize(ann_n.pivots[movable])
                  - ann.pivots[movable]).max() < 1e-9


def test_normalize_degenerate_error(laptop_scene):
    cams = laptop_scene.sequence.cameras[:1]
    pts = np.ones((1, 8, 3))
    seq = PointCloudSequence(pts, np.zeros_like(pts), np.zeros_like(pts),
                             np.zeros((1, 8), dtype=np.int64), cams)
    with pytest.raises(DomainError):
        normalize_sequence(seq)


# --- farthest point sampling ---

def test_fps_single_point():
    pts = np.random.default_rng(0).normal(size=(10, 3))
    assert farthest_point_sample(pts, 1, seed_index=4).tolist() == [4]


def test_fps_square_corners():
    pts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]], dtype=np.float64)
    idx = farthest_point_sample(pts, 2, seed_index=0)
    assert idx.tolist() == [0, 3]  # diagonally opposite corner


def test_fps_matches_bruteforce_oracle():
    rng = np.random.default_rng(42)
    for _ in range(100):
        n = int(rng.integers(2, 11))
        k = int(rng.integers(1, min(n, 4) + 1))
        pts = rng.normal(size=(n, 3))
        seed = int(rng.integers(0, n))
        got = farthest_point_sample(pts, k, seed).tolist()
        want = greedy_fps_oracle(pts.tolist(), k, seed)
        assert got == want


def test_fps_unique_subset(laptop_scene):
    pts = laptop_scene.sequence.points[0]
    idx = farthest_point_sample(pts, 64)
    assert len(set(idx.tolist())) == 64
    assert idx.min() >= 0 and idx.max() < pts.shape[0]


def test_fps_bounds():
    pts = np.zeros((5, 3))
    with pytest.raises(DomainError):
        farthest_point_sample(pts, 6)
    with pytest.raises(DomainError):
        farthest_point_sample(pts, 0)


# --- neighborhoods ---

def _normalized(scene):
    seq, _ = normalize_sequence(scene.sequence)
    return seq


def test_neighborhood_temporal_window(laptop_scene):
    seq = _normalized(laptop_scene)
    nb = build_neighborhood(seq, 2, seq.points[2, 0], r_s=0.3, r_t=0, k_max=64)
    assert np.all(nb.frames == 2)


def test_neighborhood_contains_self(laptop_scene):
    seq = _normalized(laptop_scene)
    for t, i in ((0, 0), (3, 17), (5, 101)):
        nb = build_neighborhood(seq, t, seq.points[t, i], r_s=0.2, r_t=1, k_max=32)
        assert ((nb.frames == t) & (nb.indices == i)).any()


def test_neighborhood_matches_exhaustive_scan(laptop_scene):
    seq = _normalized(laptop_scene)
    T, N = seq.points.shape[:2]
    rng = np.random.default_rng(3)
    r_s, r_t = 0.25, 1
    for _ in range(5):
        t = int(rng.integers(0, T))
        i = int(rng.integers(0, N))
        kp = seq.points[t, i]
        nb = build_neighborhood(seq, t, kp, r_s, r_t, k_max=10_000)
        # brute force over every (t', i)
        want = set()
        for tp in range(T):
            if abs(tp - t) > r_t:
                continue
            for j in range(N):
                if np.sum((seq.points[tp, j] - kp) ** 2) <= r_s * r_s:
                    want.add((tp, j))
        got = set(zip(nb.frames.tolist(), nb.indices.tolist()))
        assert got == want


def test_neighborhood_cap_nearest_first(laptop_scene):
    seq = _normalized(laptop_scene)
    kp = seq.points[1, 5]
    full = build_neighborhood(seq, 1, kp, 0.3, 1, k_max=100_000)
    capped = build_neighborhood(seq, 1, kp, 0.3, 1, k_max=8)
    d_full = np.sort(np.sum((full.points - kp) ** 2, axis=1))
    d_cap = np.sum((capped.points - kp) ** 2, axis=1)
    assert capped.frames.shape[0] == 8
    assert np.allclose(np.sort(d_cap), d_full[:8])


# --- raw keypoint features ---

def eq_style_oracle(keypoint, t, T, frames, points, flows, semfeats):
    """Literal per-neighbor loop, coded independently of the implementation."""
    n = len(frames)
    v_bar = [sum(f[c] for f in flows) / n for c in range(3)]
    phi_bar = [sum(s[c] for s in semfeats) / n for c in range(3)]
    acc = [0.0] * 11
    for j in range(n):
        vec = ([points[j][c] - keypoint[c] for c in range(3)]
               + [frames[j] - t] + v_bar + phi_bar + [t / T])
        for c in range(11):
            acc[c] += vec[c]
    return np.array(acc)


def test_raw_features_singleton_zero_flow():
    nb = Neighborhood(np.array([2]), np.array([0]),
                      np.array([[0.1, 0.2, 0.3]]), np.zeros((1, 3)),
                      np.zeros((1, 3)))
    f = keypoint_raw_features(np.array([0.1, 0.2, 0.3]), 2, 8, nb)
    want = np.zeros(11)
    want[10] = 2 / 8
    assert np.allclose(f, want, atol=1e-15)


def test_raw_features_constant_flow_mean():
    rng = np.random.default_rng(0)
    n = 5
    v = np.array([0.3, -0.1, 0.2])
    nb = Neighborhood(np.full(n, 1), np.arange(n), rng.normal(size=(n, 3)),
                      np.tile(v, (n, 1)), rng.normal(size=(n, 3)))
    f = keypoint_raw_features(np.zeros(3), 1, 4, nb)
    assert np.allclose(f[4:7], n * v, atol=1e-12)


def test_raw_features_match_independent_loop():
    rng = np.random.default_rng(9)
    n = 6
    frames = rng.integers(0, 4, size=n)
    pts = rng.normal(size=(n, 3))
    flows = rng.normal(size=(n, 3))
    sems = rng.normal(size=(n, 3))
    kp = rng.normal(size=3)
    nb = Neighborhood(frames, np.arange(n), pts, flows, sems)
    got = keypoint_raw_features(kp, 2, 4, nb)
    want = eq_style_oracle(kp.tolist(), 2, 4, frames.tolist(), pts.tolist(),
                           flows.tolist(), sems.tolist())
    assert np.abs(got - want).max() < 1e-7


def test_raw_features_permutation_invariant():
    rng = np.random.default_rng(4)
    n = 7
    frames = rng.integers(0, 3, size=n)
    pts, flows, sems = (rng.normal(size=(n, 3)) for _ in range(3))
    kp = rng.normal(size=3)
    perm = rng.permutation(n)
    a = keypoint_raw_features(kp, 1, 3,
                              Neighborhood(frames, np.arange(n), pts, flows, sems))
    b = keypoint_raw_features(kp, 1, 3,
                              Neighborhood(frames[perm], perm, pts[perm],
                                           flows[perm], sems[perm]))
    assert np.abs(a - b).max() < 1e-12


def test_featurize_batch_matches_single_keypoint_op(laptop_scene):
    g = laptop_scene
    cfg = FeaturizeConfig(n_keypoints=32)
    feat = featurize_sequence(g.sequence, g.annotation, cfg)
    seq_n, _ = normalize_sequence(g.sequence)
    rng = np.random.default_rng(0)
    T = seq_n.num_frames
    for _ in range(10):
        t = int(rng.integers(0, T))
        k = int(rng.integers(0, 32))
        nb = build_neighborhood(seq_n, t, feat.keypoints[t, k], cfg.r_s,
                                cfg.r_t, cfg.k_max)
        lit = keypoint_raw_features(feat.keypoints[t, k], t, T, nb)
        assert np.abs(lit - feat.raw_features[t, k]).max() < 1e-7


def test_features_invariant_to_global_rescale(laptop_scene):
    g = laptop_scene
    seq = g.sequence
    scaled = PointCloudSequence(seq.points * 2.0, seq.flow * 2.0, seq.semfeat,
                                seq.labels, seq.cameras)
    cfg = FeaturizeConfig(n_keypoints=32)
    a = featurize_sequence(seq, None, cfg)
    b = featurize_sequence(scaled, None, cfg)
    assert np.abs(a.raw_features - b.raw_features).max() < 1e-6
    assert abs(b.norm.scale - 2.0 * a.norm.scale) < 1e-9


def test_feature_mean_mode(laptop_scene):
    g = laptop_scene
    a = featurize_sequence(g.sequence, None, FeaturizeConfig(n_keypoints=16))
    m = featurize_sequence(g.sequence, None,
                           FeaturizeConfig(n_keypoints=16, feature_mode="mean"))
    # t/T slot: sum mode scales with neighborhood size, mean mode never exceeds 1
    assert np.all(m.raw_features[..., 10] <= 1.0 + 1e-12)
    assert a.raw_features[..., 10].max() > 1.0
