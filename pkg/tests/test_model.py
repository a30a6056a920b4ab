import numpy as np
import pytest
import torch

from sim2art.errors import NumericError
from sim2art.model import (ArticulationNet, ModelConfig, PredictionBundle,
                           aggregate_motion_features, aggregate_part_features,
                           decode_motion, frame_encoding, load_model,
                           part_distributions, propagate_to_points,
                           read_checkpoint, save_checkpoint)

TINY = dict(d_model=32, num_parts=5, attn_heads=4, ff_width=48,
            enc_conv_width=8, enc_hidden=16, head_hidden=16)


def tiny_model(seed=0, dtype=torch.float64, **kw):
    torch.manual_seed(seed)
    cfg = ModelConfig(**{**TINY, **kw})
    return ArticulationNet(cfg).to(dtype)


def tiny_inputs(seed=0, B=1, T=4, K=8, N=30, dtype=torch.float64):
    g = torch.Generator().manual_seed(seed)
    raw = torch.randn(B, T, K, 11, generator=g, dtype=dtype)
    kps = torch.rand(B, T, K, 3, generator=g, dtype=dtype) * 2 - 1
    pts = torch.rand(B, T, N, 3, generator=g, dtype=dtype) * 2 - 1
    return raw, kps, pts


# --- encoder ---

def test_encode_zero_weights_zero_output():
    m = tiny_model()
    with torch.no_grad():
        for p in m.encoder.parameters():
            p.zero_()
    raw, _, _ = tiny_inputs()
    assert torch.all(m.encode(raw) == 0.0)


def test_encode_output_shape():
    m = tiny_model()
    for T, K in ((3, 5), (6, 2)):
        raw = torch.randn(2, T, K, 11, dtype=torch.float64)
        assert m.encode(raw).shape == (2, T, K, 32)


def test_encode_rejects_nonfinite():
    m = tiny_model()
    raw, _, _ = tiny_inputs()
    raw[0, 0, 0, 0] = float("nan")
    with pytest.raises(NumericError):
        m.encode(raw)


def test_encode_gradient_matches_finite_differences():
    m = tiny_model(seed=3)
    raw, _, _ = tiny_inputs(seed=3)
    probe = torch.randn(32, dtype=torch.float64,
                        generator=torch.Generator().manual_seed(1))

    def scalar():
        return (m.encode(raw)[0, 1, 2] * probe).sum()

    w = m.encoder.conv1.weight
    scalar().backward()
    gen = np.random.default_rng(0)
    h = 1e-4
    for _ in range(5):
        i = tuple(gen.integers(0, s) for s in w.shape)
        with torch.no_grad():
            orig = w[i].item()
            w[i] = orig + h
            hi = scalar().item()
            w[i] = orig - h
            lo = scalar().item()
            w[i] = orig
        fd = (hi - lo) / (2 * h)
        ad = w.grad[i].item()
        assert abs(fd - ad) / max(abs(fd), abs(ad), 1e-8) < 1e-4


# --- time encoding ---

def test_frame_encoding_at_zero():
    g = frame_encoding(torch.zeros(1, dtype=torch.float64), bands=6)[0]
    assert g.shape == (14,)
    assert torch.allclose(g[0::2], torch.zeros(7, dtype=torch.float64))
    assert torch.allclose(g[1::2], torch.ones(7, dtype=torch.float64))


def test_frame_encoding_bounded_and_distinct():
    t = torch.linspace(0.0, 0.99, 100, dtype=torch.float64)
    g = frame_encoding(t, bands=6)
    assert g.abs().max() <= 1.0 + 1e-12
    for i in range(100):
        for j in range(i + 1, 100):
            assert not torch.allclose(g[i], g[j], atol=1e-9)


def test_add_time_encoding_width():
    m = tiny_model()
    x = torch.randn(1, 4, 8, 32, dtype=torch.float64)
    assert m.add_time_encoding(x).shape == (1, 4, 8, 32)


# --- attention ---

def test_attention_single_token():
    m = tiny_model(seed=1)
    x = torch.randn(1, 1, 32, dtype=torch.float64)
    out, weights = m.video_self_attention(x, need_weights=True)
    assert out.shape == (1, 1, 32)
    for w in weights:
        assert torch.allclose(w, torch.ones_like(w))


def test_attention_rows_sum_to_one():
    m = tiny_model(seed=2)
    x = torch.randn(2, 17, 32, dtype=torch.float64)
    _, weights = m.video_self_attention(x, need_weights=True)
    for w in weights:
        assert torch.allclose(w.sum(dim=-1), torch.ones_like(w.sum(dim=-1)),
                              atol=1e-6)


def test_attention_permutation_equivariant():
    m = tiny_model(seed=4)
    x = torch.randn(1, 12, 32, dtype=torch.float64)
    perm = torch.randperm(12, generator=torch.Generator().manual_seed(0))
    a = m.video_self_attention(x)
    b = m.video_self_attention(x[:, perm])
    assert torch.allclose(a[:, perm], b, atol=1e-5)


# --- propagation ---

def test_propagation_coincident_point_copies_keypoint():
    feats = torch.randn(1, 1, 4, 8, dtype=torch.float64)
    kps = torch.rand(1, 1, 4, 3, dtype=torch.float64)
    pts = kps[:, :, 2:3, :].clone()  # exactly on keypoint 2
    out = propagate_to_points(feats, kps, pts, k_prop=3)
    assert torch.allclose(out[0, 0, 0], feats[0, 0, 2], atol=1e-4)


def test_propagation_k1_nearest():
    feats = torch.randn(1, 1, 5, 8, dtype=torch.float64)
    kps = torch.linspace(0, 4, 5, dtype=torch.float64)[None, None, :, None] \
        .expand(1, 1, 5, 3).contiguous()
    pts = torch.full((1, 1, 1, 3), 3.1, dtype=torch.float64)
    out = propagate_to_points(feats, kps, pts, k_prop=1)
    assert torch.allclose(out[0, 0, 0], feats[0, 0, 3])


def test_propagation_equidistant_mean():
    feats = torch.randn(1, 1, 2, 8, dtype=torch.float64)
    kps = torch.tensor([[[[-1.0, 0, 0], [1.0, 0, 0]]]], dtype=torch.float64)
    pts = torch.zeros(1, 1, 1, 3, dtype=torch.float64)
    out = propagate_to_points(feats, kps, pts, k_prop=2)
    assert torch.allclose(out[0, 0, 0], feats[0, 0].mean(dim=0), atol=1e-12)


# --- heads ---

def test_part_distributions_uniform_for_identical_queries():
    f = torch.randn(1, 2, 7, 16, dtype=torch.float64)
    q = torch.randn(1, 16, dtype=torch.float64).expand(5, 16)
    d = part_distributions(f, q)
    assert torch.allclose(d, torch.full_like(d, 1 / 5), atol=1e-12)
    assert torch.allclose(d.sum(-1), torch.ones(1, 2, 7, dtype=torch.float64),
                          atol=1e-6)


def test_part_distributions_shift_invariant():
    f = torch.randn(1, 2, 7, 16, dtype=torch.float64)
    q = torch.randn(5, 16, dtype=torch.float64)
    base = part_distributions(f, q)
    # adding a constant vector c to every point feature shifts all logits
    # by c . q_m; shifting every logit by the SAME constant leaves softmax
    # unchanged, so craft a rank-1 shift identical across queries
    logits = f @ q.T + 3.21
    shifted = torch.softmax(logits, dim=-1)
    assert torch.allclose(base, shifted, atol=1e-6)


def test_aggregate_one_hot_selects_point():
    f = torch.randn(1, 2, 4, 8, dtype=torch.float64)
    d = torch.zeros(1, 2, 4, 3, dtype=torch.float64)
    d[0, 1, 2, 0] = 1.0
    agg = aggregate_part_features(f, d)
    assert torch.allclose(agg[0, 0], f[0, 1, 2], atol=1e-9)


def test_aggregate_convex_hull_envelope():
    g = torch.Generator().manual_seed(0)
    f = torch.rand(1, 3, 9, 8, generator=g, dtype=torch.float64)
    d = torch.softmax(torch.randn(1, 3, 9, 4, generator=g, dtype=torch.float64),
                      dim=-1)
    agg = aggregate_part_features(f, d)
    lo, hi = f.amin(dim=(1, 2)), f.amax(dim=(1, 2))
    assert torch.all(agg >= lo - 1e-9) and torch.all(agg <= hi + 1e-9)


def test_aggregate_constant_features():
    c = torch.randn(8, dtype=torch.float64)
    f = c.expand(1, 2, 5, 8).contiguous()
    d = torch.softmax(torch.randn(1, 2, 5, 3, dtype=torch.float64), dim=-1)
    agg = aggregate_part_features(f, d)
    assert torch.allclose(agg, c.expand(1, 3, 8), atol=1e-9)


def test_joint_heads_shapes_and_unit_norm():
    m = tiny_model(seed=5)
    f = torch.randn(1, 5, 32, dtype=torch.float64)
    z, ra, pv, ta = m.joint_param_heads(f)
    assert z.shape == (1, 5, 3) and ra.shape == (1, 5, 3)
    assert pv.shape == (1, 5, 3) and ta.shape == (1, 5, 3)
    assert torch.allclose(ra.norm(dim=-1), torch.ones(1, 5, dtype=torch.float64),
                          atol=1e-5)
    assert torch.allclose(ta.norm(dim=-1), torch.ones(1, 5, dtype=torch.float64),
                          atol=1e-5)


def test_axis_normalization_gradient_finite_differences():
    torch.manual_seed(0)
    x = torch.randn(3, dtype=torch.float64, requires_grad=True)
    y = (x / x.norm().clamp_min(1e-8))
    probe = torch.tensor([0.3, -0.7, 0.2], dtype=torch.float64)
    (y * probe).sum().backward()
    h = 1e-4
    for i in range(3):
        xp = x.detach().clone()
        xp[i] += h
        hi = ((xp / xp.norm().clamp_min(1e-8)) * probe).sum().item()
        xm = x.detach().clone()
        xm[i] -= h
        lo = ((xm / xm.norm().clamp_min(1e-8)) * probe).sum().item()
        fd = (hi - lo) / (2 * h)
        ad = x.grad[i].item()
        assert abs(fd - ad) / max(abs(fd), abs(ad), 1e-8) < 1e-4


def test_motion_aggregation_one_hot():
    f = torch.randn(1, 3, 6, 8, dtype=torch.float64)
    d = torch.zeros(1, 3, 6, 2, dtype=torch.float64)
    d[0, :, 4, 1] = 1.0
    agg = aggregate_motion_features(f, d)
    assert agg.shape == (1, 2, 3, 8)
    for t in range(3):
        assert torch.allclose(agg[0, 1, t], f[0, t, 4], atol=1e-9)


def test_motion_head_zero_weights_outputs_bias():
    m = tiny_model(seed=6)
    with torch.no_grad():
        m.motion_mlp[2].weight.zero_()
        m.motion_mlp[2].bias.fill_(0.37)
    raw, kps, pts = tiny_inputs(seed=6)
    bundle = m.forward_single(raw[0], kps[0], pts[0])
    assert torch.allclose(bundle.motion,
                          torch.full_like(bundle.motion, 0.37), atol=1e-12)


# --- forward ---

def test_forward_bundle_invariants_and_shapes():
    m = tiny_model(seed=7)
    raw, kps, pts = tiny_inputs(seed=7, B=2)
    bundles = m(raw, kps, pts)
    assert len(bundles) == 2
    b = bundles[0]
    assert b.part_dist.shape == (4, 30, 5)
    assert b.motion.shape == (5, 4)
    b.validate()


def test_forward_deterministic():
    m = tiny_model(seed=8)
    raw, kps, pts = tiny_inputs(seed=8)
    a = m.forward_single(raw[0], kps[0], pts[0])
    b = m.forward_single(raw[0], kps[0], pts[0])
    for name in ("part_dist", "type_logits", "rot_axis", "pivot", "trans_axis",
                 "motion"):
        assert torch.equal(getattr(a, name), getattr(b, name))


def test_forward_under_ablations():
    from sim2art.featurize import apply_input_ablations
    raw, kps, pts = tiny_inputs(seed=9)
    raw_np = raw.numpy()
    for flags in ({"no_flow": True}, {"no_semfeat": True}, {"no_tbar": True}):
        ablated = torch.from_numpy(apply_input_ablations(raw_np, **flags))
        m = tiny_model(seed=9)
        m.forward_single(ablated[0], kps[0], pts[0]).validate()
    m = tiny_model(seed=9, no_gamma=True)
    m.forward_single(raw[0], kps[0], pts[0]).validate()


def test_decode_motion_zeroes_static_parts():
    motion = torch.ones(3, 4)
    logits = torch.zeros(3, 3)
    logits[1, 2] = 5.0  # part 1 predicted static
    b = PredictionBundle(torch.full((1, 1, 3), 1 / 3), logits,
                         torch.eye(3), torch.zeros(3, 3), torch.eye(3), motion)
    out = decode_motion(b)
    assert torch.all(out[1] == 0.0) and torch.all(out[0] == 1.0)


def test_default_config_under_parameter_budget():
    m = ArticulationNet(ModelConfig())
    assert m.num_parameters < 5_000_000
    small = ArticulationNet(ModelConfig.small())
    assert small.num_parameters < 5_000_000


# --- checkpoints ---

def test_checkpoint_roundtrip(tmp_path):
    m = tiny_model(seed=10, dtype=torch.float32)
    path = tmp_path / "ckpt.bin"
    save_checkpoint(path, m, extra={"step": 3},
                    extra_arrays={"misc": np.arange(4, dtype=np.float32)})
    config, arrays, extra = read_checkpoint(path)
    assert extra["step"] == 3
    assert np.array_equal(arrays["misc"], np.arange(4, dtype=np.float32))
    m2, extra2, leftovers = load_model(path)
    assert "misc" in leftovers
    for (n1, p1), (n2, p2) in zip(m.state_dict().items(), m2.state_dict().items()):
        assert n1 == n2 and torch.equal(p1, p2)
    raw, kps, pts = tiny_inputs(seed=10, dtype=torch.float32)
    a = m.forward_single(raw[0], kps[0], pts[0])
    b = m2.forward_single(raw[0], kps[0], pts[0])
    assert torch.equal(a.part_dist, b.part_dist)


def test_checkpoint_bad_magic(tmp_path):
    from sim2art.errors import FormatError
    path = tmp_path / "bad.bin"
    path.write_bytes(b"NOTACKPT" + b"\x00" * 16)
    with pytest.raises(FormatError):
        read_checkpoint(path)
