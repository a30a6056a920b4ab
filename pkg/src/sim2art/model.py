"""The trainable network and its checkpoint format.

Pipeline: raw 11-d keypoint descriptors -> temporal-conv encoder -> frame
positional encoding -> video-level self-attention over all T*N_k tokens ->
inverse-square-distance propagation to the original points -> three heads
(per-point part distribution against learnable queries, per-part joint
parameters, per-part-per-frame motion amounts).
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
import struct
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn

from .errors import FormatError, NumericError
from .featurize import RAW_FEATURE_DIM

CKPT_MAGIC = b"S2ARTCKP"
CKPT_VERSION = 1


@dataclass
class ModelConfig:
    d_model: int = 512
    num_parts: int = 20       # learnable part queries (M)
    pe_bands: int = 6         # frame encoding uses bands+1 sin/cos pairs
    attn_layers: int = 2
    attn_heads: int = 4
    ff_width: int = 1024
    k_prop: int = 3           # keypoint neighbors per point during propagation
    enc_conv_width: int = 64
    enc_hidden: int = 256
    head_hidden: int = 256
    no_gamma: bool = False    # ablation: zero the frame positional encoding

    def __post_init__(self):
        if self.d_model % self.attn_heads != 0:
            raise ValueError("d_model must be divisible by attn_heads")

    @classmethod
    def small(cls, **kw) -> "ModelConfig":
        """Desk-scale default: same architecture, reduced widths."""
        base = dict(d_model=128, ff_width=256, enc_conv_width=32,
                    enc_hidden=128, head_hidden=128)
        base.update(kw)
        return cls(**base)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


@dataclass
class PredictionBundle:
    """Per-sequence predictions; see validate() for the invariants."""

    part_dist: torch.Tensor    # (T, N, M) rows on the simplex
    type_logits: torch.Tensor  # (M, 3) revolute / prismatic / static
    rot_axis: torch.Tensor     # (M, 3) unit
    pivot: torch.Tensor        # (M, 3) normalized coordinates
    trans_axis: torch.Tensor   # (M, 3) unit
    motion: torch.Tensor       # (M, T) degrees or centimeters by predicted type

    def validate(self, tol: float = 1e-5):
        rows = self.part_dist.sum(dim=-1)
        if not torch.all((rows - 1.0).abs() <= tol):
            raise NumericError("part distribution rows do not sum to 1")
        for name in ("rot_axis", "trans_axis"):
            n = getattr(self, name).norm(dim=-1)
            if not torch.all((n - 1.0).abs() <= tol):
                raise NumericError(f"{name} rows are not unit length")
        return self

    def detach_numpy(self) -> dict:
        return {f.name: getattr(self, f.name).detach().cpu().numpy()
                for f in dataclasses.fields(self)}


def frame_encoding(t_norm: torch.Tensor, bands: int) -> torch.Tensor:
    """Sinusoidal encoding of normalized frame time, [sin, cos] per octave."""
    k = torch.arange(bands + 1, dtype=t_norm.dtype, device=t_norm.device)
    ang = (2.0 ** k) * math.pi * t_norm[..., None]
    return torch.stack([torch.sin(ang), torch.cos(ang)], dim=-1).flatten(-2)


def propagate_to_points(keypoint_feats: torch.Tensor, keypoints: torch.Tensor,
                        points: torch.Tensor, k_prop: int,
                        eps: float = 1e-8) -> torch.Tensor:
    """Inverse-square-distance interpolation from same-frame keypoints.

    Shapes: feats (B, T, K, D), keypoints (B, T, K, 3), points (B, T, N, 3)
    -> (B, T, N, D).  Distances are clamped below at ``eps``.
    """
    B, T, K, D = keypoint_feats.shape
    N = points.shape[2]
    k = min(k_prop, K)
    d2 = ((points.unsqueeze(3) - keypoints.unsqueeze(2)) ** 2).sum(-1)  # B,T,N,K
    nd2, ni = torch.topk(d2, k, dim=-1, largest=False)
    w = 1.0 / torch.sqrt(nd2).clamp_min(eps) ** 2                       # B,T,N,k
    flat = keypoint_feats.reshape(B * T * K, D)
    offs = (torch.arange(B * T, device=ni.device) * K).view(B, T, 1, 1)
    nf = flat[(ni + offs).reshape(-1)].view(B, T, N, k, D)
    return (w.unsqueeze(-1) * nf).sum(dim=3) / w.sum(dim=-1, keepdim=True)


def part_distributions(point_feats: torch.Tensor, queries: torch.Tensor) -> torch.Tensor:
    """Softmax over learnable part queries: (..., D) x (M, D) -> (..., M)."""
    return torch.softmax(point_feats @ queries.T, dim=-1)


def aggregate_part_features(point_feats: torch.Tensor, dist: torch.Tensor,
                            eps: float = 1e-8) -> torch.Tensor:
    """Distribution-weighted mean over all (t, i): -> (B, M, D)."""
    num = torch.einsum("btnm,btnd->bmd", dist, point_feats)
    den = dist.sum(dim=(1, 2)).clamp_min(eps)
    return num / den.unsqueeze(-1)


def aggregate_motion_features(point_feats: torch.Tensor, dist: torch.Tensor,
                              eps: float = 1e-8) -> torch.Tensor:
    """Per-frame distribution-weighted mean: -> (B, M, T, D)."""
    num = torch.einsum("btnm,btnd->bmtd", dist, point_feats)
    den = dist.sum(dim=2).permute(0, 2, 1).clamp_min(eps)
    return num / den.unsqueeze(-1)


def _normalize_rows(x: torch.Tensor, eps: float = 1e-8) -> torch.Tensor:
    return x / x.norm(dim=-1, keepdim=True).clamp_min(eps)


class TemporalConvEncoder(nn.Module):
    """Two temporal convolutions along each keypoint slot's frame axis, then an MLP."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        w = cfg.enc_conv_width
        self.conv1 = nn.Conv1d(RAW_FEATURE_DIM, w, kernel_size=3, padding=1)
        self.conv2 = nn.Conv1d(w, w, kernel_size=3, padding=1)
        self.act = nn.GELU()
        self.mlp = nn.Sequential(nn.Linear(w, cfg.enc_hidden), nn.GELU(),
                                 nn.Linear(cfg.enc_hidden, cfg.d_model))

    def forward(self, raw: torch.Tensor) -> torch.Tensor:
        B, T, K, C = raw.shape
        x = raw.permute(0, 2, 3, 1).reshape(B * K, C, T)
        x = self.act(self.conv1(x))
        x = self.act(self.conv2(x))
        x = x.reshape(B, K, -1, T).permute(0, 3, 1, 2)
        return self.mlp(x)


class SelfAttentionBlock(nn.Module):
    """Pre-norm multi-head self-attention + feed-forward, both residual."""

    def __init__(self, d: int, heads: int, ff: int):
        super().__init__()
        self.heads = heads
        self.ln1 = nn.LayerNorm(d)
        self.ln2 = nn.LayerNorm(d)
        self.qkv = nn.Linear(d, 3 * d)
        self.proj = nn.Linear(d, d)
        self.ff = nn.Sequential(nn.Linear(d, ff), nn.GELU(), nn.Linear(ff, d))

    def forward(self, x: torch.Tensor, need_weights: bool = False):
        B, S, D = x.shape
        h, dh = self.heads, D // self.heads
        q, k, v = self.qkv(self.ln1(x)).chunk(3, dim=-1)
        q = q.view(B, S, h, dh).transpose(1, 2)
        k = k.view(B, S, h, dh).transpose(1, 2)
        v = v.view(B, S, h, dh).transpose(1, 2)
        att = torch.softmax(q @ k.transpose(-1, -2) / math.sqrt(dh), dim=-1)
        y = (att @ v).transpose(1, 2).reshape(B, S, D)
        x = x + self.proj(y)
        x = x + self.ff(self.ln2(x))
        return (x, att) if need_weights else (x, None)


class ArticulationNet(nn.Module):
    """Encoder + decoder + heads; see the module docstring for the data flow."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        d = cfg.d_model
        self.encoder = TemporalConvEncoder(cfg)
        gamma_dim = 2 * (cfg.pe_bands + 1)
        self.time_proj = nn.Linear(d + gamma_dim, d)
        self.blocks = nn.ModuleList(
            SelfAttentionBlock(d, cfg.attn_heads, cfg.ff_width)
            for _ in range(cfg.attn_layers))
        self.queries = nn.Parameter(torch.randn(cfg.num_parts, d) / math.sqrt(d))
        self.joint_trunk = nn.Sequential(nn.Linear(d, cfg.head_hidden), nn.GELU())
        self.type_head = nn.Linear(cfg.head_hidden, 3)
        self.rot_axis_head = nn.Linear(cfg.head_hidden, 3)
        self.pivot_head = nn.Linear(cfg.head_hidden, 3)
        self.trans_axis_head = nn.Linear(cfg.head_hidden, 3)
        self.motion_mlp = nn.Sequential(nn.Linear(d, cfg.head_hidden), nn.GELU(),
                                        nn.Linear(cfg.head_hidden, 1))

    @property
    def num_parameters(self) -> int:
        return sum(p.numel() for p in self.parameters())

    def encode(self, raw: torch.Tensor) -> torch.Tensor:
        if not torch.isfinite(raw).all():
            raise NumericError("non-finite encoder input")
        return self.encoder(raw)

    def add_time_encoding(self, feats: torch.Tensor) -> torch.Tensor:
        """Concatenate the frame encoding of t/T and project back to d_model."""
        B, T, K, D = feats.shape
        t_norm = torch.arange(T, dtype=feats.dtype, device=feats.device) / T
        gamma = frame_encoding(t_norm, self.cfg.pe_bands)
        if self.cfg.no_gamma:
            gamma = torch.zeros_like(gamma)
        gamma = gamma.view(1, T, 1, -1).expand(B, T, K, gamma.shape[-1])
        return self.time_proj(torch.cat([feats, gamma], dim=-1))

    def video_self_attention(self, tokens: torch.Tensor,
                             need_weights: bool = False):
        weights = []
        x = tokens
        for blk in self.blocks:
            x, att = blk(x, need_weights)
            if need_weights:
                weights.append(att)
        return (x, weights) if need_weights else x

    def joint_param_heads(self, part_feats: torch.Tensor):
        h = self.joint_trunk(part_feats)
        return (self.type_head(h), _normalize_rows(self.rot_axis_head(h)),
                self.pivot_head(h), _normalize_rows(self.trans_axis_head(h)))

    def forward(self, raw: torch.Tensor, keypoints: torch.Tensor,
                points: torch.Tensor) -> list:
        """Batched forward; returns one validated PredictionBundle per sequence."""
        B, T, K, _ = raw.shape
        x = self.encode(raw)
        x = self.add_time_encoding(x)
        x = self.video_self_attention(x.reshape(B, T * K, -1))
        x = x.reshape(B, T, K, -1)
        f_pts = propagate_to_points(x, keypoints, points, self.cfg.k_prop)
        dist = part_distributions(f_pts, self.queries)
        f_part = aggregate_part_features(f_pts, dist)
        z, rot_axis, pivot, trans_axis = self.joint_param_heads(f_part)
        f_motion = aggregate_motion_features(f_pts, dist)
        motion = self.motion_mlp(f_motion).squeeze(-1)
        return [PredictionBundle(dist[b], z[b], rot_axis[b], pivot[b],
                                 trans_axis[b], motion[b]).validate()
                for b in range(B)]

    def forward_single(self, raw, keypoints, points) -> PredictionBundle:
        return self.forward(raw[None], keypoints[None], points[None])[0]


def decode_motion(bundle: PredictionBundle) -> torch.Tensor:
    """Reported motion: rows of parts predicted static are zeroed."""
    pred_type = bundle.type_logits.argmax(dim=-1)
    return torch.where((pred_type == 2).unsqueeze(-1),
                       torch.zeros_like(bundle.motion), bundle.motion)


# --- checkpoint container: JSON header + named little-endian float32 blobs ---

def save_checkpoint(path, model: ArticulationNet, extra: dict | None = None,
                    extra_arrays: dict | None = None):
    """Weights (and optional named extras) in a single portable binary file."""
    arrays = {name: t.detach().cpu().numpy().astype("<f4")
              for name, t in model.state_dict().items()}
    if extra_arrays:
        arrays.update({k: np.asarray(v).astype("<f4") for k, v in extra_arrays.items()})
    header = {
        "version": CKPT_VERSION,
        "config": model.cfg.to_dict(),
        "arrays": [{"name": n, "shape": list(a.shape), "dtype": "float32"}
                   for n, a in arrays.items()],
        "extra": extra or {},
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CKPT_MAGIC)
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for a in arrays.values():
            f.write(a.tobytes())


def read_checkpoint(path):
    """Returns (config dict, {name: float32 array}, extra dict)."""
    if not os.path.isfile(path):
        raise FormatError(f"checkpoint {path} does not exist")
    with open(path, "rb") as f:
        magic = f.read(8)
        if magic != CKPT_MAGIC:
            raise FormatError(f"bad checkpoint magic {magic!r}")
        (hlen,) = struct.unpack("<I", f.read(4))
        header = json.loads(f.read(hlen).decode("utf-8"))
        if header.get("version") != CKPT_VERSION:
            raise FormatError(f"unsupported checkpoint version {header.get('version')}")
        arrays = {}
        for meta in header["arrays"]:
            shape = tuple(meta["shape"])
            count = int(np.prod(shape)) if shape else 1
            buf = f.read(4 * count)
            if len(buf) != 4 * count:
                raise FormatError(f"truncated checkpoint array {meta['name']!r}")
            arrays[meta["name"]] = np.frombuffer(buf, dtype="<f4").reshape(shape)
    return header["config"], arrays, header["extra"]


def load_model(path, dtype=torch.float32) -> tuple:
    """Rebuild a model from a checkpoint; returns (model, extra, leftover arrays)."""
    config, arrays, extra = read_checkpoint(path)
    model = ArticulationNet(ModelConfig.from_dict(config))
    state = {}
    leftovers = {}
    wanted = set(model.state_dict().keys())
    for name, arr in arrays.items():
        if name in wanted:
            state[name] = torch.from_numpy(arr.copy()).to(dtype)
        else:
            leftovers[name] = arr
    missing = wanted - set(state.keys())
    if missing:
        raise FormatError(f"checkpoint missing arrays: {sorted(missing)}")
    model.load_state_dict(state)
    model.to(dtype)
    return model, extra, leftovers
