"""From raw sequences to model inputs.

Normalizes a sequence into [-1, 1] with a single isotropic scale (so axis
directions and angles survive), picks farthest-point keypoints per frame,
gathers spatio-temporal neighborhoods and reduces each to the 11-d raw
keypoint descriptor consumed by the encoder:

    [offset (3) | frame offset (1) | mean flow (3) | mean semantic (3) | t/T (1)]

summed over the neighborhood (a mean-reduced variant sits behind
``feature_mode`` for ablations).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DomainError
from .sequence import GroundTruthAnnotation, PointCloudSequence

RAW_FEATURE_DIM = 11
# slices of the raw descriptor, used by ablation switches
OFFSET_SLICE = slice(0, 3)
DT_SLICE = slice(3, 4)
FLOW_SLICE = slice(4, 7)
SEMFEAT_SLICE = slice(7, 10)
TBAR_SLICE = slice(10, 11)


@dataclass(frozen=True)
class NormalizationInfo:
    """Isotropic mapping between world meters and normalized coordinates."""

    centroid: np.ndarray  # (3,)
    scale: float          # meters per normalized unit

    def normalize(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x) - self.centroid) / self.scale

    def denormalize(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x) * self.scale + self.centroid

    @property
    def extent_m(self) -> float:
        """Full object extent in meters along its largest axis."""
        return 2.0 * self.scale


@dataclass(frozen=True)
class FeaturizeConfig:
    n_keypoints: int = 256
    r_s: float = 0.2       # normalized units
    r_t: int = 1           # frames
    k_max: int = 32
    fps_seed_index: int = 0
    feature_mode: str = "sum"  # "sum" (literal) or "mean"


def normalize_sequence(seq: PointCloudSequence):
    """Center and isotropically rescale all frames into [-1, 1]^3.

    Flow is divided by the same scale; cameras are kept as-is (they describe
    the raw capture).  Returns the normalized sequence and the mapping.
    """
    pts = seq.points
    centroid = pts.reshape(-1, 3).mean(axis=0)
    scale = float(np.abs(pts - centroid).max())
    if scale <= 0.0:
        raise DomainError("degenerate sequence: all points coincide")
    points_n = (pts - centroid) / scale
    assert np.all(np.abs(points_n) <= 1.0 + 1e-12), "normalization out of range"
    out = PointCloudSequence(points_n, seq.flow / scale, seq.semfeat,
                             seq.labels, seq.cameras)
    return out, NormalizationInfo(centroid, scale)


def normalize_annotation(ann: GroundTruthAnnotation,
                         info: NormalizationInfo) -> GroundTruthAnnotation:
    """Pivots move with the points; axes (directions) and motion amounts do not."""
    movable = ann.joint_types != 2
    pivots = ann.pivots.copy()
    pivots[movable] = info.normalize(ann.pivots[movable])
    return GroundTruthAnnotation(ann.part_masks, ann.joint_types, ann.axes,
                                 pivots, ann.motion)


def farthest_point_sample(points: np.ndarray, n_k: int, seed_index: int = 0) -> np.ndarray:
    """Greedy FPS indices; deterministic, ties to the lowest index."""
    n = points.shape[0]
    if not 1 <= n_k <= n:
        raise DomainError(f"n_k must be in [1, {n}], got {n_k}")
    if not 0 <= seed_index < n:
        raise DomainError(f"seed_index {seed_index} out of range [0, {n})")
    return _kernels.fps(points, n_k, seed_index)


@dataclass
class Neighborhood:
    """Spatio-temporal neighbors of one keypoint (frame indices + attributes)."""

    frames: np.ndarray    # (k,)
    indices: np.ndarray   # (k,) into each frame's point array
    points: np.ndarray    # (k, 3)
    flow: np.ndarray      # (k, 3)
    semfeat: np.ndarray   # (k, 3)


def build_neighborhood(seq: PointCloudSequence, t: int, keypoint: np.ndarray,
                       r_s: float, r_t: int, k_max: int,
                       self_index: int | None = None) -> Neighborhood:
    """Points within ``r_s`` of the keypoint and ``r_t`` frames of ``t``.

    Capped at ``k_max`` nearest-first.  An empty result degenerates to the
    keypoint itself (requires ``self_index`` so its attributes are known).
    """
    if r_s <= 0 or r_t < 0 or k_max < 1:
        raise DomainError("need r_s > 0, r_t >= 0, k_max >= 1")
    kp = np.asarray(keypoint, dtype=np.float64).reshape(1, 3)
    nbr_t, nbr_i, counts = _kernels.st_neighbors(
        seq.points, np.array([t], dtype=np.int32), kp, r_s, r_t, k_max)
    k = int(counts[0])
    if k == 0:
        if self_index is None:
            raise DomainError("empty neighborhood and no self_index given")
        frames = np.array([t])
        indices = np.array([self_index])
    else:
        frames = nbr_t[0, :k].astype(np.int64)
        indices = nbr_i[0, :k].astype(np.int64)
    return Neighborhood(frames, indices, seq.points[frames, indices],
                        seq.flow[frames, indices], seq.semfeat[frames, indices])


def keypoint_raw_features(keypoint: np.ndarray, t: int, T: int,
                          neigh: Neighborhood, mode: str = "sum") -> np.ndarray:
    """The 11-d descriptor: per-neighbor vectors summed (or averaged)."""
    k = neigh.frames.shape[0]
    if k == 0:
        raise DomainError("neighborhood must be non-empty")
    v_bar = neigh.flow.mean(axis=0)
    phi_bar = neigh.semfeat.mean(axis=0)
    t_bar = t / T
    per = np.empty((k, RAW_FEATURE_DIM))
    per[:, OFFSET_SLICE] = neigh.points - np.asarray(keypoint)
    per[:, 3] = neigh.frames - t
    per[:, FLOW_SLICE] = v_bar
    per[:, SEMFEAT_SLICE] = phi_bar
    per[:, 10] = t_bar
    if mode == "sum":
        return per.sum(axis=0)
    if mode == "mean":
        return per.mean(axis=0)
    raise DomainError(f"unknown feature mode {mode!r}")


@dataclass
class FeaturizedSequence:
    """Everything the network needs for one sequence, in normalized coordinates."""

    raw_features: np.ndarray   # (T, N_k, 11)
    keypoints: np.ndarray      # (T, N_k, 3)
    keypoint_src: np.ndarray   # (T, N_k) indices into each frame
    points: np.ndarray         # (T, N_p, 3)
    norm: NormalizationInfo
    annotation: GroundTruthAnnotation | None  # normalized; None for imports


def featurize_sequence(seq: PointCloudSequence,
                       ann: GroundTruthAnnotation | None,
                       cfg: FeaturizeConfig = FeaturizeConfig()) -> FeaturizedSequence:
    seq_n, info = normalize_sequence(seq)
    T, N = seq_n.num_frames, seq_n.num_points
    K = cfg.n_keypoints
    src = np.empty((T, K), dtype=np.int64)
    for t in range(T):
        src[t] = farthest_point_sample(seq_n.points[t], K, cfg.fps_seed_index)
    kps = np.take_along_axis(seq_n.points, src[:, :, None], axis=1)

    q_t = np.repeat(np.arange(T, dtype=np.int32), K)
    q_xyz = kps.reshape(T * K, 3)
    nbr_t, nbr_i, counts = _kernels.st_neighbors(seq_n.points, q_t, q_xyz,
                                                 cfg.r_s, cfg.r_t, cfg.k_max)
    # keypoints are members of their own frame, so neighborhoods are never empty
    raw = _raw_features_batch(seq_n, q_t, q_xyz, nbr_t, nbr_i, counts, T,
                              cfg.feature_mode)

    ann_n = normalize_annotation(ann, info) if ann is not None else None
    return FeaturizedSequence(raw.reshape(T, K, RAW_FEATURE_DIM), kps, src,
                              seq_n.points, info, ann_n)


def _raw_features_batch(seq_n, q_t, q_xyz, nbr_t, nbr_i, counts, T, mode):
    """Vectorized descriptor for many keypoints (closed form of the summed
    per-neighbor vectors; agrees with ``keypoint_raw_features`` to float eps)."""
    valid = nbr_i >= 0
    fr = np.where(valid, nbr_t, 0)
    ii = np.where(valid, nbr_i, 0)
    m = valid[..., None]
    pts = np.where(m, seq_n.points[fr, ii], 0.0)
    flw = np.where(m, seq_n.flow[fr, ii], 0.0)
    sfe = np.where(m, seq_n.semfeat[fr, ii], 0.0)
    n = counts.astype(np.float64)
    Q = q_xyz.shape[0]
    raw = np.empty((Q, RAW_FEATURE_DIM))
    raw[:, OFFSET_SLICE] = pts.sum(axis=1) - n[:, None] * q_xyz
    raw[:, 3] = ((fr - q_t[:, None]) * valid).sum(axis=1)
    raw[:, FLOW_SLICE] = flw.sum(axis=1)
    raw[:, SEMFEAT_SLICE] = sfe.sum(axis=1)
    raw[:, 10] = n * (q_t / T)
    if mode == "mean":
        raw /= n[:, None]
    elif mode != "sum":
        raise DomainError(f"unknown feature mode {mode!r}")
    return raw


def apply_input_ablations(raw_features: np.ndarray, no_flow: bool = False,
                          no_semfeat: bool = False, no_tbar: bool = False) -> np.ndarray:
    """Zero the designated descriptor slots; leaves everything else untouched."""
    out = raw_features.copy()
    if no_flow:
        out[..., FLOW_SLICE] = 0.0
    if no_semfeat:
        out[..., SEMFEAT_SLICE] = 0.0
    if no_tbar:
        out[..., TBAR_SLICE] = 0.0
    return out
