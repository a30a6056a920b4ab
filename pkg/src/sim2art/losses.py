"""Bipartite part matching and the five training losses (summed unweighted).

The match is computed once per sequence on the detached segmentation cost
(2*BCE + 1*Dice between soft query masks and binary GT masks) and then reused
by every term; gradients never flow through the assignment.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from scipy.optimize import linear_sum_assignment

from .errors import DomainError

PROB_EPS = 1e-7      # probability clamp inside BCE
DICE_EPS = 1.0       # additive smoothing in the dice ratio
ACOS_EPS = 1e-7      # keeps the arccos derivative finite at perfect alignment
W_BCE = 2.0
W_DICE = 1.0


@dataclass(frozen=True)
class MatchResult:
    """One-to-one assignment of predicted queries to GT parts."""

    pairs: tuple            # ((m, g), ...) sorted by g; len == number of GT parts
    unmatched_pred: tuple   # predicted queries without a GT part

    def pred_for_gt(self, g: int) -> int:
        for m, gg in self.pairs:
            if gg == g:
                return m
        raise DomainError(f"gt part {g} not matched")


@dataclass
class GroundTruthTensors:
    """Torch view of a normalized GroundTruthAnnotation."""

    masks: torch.Tensor   # (G, T, N) float
    types: torch.Tensor   # (G,) long
    axes: torch.Tensor    # (G, 3)
    pivots: torch.Tensor  # (G, 3) normalized coordinates
    motion: torch.Tensor  # (G, T)

    @classmethod
    def from_annotation(cls, ann, dtype=torch.float32) -> "GroundTruthTensors":
        return cls(torch.from_numpy(ann.part_masks.astype(np.float64)).to(dtype),
                   torch.from_numpy(ann.joint_types.astype(np.int64)),
                   torch.from_numpy(ann.axes).to(dtype),
                   torch.from_numpy(ann.pivots).to(dtype),
                   torch.from_numpy(ann.motion).to(dtype))


def matching_cost(dist: torch.Tensor, gt_masks: torch.Tensor) -> torch.Tensor:
    """(M, G) segmentation cost: 2*BCE + 1*Dice of each query's soft mask
    against each binary GT mask, BCE averaged over the T*N points."""
    T, N, M = dist.shape
    p = dist.reshape(T * N, M).clamp(PROB_EPS, 1.0 - PROB_EPS)
    g = gt_masks.reshape(-1, T * N)              # (G, TN)
    log_p, log_1p = torch.log(p), torch.log1p(-p)
    bce = -(g @ log_p + (1.0 - g) @ log_1p) / (T * N)        # (G, M)
    inter = g @ p                                            # (G, M)
    dice = 1.0 - (2.0 * inter + DICE_EPS) / (p.sum(dim=0) + g.sum(dim=1, keepdim=True) + DICE_EPS)
    return (W_BCE * bce + W_DICE * dice).T                   # (M, G)


def hungarian_match(cost) -> MatchResult:
    """Minimum-total-cost assignment of every GT part to a distinct query.

    Exact ties between optimal assignments are broken toward low (m, g)
    indices by adding an infinitesimal concave index bias before solving.
    """
    c = cost.detach().cpu().numpy() if torch.is_tensor(cost) else np.asarray(cost)
    c = np.asarray(c, dtype=np.float64)
    M, G = c.shape
    if M < G:
        raise DomainError(f"need at least as many queries ({M}) as GT parts ({G})")
    bias = np.sqrt(np.arange(M)[:, None] * G + np.arange(G)[None, :])
    scale = max(1.0, float(np.abs(c).max()))
    delta = 1e-9 * scale / (G * max(1.0, float(bias.max())))
    rows, cols = linear_sum_assignment(c + delta * bias)
    pairs = tuple(sorted((int(m), int(g)) for m, g in zip(rows, cols)))
    pairs = tuple(sorted(pairs, key=lambda p: p[1]))
    matched = {m for m, _ in pairs}
    unmatched = tuple(m for m in range(M) if m not in matched)
    return MatchResult(pairs, unmatched)


def _pair_indices(match: MatchResult):
    ms = torch.tensor([m for m, _ in match.pairs], dtype=torch.long)
    gs = torch.tensor([g for _, g in match.pairs], dtype=torch.long)
    return ms, gs


def segmentation_loss(dist: torch.Tensor, gt_masks: torch.Tensor,
                      match: MatchResult) -> torch.Tensor:
    """Mean matched-pair segmentation cost; unmatched queries contribute nothing."""
    cost = matching_cost(dist, gt_masks)
    ms, gs = _pair_indices(match)
    return cost[ms, gs].mean()


def joint_type_loss(type_logits: torch.Tensor, gt_types: torch.Tensor,
                    match: MatchResult) -> torch.Tensor:
    """Cross-entropy over matched pairs (mean over supervised parts)."""
    ms, gs = _pair_indices(match)
    return torch.nn.functional.cross_entropy(type_logits[ms], gt_types[gs])


def axis_loss(rot_axis: torch.Tensor, trans_axis: torch.Tensor,
              gt_axes: torch.Tensor, gt_types: torch.Tensor,
              match: MatchResult) -> torch.Tensor:
    """Geodesic angle between predicted and GT directions, revolute parts
    supervising the rotation head and prismatic parts the translation head."""
    ms, gs = _pair_indices(match)
    terms = []
    for m, g in zip(ms.tolist(), gs.tolist()):
        ty = int(gt_types[g])
        if ty == 0:
            a_hat = rot_axis[m]
        elif ty == 1:
            a_hat = trans_axis[m]
        else:
            continue
        dot = (a_hat * gt_axes[g]).sum().clamp(-1.0 + ACOS_EPS, 1.0 - ACOS_EPS)
        terms.append(torch.arccos(dot))
    if not terms:
        return torch.zeros((), dtype=rot_axis.dtype)
    return torch.stack(terms).mean()


def pivot_loss(pivot: torch.Tensor, gt_pivots: torch.Tensor,
               gt_axes: torch.Tensor, gt_types: torch.Tensor,
               match: MatchResult) -> torch.Tensor:
    """Point-to-line distance ||a x (p_hat - p)|| over matched revolute parts."""
    ms, gs = _pair_indices(match)
    terms = []
    for m, g in zip(ms.tolist(), gs.tolist()):
        if int(gt_types[g]) != 0:
            continue
        cr = torch.linalg.cross(gt_axes[g], pivot[m] - gt_pivots[g])
        terms.append(torch.sqrt((cr * cr).sum() + 1e-12))
    if not terms:
        return torch.zeros((), dtype=pivot.dtype)
    return torch.stack(terms).mean()


def motion_loss(motion: torch.Tensor, gt_motion: torch.Tensor,
                gt_types: torch.Tensor, match: MatchResult) -> torch.Tensor:
    """L1 on per-frame motion amounts over matched non-static parts."""
    ms, gs = _pair_indices(match)
    keep = [(m, g) for m, g in zip(ms.tolist(), gs.tolist()) if int(gt_types[g]) != 2]
    if not keep:
        return torch.zeros((), dtype=motion.dtype)
    mi = torch.tensor([m for m, _ in keep], dtype=torch.long)
    gi = torch.tensor([g for _, g in keep], dtype=torch.long)
    return (motion[mi] - gt_motion[gi]).abs().mean()


@dataclass
class LossBreakdown:
    seg: torch.Tensor
    jointtype: torch.Tensor
    axes: torch.Tensor
    pivots: torch.Tensor
    motion: torch.Tensor
    total: torch.Tensor

    def scalars(self) -> dict:
        return {k: float(getattr(self, k).detach()) for k in
                ("seg", "jointtype", "axes", "pivots", "motion", "total")}


def total_loss(bundle, gt: GroundTruthTensors,
               match: MatchResult | None = None) -> tuple:
    """All five terms plus their unweighted sum; the match is computed on the
    detached segmentation cost unless one is supplied (gradient checks pin it)."""
    if match is None:
        with torch.no_grad():
            match = hungarian_match(matching_cost(bundle.part_dist, gt.masks))
    seg = segmentation_loss(bundle.part_dist, gt.masks, match)
    jt = joint_type_loss(bundle.type_logits, gt.types, match)
    ax = axis_loss(bundle.rot_axis, bundle.trans_axis, gt.axes, gt.types, match)
    pv = pivot_loss(bundle.pivot, gt.pivots, gt.axes, gt.types, match)
    mo = motion_loss(bundle.motion, gt.motion, gt.types, match)
    return LossBreakdown(seg, jt, ax, pv, mo, seg + jt + ax + pv + mo), match
