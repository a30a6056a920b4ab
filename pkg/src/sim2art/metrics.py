"""Evaluation protocol: segmentation mIoU plus joint/motion/type errors.

Predicted parts are paired with GT parts by a maximum-IoU assignment; the
same pairing then scores joint parameters.  Angles are sign-agnostic (two
directions describe the same axis line), pivot errors are point-to-line
distances reported in centimeters, motion errors are per-frame mean absolute
differences (revolute differences wrapped into [0, 180] degrees).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

METRIC_FIELDS = ("miou", "axis_ang_deg", "axis_pos_cm", "part_rot_deg",
                 "part_trans_cm", "type_acc_pct")
TABLE_ROWS = (("miou", "mIoU"), ("axis_ang_deg", "Axis Ang (deg)"),
              ("axis_pos_cm", "Axis Pos (cm)"), ("part_rot_deg", "Part Rotation (deg)"),
              ("part_trans_cm", "Part Translation (cm)"),
              ("type_acc_pct", "Type Accuracy (%)"))


def hard_labels(dist: np.ndarray) -> np.ndarray:
    """Argmax decode of the per-point part distribution; ties to the lowest index."""
    return np.argmax(dist, axis=-1)


def iou_matrix(pred_labels: np.ndarray, gt_masks: np.ndarray, M: int) -> np.ndarray:
    """(M, G) intersection-over-union between predicted ids and GT masks."""
    G = gt_masks.shape[0]
    out = np.zeros((M, G))
    flat = pred_labels.reshape(-1)
    gt = gt_masks.reshape(G, -1)
    for m in range(M):
        pm = flat == m
        npm = pm.sum()
        for g in range(G):
            inter = np.logical_and(pm, gt[g]).sum()
            union = npm + gt[g].sum() - inter
            out[m, g] = inter / union if union > 0 else 0.0
    return out


def match_by_iou(pred_labels: np.ndarray, gt_masks: np.ndarray, M: int):
    """Maximum-total-IoU assignment; returns (ious (G,), pred_for_gt (G,))."""
    iou = iou_matrix(pred_labels, gt_masks, M)
    rows, cols = linear_sum_assignment(-iou)
    G = gt_masks.shape[0]
    pred_for_gt = np.full(G, -1, dtype=np.int64)
    ious = np.zeros(G)
    for m, g in zip(rows, cols):
        pred_for_gt[g] = m
        ious[g] = iou[m, g]
    return ious, pred_for_gt


def miou(pred_labels: np.ndarray, gt_masks: np.ndarray, M: int) -> float:
    """Mean over GT parts of the IoU with their matched predicted part."""
    ious, _ = match_by_iou(pred_labels, gt_masks, M)
    return float(ious.mean())


def axis_angle_error(a_hat: np.ndarray, a: np.ndarray) -> float:
    """Sign-agnostic angle between two axis directions, degrees in [0, 90]."""
    dot = abs(float(np.dot(a_hat, a)) /
              (float(np.linalg.norm(a_hat)) * float(np.linalg.norm(a))))
    return float(np.degrees(np.arccos(np.clip(dot, 0.0, 1.0))))


def axis_position_error(p_hat: np.ndarray, p: np.ndarray, a: np.ndarray) -> float:
    """Distance from the predicted pivot to the GT axis line (input units)."""
    a = np.asarray(a, dtype=np.float64)
    a = a / np.linalg.norm(a)
    return float(np.linalg.norm(np.cross(a, np.asarray(p_hat) - np.asarray(p))))


def part_motion_error(m_hat: np.ndarray, m_gt: np.ndarray, joint_type: int) -> float:
    """Per-frame motion error averaged over the sequence.

    Revolute: geodesic (differences wrapped into [0, 180] degrees).
    Prismatic: absolute difference in centimeters.
    """
    d = np.abs(np.asarray(m_hat, dtype=np.float64) - np.asarray(m_gt, dtype=np.float64))
    if joint_type == 0:
        d = d % 360.0
        d = np.minimum(d, 360.0 - d)
    return float(d.mean())


def type_accuracy(pred_types: np.ndarray, gt_types: np.ndarray) -> float:
    """Percentage of matched parts with the correct joint type."""
    pred_types = np.asarray(pred_types)
    gt_types = np.asarray(gt_types)
    return float(100.0 * np.mean(pred_types == gt_types))


@dataclass
class SequenceMetrics:
    """One sequence's scores; fields are None when undefined (no such joint)."""

    miou: float
    axis_ang_deg: float | None
    axis_pos_cm: float | None
    part_rot_deg: float | None
    part_trans_cm: float | None
    type_acc_pct: float


def evaluate_sequence(bundle_np: dict, ann, scale_m: float) -> SequenceMetrics:
    """Score one prediction against its normalized annotation.

    ``bundle_np`` is PredictionBundle.detach_numpy(); ``ann`` the normalized
    GroundTruthAnnotation; ``scale_m`` converts normalized units to meters.
    Axis/pivot errors use the head matching the GT type even when the type
    prediction is wrong; motion rows of parts predicted static count as zero.
    """
    dist = bundle_np["part_dist"]
    M = dist.shape[-1]
    labels = hard_labels(dist)
    ious, pred_for_gt = match_by_iou(labels, ann.part_masks, M)

    pred_types_all = np.argmax(bundle_np["type_logits"], axis=-1)
    motion_pred = bundle_np["motion"].copy()
    motion_pred[pred_types_all == 2] = 0.0

    ang, pos, rot, trans, correct = [], [], [], [], []
    for g in range(ann.num_parts):
        m = int(pred_for_gt[g])
        ty = int(ann.joint_types[g])
        correct.append(int(pred_types_all[m]) == ty)
        if ty == 2:
            continue
        a_hat = bundle_np["rot_axis"][m] if ty == 0 else bundle_np["trans_axis"][m]
        ang.append(axis_angle_error(a_hat, ann.axes[g]))
        if ty == 0:
            err_n = axis_position_error(bundle_np["pivot"][m], ann.pivots[g], ann.axes[g])
            pos.append(err_n * scale_m * 100.0)  # normalized units -> cm
            rot.append(part_motion_error(motion_pred[m], ann.motion[g], ty))
        else:
            trans.append(part_motion_error(motion_pred[m], ann.motion[g], ty))

    def _mean(xs):
        return float(np.mean(xs)) if xs else None

    return SequenceMetrics(float(ious.mean()), _mean(ang), _mean(pos),
                           _mean(rot), _mean(trans),
                           float(100.0 * np.mean(correct)))


@dataclass
class MetricsReport:
    """Per-category means plus the overall mean row (absent cells excluded)."""

    categories: dict  # name -> {field: float | None}
    mean: dict        # field -> float | None
    counts: dict      # name -> number of sequences

    def to_json(self) -> str:
        return json.dumps({"categories": self.categories, "mean": self.mean,
                           "counts": self.counts}, sort_keys=True, indent=2)

    def to_table(self) -> str:
        names = sorted(self.categories)
        cols = names + ["Mean"]
        width = max(18, max((len(c) for c in cols), default=4) + 2)

        def fmt(v):
            return "-" if v is None else f"{v:.4f}" if abs(v) < 10 else f"{v:.2f}"

        lines = ["Metric".ljust(24) + "".join(c.rjust(width) for c in cols)]
        for key, label in TABLE_ROWS:
            cells = [fmt(self.categories[n][key]) for n in names] + [fmt(self.mean[key])]
            lines.append(label.ljust(24) + "".join(c.rjust(width) for c in cells))
        return "\n".join(lines) + "\n"


def evaluate_dataset(results: list) -> MetricsReport:
    """Aggregate (category, SequenceMetrics) pairs into a report."""
    by_cat: dict = {}
    for category, sm in results:
        by_cat.setdefault(category, []).append(sm)
    categories = {}
    counts = {}
    for cat, sms in sorted(by_cat.items()):
        counts[cat] = len(sms)
        cell = {}
        for f in METRIC_FIELDS:
            vals = [getattr(s, f) for s in sms if getattr(s, f) is not None]
            cell[f] = float(np.mean(vals)) if vals else None
        categories[cat] = cell
    mean = {}
    for f in METRIC_FIELDS:
        vals = [c[f] for c in categories.values() if c[f] is not None]
        mean[f] = float(np.mean(vals)) if vals else None
    return MetricsReport(categories, mean, counts)
