"""Segmentation quality metrics over mask pairs and sample sets.

Conventions (documented because reference masks can legitimately be empty):
Dice and IOU of two empty masks are 1.0 (perfect agreement), empty vs
nonempty is 0.0. Absolute volume difference against an empty reference is
an error, never a sentinel value, so cohort means are not silently
corrupted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyGroundTruthError
from .grid import BinaryMask, binarize, connected_components
from .stochastic import SampleSet


def _counts(a: BinaryMask, b: BinaryMask):
    a.require_same_geometry(b)
    ad = a.data.astype(bool)
    bd = b.data.astype(bool)
    inter = int(np.count_nonzero(ad & bd))
    return inter, int(np.count_nonzero(ad)), int(np.count_nonzero(bd))


def dice(a: BinaryMask, b: BinaryMask) -> float:
    """2|a n b| / (|a| + |b|); 1.0 when both masks are empty."""
    inter, na, nb = _counts(a, b)
    if na + nb == 0:
        return 1.0
    return 2.0 * inter / (na + nb)


def iou(a: BinaryMask, b: BinaryMask) -> float:
    """|a n b| / |a u b|; 1.0 when both masks are empty."""
    inter, na, nb = _counts(a, b)
    union = na + nb - inter
    if union == 0:
        return 1.0
    return inter / union


def avd_percent(pred: BinaryMask, gt: BinaryMask) -> float:
    """100 * |V_pred - V_gt| / V_gt with spacing-weighted volumes."""
    pred.require_same_geometry(gt)
    v_gt = gt.volume_mm3
    if v_gt == 0:
        raise EmptyGroundTruthError("volume difference undefined for empty reference")
    return 100.0 * abs(pred.volume_mm3 - v_gt) / v_gt


def component_f1(pred: BinaryMask, gt: BinaryMask, connectivity: int = 26) -> float:
    """Instance-level F1 with the lenient any-overlap (IOU > 0) detection rule.

    A reference component counts as detected (TP) if at least one of its
    voxels is predicted foreground; otherwise it is a FN. A predicted
    component with no reference overlap is a FP. Returns 1.0 when both masks
    are empty.
    """
    pred.require_same_geometry(gt)
    gt_cc = connected_components(gt, connectivity)
    pred_cc = connected_components(pred, connectivity)
    if gt_cc.num_components == 0 and pred_cc.num_components == 0:
        return 1.0
    pred_flat = pred.data.astype(bool).ravel()
    gt_flat = gt.data.astype(bool).ravel()
    tp = sum(
        1 for i in range(1, gt_cc.num_components + 1)
        if pred_flat[gt_cc.voxels(i)].any()
    )
    fn = gt_cc.num_components - tp
    fp = sum(
        1 for i in range(1, pred_cc.num_components + 1)
        if not gt_flat[pred_cc.voxels(i)].any()
    )
    if 2 * tp + fp + fn == 0:
        return 1.0
    return 2.0 * tp / (2.0 * tp + fp + fn)


def precision_recall(pred: BinaryMask, gt: BinaryMask) -> tuple[float, float]:
    """Voxelwise precision and recall; empty denominators give 1.0."""
    inter, n_pred, n_gt = _counts(pred, gt)
    precision = inter / n_pred if n_pred else 1.0
    recall = inter / n_gt if n_gt else 1.0
    return precision, recall


def top_scores(samples: SampleSet, gt: BinaryMask, t: float = 0.5) -> tuple[float, float]:
    """Best per-sample scores: (max Dice, min AVD%) over binarized samples.

    The maximising and minimising samples may differ. Raises
    :class:`EmptyGroundTruthError` when the reference is empty (the AVD side
    is undefined).
    """
    masks = [binarize(s, t) for s in samples]
    top_dice = max(dice(m, gt) for m in masks)
    top_avd = min(avd_percent(m, gt) for m in masks)
    return top_dice, top_avd


def ged(samples: SampleSet, gt_set: SampleSet, t: float = 0.5) -> float:
    """Squared generalized energy distance with distance d = 1 - IOU.

    All terms are means over i.i.d. draws from the empirical distributions:
    the cross term over all S_pred * S_gt pairs and each self term over all
    ordered pairs including the diagonal, which contributes d(y, y) = 0.
    A single-member set therefore has a self term of exactly 0.
    """
    pred_masks = [binarize(s, t) for s in samples]
    gt_masks = [binarize(s, t) for s in gt_set]
    pred_masks[0].require_same_geometry(gt_masks[0])

    def mean_cross(xs, ys):
        return float(np.mean([[1.0 - iou(x, y) for y in ys] for x in xs]))

    def mean_self(xs):
        n = len(xs)
        if n == 1:
            return 0.0
        total = 0.0
        for i in range(n):
            for j in range(i + 1, n):
                total += 1.0 - iou(xs[i], xs[j])
        return 2.0 * total / (n * n)

    return 2.0 * mean_cross(gt_masks, pred_masks) - mean_self(gt_masks) - mean_self(pred_masks)


@dataclass
class AggregateStats:
    """Cohort aggregation of one metric over a runs x subjects matrix."""

    mean: float
    std_over_runs: float | None
    std_over_subjects: float | None
    runs: int
    subjects: int


def aggregate(values) -> AggregateStats:
    """Mean plus the two dispersion conventions over a runs x subjects matrix.

    std_over_runs is the Bessel-corrected std across runs of the per-run
    subject means; std_over_subjects the std across subjects of the
    per-subject run means. An axis of length < 2 yields None for its std.
    """
    m = np.asarray(values, dtype=np.float64)
    if m.ndim != 2 or m.size == 0:
        raise ValueError(f"need a nonempty runs x subjects matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix must not contain missing values; filter upstream")
    runs, subjects = m.shape
    std_runs = float(np.std(m.mean(axis=1), ddof=1)) if runs >= 2 else None
    std_subj = float(np.std(m.mean(axis=0), ddof=1)) if subjects >= 2 else None
    return AggregateStats(
        mean=float(m.mean()),
        std_over_runs=std_runs,
        std_over_subjects=std_subj,
        runs=runs,
        subjects=subjects,
    )
