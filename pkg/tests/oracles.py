"""Independent brute-force reference implementations.

Everything here is deliberately naive (flood fills, O(V^2) scans,
exhaustive pair enumeration) and shares no code with the library paths it
checks against.
"""

from collections import deque
from math import ceil, sqrt

import numpy as np


def neighbour_offsets(connectivity):
    offsets = []
    for dx in (-1, 0, 1):
        for dy in (-1, 0, 1):
            for dz in (-1, 0, 1):
                if dx == dy == dz == 0:
                    continue
                manhattan = abs(dx) + abs(dy) + abs(dz)
                if connectivity == 6 and manhattan > 1:
                    continue
                if connectivity == 18 and manhattan > 2:
                    continue
                offsets.append((dx, dy, dz))
    return offsets


def flood_fill_components(mask, connectivity):
    """BFS labeling; returns a label array with ids 1..K in first-seen order."""
    mask = np.asarray(mask).astype(bool)
    labels = np.zeros(mask.shape, dtype=int)
    offsets = neighbour_offsets(connectivity)
    nx, ny, nz = mask.shape
    next_id = 0
    for x in range(nx):
        for y in range(ny):
            for z in range(nz):
                if not mask[x, y, z] or labels[x, y, z]:
                    continue
                next_id += 1
                queue = deque([(x, y, z)])
                labels[x, y, z] = next_id
                while queue:
                    cx, cy, cz = queue.popleft()
                    for dx, dy, dz in offsets:
                        px, py, pz = cx + dx, cy + dy, cz + dz
                        if 0 <= px < nx and 0 <= py < ny and 0 <= pz < nz \
                                and mask[px, py, pz] and not labels[px, py, pz]:
                            labels[px, py, pz] = next_id
                            queue.append((px, py, pz))
    return labels, next_id


def partition_signature(labels):
    """Scan-order-independent signature of a labeling: frozenset of voxel sets."""
    groups = {}
    flat = labels.ravel()
    for idx, lab in enumerate(flat):
        if lab > 0:
            groups.setdefault(lab, []).append(idx)
    return frozenset(frozenset(g) for g in groups.values())


def brute_distance_field(mask, spacing):
    """O(V^2) exact Euclidean distance to the nearest foreground voxel."""
    mask = np.asarray(mask).astype(bool)
    sx, sy, sz = spacing
    fg = np.argwhere(mask)
    out = np.zeros(mask.shape, dtype=float)
    for x in range(mask.shape[0]):
        for y in range(mask.shape[1]):
            for z in range(mask.shape[2]):
                d2 = ((fg[:, 0] - x) * sx) ** 2 + ((fg[:, 1] - y) * sy) ** 2 \
                     + ((fg[:, 2] - z) * sz) ** 2
                out[x, y, z] = sqrt(float(d2.min()))
    return out


def brute_dice(a, b):
    a = np.asarray(a).astype(bool)
    b = np.asarray(b).astype(bool)
    if not a.any() and not b.any():
        return 1.0
    return 2.0 * np.count_nonzero(a & b) / (np.count_nonzero(a) + np.count_nonzero(b))


def brute_iou(a, b):
    a = np.asarray(a).astype(bool)
    b = np.asarray(b).astype(bool)
    union = np.count_nonzero(a | b)
    if union == 0:
        return 1.0
    return np.count_nonzero(a & b) / union


def brute_avd_percent(pred, gt, voxel_volume):
    vp = np.count_nonzero(pred) * voxel_volume
    vg = np.count_nonzero(gt) * voxel_volume
    return 100.0 * abs(vp - vg) / vg


def brute_component_f1(pred, gt, connectivity):
    pred = np.asarray(pred).astype(bool)
    gt = np.asarray(gt).astype(bool)
    gl, gk = flood_fill_components(gt, connectivity)
    pl, pk = flood_fill_components(pred, connectivity)
    if gk == 0 and pk == 0:
        return 1.0
    tp = sum(1 for i in range(1, gk + 1) if pred[gl == i].any())
    fn = gk - tp
    fp = sum(1 for i in range(1, pk + 1) if not gt[pl == i].any())
    if 2 * tp + fp + fn == 0:
        return 1.0
    return 2.0 * tp / (2.0 * tp + fp + fn)


def brute_ged(pred_masks, gt_masks):
    """Full double-sum energy distance with d = 1 - IOU.

    Every expectation is over i.i.d. draws from the empirical distribution,
    so self terms run over all ordered pairs including the (zero) diagonal.
    """

    def d(a, b):
        return 1.0 - brute_iou(a, b)

    cross = np.mean([[d(g, p) for p in pred_masks] for g in gt_masks])
    self_gt = np.mean([[d(a, b) for b in gt_masks] for a in gt_masks])
    self_pred = np.mean([[d(a, b) for b in pred_masks] for a in pred_masks])
    return 2.0 * cross - self_gt - self_pred


def brute_sueo(u, e):
    u = np.asarray(u, dtype=float)
    e = np.asarray(e, dtype=float)
    return 2.0 * float((e * u).sum()) / float((e**2).sum() + (u**2).sum())


def brute_ueo(u, e, tau):
    return brute_dice(np.asarray(u) >= tau, e)


def brute_patch_counts(pred, gt, u, tau, patch, acc_thresh):
    """Quadrant counts by explicit per-patch recount (origin-anchored tiles)."""
    pred = np.asarray(pred).astype(bool)
    gt = np.asarray(gt).astype(bool)
    u = np.asarray(u, dtype=float)
    nx, ny, nz = pred.shape
    counts = {"ac": 0, "au": 0, "ci": 0, "ui": 0}
    for x0 in range(0, nx, patch):
        for y0 in range(0, ny, patch):
            for z0 in range(0, nz, patch):
                sl = (slice(x0, min(x0 + patch, nx)),
                      slice(y0, min(y0 + patch, ny)),
                      slice(z0, min(z0 + patch, nz)))
                correct = (pred[sl] == gt[sl]).mean()
                accurate = correct >= acc_thresh
                uncertain = u[sl].mean() >= tau
                if accurate and not uncertain:
                    counts["ac"] += 1
                elif accurate and uncertain:
                    counts["au"] += 1
                elif not accurate and not uncertain:
                    counts["ci"] += 1
                else:
                    counts["ui"] += 1
    return counts


def brute_lesion_coverage(pred, gt, u, tau, connectivity):
    """Coverage + both undetected rules by explicit per-component loops."""
    pred = np.asarray(pred).astype(bool)
    gt = np.asarray(gt).astype(bool)
    unc = np.asarray(u, dtype=float) >= tau
    labels, k = flood_fill_components(gt, connectivity)
    if k == 0:
        return None
    cover = []
    undet_strict = []
    undet_rule = []
    for i in range(1, k + 1):
        comp = labels == i
        size = int(comp.sum())
        seg = int((pred & comp).sum())
        n_unc = int((unc & comp).sum())
        unseg = comp & ~pred
        if unseg.any():
            cover.append((unc & unseg).sum() / unseg.sum())
        if seg == 0 and n_unc == 0:
            undet_strict.append(size)
        if seg == 0 and n_unc < min(ceil(size / 2), 5):
            undet_rule.append(size)
    return {
        "coverage": float(np.mean(cover)) if cover else None,
        "undetected_fraction_strict": len(undet_strict) / k,
        "undetected_fraction_rule": len(undet_rule) / k,
        "mean_undetected_size_strict": float(np.mean(undet_strict)) if undet_strict else None,
        "mean_undetected_size_rule": float(np.mean(undet_rule)) if undet_rule else None,
    }


def central_difference(fn, x, step=1e-5):
    """Central finite differences, extended-precision accumulation."""
    x = np.asarray(x, dtype=np.longdouble)
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        hi = x.copy()
        lo = x.copy()
        hi[idx] += step
        lo[idx] -= step
        grad[idx] = (np.longdouble(fn(np.asarray(hi, dtype=np.float64)))
                     - np.longdouble(fn(np.asarray(lo, dtype=np.float64)))) / (2 * np.longdouble(step))
        it.iternext()
    return np.asarray(grad, dtype=np.float64)
