"""Uncertainty-map quality metrics.

Measures how well an entropy map localises segmentation error, both
voxelwise (sUEO, thresholded UEO), patchwise (accuracy/certainty grids and
PAVPU) and per lesion instance (false-negative coverage, silent-failure
rates under two detection rules).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import ceil

import numpy as np

from .errors import DegenerateError
from .grid import BinaryMask, UncertaintyMap, connected_components
from .seg_metrics import dice as _dice


def error_map(pred: BinaryMask, gt: BinaryMask) -> BinaryMask:
    """Voxelwise disagreement between a hard prediction and the reference."""
    pred.require_same_geometry(gt)
    return BinaryMask((pred.data != gt.data).astype(np.uint8), pred.spacing)


def sueo(u: UncertaintyMap, e: BinaryMask) -> float:
    """Soft uncertainty-error overlap: 2 sum(e*u) / sum(e^2 + u^2)."""
    u.require_same_geometry(e)
    ud = np.asarray(u.data, dtype=np.float64)
    ed = np.asarray(e.data, dtype=np.float64)
    den = float((ed**2).sum() + (ud**2).sum())
    if den == 0.0:
        raise DegenerateError("sUEO undefined: error and uncertainty both all-zero")
    return 2.0 * float((ed * ud).sum()) / den


def ueo(u: UncertaintyMap, e: BinaryMask, tau: float) -> float:
    """Dice between the uncertainty map thresholded at tau and the error map."""
    u.require_same_geometry(e)
    mask = BinaryMask((u.data >= tau).astype(np.uint8), u.spacing)
    return _dice(mask, e)


@dataclass
class PatchGridStats:
    """Accuracy/certainty contingency counts over image patches."""

    n_ac: int  # accurate and certain
    n_au: int  # accurate and uncertain
    n_ci: int  # certain and inaccurate
    n_ui: int  # uncertain and inaccurate
    patch: int
    acc_thresh: float

    @property
    def total(self) -> int:
        return self.n_ac + self.n_au + self.n_ci + self.n_ui

    @property
    def p_acc_given_cert(self) -> float | None:
        den = self.n_ac + self.n_ci
        return self.n_ac / den if den else None

    @property
    def p_uncert_given_inacc(self) -> float | None:
        den = self.n_ui + self.n_ci
        return self.n_ui / den if den else None

    @property
    def pavpu(self) -> float | None:
        if self.total == 0:
            return None
        return (self.n_ac + self.n_ui) / self.total


def _patch_slices(dims, patch, mode):
    if mode == "tile":
        # Non-overlapping tiles anchored at the origin; trailing partial
        # tiles keep their own (smaller) voxel counts.
        starts = [range(0, d, patch) for d in dims]
        for x0 in starts[0]:
            for y0 in starts[1]:
                for z0 in starts[2]:
                    yield (
                        slice(x0, min(x0 + patch, dims[0])),
                        slice(y0, min(y0 + patch, dims[1])),
                        slice(z0, min(z0 + patch, dims[2])),
                    )
    elif mode == "sliding":
        # Stride-1 windows fully contained in the volume.
        for x0 in range(0, dims[0] - patch + 1):
            for y0 in range(0, dims[1] - patch + 1):
                for z0 in range(0, dims[2] - patch + 1):
                    yield (
                        slice(x0, x0 + patch),
                        slice(y0, y0 + patch),
                        slice(z0, z0 + patch),
                    )
    else:
        raise ValueError(f"mode must be 'tile' or 'sliding', got {mode!r}")


def patch_metrics(
    pred: BinaryMask,
    gt: BinaryMask,
    u: UncertaintyMap,
    tau: float,
    patch: int = 4,
    acc_thresh: float = 0.8,
    mode: str = "tile",
) -> PatchGridStats:
    """Count accurate/inaccurate x certain/uncertain patches.

    A patch is accurate when the fraction of voxels with pred == gt is
    >= acc_thresh, and uncertain when its mean uncertainty is >= tau.
    The derived conditionals and PAVPU are exposed on the returned stats;
    conditionals with an empty denominator are None.
    """
    pred.require_same_geometry(gt)
    pred.require_same_geometry(u)
    correct = pred.data == gt.data
    ud = np.asarray(u.data, dtype=np.float64)
    n_ac = n_au = n_ci = n_ui = 0
    for sl in _patch_slices(pred.dims, patch, mode):
        block = correct[sl]
        accurate = block.mean() >= acc_thresh
        uncertain = ud[sl].mean() >= tau
        if accurate and not uncertain:
            n_ac += 1
        elif accurate and uncertain:
            n_au += 1
        elif not accurate and not uncertain:
            n_ci += 1
        else:
            n_ui += 1
    return PatchGridStats(n_ac=n_ac, n_au=n_au, n_ci=n_ci, n_ui=n_ui,
                          patch=patch, acc_thresh=acc_thresh)


@dataclass
class ComponentCoverage:
    """Per reference-component overlap bookkeeping at one threshold."""

    size: int
    segmented: int
    uncertain: int
    detected_strict: bool
    detected_rule: bool


@dataclass
class LesionCoverage:
    """Instance-level coverage of a reference mask by prediction + uncertainty.

    ``coverage`` is the mean, over reference components with at least one
    unsegmented voxel, of the fraction of those unsegmented voxels the
    thresholded uncertainty map marks. The two undetected fractions use
    different detection rules over components with zero predicted overlap:
    'strict' needs zero uncertain voxels too; 'rule' (the headline one)
    declares a component undetected when fewer than min(ceil(size/2), 5)
    of its voxels are uncertain. All fields are None when the reference has
    no components.
    """

    components: list = field(default_factory=list)
    coverage: float | None = None
    undetected_fraction_strict: float | None = None
    undetected_fraction_rule: float | None = None
    mean_undetected_size_strict: float | None = None
    mean_undetected_size_rule: float | None = None


def lesion_coverage(
    pred: BinaryMask,
    gt: BinaryMask,
    u: UncertaintyMap,
    tau: float,
    connectivity: int = 26,
) -> LesionCoverage:
    """Instance coverage and silent-failure rates at threshold tau."""
    pred.require_same_geometry(gt)
    pred.require_same_geometry(u)
    cc = connected_components(gt, connectivity)
    if cc.num_components == 0:
        return LesionCoverage()
    pred_flat = pred.data.astype(bool).ravel()
    unc_flat = (np.asarray(u.data) >= tau).ravel()

    comps = []
    cover_fracs = []
    for i in range(1, cc.num_components + 1):
        vox = cc.voxels(i)
        size = len(vox)
        seg = int(pred_flat[vox].sum())
        unc = int(unc_flat[vox].sum())
        unsegmented = ~pred_flat[vox]
        n_unseg = int(unsegmented.sum())
        if n_unseg > 0:
            cover_fracs.append(float((unc_flat[vox] & unsegmented).sum()) / n_unseg)
        detected_strict = seg > 0 or unc > 0
        needed = min(ceil(0.5 * size), 5)
        detected_rule = seg > 0 or unc >= needed
        comps.append(ComponentCoverage(size=size, segmented=seg, uncertain=unc,
                                       detected_strict=detected_strict,
                                       detected_rule=detected_rule))
    k = len(comps)
    undet_strict = [c.size for c in comps if not c.detected_strict]
    undet_rule = [c.size for c in comps if not c.detected_rule]
    return LesionCoverage(
        components=comps,
        coverage=float(np.mean(cover_fracs)) if cover_fracs else None,
        undetected_fraction_strict=len(undet_strict) / k,
        undetected_fraction_rule=len(undet_rule) / k,
        mean_undetected_size_strict=float(np.mean(undet_strict)) if undet_strict else None,
        mean_undetected_size_rule=float(np.mean(undet_rule)) if undet_rule else None,
    )


def tau_sweep(
    pred: BinaryMask,
    gt: BinaryMask,
    u: UncertaintyMap,
    taus,
    patch: int = 4,
    acc_thresh: float = 0.8,
    connectivity: int = 26,
    mode: str = "tile",
) -> list[dict]:
    """Evaluate every threshold in ``taus``; one result dict per row.

    Rows carry UEO, the patchwise conditionals/PAVPU and the lesion coverage
    summary, ready to serialise as a plot-ready table.
    """
    e = error_map(pred, gt)
    rows = []
    for tau in taus:
        tau = float(tau)
        stats = patch_metrics(pred, gt, u, tau, patch=patch,
                              acc_thresh=acc_thresh, mode=mode)
        cov = lesion_coverage(pred, gt, u, tau, connectivity=connectivity)
        rows.append({
            "tau": tau,
            "ueo": ueo(u, e, tau),
            "p_acc_given_cert": stats.p_acc_given_cert,
            "p_uncert_given_inacc": stats.p_uncert_given_inacc,
            "pavpu": stats.pavpu,
            "coverage": cov.coverage,
            "undetected_fraction_strict": cov.undetected_fraction_strict,
            "undetected_fraction_rule": cov.undetected_fraction_rule,
            "mean_undetected_size_strict": cov.mean_undetected_size_strict,
            "mean_undetected_size_rule": cov.mean_undetected_size_rule,
        })
    return rows
