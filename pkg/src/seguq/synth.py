"""Deterministic synthetic volumes with known ground truth.

Generates desk-scale brains: an ellipsoidal brain mask, an ellipsoidal
ventricle system, lesion blobs placed inside chosen distance rings with
grade-controlled volume, and a low-rank logit model whose mean recovers
the lesion mask exactly when the noise scales are zero. Because lesion
burden per region is drawn inside per-grade bands with gaps between them,
the ordinal severity grades are a deterministic, learnable function of the
ring volumes.

Severity grading (both region groups, periventricular = rings 0-1 and
deep = rings 2-3) uses the lesion voxel fraction of the group:

    grade 0: fraction < 0.005   (absent or minimal)
    grade 1: fraction < 0.065   (discrete)
    grade 2: fraction < 0.135   (substantial, early confluence)
    grade 3: otherwise          (large, confluent)

and the generator targets bands (0, [.02,.05], [.08,.12], [.15,.22]) so
every generated subject sits strictly inside one grade bin.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import SynthSpecError
from .grid import BinaryMask, VoxelGrid
from .ring_features import RingPartition, ring_partition
from .stochastic import LogitModel

GRADE_EDGES = (0.005, 0.065, 0.135)
GRADE_BANDS = ((0.0, 0.0), (0.02, 0.05), (0.08, 0.12), (0.15, 0.22))

PV_RINGS = (0, 1)
DEEP_RINGS = (2, 3)


@dataclass
class SynthSpec:
    """Parameters of one synthetic subject."""

    dims: tuple[int, int, int] = (36, 36, 20)
    spacing: tuple[float, float, float] = (1.2, 1.2, 2.5)
    seed: int = 0
    brain_axes_frac: tuple[float, float, float] = (0.46, 0.46, 0.46)
    ventricle_axes_mm: tuple[float, float, float] = (5.0, 5.0, 6.0)
    lesion_radius_mm: tuple[float, float] = (2.0, 5.0)
    pv_grade: int | None = None    # None: drawn uniformly from 0..3
    deep_grade: int | None = None
    pv_rings: tuple[int, ...] = PV_RINGS     # rings eligible for pv lesions
    deep_rings: tuple[int, ...] = DEEP_RINGS
    logit_margin: float = 4.0
    noise_rank: int = 6
    noise_scale: float = 1.0       # factor-loading magnitude
    noise_diag: float = 0.25       # diagonal variance

    def __post_init__(self):
        for g in (self.pv_grade, self.deep_grade):
            if g is not None and not 0 <= g <= 3:
                raise SynthSpecError(f"grades must be in 0..3, got {g}")
        if self.noise_rank < 0 or self.noise_scale < 0 or self.noise_diag < 0:
            raise SynthSpecError("noise parameters must be >= 0")


@dataclass
class SynthSubject:
    """Generated volumes plus ground-truth labels for one subject."""

    brain: BinaryMask
    ventricles: BinaryMask
    gt_lesions: BinaryMask
    logit: LogitModel
    rings: RingPartition
    fazekas_proxy: tuple[int, int]  # (deep, pv)
    group_fractions: dict = field(default_factory=dict)


def _ellipsoid(dims, spacing, center_mm, axes_mm) -> np.ndarray:
    coords = [
        (np.arange(dims[i]) * spacing[i] - center_mm[i]) / axes_mm[i]
        for i in range(3)
    ]
    x, y, z = np.meshgrid(*coords, indexing="ij")
    return x**2 + y**2 + z**2 <= 1.0


def grade_of_fraction(frac: float) -> int:
    """Map a lesion volume fraction to the 0-3 severity grade."""
    for g, edge in enumerate(GRADE_EDGES):
        if frac < edge:
            return g
    return 3


def _place_group_lesions(rng, group_mask, target_count, radius_mm, dims, spacing):
    """Grow lesion blobs inside ``group_mask`` until exactly target_count voxels.

    Returns a boolean lesion mask. Each blob is an ellipsoid intersected
    with the group; the final blob is trimmed (closest voxels to its centre
    first) so the target is met exactly.
    """
    lesions = np.zeros(dims, dtype=bool)
    placed = 0
    attempts = 0
    while placed < target_count:
        attempts += 1
        if attempts > 500:
            raise SynthSpecError("could not reach the target lesion volume")
        available = group_mask & ~lesions
        avail_idx = np.flatnonzero(available.ravel())
        if len(avail_idx) == 0:
            raise SynthSpecError("region too small for the requested lesion volume")
        centre_flat = int(rng.choice(avail_idx))
        cx, cy, cz = np.unravel_index(centre_flat, dims)
        centre_mm = (cx * spacing[0], cy * spacing[1], cz * spacing[2])
        r = rng.uniform(*radius_mm)
        blob = _ellipsoid(dims, spacing, centre_mm, (r, r, r)) & available
        new_idx = np.flatnonzero(blob.ravel())
        if len(new_idx) == 0:
            continue
        need = target_count - placed
        if len(new_idx) > need:
            # Trim to the voxels nearest the blob centre.
            xs, ys, zs = np.unravel_index(new_idx, dims)
            d2 = ((xs * spacing[0] - centre_mm[0]) ** 2
                  + (ys * spacing[1] - centre_mm[1]) ** 2
                  + (zs * spacing[2] - centre_mm[2]) ** 2)
            new_idx = new_idx[np.argsort(d2, kind="stable")[:need]]
        lesions.ravel()[new_idx] = True
        placed += len(new_idx)
    return lesions


def generate(spec: SynthSpec) -> SynthSubject:
    """Generate one subject. Bit-identical output under a fixed seed."""
    rng = np.random.default_rng(spec.seed)
    dims, spacing = spec.dims, spec.spacing
    extent = tuple(dims[i] * spacing[i] for i in range(3))
    centre = tuple(e / 2.0 for e in extent)

    brain_axes = tuple(extent[i] * spec.brain_axes_frac[i] for i in range(3))
    brain = _ellipsoid(dims, spacing, centre, brain_axes)
    ventricles = _ellipsoid(dims, spacing, centre, spec.ventricle_axes_mm) & brain
    if not ventricles.any():
        raise SynthSpecError("ventricle ellipsoid produced no voxels")

    brain_mask = BinaryMask(brain.astype(np.uint8), spacing)
    vent_mask = BinaryMask(ventricles.astype(np.uint8), spacing)
    rings = ring_partition(vent_mask, brain_mask)

    pv_grade = int(rng.integers(0, 4)) if spec.pv_grade is None else spec.pv_grade
    deep_grade = int(rng.integers(0, 4)) if spec.deep_grade is None else spec.deep_grade

    lesions = np.zeros(dims, dtype=bool)
    fractions = {}
    for grade, ring_ids, name in ((pv_grade, spec.pv_rings, "pv"),
                                  (deep_grade, spec.deep_rings, "deep")):
        group = np.isin(rings.labels, ring_ids) & brain & ~ventricles
        group_n = int(group.sum())
        if group_n == 0:
            raise SynthSpecError(f"{name} ring group is empty; enlarge the grid")
        lo, hi = GRADE_BANDS[grade]
        frac = 0.0 if grade == 0 else float(rng.uniform(lo, hi))
        target = int(round(frac * group_n))
        if target > 0:
            lesions |= _place_group_lesions(rng, group, target, spec.lesion_radius_mm,
                                            dims, spacing)
        achieved = float((lesions & group).sum()) / group_n
        fractions[name] = achieved
        if grade_of_fraction(achieved) != grade:
            raise SynthSpecError(
                f"{name} fraction {achieved:.4f} fell outside grade {grade} band"
            )

    gt = BinaryMask(lesions.astype(np.uint8), spacing)

    # Logit model in foreground-margin form: class-0 rows are zero, so the
    # softmax depends only on the stored foreground channel.
    v = int(np.prod(dims))
    c = 2
    mean = np.zeros((v, c))
    flat_lesions = lesions.ravel(order="F")
    mean[:, 1] = np.where(flat_lesions, spec.logit_margin, -spec.logit_margin)
    factor = np.zeros((v * c, spec.noise_rank))
    if spec.noise_rank > 0 and spec.noise_scale > 0:
        factor[1::c, :] = spec.noise_scale * rng.standard_normal((v, spec.noise_rank))
    diag = np.zeros(v * c)
    diag[1::c] = spec.noise_diag
    logit = LogitModel(mean=mean, factor=factor, diag=diag, dims=dims, spacing=spacing)

    return SynthSubject(
        brain=brain_mask,
        ventricles=vent_mask,
        gt_lesions=gt,
        logit=logit,
        rings=rings,
        fazekas_proxy=(deep_grade, pv_grade),
        group_fractions=fractions,
    )


def generate_cohort(n: int, seed: int = 0, **spec_kwargs) -> list[SynthSubject]:
    """Generate ``n`` subjects with per-subject sub-seeds derived from seed."""
    root = np.random.SeedSequence(seed)
    subjects = []
    for child in root.spawn(n):
        sub_seed = int(child.generate_state(1)[0])
        subjects.append(generate(SynthSpec(seed=sub_seed, **spec_kwargs)))
    return subjects
