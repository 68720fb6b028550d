"""Ventricle-distance ring features for downstream score classification.

The brain is partitioned into four shells by Euclidean distance from the
ventricle mask (< 5 mm, 5-10 mm, 10-15 mm, >= 15 mm). From thresholded
probability and uncertainty maps we extract per-ring volumetric and
component statistics, confluence ("bridge") features, a global volume, and
optionally the dispersion of every segmentation feature across a sample
set. Tables of such features are z-score normalised with 95th-percentile
outlier clipping before classification.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionMismatchError, EmptyVentriclesError
from .grid import BinaryMask, VoxelGrid, connected_components, distance_field
from .stochastic import SampleSet

RING_EDGES_MM = (5.0, 10.0, 15.0)
RING_NAMES = ("r0", "r1", "r2", "r3")


@dataclass
class RingPartition:
    """Distance shells around the ventricles, restricted to the brain mask.

    ``labels`` holds 0..3 for rings inside the brain and -1 outside.
    """

    labels: np.ndarray
    spacing: tuple[float, float, float]
    region_volumes_mm3: np.ndarray  # mm^3 per ring, index 0..3

    def ring_mask(self, ring: int) -> np.ndarray:
        return self.labels == ring


def ring_partition(ventricles: BinaryMask, brain: BinaryMask,
                   edges_mm=RING_EDGES_MM) -> RingPartition:
    """Partition the brain into distance rings around the ventricles.

    Ventricle voxels themselves have distance 0 and belong to ring 0.
    """
    ventricles.require_same_geometry(brain)
    if ventricles.count == 0:
        raise EmptyVentriclesError("ring partition needs a nonempty ventricle mask")
    vent = ventricles.data.astype(bool)
    br = brain.data.astype(bool)
    if np.any(vent & ~br):
        raise ValueError("ventricle mask must lie inside the brain mask")
    dist = distance_field(ventricles).data
    labels = np.full(ventricles.dims, -1, dtype=np.int8)
    edges = tuple(float(e) for e in edges_mm)
    inside = br
    labels[inside & (dist < edges[0])] = 0
    labels[inside & (dist >= edges[0]) & (dist < edges[1])] = 1
    labels[inside & (dist >= edges[1]) & (dist < edges[2])] = 2
    labels[inside & (dist >= edges[2])] = 3
    vol = ventricles.voxel_volume
    region_volumes = np.array([
        float(np.count_nonzero(labels == r)) * vol for r in range(4)
    ])
    return RingPartition(labels=labels, spacing=ventricles.spacing,
                         region_volumes_mm3=region_volumes)


def threshold_map(m: VoxelGrid, t: float):
    """Zero all values below ``t``, keeping the surviving soft values."""
    if t < 0:
        raise ValueError("threshold must be >= 0")
    data = np.asarray(m.data, dtype=np.float64)
    out = np.where(data < t, 0.0, data)
    return type(m)(out, m.spacing)


@dataclass
class FeatureVector:
    """Named scalar features with (source, region) grouping tags."""

    values: dict = field(default_factory=dict)
    tags: dict = field(default_factory=dict)

    def add(self, name: str, value: float, source: str, region: str):
        if name in self.values:
            raise ValueError(f"duplicate feature name {name!r}")
        self.values[name] = float(value)
        self.tags[name] = (source, region)

    def names(self) -> list[str]:
        return list(self.values)

    def as_array(self, names) -> np.ndarray:
        return np.array([self.values[n] for n in names], dtype=np.float64)


def _map_features(data: np.ndarray, rings: RingPartition, voxel_volume: float,
                  connectivity: int, source: str, out: FeatureVector):
    """Per-ring intensity volume + component statistics for one thresholded map."""
    binary = BinaryMask((data > 0).astype(np.uint8), rings.spacing)
    for r, rname in enumerate(RING_NAMES):
        region = rings.ring_mask(r)
        reg_vol = rings.region_volumes_mm3[r]
        intensity_vol = float(data[region].sum()) * voxel_volume
        masked = BinaryMask((binary.data.astype(bool) & region).astype(np.uint8),
                            rings.spacing)
        cc = connected_components(masked, connectivity)
        if reg_vol > 0:
            count_per_vol = cc.num_components / reg_vol
            comp_vols = cc.volumes_mm3()
            std_per_vol = float(comp_vols.std()) / reg_vol if cc.num_components >= 2 else 0.0
        else:
            count_per_vol = 0.0
            std_per_vol = 0.0
        out.add(f"{source}_{rname}_volume", intensity_vol, source, rname.upper())
        out.add(f"{source}_{rname}_comp_per_vol", count_per_vol, source, rname.upper())
        out.add(f"{source}_{rname}_compvol_std_per_vol", std_per_vol, source, rname.upper())
    out.add(f"{source}_global_volume", float(data.sum()) * voxel_volume, source, "global")


def _bridge_features(data: np.ndarray, rings: RingPartition, voxel_volume: float,
                     connectivity: int, source: str, out: FeatureVector):
    """Largest component (mm^3) spanning adjacent ring pairs, for confluence."""
    binary = BinaryMask((data > 0).astype(np.uint8), rings.spacing)
    cc = connected_components(binary, connectivity)
    ring_flat = rings.labels.ravel()
    for pair, region in (((0, 1), "bridge12"), ((1, 2), "bridge23")):
        best = 0.0
        for i in range(1, cc.num_components + 1):
            comp_rings = ring_flat[cc.voxels(i)]
            if np.any(comp_rings == pair[0]) and np.any(comp_rings == pair[1]):
                best = max(best, len(cc.voxels(i)) * voxel_volume)
        out.add(f"{source}_{region}_maxcomp_vol", best, source, region)


def extract_features(
    seg: VoxelGrid,
    uq: VoxelGrid,
    rings: RingPartition,
    t: float,
    samples: SampleSet | None = None,
    connectivity: int = 26,
) -> FeatureVector:
    """Extract the full ring feature vector from one subject's maps.

    ``seg`` and ``uq`` are raw (unthresholded) probability/uncertainty maps;
    ``t`` is the filtering threshold applied to both before extraction.
    Component statistics are computed on the binarised (value > 0 after
    thresholding) map, while volumes sum the surviving soft intensities.
    When ``samples`` is given, the standard deviation of every
    segmentation-derived feature across the per-sample extractions is added
    under the ``sample_std`` source.
    """
    if seg.dims != rings.labels.shape or uq.dims != rings.labels.shape:
        raise DimensionMismatchError("maps must match the ring partition dims")
    vv = seg.voxel_volume
    fv = FeatureVector()

    seg_t = np.asarray(threshold_map(seg, t).data)
    uq_t = np.asarray(threshold_map(uq, t).data)
    _map_features(seg_t, rings, vv, connectivity, "seg", fv)
    _bridge_features(seg_t, rings, vv, connectivity, "seg", fv)
    _map_features(uq_t, rings, vv, connectivity, "uq", fv)

    if samples is not None:
        seg_feature_names = [n for n, (src, _) in fv.tags.items() if src == "seg"]
        per_sample = np.zeros((len(samples), len(seg_feature_names)))
        for si, member in enumerate(samples):
            sfv = FeatureVector()
            data_t = np.asarray(threshold_map(member, t).data)
            _map_features(data_t, rings, vv, connectivity, "seg", sfv)
            _bridge_features(data_t, rings, vv, connectivity, "seg", sfv)
            per_sample[si] = sfv.as_array(seg_feature_names)
        stds = per_sample.std(axis=0, ddof=1) if len(samples) >= 2 else np.zeros(len(seg_feature_names))
        for name, value in zip(seg_feature_names, stds):
            _, region = fv.tags[name]
            fv.add(f"sample_std_{name}", value, "sample_std", region)
    return fv


@dataclass
class FeatureTable:
    """Per-subject feature vectors plus an optional classification target."""

    feature_names: list
    rows: dict  # subject id -> np.ndarray of feature values
    targets: dict | None = None  # subject id -> int label

    def __post_init__(self):
        for sid, row in self.rows.items():
            if len(row) != len(self.feature_names):
                raise ValueError(f"row {sid!r} has {len(row)} values, "
                                 f"expected {len(self.feature_names)}")

    @property
    def subject_ids(self) -> list:
        return list(self.rows)

    def matrix(self, subject_ids=None) -> np.ndarray:
        ids = self.subject_ids if subject_ids is None else list(subject_ids)
        return np.array([self.rows[s] for s in ids], dtype=np.float64)

    def labels(self, subject_ids=None) -> np.ndarray:
        if self.targets is None:
            raise ValueError("table has no targets")
        ids = self.subject_ids if subject_ids is None else list(subject_ids)
        return np.array([self.targets[s] for s in ids], dtype=int)

    def select(self, names) -> "FeatureTable":
        idx = [self.feature_names.index(n) for n in names]
        return FeatureTable(
            feature_names=list(names),
            rows={s: np.asarray(r)[idx] for s, r in self.rows.items()},
            targets=None if self.targets is None else dict(self.targets),
        )

    @classmethod
    def from_vectors(cls, vectors: dict, targets: dict | None = None) -> "FeatureTable":
        """Build a table from subject id -> FeatureVector (shared name set)."""
        ids = list(vectors)
        names = vectors[ids[0]].names()
        for sid in ids[1:]:
            if vectors[sid].names() != names:
                raise ValueError(f"row {sid!r} has a different feature-name set")
        rows = {sid: vectors[sid].as_array(names) for sid in ids}
        return cls(feature_names=names, rows=rows, targets=targets)


@dataclass
class NormalizationParams:
    """Per-feature clip/shift/scale fitted on a training subset."""

    feature_names: list
    p95: np.ndarray
    mean: np.ndarray
    std: np.ndarray

    def to_json(self) -> str:
        return json.dumps({
            "feature_names": list(self.feature_names),
            "p95": list(map(float, self.p95)),
            "mean": list(map(float, self.mean)),
            "std": list(map(float, self.std)),
        }, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "NormalizationParams":
        d = json.loads(text)
        return cls(
            feature_names=d["feature_names"],
            p95=np.array(d["p95"], dtype=np.float64),
            mean=np.array(d["mean"], dtype=np.float64),
            std=np.array(d["std"], dtype=np.float64),
        )

    def apply(self, values: np.ndarray) -> np.ndarray:
        clipped = np.minimum(values, self.p95)
        safe = np.where(self.std > 0, self.std, 1.0)
        out = (clipped - self.mean) / safe
        return np.where(self.std > 0, out, 0.0)


def normalize_table(tbl: FeatureTable, fit_rows=None) -> tuple[FeatureTable, NormalizationParams]:
    """Z-score a feature table with 95th-percentile outlier handling.

    Per feature: the 95th percentile (linear interpolation) is taken over
    the fit rows; the mean/std exclude fit values above it; all rows are
    then clipped to it and standardised. Zero-variance features map to 0.
    Fit defaults to every row; pass the training ids to avoid leakage.
    """
    ids = tbl.subject_ids if fit_rows is None else list(fit_rows)
    if not ids:
        raise ValueError("need at least one fit row")
    fit = tbl.matrix(ids)
    p95 = np.percentile(fit, 95, axis=0)
    n_feat = fit.shape[1]
    mean = np.zeros(n_feat)
    std = np.zeros(n_feat)
    for j in range(n_feat):
        kept = fit[fit[:, j] <= p95[j], j]
        mean[j] = kept.mean()
        std[j] = kept.std()
    params = NormalizationParams(feature_names=list(tbl.feature_names),
                                 p95=p95, mean=mean, std=std)
    rows = {sid: params.apply(np.asarray(row, dtype=np.float64))
            for sid, row in tbl.rows.items()}
    out = FeatureTable(feature_names=list(tbl.feature_names), rows=rows,
                       targets=None if tbl.targets is None else dict(tbl.targets))
    return out, params


def write_feature_csv(path, tbl: FeatureTable) -> None:
    """Write a feature table as CSV: subject_id, features..., [target]."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        header = ["subject_id", *tbl.feature_names]
        if tbl.targets is not None:
            header.append("target")
        w.writerow(header)
        for sid in tbl.subject_ids:
            row = [sid, *(repr(float(v)) for v in tbl.rows[sid])]
            if tbl.targets is not None:
                row.append(tbl.targets[sid])
            w.writerow(row)


def read_feature_csv(path) -> FeatureTable:
    """Read a feature table written by :func:`write_feature_csv`."""
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        has_target = header[-1] == "target"
        names = header[1:-1] if has_target else header[1:]
        rows = {}
        targets = {} if has_target else None
        for rec in reader:
            sid = rec[0]
            vals = rec[1:-1] if has_target else rec[1:]
            rows[sid] = np.array([float(v) for v in vals])
            if has_target:
                targets[sid] = int(rec[-1])
    return FeatureTable(feature_names=names, rows=rows, targets=targets)
