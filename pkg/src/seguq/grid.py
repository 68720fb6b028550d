"""Voxel-grid containers and the low-level spatial operations built on them.

A :class:`VoxelGrid` is a dense 3D scalar field with anisotropic voxel
spacing in millimetres. Data is held as a float64/uint8 numpy array of
shape ``(nx, ny, nz)`` indexed ``[x, y, z]``. Semantic subclasses
(:class:`ProbMap`, :class:`BinaryMask`, :class:`UncertaintyMap`) add value
range validation but no behaviour.

All operations are pure: they never mutate their inputs and are safe to
call concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import DimensionMismatchError, EmptyMaskError

LN2 = math.log(2.0)

# Numerical slack allowed above ln 2 for entropy-valued grids.
ENTROPY_EPS = 1e-9


def _as_shape3(values, name):
    t = tuple(values)
    if len(t) != 3:
        raise ValueError(f"{name} must have exactly 3 components, got {t!r}")
    return t


@dataclass
class VoxelGrid:
    """Dense 3D scalar field with per-axis spacing in mm.

    ``data`` has shape ``dims == (nx, ny, nz)``; ``spacing`` holds the
    voxel edge lengths ``(sx, sy, sz)`` in millimetres.
    """

    data: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 3:
            raise ValueError(f"grid data must be 3D, got shape {self.data.shape}")
        self.spacing = _as_shape3((float(s) for s in self.spacing), "spacing")
        if any(s <= 0 for s in self.spacing):
            raise ValueError(f"spacing components must be > 0, got {self.spacing}")
        self._validate()

    def _validate(self):
        pass

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape

    @property
    def voxel_volume(self) -> float:
        """Volume of a single voxel in mm^3."""
        sx, sy, sz = self.spacing
        return sx * sy * sz

    def same_geometry(self, other: "VoxelGrid") -> bool:
        return self.dims == other.dims and self.spacing == other.spacing

    def require_same_geometry(self, other: "VoxelGrid"):
        if not self.same_geometry(other):
            raise DimensionMismatchError(
                f"grids differ: dims {self.dims} vs {other.dims}, "
                f"spacing {self.spacing} vs {other.spacing}"
            )


class ProbMap(VoxelGrid):
    """Voxelwise foreground probability; values in [0, 1]."""

    def _validate(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        lo, hi = float(self.data.min(initial=0.0)), float(self.data.max(initial=0.0))
        if lo < 0.0 or hi > 1.0:
            raise ValueError(f"probabilities outside [0,1]: min={lo}, max={hi}")


class BinaryMask(VoxelGrid):
    """Voxelwise {0,1} labels."""

    def _validate(self):
        data = np.asarray(self.data)
        if data.dtype != np.uint8:
            vals = np.unique(data)
            if not np.all(np.isin(vals, (0, 1))):
                raise ValueError(f"mask values must be 0/1, got {vals[:8]}")
            data = data.astype(np.uint8)
        elif data.size and data.max() > 1:
            raise ValueError("uint8 mask values must be 0/1")
        self.data = data

    @property
    def count(self) -> int:
        """Number of foreground voxels."""
        return int(self.data.sum())

    @property
    def volume_mm3(self) -> float:
        return self.count * self.voxel_volume


class UncertaintyMap(VoxelGrid):
    """Voxelwise binary predictive entropy; values in [0, ln 2]."""

    def _validate(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.size:
            lo, hi = float(self.data.min()), float(self.data.max())
            if lo < 0.0 or hi > LN2 + ENTROPY_EPS:
                raise ValueError(
                    f"entropy values outside [0, ln2]: min={lo}, max={hi}"
                )


@dataclass
class ComponentLabeling:
    """Connected components of a binary mask.

    ``labels`` assigns 0 to background and 1..K to components, numbered by
    first appearance in flat scan order of the (x, y, z) array. ``sizes[i]``
    is the voxel count of component ``i + 1``; ``voxels(i)`` returns its flat
    voxel indices.
    """

    labels: np.ndarray
    spacing: tuple[float, float, float]
    sizes: np.ndarray
    _index_of: dict = field(default_factory=dict, repr=False)

    @property
    def num_components(self) -> int:
        return len(self.sizes)

    def voxels(self, component_id: int) -> np.ndarray:
        """Flat indices (into ``labels.ravel()``) of one component (1-based id)."""
        if not self._index_of:
            flat = self.labels.ravel()
            order = np.argsort(flat, kind="stable")
            sorted_labels = flat[order]
            bounds = np.searchsorted(sorted_labels, np.arange(1, self.num_components + 2))
            for k in range(self.num_components):
                self._index_of[k + 1] = order[bounds[k]:bounds[k + 1]]
        return self._index_of[component_id]

    def volumes_mm3(self) -> np.ndarray:
        sx, sy, sz = self.spacing
        return self.sizes * (sx * sy * sz)


_STRUCTS = {
    6: ndimage.generate_binary_structure(3, 1),
    18: ndimage.generate_binary_structure(3, 2),
    26: ndimage.generate_binary_structure(3, 3),
}


def binarize(p: VoxelGrid, t: float) -> BinaryMask:
    """Threshold a map at ``t``: output voxel is 1 iff value >= t."""
    return BinaryMask((np.asarray(p.data) >= t).astype(np.uint8), p.spacing)


def connected_components(m: BinaryMask, connectivity: int = 26) -> ComponentLabeling:
    """Label 3D connected components under 6/18/26-connectivity.

    Component ids are renumbered so that id order follows the first
    occurrence of each component in flat scan order of the array, making the
    labeling deterministic regardless of the underlying labeling pass.
    """
    if connectivity not in _STRUCTS:
        raise ValueError(f"connectivity must be one of 6/18/26, got {connectivity}")
    raw, k = ndimage.label(m.data, structure=_STRUCTS[connectivity])
    if k == 0:
        return ComponentLabeling(
            labels=np.zeros(m.dims, dtype=np.int32),
            spacing=m.spacing,
            sizes=np.zeros(0, dtype=np.int64),
        )
    flat = raw.ravel()
    ids, first_idx = np.unique(flat, return_index=True)
    fg = ids > 0
    ids, first_idx = ids[fg], first_idx[fg]
    remap = np.zeros(k + 1, dtype=np.int32)
    remap[ids[np.argsort(first_idx, kind="stable")]] = np.arange(1, k + 1)
    labels = remap[raw]
    sizes = np.bincount(labels.ravel(), minlength=k + 1)[1:].astype(np.int64)
    return ComponentLabeling(labels=labels, spacing=m.spacing, sizes=sizes)


def distance_field(m: BinaryMask, spacing: tuple[float, float, float] | None = None) -> VoxelGrid:
    """Exact Euclidean distance (mm) from every voxel to the nearest
    foreground voxel centre, honouring anisotropic spacing.

    Foreground voxels map to 0. Raises :class:`EmptyMaskError` when the mask
    has no foreground (the field would be infinite everywhere).
    """
    sp = _as_shape3((float(s) for s in (spacing if spacing is not None else m.spacing)), "spacing")
    if m.count == 0:
        raise EmptyMaskError("distance field undefined for an empty mask")
    dist = ndimage.distance_transform_edt(m.data == 0, sampling=sp)
    return VoxelGrid(np.asarray(dist, dtype=np.float64), sp)
