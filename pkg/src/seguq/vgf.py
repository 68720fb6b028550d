"""VGF volume file I/O.

A VGF file is a single UTF-8 JSON header line

    {"dims": [nx, ny, nz], "spacing": [sx, sy, sz], "dtype": "f32"|"u8"}

terminated by ``\\n``, followed by the raw little-endian voxel data with x
varying fastest (so the flat index of voxel (x, y, z) is
``x + nx * (y + ny * z)``). Write->read round-trips are bit-exact for both
dtypes.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .grid import VoxelGrid

_DTYPES = {"f32": np.dtype("<f4"), "u8": np.dtype("<u1")}


def write_vgf(path, grid: VoxelGrid, dtype: str = "f32") -> None:
    """Write a grid to ``path``. ``dtype`` selects the stored representation."""
    if dtype not in _DTYPES:
        raise ValueError(f"dtype must be 'f32' or 'u8', got {dtype!r}")
    header = {
        "dims": list(grid.dims),
        "spacing": list(grid.spacing),
        "dtype": dtype,
    }
    payload = np.asarray(grid.data, dtype=_DTYPES[dtype]).ravel(order="F").tobytes()
    with open(path, "wb") as f:
        f.write(json.dumps(header).encode("utf-8"))
        f.write(b"\n")
        f.write(payload)


def read_vgf(path) -> VoxelGrid:
    """Read a VGF file. f32 loads as float32 data, u8 as uint8."""
    raw = Path(path).read_bytes()
    nl = raw.index(b"\n")
    header = json.loads(raw[:nl].decode("utf-8"))
    dims = tuple(int(d) for d in header["dims"])
    spacing = tuple(float(s) for s in header["spacing"])
    dtype = _DTYPES[header["dtype"]]
    n = dims[0] * dims[1] * dims[2]
    body = raw[nl + 1:]
    expected = n * dtype.itemsize
    if len(body) != expected:
        raise ValueError(f"{path}: expected {expected} data bytes, found {len(body)}")
    data = np.frombuffer(body, dtype=dtype, count=n).reshape(dims, order="F")
    return VoxelGrid(data.copy(), spacing)
