import json

import numpy as np
import pytest

from seguq import VoxelGrid, read_vgf, write_vgf


def test_header_is_one_json_line(tmp_path):
    g = VoxelGrid(np.zeros((2, 3, 4), dtype=np.float32), spacing=(1.0, 1.0, 3.0))
    path = tmp_path / "v.vgf"
    write_vgf(path, g)
    raw = path.read_bytes()
    header = json.loads(raw[:raw.index(b"\n")])
    assert header == {"dims": [2, 3, 4], "spacing": [1.0, 1.0, 3.0], "dtype": "f32"}
    assert len(raw) == raw.index(b"\n") + 1 + 2 * 3 * 4 * 4


def test_x_fastest_layout(tmp_path):
    data = np.arange(24, dtype=np.float32).reshape(2, 3, 4, order="F")
    path = tmp_path / "v.vgf"
    write_vgf(path, VoxelGrid(data))
    raw = path.read_bytes()
    body = raw[raw.index(b"\n") + 1:]
    flat = np.frombuffer(body, dtype="<f4")
    # Voxel (x, y, z) lives at flat index x + nx*(y + ny*z).
    assert flat[1] == data[1, 0, 0]
    assert flat[2] == data[0, 1, 0]
    assert flat[6] == data[0, 0, 1]


def test_f32_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    data = rng.standard_normal((4, 5, 6)).astype(np.float32)
    data[0, 0, 0] = 0.0
    data[1, 0, 0] = np.finfo(np.float32).max
    data[2, 0, 0] = -np.finfo(np.float32).max
    data[3, 0, 0] = np.finfo(np.float32).tiny  # smallest normal
    path = tmp_path / "v.vgf"
    write_vgf(path, VoxelGrid(data, spacing=(0.5, 1.0, 2.0)))
    back = read_vgf(path)
    assert back.spacing == (0.5, 1.0, 2.0)
    assert back.data.dtype == np.dtype("<f4")
    assert np.array_equal(back.data.view(np.uint32), data.view(np.uint32))
    # Second trip is byte-identical.
    path2 = tmp_path / "v2.vgf"
    write_vgf(path2, back)
    assert path.read_bytes() == path2.read_bytes()


def test_u8_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(1)
    data = rng.integers(0, 256, size=(3, 3, 3), dtype=np.uint8)
    data[0, 0, 0] = 0
    data[1, 1, 1] = 255
    path = tmp_path / "m.vgf"
    write_vgf(path, VoxelGrid(data), dtype="u8")
    back = read_vgf(path)
    np.testing.assert_array_equal(back.data, data)
    path2 = tmp_path / "m2.vgf"
    write_vgf(path2, back, dtype="u8")
    assert path.read_bytes() == path2.read_bytes()


def test_truncated_body_rejected(tmp_path):
    g = VoxelGrid(np.zeros((2, 2, 2), dtype=np.float32))
    path = tmp_path / "v.vgf"
    write_vgf(path, g)
    path.write_bytes(path.read_bytes()[:-1])
    with pytest.raises(ValueError):
        read_vgf(path)
