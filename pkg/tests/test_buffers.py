import numpy as np
import pytest

from sketchface.buffers import (
    ContractViolation,
    EdgeMap,
    ImageBuffer,
    read_edge_map,
    read_image,
    snap_to_byte_grid,
    write_png,
)


def test_channel_constraint():
    with pytest.raises(ContractViolation):
        ImageBuffer(np.zeros((4, 4, 2), dtype=np.float32), "unit")


def test_range_enforced():
    with pytest.raises(ContractViolation):
        ImageBuffer(np.full((4, 4, 1), 2.0, dtype=np.float32), "unit")
    with pytest.raises(ContractViolation):
        ImageBuffer(np.full((4, 4, 1), -0.5, dtype=np.float32), "byte")


def test_conversion_round_trip_within_quantization():
    rng = np.random.default_rng(0)
    img = ImageBuffer(rng.random((8, 8, 3)).astype(np.float32), "unit")
    for tag in ("signed", "byte"):
        back = img.convert(tag).convert("unit")
        assert np.max(np.abs(back.data - img.data)) < 1.0 / 255.0


def test_edge_map_contracts():
    with pytest.raises(ContractViolation):
        EdgeMap(ImageBuffer(np.zeros((4, 4, 3), dtype=np.float32), "unit"))
    with pytest.raises(ContractViolation):
        EdgeMap(ImageBuffer(np.zeros((4, 4, 1), dtype=np.float32), "byte"))
    with pytest.raises(ContractViolation):
        EdgeMap.from_array(np.zeros((4, 4), dtype=np.float32), kind="nope")


def test_png_round_trip_rgb(tmp_path):
    rng = np.random.default_rng(1)
    img = snap_to_byte_grid(ImageBuffer(rng.random((12, 10, 3)).astype(np.float32), "unit"))
    path = tmp_path / "img.png"
    write_png(img, path)
    back = read_image(path)
    assert np.array_equal(back.data, img.data)


def test_png_round_trip_edge_map(tmp_path):
    rng = np.random.default_rng(2)
    m = EdgeMap.from_array((rng.random((9, 9)) > 0.5).astype(np.float32))
    path = tmp_path / "m.png"
    write_png(m, path)
    back = read_edge_map(path)
    assert np.array_equal(back.data, m.data)


def test_immutability():
    img = ImageBuffer(np.zeros((4, 4, 1), dtype=np.float32), "unit")
    with pytest.raises(ValueError):
        img.data[0, 0, 0] = 1.0
