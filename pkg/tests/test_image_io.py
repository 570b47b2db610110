import numpy as np
import pytest

from synfocus import ImageRaster
from synfocus.image_io import (
    load_raster,
    preview_u8,
    read_mask,
    read_pfm,
    read_pgm,
    save_raster,
    write_mask,
    write_pfm,
    write_pgm,
)


class TestPfm:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        img = rng.normal(0, 100, (13, 7)).astype(np.float32)
        path = tmp_path / "x.pfm"
        write_pfm(path, img)
        back = read_pfm(path)
        assert back.dtype == np.float32
        assert np.array_equal(back, img)

    def test_header_is_little_endian_scale(self, tmp_path):
        path = tmp_path / "x.pfm"
        write_pfm(path, np.zeros((2, 3), dtype=np.float32))
        head = path.read_bytes()[:16]
        assert head.startswith(b"Pf\n3 2\n-1.0\n")

    def test_rejects_color(self, tmp_path):
        path = tmp_path / "bad.pfm"
        path.write_bytes(b"PF\n1 1\n-1.0\n" + b"\x00" * 12)
        with pytest.raises(ValueError, match="color"):
            read_pfm(path)

    def test_rejects_truncation(self, tmp_path):
        path = tmp_path / "short.pfm"
        path.write_bytes(b"Pf\n4 4\n-1.0\n" + b"\x00" * 8)
        with pytest.raises(ValueError, match="truncated"):
            read_pfm(path)


class TestPgm:
    def test_round_trip_u8(self, tmp_path):
        img = np.arange(12, dtype=np.uint8).reshape(3, 4)
        path = tmp_path / "x.pgm"
        write_pgm(path, img)
        back = read_pgm(path)
        assert back.dtype == np.uint8
        assert np.array_equal(back, img)

    def test_round_trip_u16(self, tmp_path):
        rng = np.random.default_rng(1)
        img = rng.integers(0, 65536, (5, 6)).astype(np.uint16)
        path = tmp_path / "x16.pgm"
        write_pgm(path, img)
        back = read_pgm(path)
        assert back.dtype == np.uint16
        assert np.array_equal(back, img)

    def test_sixteen_bit_is_big_endian(self, tmp_path):
        path = tmp_path / "x16.pgm"
        write_pgm(path, np.array([[0x0102]], dtype=np.uint16))
        payload = path.read_bytes()
        assert payload.endswith(b"\x01\x02")

    def test_comment_in_header(self, tmp_path):
        path = tmp_path / "c.pgm"
        path.write_bytes(b"P5\n# a comment\n2 1\n255\n\x07\x09")
        assert read_pgm(path).tolist() == [[7, 9]]

    def test_mask_round_trip(self, tmp_path):
        mask = np.array([[True, False], [False, True]])
        path = tmp_path / "m.pgm"
        write_mask(path, mask)
        assert np.array_equal(read_mask(path), mask)


class TestPreview:
    def test_min_max_stretch(self):
        r = ImageRaster.from_array([[0.0, 5.0, 10.0]])
        assert preview_u8(r).tolist() == [[0, 128, 255]]

    def test_invalid_pixels_are_black(self):
        r = ImageRaster.from_array([[1.0, np.nan, 2.0]])
        out = preview_u8(r)
        assert out[0, 1] == 0
        assert out[0, 2] == 255

    def test_flat_image(self):
        r = ImageRaster.from_array(np.full((2, 2), 3.0))
        assert preview_u8(r).tolist() == [[0, 0], [0, 0]]


class TestRasterFiles:
    def test_save_load_with_mask_sidecar(self, tmp_path):
        values = np.arange(6.0).reshape(2, 3)
        mask = np.array([[True, True, False], [True, False, True]])
        path = tmp_path / "r.pfm"
        save_raster(path, ImageRaster.from_array(values, mask))
        assert (tmp_path / "r_mask.pgm").exists()
        back = load_raster(path)
        assert np.array_equal(back.valid_mask, mask)
        assert np.allclose(back.samples[mask], values[mask])

    def test_fully_valid_skips_sidecar(self, tmp_path):
        path = tmp_path / "r.pfm"
        save_raster(path, ImageRaster.from_array(np.ones((2, 2))))
        assert not (tmp_path / "r_mask.pgm").exists()
        assert load_raster(path).valid_mask.all()

    def test_load_sixteen_bit_pgm_as_raster(self, tmp_path):
        img = (np.arange(4, dtype=np.uint16) * 1000).reshape(2, 2)
        path = tmp_path / "thermal.pgm"
        write_pgm(path, img)
        r = load_raster(path)
        assert r.samples.tolist() == [[0.0, 1000.0], [2000.0, 3000.0]]

    def test_unknown_format(self, tmp_path):
        path = tmp_path / "x.png"
        path.write_bytes(b"")
        with pytest.raises(ValueError, match="unsupported"):
            load_raster(path)
