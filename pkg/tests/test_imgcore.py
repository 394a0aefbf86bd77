import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import bilinear_reference
from selfmad.imgcore import (BoundingBox, ImageFormatError, RngStream, crop_with_margin, load_image,
                             margin_region, resize_bilinear, rng_substream, round_half_up, save_image)

DATA = Path(__file__).parent / "data"


def ppm(w, h, payload: bytes) -> bytes:
    return b"P6\n%d %d\n255\n" % (w, h) + payload


class TestCodec:
    def test_all_255_loads_as_one(self, tmp_path):
        p = tmp_path / "white.ppm"
        p.write_bytes(ppm(2, 2, b"\xff" * 12))
        img = load_image(p)
        assert img.shape == (2, 2, 3)
        assert np.all(img == 1.0)

    def test_linear_scaling(self, tmp_path):
        p = tmp_path / "px.ppm"
        p.write_bytes(ppm(1, 1, bytes([0, 128, 255])))
        np.testing.assert_array_equal(load_image(p)[0, 0], [0.0, 128 / 255, 1.0])

    def test_header_comments(self, tmp_path):
        p = tmp_path / "c.ppm"
        p.write_bytes(b"P6\n# made by hand\n1 1\n255\n" + bytes([1, 2, 3]))
        np.testing.assert_array_equal(load_image(p)[0, 0] * 255, [1, 2, 3])

    def test_roundtrip_bit_identical_file(self, tmp_path, rng):
        raw = rng.integers(0, 256, size=(13, 17, 3), dtype=np.uint8)
        src = tmp_path / "a.ppm"
        src.write_bytes(ppm(17, 13, raw.tobytes()))
        dst = tmp_path / "b.ppm"
        save_image(load_image(src), dst)
        assert dst.read_bytes() == src.read_bytes()

    def test_half_rounds_up(self, tmp_path):
        p = tmp_path / "h.ppm"
        save_image(np.full((2, 2, 3), 0.5), p)
        assert set(p.read_bytes()[-12:]) == {128}

    def test_one_maps_to_255_and_clamps(self, tmp_path):
        p = tmp_path / "o.ppm"
        img = np.ones((1, 2, 3))
        save_image(img, p)
        assert p.read_bytes()[-6:] == b"\xff" * 6

    def test_quantization_bound(self, tmp_path, rng):
        x = rng.random((9, 11, 3))
        p = tmp_path / "q.ppm"
        save_image(x, p)
        assert np.max(np.abs(load_image(p) - x)) <= 1 / 510 + 1e-12

    def test_deterministic_bytes(self, tmp_path, rng):
        x = rng.random((8, 8, 3))
        save_image(x, tmp_path / "1.ppm")
        save_image(x, tmp_path / "2.ppm")
        assert (tmp_path / "1.ppm").read_bytes() == (tmp_path / "2.ppm").read_bytes()

    def test_png_roundtrip(self, tmp_path, rng):
        x = np.floor(rng.random((10, 12, 3)) * 255) / 255
        save_image(x, tmp_path / "x.png")
        np.testing.assert_array_equal(load_image(tmp_path / "x.png"), x)

    def test_gray_pgm(self, tmp_path):
        save_image(np.full((3, 4), 0.2), tmp_path / "g.pgm")
        img = load_image(tmp_path / "g.pgm")
        assert img.shape == (3, 4, 1)

    @pytest.mark.parametrize("payload, msg", [
        (b"P3\n1 1\n255\n0 0 0", "unsupported"),
        (b"P6\n2 2\n255\n" + b"\x00" * 5, "truncated"),
        (b"P6\n0 2\n255\n", "zero-sized"),
        (b"GIF89a", "unsupported"),
        (b"P6\n1 1\n65535\n" + b"\x00" * 6, "8-bit"),
    ])
    def test_bad_files(self, tmp_path, payload, msg):
        p = tmp_path / "bad.ppm"
        p.write_bytes(payload)
        with pytest.raises(ImageFormatError, match=msg):
            load_image(p)

    def test_empty_file(self, tmp_path):
        p = tmp_path / "empty.ppm"
        p.write_bytes(b"")
        with pytest.raises(ImageFormatError):
            load_image(p)


class TestCrop:
    def test_zero_margin_is_exact_box(self, rng):
        img = rng.random((50, 60, 3))
        out = crop_with_margin(img, BoundingBox(10, 5, 20), 0.0)
        np.testing.assert_array_equal(out, img[5:25, 10:30])

    def test_margin_arithmetic(self):
        # side 20 * 1.125 = 22.5 -> 23; center 50 -> origin round_half_up(50 - 11.5) = 39
        img = np.zeros((100, 100, 3))
        assert margin_region(img.shape, BoundingBox(40, 40, 20), 0.125) == (39, 62, 39, 62)
        assert crop_with_margin(img, BoundingBox(40, 40, 20), 0.125).shape == (23, 23, 3)

    def test_large_margin_is_clipped(self):
        img = np.zeros((30, 40, 3))
        out = crop_with_margin(img, BoundingBox(0, 0, 30), 0.5)
        assert out.shape[0] <= 30 and out.shape[1] <= 40
        assert margin_region(img.shape, BoundingBox(0, 0, 30), 0.5) == (0, 30, 0, 38)

    def test_box_outside_image(self):
        with pytest.raises(ValueError):
            crop_with_margin(np.zeros((10, 10, 3)), BoundingBox(5, 5, 8), 0.1)

    def test_margin_range(self):
        with pytest.raises(ValueError):
            crop_with_margin(np.zeros((10, 10, 3)), BoundingBox(0, 0, 4), 0.6)

    def test_round_half_up(self):
        assert round_half_up(22.5) == 23
        assert round_half_up(-0.5) == 0
        assert round_half_up(2.4999) == 2


class TestResize:
    def test_constant_stays_constant(self):
        img = np.full((7, 9, 3), 0.3)
        for shape in [(3, 4), (16, 5), (1, 1), (21, 27)]:
            out = resize_bilinear(img, *shape)
            assert np.all(out == 0.3)

    def test_identity_resize(self, rng):
        img = rng.random((6, 11, 3))
        np.testing.assert_array_equal(resize_bilinear(img, 6, 11), img)

    def test_upscale_matches_reference(self):
        img = np.array([[0.0, 1.0], [1.0, 0.0]])[:, :, None]
        np.testing.assert_allclose(resize_bilinear(img, 4, 4), bilinear_reference(img, 4, 4), atol=1e-15)
        # value at output (1, 1): source coord (0.25, 0.25)
        assert resize_bilinear(img, 4, 4)[1, 1, 0] == pytest.approx(0.375)

    @pytest.mark.parametrize("shape", [(5, 3), (9, 14), (2, 2), (17, 6)])
    def test_random_matches_reference(self, rng, shape):
        img = rng.random((7, 8, 3))
        np.testing.assert_allclose(resize_bilinear(img, *shape), bilinear_reference(img, *shape), atol=1e-13)

    def test_crop_then_identity_resize(self, rng):
        img = rng.random((40, 40, 3))
        box = BoundingBox(3, 7, 25)
        crop = crop_with_margin(img, box, 0.0)
        np.testing.assert_array_equal(resize_bilinear(crop, 25, 25), img[7:32, 3:28])

    @settings(max_examples=40, deadline=None)
    @given(arrays(np.float64, (6, 5, 3), elements=st.floats(0, 1)), st.integers(1, 12), st.integers(1, 12))
    def test_range_safety(self, img, h, w):
        out = resize_bilinear(img, h, w)
        assert out.min() >= 0.0 and out.max() <= 1.0

    def test_bad_dims(self):
        with pytest.raises(ValueError):
            resize_bilinear(np.zeros((4, 4, 3)), 0, 3)


class TestRng:
    def test_same_stream_same_draws(self):
        a = RngStream(5).child("x").generator().random(100)
        b = RngStream(5).child("x").generator().random(100)
        np.testing.assert_array_equal(a, b)

    def test_distinct_labels_distinct_state(self):
        root = RngStream(5)
        a, b = rng_substream(root, "a"), rng_substream(root, "b")
        assert a.state_words() != b.state_words()
        assert a.generator().random() != b.generator().random()

    def test_int_and_str_labels_differ(self):
        root = RngStream(1)
        assert root.child(7).state_words() != root.child("7").state_words()

    def test_nesting_order_matters(self):
        root = RngStream(1)
        assert root.child(1).child(2).state_words() != root.child(2).child(1).state_words()

    def test_golden_sequence(self):
        golden = json.loads((DATA / "rng_golden.json").read_text())
        stream = RngStream(golden["seed"])
        for label in golden["path"]:
            stream = stream.child(label)
        gen = stream.generator()
        assert [int(v) for v in gen.integers(0, 2**63, size=16, dtype=np.int64)] == golden["uint64"]
        assert [float(v) for v in gen.random(16)] == golden["uniform"]

    def test_bad_seed(self):
        with pytest.raises(ValueError):
            RngStream(-1)
        with pytest.raises(TypeError):
            RngStream(1).child(1.5)
