"""Pixel-space utilities: validation, resampling, edits, and quality metrics."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from PIL import Image

from phashbench import image_ops
from phashbench.image_ops import (
    Compress,
    CorruptFileError,
    ImageTooSmallError,
    IntensityRangeError,
    ParameterRangeError,
    Resize,
    Rotate,
    ShapeError,
    UnsupportedFormatError,
    Vignette,
)
from phashbench.rng import substream

small_images = arrays(
    np.float64,
    st.tuples(st.integers(8, 16), st.integers(8, 16)),
    elements=st.floats(0.0, 1.0, allow_nan=False),
)


# ---------------------------------------------------------------------------
# Validation and color


def test_as_pixel_image_promotes_2d():
    out = image_ops.as_pixel_image(np.zeros((4, 5)))
    assert out.shape == (4, 5, 1)


def test_as_pixel_image_accepts_tiny_overshoot():
    out = image_ops.as_pixel_image(np.full((2, 2), 1.0 + 1e-12))
    assert out.max() == 1.0


def test_as_pixel_image_rejects_bad_ranges():
    with pytest.raises(IntensityRangeError):
        image_ops.as_pixel_image(np.full((2, 2), 1.5))
    with pytest.raises(IntensityRangeError):
        image_ops.as_pixel_image(np.full((2, 2), np.nan))


def test_as_pixel_image_rejects_bad_shapes():
    with pytest.raises(ShapeError):
        image_ops.as_pixel_image(np.zeros((2, 2, 4)))
    with pytest.raises(ShapeError):
        image_ops.as_pixel_image(np.zeros((0, 3, 1)))
    with pytest.raises(ShapeError):
        image_ops.as_pixel_image(np.zeros(7))


def test_min_side_gate():
    with pytest.raises(ImageTooSmallError):
        image_ops.as_pixel_image(np.zeros((8, 8, 1)), min_side=9)


def test_luminance_weights():
    px = np.array([[[0.5, 0.25, 1.0]]])
    expected = 0.299 * 0.5 + 0.587 * 0.25 + 0.114 * 1.0
    assert image_ops.luminance(px)[0, 0] == pytest.approx(expected, abs=1e-15)


def test_luminance_passthrough_for_gray():
    img = np.random.default_rng(0).uniform(size=(5, 4, 1))
    assert np.array_equal(image_ops.luminance(img), img[:, :, 0])


# ---------------------------------------------------------------------------
# Resampling


def test_resample_area_matches_block_mean():
    rng = substream(5, "resample-oracle")
    img = rng.uniform(size=(12, 8, 3))
    out = image_ops.resample_area(img, 3, 2)
    expected = img.reshape(3, 4, 2, 4, 3).mean(axis=(1, 3))
    assert np.allclose(out, expected, atol=1e-12)


@given(small_images, st.integers(3, 20), st.integers(3, 20))
@settings(max_examples=40, deadline=None)
def test_resample_area_preserves_mean(img, oh, ow):
    out = image_ops.resample_area(img, oh, ow)
    # every output cell is a convex average and cells tile the source evenly
    assert abs(out.mean() - img.mean()) < 1e-9


def test_resample_area_constant_upsample():
    img = np.full((4, 4, 1), 0.37)
    out = image_ops.resample_area(img, 9, 13)
    assert np.allclose(out, 0.37, atol=1e-12)


def test_resize_bilinear_identity():
    rng = substream(6, "bilinear")
    img = rng.uniform(size=(7, 9, 3))
    assert np.allclose(image_ops.resize_bilinear(img, 7, 9), img, atol=1e-12)


def test_resize_bilinear_constant():
    img = np.full((6, 6, 1), 0.62)
    assert np.allclose(image_ops.resize_bilinear(img, 11, 4), 0.62, atol=1e-12)


# ---------------------------------------------------------------------------
# JPEG emulation


_IJG_BASE = np.array(
    [
        [16, 11, 10, 16, 24, 40, 51, 61],
        [12, 12, 14, 19, 26, 58, 60, 55],
        [14, 13, 16, 24, 40, 57, 69, 56],
        [14, 17, 22, 29, 51, 87, 80, 62],
        [18, 22, 37, 56, 68, 109, 103, 77],
        [24, 35, 55, 64, 81, 104, 113, 92],
        [49, 64, 78, 87, 103, 121, 120, 101],
        [72, 92, 95, 98, 112, 100, 103, 99],
    ],
    dtype=np.float64,
)


def test_quant_table_quality_50_is_base_table():
    assert np.array_equal(image_ops._jpeg_quant_table(50), _IJG_BASE)


def test_quant_table_quality_25_doubles_entries():
    # scale = 5000/25 = 200 -> floor((T*200 + 50)/100) = 2T, clipped to 255
    expected = np.clip(np.floor((_IJG_BASE * 200 + 50) / 100), 1, 255)
    assert np.array_equal(image_ops._jpeg_quant_table(25), expected)


def test_quant_table_quality_100_is_all_ones():
    assert np.array_equal(image_ops._jpeg_quant_table(100), np.ones((8, 8)))


def test_jpeg_high_quality_nearly_lossless(corpus_images):
    _, img = corpus_images[0]
    out = image_ops.jpeg_compress_emulate(img, 100)
    assert image_ops.l2_normalized(img, out) < 0.01


def test_jpeg_quality_orders_distortion(corpus_images):
    _, img = corpus_images[1]
    hi = image_ops.l2_normalized(img, image_ops.jpeg_compress_emulate(img, 90))
    lo = image_ops.l2_normalized(img, image_ops.jpeg_compress_emulate(img, 5))
    assert lo > hi


def test_jpeg_handles_non_multiple_of_8_and_gray():
    rng = substream(7, "jpeg-pad")
    img = rng.uniform(size=(13, 21, 1))
    out = image_ops.jpeg_compress_emulate(img, 50)
    assert out.shape == (13, 21, 1)
    assert out.min() >= 0.0 and out.max() <= 1.0


def test_jpeg_rejects_out_of_range_quality():
    with pytest.raises(ParameterRangeError):
        image_ops.jpeg_compress_emulate(np.zeros((8, 8, 1)), 0)


# ---------------------------------------------------------------------------
# Geometric and photometric edits


def test_rotate_zero_is_identity():
    rng = substream(8, "rotate")
    img = rng.uniform(size=(9, 9, 3))
    assert np.allclose(image_ops.rotate_bilinear(img, 0.0), img, atol=1e-12)


def test_rotate_90_matches_rot90():
    rng = substream(9, "rotate90")
    img = rng.uniform(size=(9, 9, 1))
    out = image_ops.rotate_bilinear(img, 90.0)
    assert np.allclose(out, np.rot90(img, 1, axes=(0, 1)), atol=1e-9)


def test_rotate_45_blanks_corners(corpus_images):
    _, img = corpus_images[0]
    out = image_ops.rotate_bilinear(img, 45.0)
    assert np.all(out[0, 0] == 0.0) and np.all(out[-1, -1] == 0.0)


def test_vignette_zero_strength_is_identity():
    rng = substream(10, "vignette")
    img = rng.uniform(size=(6, 7, 3))
    assert np.allclose(image_ops.apply_vignette(img, 0.0), img, atol=1e-12)


def test_vignette_scales_corner_exactly():
    img = np.full((9, 9, 1), 0.8)
    out = image_ops.apply_vignette(img, 0.25)
    assert out[4, 4, 0] == pytest.approx(0.8, abs=1e-12)  # center untouched
    assert out[0, 0, 0] == pytest.approx(0.8 * 0.75, abs=1e-12)
    assert out[8, 8, 0] == pytest.approx(0.8 * 0.75, abs=1e-12)


def test_edit_param_validation():
    with pytest.raises(ParameterRangeError):
        Compress(quality=0)
    with pytest.raises(ParameterRangeError):
        Compress(quality=101)
    with pytest.raises(ParameterRangeError):
        Resize(scale=0.0)
    with pytest.raises(ParameterRangeError):
        Resize(scale=4.5)
    with pytest.raises(ParameterRangeError):
        Rotate(degrees=181.0)
    with pytest.raises(ParameterRangeError):
        Vignette(strength=-0.1)


def test_apply_edit_dispatch_and_shape(corpus_images):
    _, img = corpus_images[2]
    for op in (Compress(60), Resize(0.5), Resize(2.0), Rotate(10.0), Vignette(0.5)):
        out = image_ops.apply_edit(img, op)
        assert out.shape == img.shape
    with pytest.raises(TypeError):
        image_ops.apply_edit(img, "rotate")


def test_resize_round_trips_through_midsize():
    img = np.full((10, 10, 1), 0.5)
    out = image_ops.apply_edit(img, Resize(scale=0.3))
    assert out.shape == (10, 10, 1)
    assert np.allclose(out, 0.5, atol=1e-9)


# ---------------------------------------------------------------------------
# Metrics


def brute_force_ssim(a, b, window=8):
    ga = image_ops.luminance(image_ops.as_pixel_image(a))
    gb = image_ops.luminance(image_ops.as_pixel_image(b))
    h, w = ga.shape
    c1, c2 = 0.01**2, 0.03**2
    vals = []
    for i in range(h - window + 1):
        for j in range(w - window + 1):
            pa = ga[i : i + window, j : j + window]
            pb = gb[i : i + window, j : j + window]
            mu_a, mu_b = pa.mean(), pb.mean()
            var_a, var_b = pa.var(), pb.var()
            cov = ((pa - mu_a) * (pb - mu_b)).mean()
            vals.append(
                ((2 * mu_a * mu_b + c1) * (2 * cov + c2))
                / ((mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2))
            )
    return float(np.mean(vals))


@given(st.data())
@settings(max_examples=20, deadline=None)
def test_ssim_matches_brute_force(data):
    img_a = data.draw(small_images)
    img_b = data.draw(
        arrays(np.float64, img_a.shape, elements=st.floats(0.0, 1.0, allow_nan=False))
    )
    assert image_ops.ssim(img_a, img_b) == pytest.approx(
        brute_force_ssim(img_a, img_b), abs=1e-10
    )


def test_ssim_identity_and_symmetry(corpus_images):
    _, img = corpus_images[0]
    other = corpus_images[1][1]
    assert image_ops.ssim(img, img) == pytest.approx(1.0, abs=1e-12)
    assert image_ops.ssim(img, other) == pytest.approx(
        image_ops.ssim(other, img), abs=1e-12
    )
    assert image_ops.ssim(img, other) < 1.0


def test_ssim_requires_window_sized_input():
    with pytest.raises(ImageTooSmallError):
        image_ops.ssim(np.zeros((4, 4, 1)), np.zeros((4, 4, 1)))


def test_l2_normalized_values():
    a = np.zeros((4, 4, 1))
    b = np.full((4, 4, 1), 0.5)
    assert image_ops.l2_normalized(a, a) == 0.0
    assert image_ops.l2_normalized(a, b) == pytest.approx(0.5, abs=1e-15)
    with pytest.raises(ShapeError):
        image_ops.l2_normalized(a, np.zeros((4, 5, 1)))


def test_l2_hand_value_mixed_diff():
    a = np.zeros((1, 2, 1))
    b = np.array([[[0.3], [0.4]]])
    assert image_ops.l2_normalized(a, b) == pytest.approx(
        np.sqrt((0.09 + 0.16) / 2), abs=1e-15
    )


# ---------------------------------------------------------------------------
# File IO


def test_png_round_trip(tmp_path, corpus_images):
    _, img = corpus_images[3]
    path = tmp_path / "x.png"
    image_ops.save_image(path, img)
    back = image_ops.load_image(path)
    assert back.shape == img.shape
    assert np.max(np.abs(back - img)) <= 0.5 / 255.0 + 1e-12


def test_pgm_and_ppm_round_trip(tmp_path):
    rng = substream(12, "io")
    gray = np.round(rng.uniform(size=(9, 7, 1)) * 255) / 255
    color = np.round(rng.uniform(size=(5, 6, 3)) * 255) / 255
    image_ops.save_image(tmp_path / "g.pgm", gray)
    image_ops.save_image(tmp_path / "c.ppm", color)
    assert np.allclose(image_ops.load_image(tmp_path / "g.pgm"), gray, atol=1e-12)
    assert np.allclose(image_ops.load_image(tmp_path / "c.ppm"), color, atol=1e-12)


def test_save_rejects_channel_mismatch(tmp_path):
    with pytest.raises(UnsupportedFormatError):
        image_ops.save_image(tmp_path / "x.pgm", np.zeros((4, 4, 3)))
    with pytest.raises(UnsupportedFormatError):
        image_ops.save_image(tmp_path / "x.ppm", np.zeros((4, 4, 1)))
    with pytest.raises(UnsupportedFormatError):
        image_ops.save_image(tmp_path / "x.gif", np.zeros((4, 4, 1)))


def test_load_rejects_other_formats(tmp_path):
    path = tmp_path / "x.bmp"
    Image.fromarray(np.zeros((4, 4), dtype=np.uint8)).save(path, format="BMP")
    with pytest.raises(UnsupportedFormatError):
        image_ops.load_image(path)


def test_load_corrupt_file(tmp_path):
    path = tmp_path / "x.png"
    path.write_bytes(b"\x89PNG\r\n\x1a\n" + b"garbage" * 4)
    with pytest.raises(CorruptFileError):
        image_ops.load_image(path)


def test_load_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        image_ops.load_image(tmp_path / "nope.png")


def test_palette_png_loads_as_rgb(tmp_path):
    img = Image.fromarray(
        np.arange(16, dtype=np.uint8).reshape(4, 4) * 8, mode="L"
    ).convert("P")
    path = tmp_path / "p.png"
    img.save(path)
    out = image_ops.load_image(path)
    assert out.shape == (4, 4, 3)
