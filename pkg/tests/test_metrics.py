"""Quality measures: PSNR, perceptual blur, boundary cropping."""

import numpy as np
import pytest
from scipy.ndimage import uniform_filter

from wppsr.errors import DimensionError, ZeroMSEError
from wppsr.metrics import blur_effect, crop_boundary, psnr
from wppsr.textures import grain_texture


class TestPSNR:
    def test_offset_tenth_is_20db(self):
        x = np.zeros((10, 10))
        assert psnr(x, x + 0.1) == pytest.approx(20.0, abs=1e-9)

    def test_offset_hundredth_is_40db(self):
        x = np.zeros((10, 10))
        assert psnr(x, x + 0.01) == pytest.approx(40.0, abs=1e-9)

    def test_identical_images_raise(self, rng):
        x = rng.random((6, 6))
        with pytest.raises(ZeroMSEError):
            psnr(x, x.copy())

    def test_symmetry_and_shift_invariance(self, rng):
        x = rng.random((8, 8)) * 0.5
        y = rng.random((8, 8)) * 0.5
        assert psnr(x, y) == pytest.approx(psnr(y, x), abs=1e-12)
        assert psnr(x + 0.2, y + 0.2) == pytest.approx(psnr(x, y), abs=1e-9)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            psnr(np.zeros((3, 3)), np.zeros((3, 4)))


class TestBlurEffect:
    def test_constant_image_is_zero(self):
        assert blur_effect(np.full((20, 20), 0.4)) == 0.0

    def test_checkerboard_below_half(self):
        i, j = np.indices((32, 32))
        board = ((i + j) % 2).astype(np.float64)
        value = blur_effect(board)
        assert 0.0 <= value < 0.5

    def test_blurred_texture_scores_higher(self, rng):
        img = grain_texture((64, 64), seed=5)
        blurred = uniform_filter(img, size=5, mode="nearest")
        assert blur_effect(blurred) > blur_effect(img)

    def test_range_on_random_images(self, rng):
        for _ in range(20):
            img = rng.random((int(rng.integers(9, 40)), int(rng.integers(9, 40))))
            assert 0.0 <= blur_effect(img) <= 1.0

    def test_monotone_under_repeated_box_blur(self):
        for seed in range(4):
            img = grain_texture((64, 64), seed=seed)
            prev = blur_effect(img)
            for _ in range(4):
                img = uniform_filter(img, size=3, mode="nearest")
                cur = blur_effect(img)
                assert cur >= prev - 1e-6
                prev = cur

    def test_too_small_image(self):
        with pytest.raises(DimensionError):
            blur_effect(np.zeros((8, 30)))


class TestCropBoundary:
    def test_experiment_protocol_dims(self):
        assert crop_boundary(np.zeros((600, 600)), 40).shape == (520, 520)

    def test_zero_margin_identity(self, rng):
        x = rng.random((7, 9))
        assert np.array_equal(crop_boundary(x, 0), x)

    def test_margin_too_large(self):
        with pytest.raises(DimensionError):
            crop_boundary(np.zeros((100, 100)), 50)

    def test_composition_adds_margins(self, rng):
        x = rng.random((30, 30))
        a = crop_boundary(crop_boundary(x, 4), 5)
        b = crop_boundary(x, 9)
        assert np.array_equal(a, b)

    def test_centered(self):
        x = np.arange(25.0).reshape(5, 5)
        assert np.array_equal(crop_boundary(x, 2), [[12.0]])
