import math

import numpy as np
import pytest

from mimicforge import metrics
from mimicforge.imgcore import InvalidImageError
from mimicforge.metrics import SsimParams, cosine_similarity, masked_crop, psnr, ssim


def constant_image(value, size=32):
    return np.full((size, size, 1), np.float32(value), dtype=np.float32)


class TestSsim:
    def test_self_similarity(self, natural_image):
        assert ssim(natural_image, natural_image) == pytest.approx(1.0, abs=1e-6)

    def test_constant_images_closed_form(self):
        # zero variance: SSIM = (2 mu_a mu_b + c1) / (mu_a^2 + mu_b^2 + c1)
        a, b = constant_image(0.5), constant_image(0.6)
        expected = (2 * 0.5 * 0.6 + 1e-4) / (0.5**2 + 0.6**2 + 1e-4)
        # 1e-7 headroom: 0.6 is not exactly representable in float32
        assert ssim(a, b) == pytest.approx(expected, abs=1e-7)
        assert expected == pytest.approx(0.9836, abs=1e-4)

    def test_anticorrelated_binary_negative(self):
        rng = np.random.default_rng(0)
        x = (rng.random((32, 32, 1)) > 0.5).astype(np.float32)
        assert ssim(x, 1.0 - x) < 0.0

    def test_symmetry(self, natural_image):
        rng = np.random.default_rng(1)
        other = np.clip(natural_image + 0.1 * rng.standard_normal(natural_image.shape), 0, 1).astype(np.float32)
        assert abs(ssim(natural_image, other) - ssim(other, natural_image)) < 1e-9

    def test_shape_mismatch(self):
        with pytest.raises(InvalidImageError):
            ssim(constant_image(0.5, 16), constant_image(0.5, 32))

    def test_bad_params(self):
        with pytest.raises(ValueError):
            SsimParams(window=4)
        with pytest.raises(ValueError):
            SsimParams(k1=0.0)


class TestPsnr:
    def test_identical_is_inf(self, natural_image):
        assert psnr(natural_image, natural_image) == math.inf

    def test_mse_001_is_20db_exact(self):
        # 4 of 100 pixels differ by 0.5: MSE = 1.0/100 -> exactly 20 dB
        a = np.zeros((10, 10, 1), dtype=np.float32)
        b = a.copy()
        b[0, :4, 0] = 0.5
        assert psnr(a, b) == 20.0

    def test_zeros_vs_ones_is_0db(self):
        assert psnr(constant_image(0.0), constant_image(1.0)) == 0.0

    def test_monotone_in_noise_amplitude(self, natural_image):
        rng = np.random.default_rng(2)
        noise = rng.standard_normal(natural_image.shape)
        values = []
        for amp in (0.01, 0.02, 0.05, 0.1, 0.2):
            noisy = np.clip(natural_image + amp * noise, 0, 1).astype(np.float32)
            values.append(psnr(natural_image, noisy))
        assert all(a > b for a, b in zip(values, values[1:]))


class TestMaskedCrop:
    def test_full_mask_returns_whole_image(self, natural_image):
        mask = np.ones(natural_image.shape[:2] + (1,), dtype=np.float32)
        assert np.array_equal(masked_crop(natural_image, mask), natural_image)

    def test_single_pixel(self, natural_image):
        mask = np.zeros(natural_image.shape[:2] + (1,), dtype=np.float32)
        mask[3, 5, 0] = 1.0
        crop = masked_crop(natural_image, mask)
        assert crop.shape == (1, 1, 3)
        assert np.array_equal(crop[0, 0], natural_image[3, 5])

    def test_l_shaped_mask(self):
        img = np.arange(36, dtype=np.float32).reshape(6, 6, 1) / 36.0
        mask = np.zeros((6, 6, 1), dtype=np.float32)
        mask[1:5, 2, 0] = 1.0  # vertical bar
        mask[4, 2:5, 0] = 1.0  # horizontal foot
        crop = masked_crop(img, mask)
        assert crop.shape == (4, 3, 1)
        # in-mask pixels preserved, out-of-mask pixels in the box zeroed
        assert crop[0, 0, 0] == img[1, 2, 0]
        assert crop[3, 2, 0] == img[4, 4, 0]
        assert crop[0, 1, 0] == 0.0 and crop[0, 2, 0] == 0.0

    def test_area_matches_bounding_box(self, natural_image):
        mask = np.zeros(natural_image.shape[:2] + (1,), dtype=np.float32)
        mask[10:20, 30:35, 0] = 1.0
        mask[15, 40, 0] = 1.0
        crop = masked_crop(natural_image, mask)
        assert crop.shape[:2] == (10, 11)

    def test_empty_mask_rejected(self, natural_image):
        with pytest.raises(InvalidImageError):
            masked_crop(natural_image, np.zeros(natural_image.shape[:2] + (1,), dtype=np.float32))


class TestCosine:
    def test_self_is_one(self):
        assert cosine_similarity([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == pytest.approx(1.0)

    def test_orthogonal_is_zero(self):
        assert cosine_similarity([1.0, 0.0], [0.0, 1.0]) == 0.0

    def test_hand_value(self):
        assert cosine_similarity([1.0, 2.0], [2.0, 1.0]) == 0.8

    def test_scale_invariance(self):
        rng = np.random.default_rng(3)
        u, v = rng.standard_normal(16), rng.standard_normal(16)
        assert cosine_similarity(3.7 * u, v) == pytest.approx(cosine_similarity(u, 0.2 * v), abs=1e-12)

    def test_zero_norm_rejected(self):
        with pytest.raises(ValueError):
            cosine_similarity([0.0, 0.0], [1.0, 0.0])


class TestScoreFile:
    def test_roundtrip(self, tmp_path):
        lines = [
            {"id": "a", "metric": "clip_i", "value": 0.9},
            {"id": "b", "metric": "lpips", "value": 0.1},
        ]
        path = tmp_path / "scores.jsonl"
        metrics.write_scores(path, lines)
        assert metrics.read_scores(path) == lines

    def test_malformed_rejected(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"id": "a"}\n')
        with pytest.raises(ValueError):
            metrics.read_scores(path)
