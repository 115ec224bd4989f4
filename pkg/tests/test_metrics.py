"""PSNR and SSIM against analytic cases and a direct per-window oracle."""

import math

import numpy as np
import pytest

from trivol.errors import ShapeError
from trivol.image_io import quantize, read_ppm, write_ppm
from trivol.metrics import SSIM_SIGMA, SSIM_WINDOW, capped_psnr, psnr, ssim, _gaussian_kernel


class TestPsnr:
    def test_known_mse(self, rng):
        a = rng.uniform(0.2, 0.8, (16, 16, 3))
        b = a + 0.1  # MSE 0.01
        assert np.isclose(psnr(a, b), 20.0, atol=1e-9)

    def test_identical_images_hit_cap(self, rng):
        a = rng.uniform(size=(8, 8, 3))
        assert math.isinf(psnr(a, a))
        assert capped_psnr(a, a) == 99.0

    def test_black_vs_white_is_zero(self):
        assert np.isclose(psnr(np.zeros((4, 4, 3)), np.ones((4, 4, 3))), 0.0)

    def test_symmetric(self, rng):
        a, b = rng.uniform(size=(8, 8, 3)), rng.uniform(size=(8, 8, 3))
        assert np.isclose(psnr(a, b), psnr(b, a))

    def test_decreases_with_noise_amplitude(self, rng):
        a = rng.uniform(0.3, 0.7, (32, 32, 3))
        values = []
        for amp in (0.01, 0.05, 0.1, 0.2):
            noise = rng.uniform(-amp, amp, a.shape)
            values.append(psnr(a, np.clip(a + noise, 0, 1)))
        assert all(x > y for x, y in zip(values, values[1:]))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            psnr(np.zeros((4, 4, 3)), np.zeros((5, 4, 3)))


def ssim_window_oracle(a, b, k1=0.01, k2=0.03):
    """Direct per-window loop with the standard 11x11 Gaussian."""
    kernel = _gaussian_kernel(SSIM_WINDOW, SSIM_SIGMA)
    c1, c2 = k1**2, k2**2
    scores = []
    for ch in range(a.shape[2]):
        x, y = a[:, :, ch], b[:, :, ch]
        h, w = x.shape
        vals = []
        for i in range(h - SSIM_WINDOW + 1):
            for j in range(w - SSIM_WINDOW + 1):
                wx = x[i : i + SSIM_WINDOW, j : j + SSIM_WINDOW]
                wy = y[i : i + SSIM_WINDOW, j : j + SSIM_WINDOW]
                mu_x = (kernel * wx).sum()
                mu_y = (kernel * wy).sum()
                var_x = (kernel * wx * wx).sum() - mu_x**2
                var_y = (kernel * wy * wy).sum() - mu_y**2
                cov = (kernel * wx * wy).sum() - mu_x * mu_y
                vals.append(
                    ((2 * mu_x * mu_y + c1) * (2 * cov + c2))
                    / ((mu_x**2 + mu_y**2 + c1) * (var_x + var_y + c2))
                )
        scores.append(np.mean(vals))
    return float(np.mean(scores))


class TestSsim:
    def test_identical_images(self, rng):
        a = rng.uniform(size=(16, 16, 3))
        assert np.isclose(ssim(a, a), 1.0)

    def test_luminance_shift_lowers_score(self, rng):
        a = rng.uniform(0.0, 0.5, (16, 16, 3))
        b = np.clip(a + 0.5, 0, 1)
        assert ssim(a, b) < 1.0

    def test_matches_window_oracle(self, rng):
        a = rng.uniform(size=(14, 15, 3))
        b = np.clip(a + rng.normal(scale=0.1, size=a.shape), 0, 1)
        assert np.isclose(ssim(a, b), ssim_window_oracle(a, b), atol=1e-8)

    def test_symmetric(self, rng):
        a = rng.uniform(size=(16, 16, 3))
        b = rng.uniform(size=(16, 16, 3))
        assert np.isclose(ssim(a, b), ssim(b, a), atol=1e-12)

    def test_small_image_rejected(self):
        with pytest.raises(ShapeError):
            ssim(np.zeros((8, 8, 3)), np.zeros((8, 8, 3)))


class TestPpm:
    def test_round_trip_through_quantization(self, tmp_path, rng):
        img = rng.uniform(size=(12, 9, 3))
        path = tmp_path / "img.ppm"
        write_ppm(path, img)
        loaded = read_ppm(path)
        assert loaded.shape == img.shape
        assert np.array_equal(quantize(loaded), quantize(img))
        assert loaded.min() >= 0.0 and loaded.max() <= 1.0

    def test_quantization_rule(self):
        img = np.array([[[0.0, 0.5, 1.2]]])
        assert np.array_equal(quantize(img)[0, 0], [0, 128, 255])

    def test_header_comment_support(self, tmp_path):
        raw = b"P6\n# a comment\n2 1\n255\n" + bytes([255, 0, 0, 0, 255, 0])
        path = tmp_path / "c.ppm"
        path.write_bytes(raw)
        img = read_ppm(path)
        assert np.allclose(img[0, 0], [1, 0, 0])
        assert np.allclose(img[0, 1], [0, 1, 0])
