"""Image-quality metrics on unit-scale images: PSNR and windowed SSIM."""

import math

import numpy as np

from .errors import ShapeError

PSNR_CAP = 99.0  # sentinel written to logs when images are identical

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def psnr(a, b):
    """10*log10(1/MSE) in dB; identical images return +inf (cap when logging)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"psnr shapes differ: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def capped_psnr(a, b):
    return min(psnr(a, b), PSNR_CAP)


def _gaussian_kernel(size=SSIM_WINDOW, sigma=SSIM_SIGMA):
    half = (size - 1) / 2.0
    coords = np.arange(size) - half
    g = np.exp(-(coords**2) / (2.0 * sigma**2))
    kernel = np.outer(g, g)
    return kernel / kernel.sum()


def _window_filter(channel, kernel):
    """Gaussian-weighted mean over every valid window (no padding)."""
    size = kernel.shape[0]
    windows = np.lib.stride_tricks.sliding_window_view(channel, (size, size))
    return np.tensordot(windows, kernel, axes=([2, 3], [0, 1]))


def ssim(a, b):
    """Mean structural similarity with the standard 11x11 Gaussian window.

    Computed per channel on the valid interior and averaged; result in [-1, 1].
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"ssim shapes differ: {a.shape} vs {b.shape}")
    if a.ndim == 2:
        a = a[:, :, None]
        b = b[:, :, None]
    if a.shape[0] < SSIM_WINDOW or a.shape[1] < SSIM_WINDOW:
        raise ShapeError(f"image {a.shape[:2]} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")
    kernel = _gaussian_kernel()
    c1 = SSIM_K1**2
    c2 = SSIM_K2**2
    scores = []
    for ch in range(a.shape[2]):
        x = a[:, :, ch]
        y = b[:, :, ch]
        mu_x = _window_filter(x, kernel)
        mu_y = _window_filter(y, kernel)
        xx = _window_filter(x * x, kernel) - mu_x**2
        yy = _window_filter(y * y, kernel) - mu_y**2
        xy = _window_filter(x * y, kernel) - mu_x * mu_y
        score = ((2 * mu_x * mu_y + c1) * (2 * xy + c2)) / (
            (mu_x**2 + mu_y**2 + c1) * (xx + yy + c2)
        )
        scores.append(score.mean())
    return float(np.mean(scores))
