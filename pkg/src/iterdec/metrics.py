"""Distortion and perceptual quality measures on [0, 255] grayscale rasters.

SSIM follows the original single-scale formulation (11x11 Gaussian window,
sigma 1.5, K1=0.01, K2=0.03, L=255, 'valid' windowing); MS-SSIM uses five
dyadic scales with the standard exponents, falling back to fewer scales
with renormalized exponents when the image is too small.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import convolve2d

from .errors import ParameterError, ShapeError

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
SSIM_L = 255.0

MS_SSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)


@dataclass
class MetricsRecord:
    image_id: str
    mse: float
    psnr_db: float
    ssim: float
    ms_ssim: float
    estimated_bpp: float


def prepare_raster(values01: np.ndarray) -> np.ndarray:
    """Clamp a [0, 1] raster and round half-up onto the 8-bit scale."""
    return np.floor(np.clip(values01, 0.0, 1.0) * 255.0 + 0.5)


def mse(ref: np.ndarray, test: np.ndarray) -> float:
    ref = np.asarray(ref, dtype=np.float64)
    test = np.asarray(test, dtype=np.float64)
    if ref.shape != test.shape:
        raise ShapeError(f"raster shapes differ: {ref.shape} vs {test.shape}")
    return float(np.mean((ref - test) ** 2))


def psnr(mse_value: float) -> float:
    """Peak signal-to-noise ratio against the 8-bit peak of 255."""
    if mse_value < 0:
        raise ParameterError(f"mse must be non-negative, got {mse_value}")
    if mse_value == 0:
        return math.inf
    return 10.0 * math.log10(255.0**2 / mse_value)


def _gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    half = (size - 1) / 2.0
    coords = np.arange(size) - half
    g = np.exp(-(coords**2) / (2.0 * sigma**2))
    window = np.outer(g, g)
    return window / window.sum()


_WINDOW = _gaussian_window()


def _ssim_maps(ref: np.ndarray, test: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Local (full SSIM, contrast-structure) maps over valid windows."""
    if ref.shape != test.shape:
        raise ShapeError(f"raster shapes differ: {ref.shape} vs {test.shape}")
    if min(ref.shape) < SSIM_WINDOW:
        raise ParameterError(f"image {ref.shape} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")
    x = np.asarray(ref, dtype=np.float64)
    y = np.asarray(test, dtype=np.float64)
    c1 = (SSIM_K1 * SSIM_L) ** 2
    c2 = (SSIM_K2 * SSIM_L) ** 2

    mu_x = convolve2d(x, _WINDOW, mode="valid")
    mu_y = convolve2d(y, _WINDOW, mode="valid")
    xx = convolve2d(x * x, _WINDOW, mode="valid")
    yy = convolve2d(y * y, _WINDOW, mode="valid")
    xy = convolve2d(x * y, _WINDOW, mode="valid")
    var_x = xx - mu_x**2
    var_y = yy - mu_y**2
    cov = xy - mu_x * mu_y

    luminance = (2.0 * mu_x * mu_y + c1) / (mu_x**2 + mu_y**2 + c1)
    cs = (2.0 * cov + c2) / (var_x + var_y + c2)
    return luminance * cs, cs


def ssim(ref: np.ndarray, test: np.ndarray) -> float:
    """Mean local structural similarity."""
    full, _ = _ssim_maps(ref, test)
    return float(full.mean())


def _downsample(x: np.ndarray) -> np.ndarray:
    """2x2 average low-pass, then decimate by two (odd edges dropped)."""
    h, w = x.shape
    h2, w2 = h - h % 2, w - w % 2
    x = x[:h2, :w2]
    return (x[0::2, 0::2] + x[1::2, 0::2] + x[0::2, 1::2] + x[1::2, 1::2]) / 4.0


def feasible_scales(shape: tuple[int, int], max_scales: int = len(MS_SSIM_WEIGHTS)) -> int:
    scales = 0
    size = min(shape)
    while scales < max_scales and size >= SSIM_WINDOW:
        scales += 1
        size //= 2
    return scales


def ms_ssim(ref: np.ndarray, test: np.ndarray, scales: int | None = None) -> float:
    """Multi-scale structural similarity.

    Contrast-structure terms from every scale but the last, the full SSIM
    at the coarsest, combined with the standard exponents (renormalized
    when fewer than five scales fit).  Negative terms are floored at zero
    before exponentiation.
    """
    x = np.asarray(ref, dtype=np.float64)
    y = np.asarray(test, dtype=np.float64)
    limit = feasible_scales(x.shape)
    if scales is None:
        scales = limit
    if scales < 1:
        raise ParameterError(f"image {x.shape} too small for even one {SSIM_WINDOW}px scale")
    if scales > limit:
        raise ParameterError(f"image {x.shape} supports {limit} scales, requested {scales}")
    weights = np.array(MS_SSIM_WEIGHTS[:scales])
    weights = weights / weights.sum()

    score = 1.0
    for level in range(scales):
        full, cs = _ssim_maps(x, y)
        if level == scales - 1:
            term = full.mean()
        else:
            term = cs.mean()
            x = _downsample(x)
            y = _downsample(y)
        score *= max(float(term), 0.0) ** weights[level]
    return float(score)


def measure(image_id: str, ref: np.ndarray, test: np.ndarray, estimated_bpp: float = 0.0) -> MetricsRecord:
    """All four quality measures for one (reference, reconstruction) pair."""
    err = mse(ref, test)
    return MetricsRecord(
        image_id=image_id,
        mse=err,
        psnr_db=psnr(err),
        ssim=ssim(ref, test),
        ms_ssim=ms_ssim(ref, test),
        estimated_bpp=estimated_bpp,
    )
