"""Deterministic synthetic grayscale images for desk-scale experiments.

Each image mixes a smooth low-order gradient, woven standing-wave
textures (products of horizontal and vertical sinusoids, plaid-like),
an occasional hard edge, and band-limited noise, then normalizes to the
full 8-bit range.  The texture periods (5 to 9 pixels) sit where a
block-DCT quantizer at mid/low quality is most damaging while remaining
coherent across neighboring blocks, so a context-aware decoder has
something real to gain.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import ParameterError
from .numerics import SeededRng
from .pgm import save_pgm


def synth_image(size: int, rng: SeededRng) -> np.ndarray:
    """One (size, size) uint8 image drawn from the given stream."""
    if size < 16:
        raise ParameterError(f"synthetic images need size >= 16, got {size}")
    yy, xx = np.mgrid[0:size, 0:size] / (size - 1.0)

    img = float(rng.uniform(0.35, 0.65)) * np.ones_like(xx)
    img += float(rng.normal(0.0, 0.25)) * xx + float(rng.normal(0.0, 0.25)) * yy

    for _ in range(int(rng.integers(2, 5))):
        fx = float(rng.uniform(7.0, 13.0))
        fy = float(rng.uniform(7.0, 13.0))
        amp = float(rng.uniform(0.55, 0.95))
        img += amp * np.sin(2.0 * np.pi * fx * xx + float(rng.uniform(0.0, 2.0 * np.pi))) \
                   * np.sin(2.0 * np.pi * fy * yy + float(rng.uniform(0.0, 2.0 * np.pi)))

    if rng.uniform(0.0, 1.0) < 0.5:
        nx = float(rng.normal(0.0, 1.0))
        ny = float(rng.normal(0.0, 1.0))
        off = float(rng.uniform(0.25, 0.75))
        step = float(rng.uniform(0.08, 0.18)) * (1 if rng.uniform(0.0, 1.0) < 0.5 else -1)
        img += step * ((nx * (xx - off) + ny * (yy - off)) > 0)

    img += 0.01 * gaussian_filter(rng.normal(0.0, 1.0, img.shape), sigma=1.5)

    lo, hi = img.min(), img.max()
    img = (img - lo) / (hi - lo) if hi > lo else np.full_like(img, 0.5)
    return np.floor(img * 255.0 + 0.5).astype(np.uint8)


def make_synth(count: int, size: int, seed: int, out_dir) -> list[Path]:
    """Write ``count`` deterministic PGM files into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    master = SeededRng(seed).substream("synth")
    paths = []
    for i in range(count):
        image = synth_image(size, master.substream(f"image-{i}"))
        path = out / f"synth_{i:03d}.pgm"
        save_pgm(image, path)
        paths.append(path)
    return paths


def synth_rasters(count: int, size: int, seed: int) -> list[np.ndarray]:
    """In-memory variant of make_synth (same images, same seeds)."""
    master = SeededRng(seed).substream("synth")
    return [synth_image(size, master.substream(f"image-{i}")) for i in range(count)]
