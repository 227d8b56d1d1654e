"""Binary PGM (P5, maxval 255) reading and writing.

The only interchange image format the workbench accepts; anything else
should be converted externally.
"""

from __future__ import annotations

import numpy as np

from .errors import DataError


def load_pgm(path) -> np.ndarray:
    """Read a P5 grayscale file into a (height, width) uint8 raster."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:2] == b"P2":
        raise DataError(f"{path}: ASCII (P2) PGM is not supported, use binary P5")
    if data[:2] != b"P5":
        raise DataError(f"{path}: bad magic {data[:2]!r} at offset 0, expected b'P5'")

    fields = []
    pos = 2
    while len(fields) < 3:
        if pos >= len(data):
            raise DataError(f"{path}: header ended prematurely at offset {pos}")
        ch = data[pos:pos + 1]
        if ch.isspace():
            pos += 1
        elif ch == b"#":
            end = data.find(b"\n", pos)
            pos = len(data) if end < 0 else end + 1
        elif ch.isdigit():
            start = pos
            while pos < len(data) and data[pos:pos + 1].isdigit():
                pos += 1
            fields.append(int(data[start:pos]))
        else:
            raise DataError(f"{path}: unexpected header byte {ch!r} at offset {pos}")
    width, height, maxval = fields
    if maxval != 255:
        raise DataError(f"{path}: maxval {maxval} unsupported, expected 255")
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise DataError(f"{path}: missing whitespace after header at offset {pos}")
    pos += 1
    expected = width * height
    pixels = data[pos:pos + expected]
    if len(pixels) != expected:
        raise DataError(
            f"{path}: truncated pixel data at offset {pos + len(pixels)}, "
            f"expected {expected} bytes"
        )
    return np.frombuffer(pixels, dtype=np.uint8).reshape(height, width).copy()


def save_pgm(raster: np.ndarray, path) -> None:
    """Write a uint8-valued raster as binary P5."""
    raster = np.asarray(raster)
    if raster.ndim != 2:
        raise DataError(f"raster must be 2-D, got ndim={raster.ndim}")
    if raster.dtype != np.uint8:
        if (np.asarray(raster) < 0).any() or (np.asarray(raster) > 255).any():
            raise DataError("raster values outside [0, 255]")
        raster = raster.astype(np.uint8)
    h, w = raster.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(raster.tobytes())
