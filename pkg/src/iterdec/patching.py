"""Patch-grid geometry: image decomposition, neighbor contexts, scan paths.

Patches are non-overlapping d x d tiles flattened column-major into
d^2-vectors with pixel values scaled to [0, 1].  A decode target's context
is its 3x3 block neighborhood (8 neighbors in raster order, then the
target's own block); off-grid slots are zero-filled and flagged absent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .codec import pad_replicate
from .errors import ParameterError

# 8-neighborhood in raster order: NW, N, NE, W, E, SW, S, SE.
NEIGHBOR_OFFSETS = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]
NUM_SLOTS = len(NEIGHBOR_OFFSETS) + 1  # + the center block

CORNERS = ("top-left", "top-right", "bottom-left", "bottom-right")


@dataclass
class PatchGrid:
    """An image cut into P flattened patches plus the grid geometry."""

    width: int
    height: int
    d: int
    rows: int
    cols: int
    patches: np.ndarray  # (P, d^2) float64 in [0, 1]

    @property
    def count(self) -> int:
        return self.rows * self.cols


def decompose(image: np.ndarray, d: int = 8) -> PatchGrid:
    """Split a [0, 255] grayscale raster into unit-scaled patch vectors."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise ParameterError(f"expected a 2-D raster, got ndim={image.ndim}")
    h, w = image.shape
    if h < d or w < d:
        raise ParameterError(f"image {w}x{h} smaller than one {d}x{d} patch")
    padded = pad_replicate(image, d) / 255.0
    rows = padded.shape[0] // d
    cols = padded.shape[1] // d
    patches = np.empty((rows * cols, d * d))
    for r in range(rows):
        for c in range(cols):
            tile = padded[r * d:(r + 1) * d, c * d:(c + 1) * d]
            patches[r * cols + c] = tile.flatten(order="F")
    return PatchGrid(width=w, height=h, d=d, rows=rows, cols=cols, patches=patches)


def recompose(patches: np.ndarray, rows: int, cols: int, d: int) -> np.ndarray:
    """Inverse of decompose over the padded grid; values stay in [0, 1]."""
    raster = np.empty((rows * d, cols * d))
    for r in range(rows):
        for c in range(cols):
            tile = patches[r * cols + c].reshape((d, d), order="F")
            raster[r * d:(r + 1) * d, c * d:(c + 1) * d] = tile
    return raster


@dataclass
class NeighborContext:
    """The quantized blocks surrounding one decode target.

    slots[n] holds the n-th neighbor's symbol vector (zeros when off-grid)
    in NEIGHBOR_OFFSETS order; the last slot is the target's own block.
    """

    index: int
    slots: np.ndarray   # (NUM_SLOTS, d^2) int64
    flags: np.ndarray   # (NUM_SLOTS,) bool


def get_neighbors(index: int, rows: int, cols: int, symbols: np.ndarray) -> NeighborContext:
    """Gather the 8-neighborhood plus center for patch ``index``.

    ``symbols`` is the (P, d^2) array of quantized symbol vectors in
    raster order.
    """
    if not 0 <= index < rows * cols:
        raise ParameterError(f"patch index {index} outside 0..{rows * cols - 1}")
    r, c = divmod(index, cols)
    dim = symbols.shape[1]
    slots = np.zeros((NUM_SLOTS, dim), dtype=np.int64)
    flags = np.zeros(NUM_SLOTS, dtype=bool)
    for n, (dr, dc) in enumerate(NEIGHBOR_OFFSETS):
        nr, nc = r + dr, c + dc
        if 0 <= nr < rows and 0 <= nc < cols:
            slots[n] = symbols[nr * cols + nc]
            flags[n] = True
    slots[-1] = symbols[index]
    flags[-1] = True
    return NeighborContext(index=index, slots=slots, flags=flags)


def block_symbols(coded) -> np.ndarray:
    """Raster-ordered (P, d^2) symbol array of a CodedImage."""
    out = np.zeros((coded.grid_rows * coded.grid_cols, coded.d * coded.d), dtype=np.int64)
    for block in coded.blocks:
        out[block.block_row * coded.grid_cols + block.block_col] = block.symbols
    return out


@dataclass
class ScanPath:
    """Decode order over the patch grid: horizontal sweeps away from the
    start corner, rows advancing away from it too."""

    corner: str
    indices: np.ndarray  # (P,) permutation of 0..P-1


def scan_path(corner: str, rows: int, cols: int) -> ScanPath:
    if corner not in CORNERS:
        raise ParameterError(f"unknown corner {corner!r}, expected one of {CORNERS}")
    if rows < 1 or cols < 1:
        raise ParameterError(f"grid must be at least 1x1, got {rows}x{cols}")
    row_order = range(rows) if corner.startswith("top") else range(rows - 1, -1, -1)
    col_order = list(range(cols)) if corner.endswith("left") else list(range(cols - 1, -1, -1))
    indices = np.array([r * cols + c for r in row_order for c in col_order], dtype=np.int64)
    return ScanPath(corner=corner, indices=indices)
