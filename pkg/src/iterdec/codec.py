"""JPEG-like block transform coder.

Encodes a grayscale raster into per-block quantized DCT symbol vectors
(zig-zag order), provides the non-learned baseline decode, and estimates
the bit rate of the symbol stream by first-order entropy.  No entropy
coder is implemented; the learned decoder consumes the symbols directly.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, ParameterError, ShapeError

BLOCK_SIZE = 8

# Standard JPEG luminance quantization steps (raster order).
BASE_LUMA_STEPS = np.array(
    [
        16, 11, 10, 16, 24, 40, 51, 61,
        12, 12, 14, 19, 26, 58, 60, 55,
        14, 13, 16, 24, 40, 57, 69, 56,
        14, 17, 22, 29, 51, 87, 80, 62,
        18, 22, 37, 56, 68, 109, 103, 77,
        24, 35, 55, 64, 81, 104, 113, 92,
        49, 64, 78, 87, 103, 121, 120, 101,
        72, 92, 95, 98, 112, 100, 103, 99,
    ],
    dtype=np.int64,
)

_MAGIC = b"NQC1"


def _zigzag_pairs(d: int) -> list[tuple[int, int]]:
    """Diagonal scan coordinates: even diagonals run bottom-left to
    top-right, odd diagonals the other way."""
    pairs = []
    for s in range(2 * d - 1):
        diag = [(r, s - r) for r in range(max(0, s - d + 1), min(s, d - 1) + 1)]
        if s % 2 == 0:
            diag.reverse()
        pairs.extend(diag)
    return pairs


_ZIGZAG = _zigzag_pairs(BLOCK_SIZE)
_ZIGZAG_ROWS = np.array([r for r, _ in _ZIGZAG])
_ZIGZAG_COLS = np.array([c for _, c in _ZIGZAG])


def zigzag_order(index: int) -> tuple[int, int]:
    """(row, col) of the index-th cell in the 8x8 zig-zag scan."""
    if not 0 <= index < BLOCK_SIZE * BLOCK_SIZE:
        raise ParameterError(f"zig-zag index {index} outside 0..{BLOCK_SIZE * BLOCK_SIZE - 1}")
    return _ZIGZAG[index]


def _dct_basis(d: int) -> np.ndarray:
    x = np.arange(d)
    u = np.arange(d).reshape(-1, 1)
    basis = np.sqrt(2.0 / d) * np.cos((2 * x + 1) * u * np.pi / (2 * d))
    basis[0, :] /= np.sqrt(2.0)
    return basis


_BASIS = _dct_basis(BLOCK_SIZE)


def dct2d_forward(block: np.ndarray) -> np.ndarray:
    """Orthonormal 2-D DCT-II of one level-shifted d x d block."""
    block = np.asarray(block, dtype=np.float64)
    if block.shape != (BLOCK_SIZE, BLOCK_SIZE):
        raise ShapeError(f"expected {BLOCK_SIZE}x{BLOCK_SIZE} block, got {block.shape}")
    return _BASIS @ block @ _BASIS.T


def dct2d_inverse(coeffs: np.ndarray) -> np.ndarray:
    coeffs = np.asarray(coeffs, dtype=np.float64)
    if coeffs.shape != (BLOCK_SIZE, BLOCK_SIZE):
        raise ShapeError(f"expected {BLOCK_SIZE}x{BLOCK_SIZE} block, got {coeffs.shape}")
    return _BASIS.T @ coeffs @ _BASIS


@dataclass
class QuantTable:
    """Per-coefficient quantizer steps (raster order) at a given quality."""

    steps: np.ndarray
    quality: int = 50

    def __post_init__(self):
        self.steps = np.asarray(self.steps, dtype=np.int64)
        if self.steps.shape != (BLOCK_SIZE * BLOCK_SIZE,):
            raise ShapeError(f"quant table needs {BLOCK_SIZE * BLOCK_SIZE} steps, got {self.steps.shape}")
        if (self.steps < 1).any():
            raise ParameterError("quant steps must all be >= 1")

    def steps_grid(self) -> np.ndarray:
        return self.steps.reshape(BLOCK_SIZE, BLOCK_SIZE)


def scale_table(base: QuantTable, quality: int) -> QuantTable:
    """JPEG-convention quality scaling of a base table."""
    if not 1 <= quality <= 100:
        raise ParameterError(f"quality {quality} outside 1..100")
    factor = 5000.0 / quality if quality < 50 else 200.0 - 2.0 * quality
    steps = np.maximum(1, np.floor(base.steps * factor / 100.0 + 0.5).astype(np.int64))
    return QuantTable(steps=steps, quality=quality)


def default_table(quality: int = 50) -> QuantTable:
    return scale_table(QuantTable(steps=BASE_LUMA_STEPS.copy(), quality=50), quality)


@dataclass
class QuantizedBlock:
    """Quantized symbols of one block, zig-zag ordered, plus grid position."""

    symbols: np.ndarray
    block_row: int = 0
    block_col: int = 0

    def __post_init__(self):
        self.symbols = np.asarray(self.symbols, dtype=np.int64)
        if self.symbols.shape != (BLOCK_SIZE * BLOCK_SIZE,):
            raise ShapeError(f"expected {BLOCK_SIZE * BLOCK_SIZE} symbols, got {self.symbols.shape}")


def _round_half_away(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def quantize(coeffs: np.ndarray, table: QuantTable, block_row: int = 0, block_col: int = 0) -> QuantizedBlock:
    """Divide by the step sizes, round half away from zero, zig-zag order."""
    coeffs = np.asarray(coeffs, dtype=np.float64)
    if coeffs.shape != (BLOCK_SIZE, BLOCK_SIZE):
        raise ShapeError(f"expected {BLOCK_SIZE}x{BLOCK_SIZE} coefficients, got {coeffs.shape}")
    raster = _round_half_away(coeffs / table.steps_grid()).astype(np.int64)
    return QuantizedBlock(
        symbols=raster[_ZIGZAG_ROWS, _ZIGZAG_COLS],
        block_row=block_row,
        block_col=block_col,
    )


def dequantize_decode(block: QuantizedBlock, table: QuantTable) -> np.ndarray:
    """Baseline (non-learned) reconstruction of one block in [0, 255]."""
    raster = np.zeros((BLOCK_SIZE, BLOCK_SIZE))
    raster[_ZIGZAG_ROWS, _ZIGZAG_COLS] = block.symbols
    coeffs = raster * table.steps_grid()
    pixels = dct2d_inverse(coeffs) + 128.0
    return np.clip(pixels, 0.0, 255.0)


def estimate_bpp(blocks: list[QuantizedBlock]) -> float:
    """First-order entropy of the pooled symbol stream, in bits per pixel.

    Each pixel carries exactly one symbol, so per-symbol entropy is the
    per-pixel rate.
    """
    if not blocks:
        raise ParameterError("cannot estimate bpp of an empty block list")
    stream = np.concatenate([b.symbols for b in blocks])
    _, counts = np.unique(stream, return_counts=True)
    probs = counts / stream.size
    return float(-(probs * np.log2(probs)).sum())


@dataclass
class CodedImage:
    """Encoded image: geometry, quant table, and raster-ordered blocks."""

    width: int
    height: int
    d: int
    quant_table: QuantTable
    blocks: list[QuantizedBlock] = field(default_factory=list)
    estimated_bpp: float = 0.0

    @property
    def grid_rows(self) -> int:
        return -(-self.height // self.d)

    @property
    def grid_cols(self) -> int:
        return -(-self.width // self.d)


def pad_replicate(raster: np.ndarray, d: int) -> np.ndarray:
    """Extend the rightmost column / bottom row so both dims are multiples of d."""
    h, w = raster.shape
    ph = (-h) % d
    pw = (-w) % d
    return np.pad(raster, ((0, ph), (0, pw)), mode="edge")


def encode_image(raster: np.ndarray, quality: int = 50) -> CodedImage:
    """Encode an 8-bit grayscale raster ([0, 255] values) at the given quality."""
    raster = np.asarray(raster, dtype=np.float64)
    if raster.ndim != 2:
        raise ShapeError(f"expected a 2-D raster, got ndim={raster.ndim}")
    h, w = raster.shape
    if h < BLOCK_SIZE or w < BLOCK_SIZE:
        raise ParameterError(f"image {w}x{h} smaller than one {BLOCK_SIZE}x{BLOCK_SIZE} block")
    table = default_table(quality)
    padded = pad_replicate(raster, BLOCK_SIZE)
    blocks = []
    for br in range(padded.shape[0] // BLOCK_SIZE):
        for bc in range(padded.shape[1] // BLOCK_SIZE):
            tile = padded[br * BLOCK_SIZE:(br + 1) * BLOCK_SIZE, bc * BLOCK_SIZE:(bc + 1) * BLOCK_SIZE]
            coeffs = dct2d_forward(tile - 128.0)
            blocks.append(quantize(coeffs, table, block_row=br, block_col=bc))
    coded = CodedImage(width=w, height=h, d=BLOCK_SIZE, quant_table=table, blocks=blocks)
    coded.estimated_bpp = estimate_bpp(blocks)
    return coded


def decode_baseline(coded: CodedImage) -> np.ndarray:
    """Dequantize + inverse DCT every block; returns the [0, 255] raster
    cropped to the true image size."""
    d = coded.d
    full = np.zeros((coded.grid_rows * d, coded.grid_cols * d))
    for block in coded.blocks:
        tile = dequantize_decode(block, coded.quant_table)
        full[block.block_row * d:(block.block_row + 1) * d,
             block.block_col * d:(block.block_col + 1) * d] = tile
    return full[:coded.height, :coded.width]


def save_coded(coded: CodedImage, path) -> None:
    """Serialize to the NQC1 byte format (see README for the layout)."""
    n = coded.d * coded.d
    parts = [_MAGIC]
    parts.append(struct.pack("<IIBB", coded.width, coded.height, coded.d, coded.quant_table.quality))
    parts.append(struct.pack(f"<{n}H", *coded.quant_table.steps.tolist()))
    parts.append(struct.pack("<I", len(coded.blocks)))
    for block in coded.blocks:
        parts.append(struct.pack("<HH", block.block_row, block.block_col))
        parts.append(struct.pack(f"<{n}h", *block.symbols.tolist()))
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def load_coded(path) -> CodedImage:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != _MAGIC:
        raise DataError(f"bad magic bytes {data[:4]!r} at offset 0, expected {_MAGIC!r}")
    off = 4
    try:
        width, height, d, quality = struct.unpack_from("<IIBB", data, off)
        off += 10
        n = d * d
        steps = np.array(struct.unpack_from(f"<{n}H", data, off), dtype=np.int64)
        off += 2 * n
        (count,) = struct.unpack_from("<I", data, off)
        off += 4
        blocks = []
        for _ in range(count):
            br, bc = struct.unpack_from("<HH", data, off)
            off += 4
            symbols = np.array(struct.unpack_from(f"<{n}h", data, off), dtype=np.int64)
            off += 2 * n
            blocks.append(QuantizedBlock(symbols=symbols, block_row=br, block_col=bc))
    except struct.error as exc:
        raise DataError(f"truncated coded image near offset {off}: {exc}") from exc
    table = QuantTable(steps=steps, quality=quality)
    coded = CodedImage(width=width, height=height, d=d, quant_table=table, blocks=blocks)
    if len(blocks) != coded.grid_rows * coded.grid_cols:
        raise DataError(
            f"block count {len(blocks)} does not cover a "
            f"{coded.grid_rows}x{coded.grid_cols} grid"
        )
    coded.estimated_bpp = estimate_bpp(blocks) if blocks else 0.0
    return coded


def baseline_mse(raster: np.ndarray, quality: int) -> float:
    """Encode/decode round-trip distortion, for rate-distortion checks."""
    coded = encode_image(raster, quality)
    rec = decode_baseline(coded)
    return float(np.mean((np.asarray(raster, dtype=np.float64) - rec) ** 2))
