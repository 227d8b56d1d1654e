"""Binary checkpoint format for decoder parameters ("NIDM").

Layout: magic "NIDM", u16 format version, u8 estimator kind
(0=MLP, 1=delta-RNN, 2=GRU, 3=LSTM), u16 hidden size, u16 patch side,
u8 slot count, u8 tied flag, f64 symbol normalization divisor, then a
sequence of tensors until EOF, each as u16 name length, UTF-8 name,
u32 rows, u32 cols, and row-major little-endian f64 data.

Run provenance (seed, config hash) is embedded as two 1x1 tensors named
"__seed" and "__config_hash"; the loader returns them as metadata rather
than parameters.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .estimator import KIND_CODES, KIND_NAMES, EstimatorParams

MAGIC = b"NIDM"
FORMAT_VERSION = 1


@dataclass
class CheckpointMeta:
    seed: int
    config_hash: int
    version: int = FORMAT_VERSION


def _pack_tensor(name: str, data: np.ndarray) -> bytes:
    raw = name.encode("utf-8")
    rows, cols = data.shape
    return (
        struct.pack("<H", len(raw))
        + raw
        + struct.pack("<II", rows, cols)
        + np.ascontiguousarray(data, dtype="<f8").tobytes()
    )


def save_checkpoint(params: EstimatorParams, path, seed: int = 0, config_hash: int = 0) -> None:
    parts = [
        MAGIC,
        struct.pack(
            "<HBHHBBd",
            FORMAT_VERSION,
            KIND_CODES[params.kind],
            params.hidden,
            params.d,
            params.slots,
            1 if params.tied else 0,
            params.divisor,
        ),
        _pack_tensor("__seed", np.array([[float(seed)]])),
        _pack_tensor("__config_hash", np.array([[float(config_hash)]])),
    ]
    for name in params.tensor_names():
        parts.append(_pack_tensor(name, params.tensors[name]))
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def load_checkpoint(path) -> tuple[EstimatorParams, CheckpointMeta]:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise DataError(f"{path}: bad magic {data[:4]!r}, expected {MAGIC!r}")
    off = 4
    try:
        version, kind_code, hidden, d, slots, tied, divisor = struct.unpack_from("<HBHHBBd", data, off)
        off += struct.calcsize("<HBHHBBd")
    except struct.error as exc:
        raise DataError(f"{path}: truncated header: {exc}") from exc
    if version != FORMAT_VERSION:
        raise DataError(f"{path}: checkpoint version {version}, expected {FORMAT_VERSION}")
    if kind_code not in KIND_NAMES:
        raise DataError(f"{path}: unknown estimator kind code {kind_code}")

    tensors: dict[str, np.ndarray] = {}
    meta_values: dict[str, float] = {}
    while off < len(data):
        try:
            (name_len,) = struct.unpack_from("<H", data, off)
            off += 2
            name = data[off:off + name_len].decode("utf-8")
            off += name_len
            rows, cols = struct.unpack_from("<II", data, off)
            off += 8
            count = rows * cols
            array = np.frombuffer(data, dtype="<f8", count=count, offset=off).reshape(rows, cols)
            off += 8 * count
        except (struct.error, ValueError) as exc:
            raise DataError(f"{path}: truncated tensor record near offset {off}: {exc}") from exc
        if name.startswith("__"):
            meta_values[name] = float(array[0, 0])
        else:
            tensors[name] = array.astype(np.float64)

    params = EstimatorParams(
        kind=KIND_NAMES[kind_code],
        hidden=hidden,
        d=d,
        slots=slots,
        tied=bool(tied),
        divisor=divisor,
        tensors=tensors,
    )
    missing = [n for n in params.tensor_names() if n not in tensors]
    if missing:
        raise DataError(f"{path}: checkpoint is missing tensors {missing}")
    meta = CheckpointMeta(
        seed=int(meta_values.get("__seed", 0)),
        config_hash=int(meta_values.get("__config_hash", 0)),
        version=version,
    )
    return params, meta
