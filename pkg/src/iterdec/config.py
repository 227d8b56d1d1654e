"""Line-oriented run configuration files and config hashing.

Config files are UTF-8 ``key = value`` lines mirroring CLI flag names
(with dashes or underscores); '#' starts a comment.  CLI flags override
file values.  The config hash stamped into artifacts is a truncated
SHA-256 of the sorted effective key=value pairs.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

from .errors import DataError


def parse_config_file(path) -> dict[str, str]:
    text = Path(path).read_text(encoding="utf-8")
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip().replace("-", "_")
        if not key:
            raise DataError(f"{path}:{lineno}: empty key")
        values[key] = value.strip()
    return values


def config_hash(values: dict) -> int:
    """48-bit hash of the sorted key=value pairs (fits a float64 exactly)."""
    canon = "\n".join(f"{k}={values[k]}" for k in sorted(values))
    digest = hashlib.sha256(canon.encode("utf-8")).hexdigest()
    return int(digest[:12], 16)


def artifact_stamp(values: dict, seed: int) -> str:
    """The provenance comment line embedded in CSV artifacts."""
    return f"config_hash={config_hash(values):012x} seed={seed} rng=pcg64"
