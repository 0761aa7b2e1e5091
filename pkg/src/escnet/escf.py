"""ESCF feature files.

Layout (little-endian)::

    b"ESCF" | u16 version=1 | u32 bands | u32 frames | u32 channels
    | f32 data, band-major, frame-middle, channel-minor
    | u32 meta_len | meta_len bytes of UTF-8 JSON metadata

The trailing metadata block is optional on read.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError

MAGIC = b"ESCF"
VERSION = 1
_HEADER = struct.Struct("<4sHIII")


def write_escf(path, values: np.ndarray, meta: dict | None = None) -> None:
    values = np.asarray(values)
    if values.ndim == 2:
        values = values[:, :, None]
    if values.ndim != 3:
        raise ValueError(f"expected (bands, frames[, channels]), got {values.shape}")
    bands, frames, channels = values.shape
    blob = _HEADER.pack(MAGIC, VERSION, bands, frames, channels)
    blob += np.ascontiguousarray(values, dtype="<f4").tobytes()
    text = json.dumps(meta or {}, sort_keys=True).encode("utf-8")
    blob += struct.pack("<I", len(text)) + text
    Path(path).write_bytes(blob)


def read_escf(path) -> tuple[np.ndarray, dict]:
    """Return ``(values[bands, frames, channels] as float32, metadata)``."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, bands, frames, channels = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    n = bands * frames * channels
    end = _HEADER.size + 4 * n
    if len(data) < end:
        raise FormatError(f"{path}: truncated payload")
    values = np.frombuffer(data, dtype="<f4", count=n, offset=_HEADER.size)
    values = values.astype(np.float32).reshape(bands, frames, channels)
    meta = {}
    if len(data) >= end + 4:
        (m,) = struct.unpack_from("<I", data, end)
        meta = json.loads(data[end + 4: end + 4 + m].decode("utf-8"))
    return values, meta
