"""ESCW weight checkpoints.

Layout (little-endian)::

    b"ESCW" | u16 version=1 | u16 arch tag | u32 n_classes | u32 n_layers
    per layer: u8 kind tag | u8 n_arrays
        per array: u8 ndim | u32 dims[ndim] | f32 data (row-major)

BatchNorm layers store gamma, beta, running mean, running variance.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import FormatError
from .layers import LayerKind

MAGIC = b"ESCW"
VERSION = 1
_HEADER = struct.Struct("<4sHHII")


@dataclass
class CheckpointRecord:
    arch_tag: int
    n_classes: int
    layers: list[tuple[LayerKind, list[np.ndarray]]]


def encode_checkpoint(net, arch_tag: int, n_classes: int) -> bytes:
    parts = [_HEADER.pack(MAGIC, VERSION, arch_tag, n_classes, len(net.layers))]
    for layer in net.layers:
        arrays = layer.state_arrays()
        parts.append(struct.pack("<BB", int(layer.kind), len(arrays)))
        for arr in arrays:
            parts.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
            parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(parts)


def save_checkpoint(path, net, arch_tag: int, n_classes: int) -> None:
    Path(path).write_bytes(encode_checkpoint(net, arch_tag, n_classes))


def read_checkpoint(path) -> CheckpointRecord:
    data = Path(path).read_bytes()
    try:
        magic, version, arch, n_classes, n_layers = _HEADER.unpack_from(data)
        if magic != MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}")
        if version != VERSION:
            raise FormatError(f"{path}: unsupported version {version}")
        pos = _HEADER.size
        layers = []
        for _ in range(n_layers):
            kind, n_arr = struct.unpack_from("<BB", data, pos)
            pos += 2
            arrays = []
            for _ in range(n_arr):
                (ndim,) = struct.unpack_from("<B", data, pos)
                shape = struct.unpack_from(f"<{ndim}I", data, pos + 1)
                pos += 1 + 4 * ndim
                count = int(np.prod(shape))
                if pos + 4 * count > len(data):
                    raise FormatError(f"{path}: truncated array data")
                arr = np.frombuffer(data, dtype="<f4", count=count, offset=pos).reshape(shape)
                arrays.append(arr.astype(np.float32))
                pos += 4 * count
            layers.append((LayerKind(kind), arrays))
    except struct.error as exc:
        raise FormatError(f"{path}: truncated checkpoint") from exc
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    return CheckpointRecord(arch, n_classes, layers)


def load_into(net, record: CheckpointRecord) -> None:
    """Copy checkpoint arrays into an already-built network of the same shape."""
    if len(record.layers) != len(net.layers):
        raise FormatError(f"checkpoint has {len(record.layers)} layers, network {len(net.layers)}")
    for layer, (kind, arrays) in zip(net.layers, record.layers):
        current = layer.state_arrays()
        if kind != layer.kind or len(arrays) != len(current):
            raise FormatError(f"layer {layer.name}: checkpoint kind {kind.name} does not match")
        for a, b in zip(arrays, current):
            if a.shape != b.shape:
                raise FormatError(f"layer {layer.name}: shape {a.shape} != {b.shape}")
        layer.load_state_arrays(arrays)
