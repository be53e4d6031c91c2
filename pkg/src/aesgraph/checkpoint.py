"""Versioned binary checkpoint container.

Layout: magic, format version, a canonical-JSON model-config block, then
one entry per store value sorted by name.  Each entry carries a kind
byte (parameter or buffer), the name, the shape, and a little-endian
float64 payload.  Loading a checkpoint and saving it again reproduces
the bytes exactly.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .autodiff import ParameterStore

__all__ = ["dumps_checkpoint", "loads_checkpoint", "save_checkpoint", "load_checkpoint"]

MAGIC = b"AGCP"
VERSION = 1

_KIND_PARAM = 0
_KIND_BUFFER = 1


def dumps_checkpoint(store: ParameterStore, config: dict) -> bytes:
    """Serialize a parameter store plus its model config to bytes."""
    out = bytearray()
    out += MAGIC + struct.pack("<I", VERSION)
    config_blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode("utf-8")
    out += struct.pack("<I", len(config_blob)) + config_blob

    entries = [(name, _KIND_PARAM, p.data) for name, p in store.parameters()]
    entries += [(name, _KIND_BUFFER, arr) for name, arr in store.buffers()]
    entries.sort(key=lambda e: e[0])

    out += struct.pack("<I", len(entries))
    for name, kind, arr in entries:
        raw_name = name.encode("utf-8")
        out += struct.pack("<BH", kind, len(raw_name)) + raw_name
        out += struct.pack("<B", arr.ndim)
        out += struct.pack(f"<{arr.ndim}I", *arr.shape)
        out += np.ascontiguousarray(arr, dtype="<f8").tobytes()
    return bytes(out)


def loads_checkpoint(blob: bytes) -> tuple[dict, dict[str, np.ndarray], dict[str, np.ndarray]]:
    """Parse checkpoint bytes into (config, parameters, buffers)."""
    if len(blob) < 8 or blob[:4] != MAGIC:
        raise ValueError("not a checkpoint (bad magic)")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    pos = 8
    (config_len,) = struct.unpack_from("<I", blob, pos)
    pos += 4
    config = json.loads(blob[pos:pos + config_len].decode("utf-8"))
    pos += config_len

    (count,) = struct.unpack_from("<I", blob, pos)
    pos += 4
    params: dict[str, np.ndarray] = {}
    buffers: dict[str, np.ndarray] = {}
    for _ in range(count):
        kind, name_len = struct.unpack_from("<BH", blob, pos)
        pos += 3
        name = blob[pos:pos + name_len].decode("utf-8")
        pos += name_len
        (ndim,) = struct.unpack_from("<B", blob, pos)
        pos += 1
        shape = struct.unpack_from(f"<{ndim}I", blob, pos)
        pos += 4 * ndim
        n = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(blob, dtype="<f8", count=n, offset=pos).astype(np.float64).reshape(shape)
        pos += 8 * n
        (buffers if kind == _KIND_BUFFER else params)[name] = arr
    if pos != len(blob):
        raise ValueError(f"trailing bytes in checkpoint ({len(blob) - pos})")
    return config, params, buffers


def save_checkpoint(path, store: ParameterStore, config: dict) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_bytes(dumps_checkpoint(store, config))


def load_checkpoint(path) -> tuple[dict, dict[str, np.ndarray], dict[str, np.ndarray]]:
    return loads_checkpoint(Path(path).read_bytes())
