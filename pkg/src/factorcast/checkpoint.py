"""Flat, portable model checkpoints.

Layout::

    b"FCKPT1\\n"                 magic
    uint64 little-endian          header length in bytes
    header                        UTF-8 JSON, keys sorted
    float64 little-endian blob    parameters concatenated in header order

The header records the model config, every parameter's name and shape (the
order in which they appear in the blob), and optional normalization stats.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .data import MinMaxStats
from .errors import FormatError
from .forecaster import Forecaster, ModelConfig

MAGIC = b"FCKPT1\n"
FORMAT_VERSION = 1


def encode(model: Forecaster, stats: MinMaxStats | None = None) -> bytes:
    params = [{"name": k, "shape": list(p.shape)} for k, p in model.params.items()]
    header = {
        "format_version": FORMAT_VERSION,
        "model": model.config.to_dict(),
        "params": params,
        "stats": stats.to_dict() if stats is not None else None,
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    blob = b"".join(np.ascontiguousarray(p.data, dtype="<f8").tobytes() for p in model.params.values())
    return MAGIC + struct.pack("<Q", len(head)) + head + blob


def decode(raw: bytes) -> tuple[Forecaster, MinMaxStats | None]:
    if not raw.startswith(MAGIC):
        raise FormatError("not a checkpoint (bad magic)")
    pos = len(MAGIC)
    if len(raw) < pos + 8:
        raise FormatError("truncated checkpoint header")
    (size,) = struct.unpack("<Q", raw[pos : pos + 8])
    pos += 8
    try:
        header = json.loads(raw[pos : pos + size].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"unreadable checkpoint header: {exc}") from None
    pos += size
    cfg = dict(header["model"])
    cfg["dilations"] = tuple(cfg["dilations"])
    model = Forecaster(ModelConfig(**cfg), seed=0)
    expected = [(k, list(p.shape)) for k, p in model.params.items()]
    stored = [(p["name"], p["shape"]) for p in header["params"]]
    if stored != expected:
        raise FormatError("checkpoint parameter layout does not match its model config")
    total = sum(int(np.prod(s)) for _, s in stored)
    if len(raw) - pos != 8 * total:
        raise FormatError(f"checkpoint blob holds {len(raw) - pos} bytes, expected {8 * total}")
    flat = np.frombuffer(raw, dtype="<f8", count=total, offset=pos).astype(np.float64)
    offset = 0
    for name, shape in stored:
        size = int(np.prod(shape))
        model.params[name].data[...] = flat[offset : offset + size].reshape(shape)
        offset += size
    stats = MinMaxStats.from_dict(header["stats"]) if header.get("stats") else None
    return model, stats


def save(path, model: Forecaster, stats: MinMaxStats | None = None) -> None:
    Path(path).write_bytes(encode(model, stats))


def load(path) -> tuple[Forecaster, MinMaxStats | None]:
    return decode(Path(path).read_bytes())
