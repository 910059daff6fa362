"""Binary tensor container.

Layout::

    u64 little-endian header length
    header: canonical JSON {"index": {name: offset}, "meta": {...}}
    records in name order, each: b"RMT1", u32 rank, u32 extents..., float64 payload

Offsets count from the first byte after the header.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import CheckpointFormatError
from .tensor import Tensor

MAGIC = b"RMT1"


def encode_record(array: np.ndarray) -> bytes:
    a = np.asarray(array, dtype="<f8", order="C")  # keeps rank 0, unlike ascontiguousarray
    head = MAGIC + struct.pack(f"<I{a.ndim}I", a.ndim, *a.shape)
    return head + a.tobytes()


def decode_record(buf: bytes, offset: int, name: str = "?") -> np.ndarray:
    if buf[offset:offset + 4] != MAGIC:
        raise CheckpointFormatError(
            f"tensor {name!r}: magic mismatch at offset {offset}: {buf[offset:offset + 4]!r}")
    pos = offset + 4
    if len(buf) < pos + 4:
        raise CheckpointFormatError(f"tensor {name!r}: truncated rank field")
    (rank,) = struct.unpack_from("<I", buf, pos)
    pos += 4
    if len(buf) < pos + 4 * rank:
        raise CheckpointFormatError(f"tensor {name!r}: truncated extents")
    shape = struct.unpack_from(f"<{rank}I", buf, pos)
    pos += 4 * rank
    nbytes = 8 * int(np.prod(shape, dtype=np.int64))
    if len(buf) < pos + nbytes:
        raise CheckpointFormatError(
            f"tensor {name!r}: truncated payload, expected {nbytes} bytes, "
            f"got {len(buf) - pos}")
    return np.frombuffer(buf, dtype="<f8", count=nbytes // 8, offset=pos).reshape(shape).astype(np.float64)


def dumps(tensors: Mapping[str, "np.ndarray | Tensor"], meta: Mapping | None = None) -> bytes:
    index, chunks, pos = {}, [], 0
    for name, t in sorted(tensors.items()):  # canonical record order
        rec = encode_record(t.data if isinstance(t, Tensor) else t)
        index[name] = pos
        chunks.append(rec)
        pos += len(rec)
    header = json.dumps({"index": index, "meta": dict(meta or {})},
                        sort_keys=True, separators=(",", ":")).encode()
    return struct.pack("<Q", len(header)) + header + b"".join(chunks)


def loads(buf: bytes) -> tuple[dict[str, np.ndarray], dict]:
    if len(buf) < 8:
        raise CheckpointFormatError("file too short for header length")
    (hlen,) = struct.unpack_from("<Q", buf, 0)
    if len(buf) < 8 + hlen:
        raise CheckpointFormatError(f"truncated header: expected {hlen} bytes")
    try:
        header = json.loads(buf[8:8 + hlen])
        index = header["index"]
        meta = header.get("meta", {})
    except (ValueError, KeyError, TypeError) as exc:
        raise CheckpointFormatError(f"corrupt header: {exc}") from None
    body = buf[8 + hlen:]
    return {name: decode_record(body, off, name) for name, off in index.items()}, meta


def save(path, tensors, meta=None) -> None:
    Path(path).write_bytes(dumps(tensors, meta))


def load(path) -> tuple[dict[str, np.ndarray], dict]:
    return loads(Path(path).read_bytes())
