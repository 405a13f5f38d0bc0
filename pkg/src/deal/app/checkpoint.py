"""Binary checkpoints: named float64 matrices plus a config echo, sealed by sha256.

Layout (all integers little-endian)::

    magic      8 bytes  b"DEALCKPT"
    version    u32
    seed       u64
    config     u32 length + UTF-8 JSON
    count      u32
    per matrix: u16 name length + UTF-8 name, u32 rows, u32 cols,
                u64 payload bytes, rows*cols float64 (row-major, '<f8')
    checksum   32 bytes sha256 of everything above
"""
from __future__ import annotations

import hashlib
import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from ..errors import ChecksumFailure, IoFailure, VersionMismatch

MAGIC = b"DEALCKPT"
VERSION = 1
_DIGEST = 32


@dataclass
class Checkpoint:
    matrices: dict[str, np.ndarray]
    config: dict = field(default_factory=dict)
    seed: int = 0
    version: int = VERSION


def encode(ckpt: Checkpoint) -> bytes:
    parts = [MAGIC, struct.pack("<IQ", ckpt.version, ckpt.seed)]
    cfg = json.dumps(ckpt.config, sort_keys=True, default=str).encode("utf-8")
    parts += [struct.pack("<I", len(cfg)), cfg, struct.pack("<I", len(ckpt.matrices))]
    for name, mat in ckpt.matrices.items():
        arr = np.asarray(mat, dtype="<f8")
        if arr.ndim != 2:
            raise ValueError(f"matrix {name!r} must be 2-D, got shape {arr.shape}")
        key = name.encode("utf-8")
        payload = np.ascontiguousarray(arr).tobytes()
        parts += [struct.pack("<H", len(key)), key, struct.pack("<IIQ", *arr.shape, len(payload)), payload]
    body = b"".join(parts)
    return body + hashlib.sha256(body).digest()


class _Reader:
    def __init__(self, buf: bytes):
        self.buf, self.pos = buf, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise ChecksumFailure("checkpoint body is truncated")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def decode(blob: bytes) -> Checkpoint:
    if len(blob) < len(MAGIC) + 12 + _DIGEST or blob[: len(MAGIC)] != MAGIC:
        raise ChecksumFailure("not a checkpoint (bad magic or truncated header)")
    (version,) = struct.unpack("<I", blob[len(MAGIC):len(MAGIC) + 4])
    if version != VERSION:
        raise VersionMismatch(f"checkpoint version {version}, this build reads {VERSION}")
    body, digest = blob[:-_DIGEST], blob[-_DIGEST:]
    if hashlib.sha256(body).digest() != digest:
        raise ChecksumFailure("checksum mismatch (corrupt or truncated file)")
    r = _Reader(body)
    r.take(len(MAGIC))
    version, seed = r.unpack("<IQ")
    (clen,) = r.unpack("<I")
    config = json.loads(r.take(clen).decode("utf-8"))
    (count,) = r.unpack("<I")
    mats: dict[str, np.ndarray] = {}
    for _ in range(count):
        (klen,) = r.unpack("<H")
        name = r.take(klen).decode("utf-8")
        rows, cols, nbytes = r.unpack("<IIQ")
        if nbytes != rows * cols * 8:
            raise ChecksumFailure(f"matrix {name!r}: payload size disagrees with its shape")
        mats[name] = np.frombuffer(r.take(nbytes), dtype="<f8").reshape(rows, cols).astype(np.float64)
    if r.pos != len(body):
        raise ChecksumFailure("trailing bytes after the last matrix")
    return Checkpoint(mats, config, seed, version)


def save_checkpoint(path: str | os.PathLike, payload: Checkpoint | Mapping[str, np.ndarray], *,
                    config: dict | None = None, seed: int = 0) -> Path:
    ckpt = payload if isinstance(payload, Checkpoint) else Checkpoint(dict(payload), config or {}, seed)
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp.write_bytes(encode(ckpt))
        os.replace(tmp, path)
    except OSError as e:
        raise IoFailure(f"cannot write checkpoint {path}: {e}") from e
    return path


def load_checkpoint(path: str | os.PathLike) -> Checkpoint:
    try:
        blob = Path(path).read_bytes()
    except OSError as e:
        raise IoFailure(f"cannot read checkpoint {path}: {e}") from e
    return decode(blob)
