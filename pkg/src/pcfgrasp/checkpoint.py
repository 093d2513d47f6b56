"""Flat binary parameter checkpoints.

Layout (all integers little-endian u32)::

    b"PCFG" | version | then per record:
        name_len | name (utf-8) | rank | extents[rank] | data (f64 LE, row-major)

Records run until end of file.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import CheckpointError, CheckpointMissingError
from .tensor import Tensor

MAGIC = b"PCFG"
VERSION = 1


def save_checkpoint(path, params: dict[str, Tensor | np.ndarray]) -> None:
    chunks = [MAGIC, struct.pack("<I", VERSION)]
    for name in sorted(params):
        value = params[name]
        data = np.asarray(value.data if isinstance(value, Tensor) else value, dtype="<f8", order="C")
        raw_name = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(raw_name)))
        chunks.append(raw_name)
        chunks.append(struct.pack("<I", data.ndim))
        chunks.append(struct.pack(f"<{data.ndim}I", *data.shape))
        chunks.append(data.tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_checkpoint(path) -> dict[str, np.ndarray]:
    path = Path(path)
    if not path.exists():
        raise CheckpointMissingError(f"checkpoint not found: {path}")
    buf = path.read_bytes()
    if buf[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {buf[:4]!r}")
    (version,) = struct.unpack_from("<I", buf, 4)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    pos = 8
    out: dict[str, np.ndarray] = {}
    try:
        while pos < len(buf):
            (n,) = struct.unpack_from("<I", buf, pos)
            pos += 4
            name = buf[pos : pos + n].decode("utf-8")
            pos += n
            (rank,) = struct.unpack_from("<I", buf, pos)
            pos += 4
            shape = struct.unpack_from(f"<{rank}I", buf, pos)
            pos += 4 * rank
            count = int(np.prod(shape)) if rank else 1
            nbytes = 8 * count
            if pos + nbytes > len(buf):
                raise CheckpointError(f"{path}: record {name!r} truncated")
            out[name] = np.frombuffer(buf, dtype="<f8", count=count, offset=pos).reshape(shape).copy()
            pos += nbytes
    except struct.error as exc:
        raise CheckpointError(f"{path}: truncated header ({exc})") from None
    return out
