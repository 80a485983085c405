"""Binary checkpoint format.

Layout: magic b"MEVO", format version u16, u32 length + UTF-8 JSON header
(the layer hyperparameters and any run metadata), then a u32 count of
tensor records.  Each record: u16 name length, name bytes, u16 rank,
rank x u64 dims, then raw 32-bit floats.  Everything little-endian.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .layers import Params

MAGIC = b"MEVO"
VERSION = 1


class CheckpointError(IOError):
    """Bad magic, version or truncated tensor data."""


def save_checkpoint(path, params: Params):
    meta = json.dumps(params.meta, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<H", VERSION))
        fh.write(struct.pack("<I", len(meta)))
        fh.write(meta)
        fh.write(struct.pack("<I", len(params.tensors)))
        for name, t in params.tensors.items():
            nb = name.encode("utf-8")
            arr = np.ascontiguousarray(t.data, dtype="<f4")
            fh.write(struct.pack("<H", len(nb)))
            fh.write(nb)
            fh.write(struct.pack("<H", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            fh.write(arr.tobytes())


def load_checkpoint(path, dtype=np.float32) -> Params:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {raw[:4]!r}")
    (version,) = struct.unpack_from("<H", raw, 4)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    off = 6
    (meta_len,) = struct.unpack_from("<I", raw, off)
    off += 4
    meta = json.loads(raw[off:off + meta_len].decode("utf-8"))
    off += meta_len
    (count,) = struct.unpack_from("<I", raw, off)
    off += 4
    params = Params(meta)
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", raw, off)
        off += 2
        name = raw[off:off + name_len].decode("utf-8")
        off += name_len
        (rank,) = struct.unpack_from("<H", raw, off)
        off += 2
        dims = struct.unpack_from(f"<{rank}Q", raw, off)
        off += 8 * rank
        n = int(np.prod(dims)) if rank else 1
        end = off + 4 * n
        if end > len(raw):
            raise CheckpointError(f"{path}: truncated data for tensor {name!r}")
        arr = np.frombuffer(raw[off:end], dtype="<f4").reshape(dims).astype(dtype)
        off = end
        params.add(name, arr)
    return params
