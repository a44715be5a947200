"""Payload encoding: a small JSON header followed by little-endian arrays.

    u32 LE   json length
    bytes    json metadata
    u32 LE   array count
    per array: u8 dtype code, u8 ndim, ndim x u32 LE dims, raw little-endian data
"""

from __future__ import annotations

import json
import struct

import numpy as np

_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<i8"), 2: np.dtype("u1")}
_CODES = {np.dtype("float64"): 0, np.dtype("int64"): 1, np.dtype("uint8"): 2, np.dtype("bool"): 2}


def encode(meta: dict | None = None, arrays: list[np.ndarray] = ()) -> bytes:
    head = json.dumps(meta or {}, separators=(",", ":")).encode()
    out = [struct.pack("<I", len(head)), head, struct.pack("<I", len(arrays))]
    for a in arrays:
        a = np.asarray(a)
        code = _CODES.get(a.dtype)
        if code is None:
            raise TypeError(f"cannot encode dtype {a.dtype}")
        data = np.ascontiguousarray(a, dtype=_DTYPES[code])
        out.append(struct.pack("<BB", code, a.ndim))
        out.append(struct.pack(f"<{a.ndim}I", *a.shape))
        out.append(data.tobytes())
    return b"".join(out)


def decode(payload: bytes) -> tuple[dict, list[np.ndarray]]:
    view = memoryview(payload)
    (hlen,) = struct.unpack_from("<I", view, 0)
    off = 4
    meta = json.loads(bytes(view[off:off + hlen]).decode())
    off += hlen
    (count,) = struct.unpack_from("<I", view, off)
    off += 4
    arrays = []
    for _ in range(count):
        code, ndim = struct.unpack_from("<BB", view, off)
        off += 2
        shape = struct.unpack_from(f"<{ndim}I", view, off)
        off += 4 * ndim
        dt = _DTYPES[code]
        n = int(np.prod(shape, dtype=np.int64)) if ndim else 1
        arr = np.frombuffer(view, dtype=dt, count=n, offset=off).reshape(shape).copy()
        off += n * dt.itemsize
        arrays.append(arr)
    return meta, arrays
