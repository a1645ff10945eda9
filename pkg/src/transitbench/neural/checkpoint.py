"""Binary parameter checkpoints.

Layout (all integers little-endian)::

    b"TBCK"  u16 version  u32 n_entries
    per entry: u16 name_len, name (utf-8), u8 ndim, u32 dims[ndim]
    payload: every entry's values as float64 LE, in table order

Reloading reproduces the arrays bit for bit.
"""

from __future__ import annotations

import struct
from collections import OrderedDict
from pathlib import Path

import numpy as np

from ..errors import DataError

MAGIC = b"TBCK"
VERSION = 1


def dumps(arrays: dict[str, np.ndarray]) -> bytes:
    header = [MAGIC, struct.pack("<HI", VERSION, len(arrays))]
    payload = []
    for name, arr in arrays.items():
        arr = np.asarray(arr, dtype="<f8")
        raw = name.encode("utf-8")
        header.append(struct.pack("<H", len(raw)) + raw)
        header.append(struct.pack(f"<B{arr.ndim}I", arr.ndim, *arr.shape))
        payload.append(np.ascontiguousarray(arr).tobytes())
    return b"".join(header + payload)


def loads(blob: bytes) -> "OrderedDict[str, np.ndarray]":
    if blob[:4] != MAGIC:
        raise DataError("not a parameter checkpoint (bad magic)")
    version, n = struct.unpack_from("<HI", blob, 4)
    if version != VERSION:
        raise DataError(f"unsupported checkpoint version {version}")
    pos = 10
    table = []
    for _ in range(n):
        (name_len,) = struct.unpack_from("<H", blob, pos)
        pos += 2
        name = blob[pos:pos + name_len].decode("utf-8")
        pos += name_len
        (ndim,) = struct.unpack_from("<B", blob, pos)
        pos += 1
        shape = struct.unpack_from(f"<{ndim}I", blob, pos)
        pos += 4 * ndim
        table.append((name, shape))
    out = OrderedDict()
    for name, shape in table:
        count = int(np.prod(shape)) if shape else 1
        end = pos + 8 * count
        if end > len(blob):
            raise DataError("truncated checkpoint")
        out[name] = np.frombuffer(blob[pos:end], dtype="<f8").reshape(shape).astype(np.float64)
        pos = end
    return out


def save(path, arrays: dict[str, np.ndarray]) -> None:
    Path(path).write_bytes(dumps(arrays))


def load(path) -> "OrderedDict[str, np.ndarray]":
    return loads(Path(path).read_bytes())


def network_arrays(network) -> "OrderedDict[str, np.ndarray]":
    return OrderedDict((name, p.data) for name, p in network.parameters().items())


def load_into(network, arrays: dict[str, np.ndarray]) -> None:
    params = network.parameters()
    for name, p in params.items():
        if name not in arrays:
            raise DataError(f"checkpoint lacks parameter {name}")
        if arrays[name].shape != p.shape:
            raise DataError(f"checkpoint shape mismatch for {name}: "
                            f"{arrays[name].shape} vs {p.shape}")
        p.data = np.array(arrays[name], dtype=np.float64)
