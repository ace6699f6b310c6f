"""Little-endian chunked binary containers shared by all on-disk formats.

Layout: 4-byte magic, ``u32`` version, then chunks until EOF.  A chunk is a
4-byte tag, a ``u64`` payload length and a payload holding named arrays
(name, dtype string, shape, raw little-endian bytes).
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np


class FormatError(ValueError):
    pass


def pack_arrays(arrays: dict) -> bytes:
    out = [struct.pack("<I", len(arrays))]
    for name, value in arrays.items():
        a = np.asarray(value)
        if a.dtype == np.bool_:
            a = a.astype("|b1")
        else:
            a = a.astype(a.dtype.newbyteorder("<"), copy=False)
        key = name.encode()
        dt = a.dtype.str.encode()
        out.append(struct.pack("<H", len(key)) + key)
        out.append(struct.pack("<B", len(dt)) + dt)
        out.append(struct.pack("<B", a.ndim) + struct.pack(f"<{a.ndim}Q", *a.shape))
        out.append(a.tobytes())
    return b"".join(out)


def unpack_arrays(buf: bytes) -> dict:
    arrays = {}
    (count,) = struct.unpack_from("<I", buf, 0)
    off = 4
    for _ in range(count):
        (n,) = struct.unpack_from("<H", buf, off)
        off += 2
        name = buf[off:off + n].decode()
        off += n
        (n,) = struct.unpack_from("<B", buf, off)
        off += 1
        dt = np.dtype(buf[off:off + n].decode())
        off += n
        (ndim,) = struct.unpack_from("<B", buf, off)
        off += 1
        shape = struct.unpack_from(f"<{ndim}Q", buf, off)
        off += 8 * ndim
        size = int(np.prod(shape, dtype=np.int64)) * dt.itemsize
        arrays[name] = np.frombuffer(buf[off:off + size], dtype=dt).reshape(shape).copy()
        off += size
    if off != len(buf):
        raise FormatError("trailing bytes in array payload")
    return arrays


class ContainerWriter:
    def __init__(self, path, magic: bytes, version: int):
        self._f = open(path, "wb")
        self._f.write(magic + struct.pack("<I", version))

    def chunk(self, tag: bytes, arrays: dict):
        payload = pack_arrays(arrays)
        self._f.write(tag + struct.pack("<Q", len(payload)) + payload)

    def close(self):
        self._f.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_container(path, magic: bytes, version: int, chunks):
    with ContainerWriter(path, magic, version) as w:
        for tag, arrays in chunks:
            w.chunk(tag, arrays)


def read_container(path, magic: bytes, supported_versions=(1,)):
    data = Path(path).read_bytes()
    if data[:4] != magic:
        raise FormatError(f"{path}: bad magic {data[:4]!r}, expected {magic!r}")
    (version,) = struct.unpack_from("<I", data, 4)
    if version not in supported_versions:
        raise FormatError(f"{path}: unsupported version {version}")
    chunks = []
    off = 8
    while off < len(data):
        if off + 12 > len(data):
            raise FormatError(f"{path}: truncated chunk header")
        tag = data[off:off + 4]
        (n,) = struct.unpack_from("<Q", data, off + 4)
        off += 12
        if off + n > len(data):
            raise FormatError(f"{path}: truncated chunk {tag!r}")
        chunks.append((tag, unpack_arrays(data[off:off + n])))
        off += n
    return version, chunks
