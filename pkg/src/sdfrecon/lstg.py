"""LSTG binary container: the on-disk format for every dense array.

Layout (all integers little-endian):

    magic   4 bytes  b"LSTG"
    version u16      currently 1
    count   u32      number of entries
    entries, each:
        name_len u16 | name (UTF-8) | dtype u8 (0=f32, 1=u8) | rank u8 |
        dims rank*u64 | offset u64 (absolute file offset of the payload)
    payloads, C row-major, little-endian, in entry order.

Entries keep insertion order, so writing the same mapping twice produces
byte-identical files.
"""

import struct
from collections import OrderedDict

import numpy as np

from .errors import ParseError

MAGIC = b"LSTG"
VERSION = 1

_DTYPE_CODE = {np.dtype("<f4"): 0, np.dtype("u1"): 1}
_CODE_DTYPE = {0: np.dtype("<f4"), 1: np.dtype("u1")}


def _coerce(arr):
    a = np.asarray(arr)
    if a.dtype == np.uint8 or a.dtype == np.bool_:
        return np.ascontiguousarray(a, dtype=np.uint8)
    return np.ascontiguousarray(a, dtype="<f4")


def write(path, arrays) -> None:
    """Write a name -> array mapping. Float arrays go out as f32, integer/bool
    as u8; anything else raises ParseError."""
    items = [(name, _coerce(arr)) for name, arr in arrays.items()]
    header = bytearray()
    header += MAGIC
    header += struct.pack("<HI", VERSION, len(items))
    # first pass to size the entry table
    entry_sizes = []
    for name, a in items:
        nb = name.encode("utf-8")
        entry_sizes.append(2 + len(nb) + 1 + 1 + 8 * a.ndim + 8)
    offset = len(header) + sum(entry_sizes)
    for name, a in items:
        nb = name.encode("utf-8")
        header += struct.pack("<H", len(nb)) + nb
        header += struct.pack("<BB", _DTYPE_CODE[a.dtype], a.ndim)
        header += struct.pack(f"<{a.ndim}Q", *a.shape) if a.ndim else b""
        header += struct.pack("<Q", offset)
        offset += a.nbytes
    with open(path, "wb") as fh:
        fh.write(bytes(header))
        for _, a in items:
            fh.write(a.tobytes(order="C"))


def read(path):
    """Read a container into an OrderedDict of name -> ndarray."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise ParseError(f"{path}: bad magic {blob[:4]!r}")
    version, count = struct.unpack_from("<HI", blob, 4)
    if version != VERSION:
        raise ParseError(f"{path}: unsupported version {version}")
    pos = 10
    out = OrderedDict()
    for _ in range(count):
        if pos + 2 > len(blob):
            raise ParseError(f"{path}: truncated entry table")
        (name_len,) = struct.unpack_from("<H", blob, pos)
        pos += 2
        name = blob[pos:pos + name_len].decode("utf-8")
        pos += name_len
        code, rank = struct.unpack_from("<BB", blob, pos)
        pos += 2
        if code not in _CODE_DTYPE:
            raise ParseError(f"{path}: unknown dtype code {code} for entry '{name}'")
        dims = struct.unpack_from(f"<{rank}Q", blob, pos) if rank else ()
        pos += 8 * rank
        (off,) = struct.unpack_from("<Q", blob, pos)
        pos += 8
        dt = _CODE_DTYPE[code]
        n = int(np.prod(dims, dtype=np.int64)) if rank else 1
        end = off + n * dt.itemsize
        if end > len(blob):
            raise ParseError(f"{path}: entry '{name}' payload out of bounds")
        out[name] = np.frombuffer(blob[off:end], dtype=dt).reshape(dims).copy()
    return out


def read_entry(path, name):
    data = read(path)
    if name not in data:
        raise ParseError(f"{path}: missing entry '{name}' (has {list(data)})")
    return data[name]
