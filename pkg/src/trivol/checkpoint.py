"""Binary weight container.

Layout (little-endian): magic ``TRIV``, version u32, tensor count u32, then
per tensor: name length u32, UTF-8 name, rank u32, dims u32 each, and the
values as raw 64-bit floats. Entries are written sorted by name so identical
state always produces identical bytes.
"""

import struct

import numpy as np

from .errors import ParseError

MAGIC = b"TRIV"
VERSION = 1


def save_tensors(path, named_arrays):
    """Write a mapping of name -> ndarray to ``path``."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(named_arrays)))
        for name in sorted(named_arrays):
            arr = np.asarray(named_arrays[name], dtype="<f8")
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def load_tensors(path):
    """Read a checkpoint written by :func:`save_tensors`; returns name -> float64 array."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise ParseError(f"{path}: not a weight checkpoint (bad magic {blob[:4]!r})")
    offset = 4

    def take(fmt):
        nonlocal offset
        size = struct.calcsize(fmt)
        if offset + size > len(blob):
            raise ParseError(f"{path}: truncated checkpoint")
        values = struct.unpack_from(fmt, blob, offset)
        offset += size
        return values

    version, count = take("<II")
    if version != VERSION:
        raise ParseError(f"{path}: unsupported checkpoint version {version}")
    out = {}
    for _ in range(count):
        (name_len,) = take("<I")
        name = blob[offset : offset + name_len].decode("utf-8")
        offset += name_len
        (rank,) = take("<I")
        dims = take(f"<{rank}I")
        n = int(np.prod(dims)) if rank else 1
        end = offset + 8 * n
        if end > len(blob):
            raise ParseError(f"{path}: truncated tensor data for {name!r}")
        arr = np.frombuffer(blob, dtype="<f8", count=n, offset=offset).reshape(dims)
        offset = end
        out[name] = arr.astype(np.float64)
    return out
