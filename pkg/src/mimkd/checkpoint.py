"""Binary checkpoint container.

Layout (little-endian): magic "MIMK", u32 version=1, u32 tensor count, then
per tensor: u16 name length, UTF-8 name, u8 rank, u32 per dim, f32 payload.
Round-trips must be bit-exact.
"""

import struct

import numpy as np

MAGIC = b"MIMK"
VERSION = 1


def save_checkpoint(path, arrays):
    """Write a dict of name -> numpy array (stored as f32, insertion order)."""
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", VERSION, len(arrays)))
        for name, arr in arrays.items():
            arr = np.asarray(arr, dtype="<f4")
            if not arr.flags["C_CONTIGUOUS"]:
                arr = np.ascontiguousarray(arr)
            encoded = name.encode("utf-8")
            f.write(struct.pack("<H", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<B", arr.ndim))
            for dim in arr.shape:
                f.write(struct.pack("<I", dim))
            f.write(arr.tobytes())


def load_checkpoint(path):
    """Read a checkpoint back into a dict of name -> f32 numpy array."""
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != MAGIC:
        raise ValueError(f"bad checkpoint magic {blob[:4]!r}")
    version, count = struct.unpack_from("<II", blob, 4)
    if version != VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    offset = 12
    out = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", blob, offset)
        offset += 2
        name = blob[offset : offset + name_len].decode("utf-8")
        offset += name_len
        (rank,) = struct.unpack_from("<B", blob, offset)
        offset += 1
        shape = struct.unpack_from(f"<{rank}I", blob, offset)
        offset += 4 * rank
        n = int(np.prod(shape)) if rank else 1
        arr = np.frombuffer(blob, dtype="<f4", count=n, offset=offset).reshape(shape)
        offset += 4 * n
        out[name] = arr.copy()
    if offset != len(blob):
        raise ValueError(f"trailing bytes in checkpoint at offset {offset}")
    return out
