"""PVLMEMB1: magic, modality byte, u32 rows, u32 dim, length-prefixed UTF-8
ids, then the row-major f32 matrix. Everything little-endian."""

import struct

import numpy as np

MAGIC = b"PVLMEMB1"
MODALITIES = {"image": 0, "text": 1}


def write_pvlmemb(path, modality, ids, matrix):
    matrix = np.ascontiguousarray(matrix, dtype="<f4")
    if matrix.ndim != 2 or matrix.shape[0] != len(ids) or matrix.size == 0:
        raise ValueError(f"need a non-empty {len(ids)} x D matrix, got shape {matrix.shape}")
    if len(set(ids)) != len(ids):
        raise ValueError("ids must be unique")
    if not np.isfinite(matrix).all():
        raise ValueError("matrix has non-finite values")
    out = bytearray(MAGIC)
    out.append(MODALITIES[modality])
    out += struct.pack("<II", *matrix.shape)
    for i in ids:
        raw = i.encode("utf-8")
        out += struct.pack("<H", len(raw)) + raw
    out += matrix.tobytes()
    with open(path, "wb") as f:
        f.write(out)


def read_pvlmemb(path):
    with open(path, "rb") as f:
        data = f.read()
    if data[:8] != MAGIC:
        raise ValueError("bad magic")
    modality = {v: k for k, v in MODALITIES.items()}[data[8]]
    n, d = struct.unpack_from("<II", data, 9)
    pos, ids = 17, []
    for _ in range(n):
        (length,) = struct.unpack_from("<H", data, pos)
        ids.append(data[pos + 2 : pos + 2 + length].decode("utf-8"))
        pos += 2 + length
    matrix = np.frombuffer(data, dtype="<f4", count=n * d, offset=pos).reshape(n, d)
    if pos + 4 * n * d != len(data):
        raise ValueError("trailing bytes")
    return modality, ids, matrix
