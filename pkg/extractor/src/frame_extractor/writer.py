"""UVEB store writer.

This is the extractor's half of the file-format boundary with the
consumer toolkit; the layout must stay bit-compatible:

    magic 'UVEB' | u32 version=1 | u32 N | u32 d | u32 flags
    N*d float32 row-major | N float64 timestamps (seconds)

All values little-endian.  Flag bit 0 declares the rows unit-normalized,
which this writer always guarantees.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"UVEB"
VERSION = 1
FLAG_NORMALIZED = 1


def write_store(vectors: np.ndarray, timestamps: np.ndarray, path) -> None:
    """Write L2-normalized embeddings and their timestamps as a UVEB file."""
    vectors = np.asarray(vectors, dtype=np.float64)
    timestamps = np.asarray(timestamps, dtype=np.float64)
    if vectors.ndim != 2 or vectors.shape[0] < 1 or vectors.shape[1] < 1:
        raise ValueError(f"vectors must be a non-empty 2-D matrix, got {vectors.shape}")
    if timestamps.shape != (vectors.shape[0],):
        raise ValueError("need exactly one timestamp per frame")
    if not np.all(np.diff(timestamps) > 0):
        raise ValueError("timestamps must be strictly increasing")
    norms = np.linalg.norm(vectors, axis=1)
    if np.any(norms <= 1e-12):
        raise ValueError("cannot write a near-zero embedding row")
    vectors = vectors / norms[:, None]

    n, d = vectors.shape
    header = struct.pack("<4sIIII", MAGIC, VERSION, n, d, FLAG_NORMALIZED)
    Path(path).write_bytes(
        header + vectors.astype("<f4").tobytes(order="C") + timestamps.astype("<f8").tobytes()
    )
