"""Immutable pool of cached frame embeddings plus on-disk persistence.

File format (`UVEB`, little-endian):

    bytes 0-3    magic ``UVEB``
    bytes 4-7    uint32 version (currently 1)
    bytes 8-11   uint32 N (frame count)
    bytes 12-15  uint32 d (embedding dimension)
    bytes 16-19  uint32 flags (bit 0 = rows stored unit-normalized)
    then         N*d float32, row-major (frame i contiguous)
    then         N float64 timestamps in seconds, strictly increasing

Vectors are persisted as float32 and held as float64 in memory.  To keep
save -> load bit-exact, construction quantizes every row through float32,
so the in-memory values are always exactly float32-representable.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import FormatError, ValidationError

MAGIC = b"UVEB"
VERSION = 1
FLAG_NORMALIZED = 1

_HEADER = struct.Struct("<4sIIII")

DEFAULT_POOL_SIZE = 64
DEFAULT_DIM = 768

#: rows with L2 norm below this are rejected outright
MIN_ROW_NORM = 1e-12
#: tolerance for "this row is already unit length"
UNIT_NORM_TOL = 1e-6


def normalize(vector: np.ndarray) -> np.ndarray:
    """Return ``vector / ||vector||`` as float64.

    Raises ValidationError when the norm is at or below ``MIN_ROW_NORM``.
    """
    v = np.asarray(vector, dtype=np.float64)
    n = float(np.linalg.norm(v))
    if n <= MIN_ROW_NORM:
        raise ValidationError(f"cannot normalize near-zero vector (norm={n:g})")
    return v / n


class EmbeddingStore:
    """Validated, immutable pool of unit-normalized frame embeddings.

    A constructed store always holds unit rows: pass ``normalized=True``
    to assert the input rows are already unit length (checked to 1e-6),
    otherwise rows are L2-normalized on construction.  Safe to share
    across concurrent readers.
    """

    __slots__ = ("_vectors", "_timestamps", "_normalized")

    def __init__(self, vectors, timestamps, normalized: bool = False):
        vec = np.array(vectors, dtype=np.float64, copy=True)
        ts = np.array(timestamps, dtype=np.float64, copy=True)
        if vec.ndim != 2 or vec.shape[0] < 1 or vec.shape[1] < 1:
            raise ValidationError(f"vectors must be a non-empty 2-D matrix, got shape {vec.shape}")
        if ts.ndim != 1 or ts.shape[0] != vec.shape[0]:
            raise ValidationError("timestamps must be one value per frame")
        if not np.all(np.diff(ts) > 0):
            raise ValidationError("timestamps must be strictly increasing")

        norms = np.linalg.norm(vec, axis=1)
        if np.any(norms <= MIN_ROW_NORM):
            bad = int(np.argmax(norms <= MIN_ROW_NORM))
            raise ValidationError(f"frame {bad} has near-zero embedding (norm={norms[bad]:g})")
        if normalized:
            if np.any(np.abs(norms - 1.0) > UNIT_NORM_TOL):
                bad = int(np.argmax(np.abs(norms - 1.0) > UNIT_NORM_TOL))
                raise ValidationError(
                    f"normalized flag set but frame {bad} has norm {norms[bad]!r}"
                )
        else:
            vec /= norms[:, None]
        # quantize through float32 so the file payload round-trips bit-exactly
        vec = vec.astype(np.float32).astype(np.float64)

        vec.setflags(write=False)
        ts.setflags(write=False)
        self._vectors = vec
        self._timestamps = ts
        self._normalized = True

    @property
    def n_frames(self) -> int:
        return self._vectors.shape[0]

    @property
    def dim(self) -> int:
        return self._vectors.shape[1]

    @property
    def vectors(self) -> np.ndarray:
        """Read-only (N, d) float64 matrix of unit rows."""
        return self._vectors

    @property
    def timestamps(self) -> np.ndarray:
        """Read-only (N,) float64 seconds, strictly increasing."""
        return self._timestamps

    @property
    def normalized(self) -> bool:
        return self._normalized

    def vector(self, frame: int) -> np.ndarray:
        """Embedding of one frame; the per-frame provider surface.

        The reflection loop materializes its pool through this accessor
        exactly once per frame, which is what cache-discipline tests count.
        """
        if not 0 <= frame < self.n_frames:
            raise ValidationError(f"frame index {frame} out of range [0, {self.n_frames})")
        return self._vectors[frame]

    def timestamp(self, frame: int) -> float:
        if not 0 <= frame < self.n_frames:
            raise ValidationError(f"frame index {frame} out of range [0, {self.n_frames})")
        return float(self._timestamps[frame])

    def __eq__(self, other) -> bool:
        if not isinstance(other, EmbeddingStore):
            return NotImplemented
        return (
            self._normalized == other._normalized
            and self._vectors.shape == other._vectors.shape
            and np.array_equal(self._vectors, other._vectors)
            and np.array_equal(self._timestamps, other._timestamps)
        )

    def __repr__(self) -> str:
        return f"EmbeddingStore(n_frames={self.n_frames}, dim={self.dim})"


class SearchState:
    """Search text plus its unit-normalized embedding."""

    __slots__ = ("text", "embedding")

    def __init__(self, text: str, embedding):
        emb = np.asarray(embedding, dtype=np.float64)
        if emb.ndim != 1:
            raise ValidationError("search embedding must be a 1-D vector")
        n = float(np.linalg.norm(emb))
        if abs(n - 1.0) > UNIT_NORM_TOL:
            raise ValidationError(f"search embedding must be unit length, got norm {n!r}")
        emb = emb.copy()
        emb.setflags(write=False)
        self.text = text
        self.embedding = emb

    @classmethod
    def from_raw(cls, text: str, raw_embedding) -> "SearchState":
        """Build a state from an unnormalized embedding."""
        return cls(text, normalize(raw_embedding))

    def __repr__(self) -> str:
        return f"SearchState(text={self.text!r}, dim={self.embedding.shape[0]})"


def file_size(n_frames: int, dim: int) -> int:
    """Exact byte size of a store file with the given shape."""
    return _HEADER.size + n_frames * dim * 4 + n_frames * 8


def save_store(store: EmbeddingStore, path) -> None:
    """Write ``store`` in the UVEB format; overwrites any existing file."""
    flags = FLAG_NORMALIZED if store.normalized else 0
    payload = store.vectors.astype("<f4").tobytes(order="C")
    stamps = store.timestamps.astype("<f8").tobytes()
    header = _HEADER.pack(MAGIC, VERSION, store.n_frames, store.dim, flags)
    Path(path).write_bytes(header + payload + stamps)


def load_store(path) -> EmbeddingStore:
    """Read and validate a UVEB file.

    Rows are L2-normalized on load when the file's normalized flag is
    unset; loaded stores therefore always hold unit rows.
    """
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise FormatError(f"file too short for header ({len(data)} bytes)")
    magic, version, n, d, flags = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise FormatError(f"unsupported version {version}, expected {VERSION}")
    if n < 1 or d < 1:
        raise FormatError(f"invalid shape N={n}, d={d}")
    expected = file_size(n, d)
    if len(data) != expected:
        raise FormatError(f"truncated or oversized file: {len(data)} bytes, expected {expected}")
    off = _HEADER.size
    vec = np.frombuffer(data, dtype="<f4", count=n * d, offset=off).reshape(n, d)
    off += n * d * 4
    ts = np.frombuffer(data, dtype="<f8", count=n, offset=off)
    return EmbeddingStore(vec, ts, normalized=bool(flags & FLAG_NORMALIZED))
