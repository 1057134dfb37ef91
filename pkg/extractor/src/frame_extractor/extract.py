"""Decode sampled frames, encode them, and write the store plus manifest."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np

from .sampling import sample_indices
from .writer import write_store

FALLBACK_FPS = 30.0


@dataclass(frozen=True)
class ExtractionJob:
    video_path: str
    output_path: str
    pool_size: int = 64
    encoder_name: str = "hash"

    def __post_init__(self):
        if self.pool_size < 1:
            raise ValueError("pool_size must be >= 1")


def _decode_frames(video_path: str, wanted: list[int]) -> tuple[list[np.ndarray], float]:
    capture = cv2.VideoCapture(video_path)
    if not capture.isOpened():
        raise RuntimeError(f"cannot decode video: {video_path}")
    fps = capture.get(cv2.CAP_PROP_FPS) or 0.0
    if fps <= 0:
        fps = FALLBACK_FPS
    frames: list[np.ndarray] = []
    want = set(wanted)
    index = 0
    while len(frames) < len(wanted):
        ok, frame = capture.read()
        if not ok:
            capture.release()
            raise RuntimeError(f"decode failed at frame {index} of {video_path}")
        if index in want:
            frames.append(frame)
        index += 1
    capture.release()
    return frames, fps


def probe_frame_count(video_path: str) -> int:
    capture = cv2.VideoCapture(video_path)
    if not capture.isOpened():
        raise RuntimeError(f"cannot decode video: {video_path}")
    total = int(capture.get(cv2.CAP_PROP_FRAME_COUNT))
    capture.release()
    if total <= 0:
        raise RuntimeError(f"video reports no frames: {video_path}")
    return total


def extract_and_write(job: ExtractionJob, encoder=None) -> dict:
    """Run the whole pipeline; returns the manifest that was written.

    The manifest sidecar (``<out>.manifest.json``) maps each store row to
    its source frame index and timestamp.
    """
    from .encoders import get_encoder

    total = probe_frame_count(job.video_path)
    indices = sample_indices(total, job.pool_size)
    frames, fps = _decode_frames(job.video_path, indices)
    if encoder is None:
        encoder = get_encoder(job.encoder_name)

    vectors = np.stack([encoder.encode_image(frame) for frame in frames])
    vectors /= np.linalg.norm(vectors, axis=1, keepdims=True)
    timestamps = np.array([i / fps for i in indices], dtype=np.float64)
    write_store(vectors, timestamps, job.output_path)

    manifest = {
        "video": str(job.video_path),
        "encoder": job.encoder_name,
        "pool_size": job.pool_size,
        "total_frames": total,
        "fps": fps,
        "frames": [
            {"store_row": row, "source_frame": int(src), "timestamp_sec": float(ts)}
            for row, (src, ts) in enumerate(zip(indices, timestamps))
        ],
    }
    manifest_path = Path(str(job.output_path) + ".manifest.json")
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return manifest
