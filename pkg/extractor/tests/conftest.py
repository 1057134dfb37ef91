from __future__ import annotations

import cv2
import numpy as np
import pytest


def write_sample_video(path, n_frames: int = 120, width: int = 96, height: int = 64, fps: float = 12.0):
    """Synthetic clip with per-frame structure: a moving bright square."""
    writer = cv2.VideoWriter(str(path), cv2.VideoWriter_fourcc(*"MJPG"), fps, (width, height))
    if not writer.isOpened():
        pytest.skip("OpenCV VideoWriter unavailable in this environment")
    rng = np.random.default_rng(0)
    for i in range(n_frames):
        frame = rng.integers(0, 40, size=(height, width, 3), dtype=np.uint8)
        x = (i * 3) % (width - 16)
        y = (i * 2) % (height - 16)
        frame[y : y + 16, x : x + 16] = (40 + (i * 5) % 200, 220, 90)
        writer.write(frame)
    writer.release()
    return path


@pytest.fixture(scope="session")
def sample_video(tmp_path_factory):
    path = tmp_path_factory.mktemp("video") / "clip.avi"
    return write_sample_video(path)
