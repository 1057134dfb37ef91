"""Uniform frame sampling."""

from __future__ import annotations


def sample_indices(total_frames: int, pool_size: int) -> list[int]:
    """Indices of ``pool_size`` uniformly spaced frames: floor(i * total / pool).

    Strictly increasing whenever ``total_frames >= pool_size >= 1``.
    """
    if pool_size < 1:
        raise ValueError("pool_size must be >= 1")
    if pool_size > total_frames:
        raise ValueError(f"pool_size {pool_size} exceeds total_frames {total_frames}")
    return [i * total_frames // pool_size for i in range(pool_size)]
