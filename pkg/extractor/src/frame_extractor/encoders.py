"""Image/text encoders behind one small interface.

``HashEncoder`` is the dependency-free default: deterministic random
projections of coarse image statistics (and digests for text).  It
carries no semantics but satisfies every contract the store pipeline
needs (fixed dimension, unit norm, reproducibility), which is what the
offline tests exercise.  ``SiglipEncoder`` wraps a pretrained
vision-language checkpoint when torch/transformers and its weights are
available.
"""

from __future__ import annotations

import hashlib

import cv2
import numpy as np

PATCH_GRID = 8  # HashEncoder folds each frame to an 8x8 luma patch + color means


class HashEncoder:
    """Deterministic projection encoder; no model weights involved."""

    def __init__(self, dim: int = 256, seed: int = 0):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.dim = dim
        rng = np.random.default_rng(seed)
        n_features = PATCH_GRID * PATCH_GRID + 3
        self._projection = rng.standard_normal((n_features, dim)) / np.sqrt(n_features)

    def encode_image(self, frame_bgr: np.ndarray) -> np.ndarray:
        if frame_bgr.ndim != 3 or frame_bgr.shape[2] != 3:
            raise ValueError(f"expected an HxWx3 BGR frame, got shape {frame_bgr.shape}")
        gray = cv2.cvtColor(frame_bgr, cv2.COLOR_BGR2GRAY)
        patch = cv2.resize(gray, (PATCH_GRID, PATCH_GRID), interpolation=cv2.INTER_AREA)
        features = np.concatenate(
            [patch.ravel() / 255.0, frame_bgr.reshape(-1, 3).mean(axis=0) / 255.0]
        )
        out = features @ self._projection
        norm = np.linalg.norm(out)
        if norm <= 1e-12:  # all-black frames project to ~0; keep output valid
            out = self._projection[0].copy()
            norm = np.linalg.norm(out)
        return out / norm

    def encode_text(self, query: str) -> np.ndarray:
        if not query.strip():
            raise ValueError("query must be non-empty")
        seed = int.from_bytes(hashlib.sha256(query.encode("utf-8")).digest()[:8], "little")
        v = np.random.default_rng(seed).standard_normal(self.dim)
        return v / np.linalg.norm(v)


class SiglipEncoder:
    """Pretrained vision-language encoder (requires torch + transformers)."""

    def __init__(self, checkpoint: str = "google/siglip2-so400m-patch14-384"):
        try:
            import torch  # noqa: F401
            from transformers import AutoModel, AutoProcessor
        except ImportError as exc:
            raise RuntimeError(
                "SiglipEncoder needs the siglip extra: pip install 'frame-extractor[siglip]'"
            ) from exc
        self._torch = __import__("torch")
        self.processor = AutoProcessor.from_pretrained(checkpoint)
        self.model = AutoModel.from_pretrained(checkpoint).eval()
        self.dim = int(self.model.config.text_config.hidden_size)

    def encode_image(self, frame_bgr: np.ndarray) -> np.ndarray:
        rgb = cv2.cvtColor(frame_bgr, cv2.COLOR_BGR2RGB)
        inputs = self.processor(images=rgb, return_tensors="pt")
        with self._torch.no_grad():
            features = self.model.get_image_features(**inputs)[0].numpy().astype(np.float64)
        return features / np.linalg.norm(features)

    def encode_text(self, query: str) -> np.ndarray:
        if not query.strip():
            raise ValueError("query must be non-empty")
        inputs = self.processor(text=[query], return_tensors="pt", padding="max_length")
        with self._torch.no_grad():
            features = self.model.get_text_features(**inputs)[0].numpy().astype(np.float64)
        return features / np.linalg.norm(features)


def get_encoder(name: str, dim: int = 256):
    """Encoder registry: ``hash`` (offline default) or ``siglip[:checkpoint]``."""
    if name == "hash":
        return HashEncoder(dim=dim)
    if name == "siglip":
        return SiglipEncoder()
    if name.startswith("siglip:"):
        return SiglipEncoder(checkpoint=name.split(":", 1)[1])
    raise ValueError(f"unknown encoder {name!r} (expected hash, siglip, or siglip:<checkpoint>)")
