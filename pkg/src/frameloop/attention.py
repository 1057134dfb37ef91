"""Progress-scheduled gains on cross-modal attention scores.

Two cosine half-window gain curves over normalized progress ``u`` in
[0, 1]: the text gain starts at ``1 + lambda_txt`` and decays to 1 by
``txt_breakpoint``, the image gain is 1 until ``img_breakpoint`` and
rises to ``1 + lambda_img`` at ``u = 1``.  Gains multiply pre-softmax
attention scores; the softmax then competes over all keys jointly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class GainSchedule:
    """Cosine gain curves for text-key and visual-key attention scores."""

    lambda_txt: float = 0.3
    lambda_img: float = 0.3
    txt_breakpoint: float = 0.4
    img_breakpoint: float = 0.6

    def __post_init__(self):
        if self.lambda_txt < 0 or self.lambda_img < 0:
            raise ValidationError("gain amplitudes must be >= 0")
        for name in ("txt_breakpoint", "img_breakpoint"):
            b = getattr(self, name)
            if not 0.0 < b < 1.0:
                raise ValidationError(f"{name} must lie in (0, 1), got {b!r}")


def _check_u(u: float) -> float:
    if not 0.0 <= u <= 1.0:
        raise ValidationError(f"progress u must lie in [0, 1], got {u!r}")
    return float(u)


def alpha_txt(u: float, schedule: GainSchedule = GainSchedule()) -> float:
    """Text-key gain at progress ``u``: strongest at 0, neutral past the breakpoint."""
    u = _check_u(u)
    b = schedule.txt_breakpoint
    if u > b:
        return 1.0
    return 1.0 + (schedule.lambda_txt / 2.0) * (1.0 + math.cos(math.pi * u / b))


def alpha_img(u: float, schedule: GainSchedule = GainSchedule()) -> float:
    """Visual-key gain at progress ``u``: neutral early, strongest at 1."""
    u = _check_u(u)
    b = schedule.img_breakpoint
    if u <= b:
        return 1.0
    return 1.0 + (schedule.lambda_img / 2.0) * (1.0 - math.cos(math.pi * (u - b) / (1.0 - b)))


class AttentionInstance:
    """Synthetic pre-softmax attention scores for visual queries.

    ``scores`` has one row per visual query and ``n_text + n_visual``
    columns: text keys first, then visual keys.  ``u`` is the normalized
    progress at which the gains are evaluated.
    """

    __slots__ = ("n_text", "n_visual", "scores", "u")

    def __init__(self, n_text: int, n_visual: int, scores, u: float):
        scores = np.asarray(scores, dtype=np.float64)
        if n_text < 1 or n_visual < 1:
            raise ValidationError("need at least one text key and one visual key")
        if scores.shape != (n_visual, n_text + n_visual):
            raise ValidationError(
                f"scores must have shape ({n_visual}, {n_text + n_visual}), got {scores.shape}"
            )
        if not np.all(np.isfinite(scores)):
            raise ValidationError("attention scores must be finite")
        self.n_text = n_text
        self.n_visual = n_visual
        self.scores = scores.copy()
        self.u = _check_u(u)


def modulate_scores(instance: AttentionInstance, schedule: GainSchedule = GainSchedule()) -> np.ndarray:
    """Apply the gains: text-key block times alpha_txt, visual-key block times alpha_img."""
    out = instance.scores.copy()
    out[:, : instance.n_text] *= alpha_txt(instance.u, schedule)
    out[:, instance.n_text :] *= alpha_img(instance.u, schedule)
    return out


def attention_text_mass(instance: AttentionInstance, schedule: GainSchedule = GainSchedule()) -> float:
    """Mean softmax probability mass landing on text keys, after modulation."""
    scores = modulate_scores(instance, schedule)
    z = scores - scores.max(axis=1, keepdims=True)
    w = np.exp(z)
    probs = w / w.sum(axis=1, keepdims=True)
    return float(probs[:, : instance.n_text].sum(axis=1).mean())


def schedule_grid(samples: int, schedule: GainSchedule = GainSchedule()) -> list[tuple[float, float, float]]:
    """Uniform-grid samples of both gains: ``(u, alpha_txt, alpha_img)`` rows."""
    if samples < 2:
        raise ValidationError("need at least 2 grid samples")
    rows = []
    for k in range(samples):
        u = k / (samples - 1)
        rows.append((u, alpha_txt(u, schedule), alpha_img(u, schedule)))
    return rows
