"""Score-function policy-gradient numerics for the retrieval policy.

The search text is treated directly as an unnormalized embedding-space
vector ``s``; similarity is the cosine ``<v_i, s/||s||>``, so the policy
update becomes an executable ascent step rather than a verbal edit.
All gradients here are exact closed forms, checked against central
finite differences in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ValidationError
from .retrieval import WorkingSet, softmax
from .store import MIN_ROW_NORM, EmbeddingStore


@dataclass(frozen=True)
class PolicyGradConfig:
    """Step size, baseline mode, redundancy weight, and policy temperature.

    The 0.15 temperature default comes from desk-scale calibration of the
    planted-environment experiments; cosine similarities live in [-1, 1],
    so a softmax over them needs a temperature well below 1 to express a
    preference sharp enough to learn from.
    """

    step_size: float = 0.5
    baseline_mode: str = "running_mean"  # "zero" | "running_mean"
    redundancy_weight: float = 0.5
    temperature: float = 0.15

    def __post_init__(self):
        if self.step_size < 0:
            raise ValidationError("step_size must be >= 0")
        if self.baseline_mode not in ("zero", "running_mean"):
            raise ValidationError(f"unknown baseline_mode {self.baseline_mode!r}")
        if self.redundancy_weight < 0:
            raise ValidationError("redundancy_weight must be >= 0")
        if self.temperature <= 0:
            raise ValidationError("temperature must be > 0")


class RewardBaseline:
    """Reward baseline tracker: zero, or running mean of observed rewards."""

    def __init__(self, mode: str = "running_mean"):
        if mode not in ("zero", "running_mean"):
            raise ValidationError(f"unknown baseline_mode {mode!r}")
        self.mode = mode
        self._total = 0.0
        self._count = 0

    @property
    def value(self) -> float:
        if self.mode == "zero" or self._count == 0:
            return 0.0
        return self._total / self._count

    def observe(self, reward: float) -> None:
        self._total += reward
        self._count += 1


@dataclass
class GradReport:
    """Diagnostic bundle for one policy-gradient evaluation."""

    per_frame_gradients: list[np.ndarray]
    mean_gradient: np.ndarray
    log_policy_gradients: list[np.ndarray]
    advantage: float
    surrogate_value: float
    objective_estimate: float


def _checked(s) -> np.ndarray:
    s = np.asarray(s, dtype=np.float64)
    if s.ndim != 1:
        raise ValidationError("search vector must be 1-D")
    if np.linalg.norm(s) <= MIN_ROW_NORM:
        raise ValidationError("search vector must have norm > 1e-12")
    return s


def sim_gradient(store: EmbeddingStore, frame: int, s) -> np.ndarray:
    """Exact gradient of ``<v_i, s/||s||>`` with respect to ``s``.

    Equals ``(v_i - <v_i, s_hat> s_hat) / ||s||``: the frame direction
    projected off the current search direction, shrinking as ``s`` grows.
    """
    s = _checked(s)
    v = store.vector(frame)
    norm = np.linalg.norm(s)
    s_hat = s / norm
    return (v - (v @ s_hat) * s_hat) / norm


def _pool_matrix(store: EmbeddingStore, pool: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    idx = np.asarray(list(pool), dtype=np.intp)
    if idx.size == 0:
        raise ValidationError("pool must be non-empty")
    if idx.min() < 0 or idx.max() >= store.n_frames:
        raise ValidationError("pool contains out-of-range frame indices")
    return idx, store.vectors[idx]


def _sim_gradients(vecs: np.ndarray, s: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(s)
    s_hat = s / norm
    return (vecs - np.outer(vecs @ s_hat, s_hat)) / norm


def log_policy_gradient(
    store: EmbeddingStore,
    pool: Sequence[int],
    s,
    frame: int,
    temperature: float,
) -> np.ndarray:
    """Gradient of ``log pi(frame | s)`` for the softmax retrieval policy.

    Closed form ``(g_frame - gbar) / temperature`` with ``gbar`` the
    policy expectation of the per-frame similarity gradients; the
    policy-weighted sum of these over the pool is identically zero.
    """
    s = _checked(s)
    idx, vecs = _pool_matrix(store, pool)
    positions = np.flatnonzero(idx == frame)
    if positions.size == 0:
        raise ValidationError(f"frame {frame} is not in the pool")
    if temperature <= 0:
        raise ValidationError("temperature must be > 0")
    sims = vecs @ (s / np.linalg.norm(s))
    probs = softmax(sims, temperature)
    grads = _sim_gradients(vecs, s)
    g_bar = probs @ grads
    return (grads[positions[0]] - g_bar) / temperature


def reinforce_update(
    store: EmbeddingStore,
    s,
    sampled_frames: Sequence[int],
    reward: float,
    config: PolicyGradConfig = PolicyGradConfig(),
    baseline: float = 0.0,
) -> np.ndarray:
    """One REINFORCE ascent step on the search vector.

    Returns ``s + step_size * (sum_t grad log pi(i_t | s, i_<t)) * (reward
    - baseline)`` where each step's policy is the softmax renormalized
    over the frames not yet drawn.  The caller supplies the numeric
    baseline (see RewardBaseline for the per-config tracker).
    """
    s = _checked(s)
    if len(sampled_frames) == 0:
        raise ValidationError("sampled_frames must be non-empty")
    pool = list(range(store.n_frames))
    advantage = reward - baseline
    if config.step_size == 0.0 or advantage == 0.0:
        return s.copy()
    total = np.zeros_like(s)
    remaining = pool
    for frame in sampled_frames:
        total += log_policy_gradient(store, remaining, s, frame, config.temperature)
        remaining = [i for i in remaining if i != frame]
    return s + config.step_size * advantage * total


def surrogate_value(store: EmbeddingStore, working: WorkingSet, s, gamma: float = 0.5) -> float:
    """Set surrogate: mean relevance minus the worst within-set redundancy.

    ``(1/K) sum_{i in W} sim(i, s) - gamma * max_{i != j in W} sim(i, j)``;
    a singleton has no pair, so its redundancy term is 0.
    """
    s = _checked(s)
    if len(working) == 0:
        raise ValidationError("working set must be non-empty")
    working.check_bounds(store)
    idx = np.asarray(working.indices, dtype=np.intp)
    vecs = store.vectors[idx]
    rel = vecs @ (s / np.linalg.norm(s))
    value = float(rel.mean())
    if len(working) > 1:
        pairwise = vecs @ vecs.T
        np.fill_diagonal(pairwise, -np.inf)
        value -= gamma * float(pairwise.max())
    return value


def surrogate_gradient(store: EmbeddingStore, working: WorkingSet, s, gamma: float = 0.5) -> np.ndarray:
    """Gradient of the set surrogate with the working set held fixed.

    The redundancy term is frame-to-frame only, so it contributes nothing:
    the gradient is the mean of the member similarity gradients.
    """
    s = _checked(s)
    if len(working) == 0:
        raise ValidationError("working set must be non-empty")
    working.check_bounds(store)
    vecs = store.vectors[np.asarray(working.indices, dtype=np.intp)]
    return _sim_gradients(vecs, s).mean(axis=0)


def grad_report(
    store: EmbeddingStore,
    pool: Sequence[int],
    s,
    config: PolicyGradConfig = PolicyGradConfig(),
    working: WorkingSet | None = None,
    reward: float = 0.0,
    baseline: float = 0.0,
    objective_estimate: float = float("nan"),
) -> GradReport:
    """Assemble the per-frame gradients and policy diagnostics in one pass."""
    s = _checked(s)
    idx, vecs = _pool_matrix(store, pool)
    sims = vecs @ (s / np.linalg.norm(s))
    probs = softmax(sims, config.temperature)
    grads = _sim_gradients(vecs, s)
    g_bar = probs @ grads
    log_grads = [(grads[p] - g_bar) / config.temperature for p in range(len(idx))]
    surr = surrogate_value(store, working, s, config.redundancy_weight) if working else float("nan")
    return GradReport(
        per_frame_gradients=[grads[p].copy() for p in range(len(idx))],
        mean_gradient=g_bar,
        log_policy_gradients=log_grads,
        advantage=reward - baseline,
        surrogate_value=surr,
        objective_estimate=objective_estimate,
    )
