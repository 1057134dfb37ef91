"""Planted-evidence environment for validating the policy-gradient loop.

A synthetic pool hides a subset of "evidence" frames clustered around a
common direction; reward is the fraction of that subset a working set
covers.  Running the numeric REINFORCE loop on this environment makes
the expected-improvement claim falsifiable without any backend.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .gradients import PolicyGradConfig, RewardBaseline, reinforce_update
from .retrieval import RetrievalConfig, WorkingSet, softmax
from .store import EmbeddingStore

#: noise scale mixed into planted rows; planted-to-hidden cosine is about
#: 1/sqrt(1 + PLANTED_NOISE^2) ~= 0.89, leaving a planted-vs-rest
#: similarity gap well above 0.3 while keeping instances nondegenerate
PLANTED_NOISE = 0.5


@dataclass(frozen=True)
class PlantedEnv:
    store: EmbeddingStore
    planted: frozenset[int]
    hidden_direction: np.ndarray
    rng_seed: int


def make_env(n_frames: int, dim: int, n_planted: int, seed: int) -> PlantedEnv:
    """Random pool whose planted frames share a hidden direction."""
    if n_planted < 1:
        raise ValidationError("need at least one planted frame")
    if n_planted > n_frames:
        raise ValidationError(f"n_planted {n_planted} exceeds n_frames {n_frames}")
    rng = np.random.default_rng(seed)
    hidden = rng.standard_normal(dim)
    hidden /= np.linalg.norm(hidden)

    vectors = rng.standard_normal((n_frames, dim))
    vectors /= np.linalg.norm(vectors, axis=1, keepdims=True)
    planted = rng.choice(n_frames, size=n_planted, replace=False)
    vectors[planted] = hidden + PLANTED_NOISE * vectors[planted]
    vectors /= np.linalg.norm(vectors, axis=1, keepdims=True)

    store = EmbeddingStore(vectors, np.arange(n_frames, dtype=np.float64), normalized=False)
    return PlantedEnv(
        store=store,
        planted=frozenset(int(i) for i in planted),
        hidden_direction=hidden,
        rng_seed=seed,
    )


def reward(env: PlantedEnv, working: WorkingSet) -> float:
    """Fraction of planted evidence covered by the working set."""
    working.check_bounds(env.store)
    return len(env.planted.intersection(working.indices)) / len(env.planted)


def sample_working_set(
    env: PlantedEnv, s: np.ndarray, k: int, temperature: float, rng: np.random.Generator
) -> list[int]:
    """Draw k frames sequentially without replacement from the softmax policy.

    Returns frames in draw order (callers needing temporal order sort).
    """
    if not 1 <= k <= env.store.n_frames:
        raise ValidationError(f"sample size {k} invalid for pool of {env.store.n_frames}")
    sims = env.store.vectors @ (s / np.linalg.norm(s))
    remaining = list(range(env.store.n_frames))
    drawn: list[int] = []
    for _ in range(k):
        probs = softmax(sims[remaining], temperature)
        j = int(rng.choice(len(remaining), p=probs))
        drawn.append(remaining.pop(j))
    return drawn


@dataclass
class Trajectory:
    rewards: list[float]
    final_s: np.ndarray
    seed: int


def run_numeric_loop(
    env: PlantedEnv,
    steps: int,
    config: PolicyGradConfig = PolicyGradConfig(),
    retrieval: RetrievalConfig = RetrievalConfig(),
    k: int = 4,
    s0: np.ndarray | None = None,
) -> Trajectory:
    """REINFORCE on the search vector: sample k frames, observe reward, step.

    The policy temperature for both sampling and gradients is
    ``config.temperature`` (a single policy must drive both for the
    estimator to be unbiased); ``retrieval.rng_seed`` fixes the whole
    trajectory, making it a pure function of (env, configs).
    """
    if steps < 1:
        raise ValidationError("steps must be >= 1")
    # distinct stream from make_env's default_rng(seed): sharing one integer
    # seed across both would make the initial s coincide with the hidden
    # direction (both are that stream's first standard-normal draw)
    rng = np.random.default_rng((retrieval.rng_seed, 0x51))
    if s0 is None:
        s = rng.standard_normal(env.store.dim)
        s /= np.linalg.norm(s)
    else:
        s = np.asarray(s0, dtype=np.float64).copy()

    baseline = RewardBaseline(config.baseline_mode)
    rewards: list[float] = []
    for _ in range(steps):
        drawn = sample_working_set(env, s, k, config.temperature, rng)
        r = reward(env, WorkingSet.of(drawn))
        s = reinforce_update(env.store, s, drawn, r, config, baseline.value)
        baseline.observe(r)
        rewards.append(r)
    return Trajectory(rewards=rewards, final_s=s, seed=retrieval.rng_seed)


def estimate_objective(
    env: PlantedEnv,
    s: np.ndarray,
    k: int,
    temperature: float,
    n_samples: int,
    rng: np.random.Generator,
) -> float:
    """Monte Carlo estimate of the expected reward under the policy at ``s``."""
    total = 0.0
    for _ in range(n_samples):
        drawn = sample_working_set(env, s, k, temperature, rng)
        total += reward(env, WorkingSet.of(drawn))
    return total / n_samples


def least_squares_slope(values: list[float]) -> float:
    """Slope of the ordinary least-squares line through (step, value)."""
    y = np.asarray(values, dtype=np.float64)
    t = np.arange(len(y), dtype=np.float64)
    t -= t.mean()
    denom = float(t @ t)
    if denom == 0.0:
        return 0.0
    return float(t @ (y - y.mean()) / denom)
