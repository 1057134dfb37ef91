"""Similarity scoring, the soft retrieval policy, and working-set reconfiguration.

The working set is always kept free of duplicates and sorted by frame
timestamp.  Timestamps are strictly increasing in any valid store, so
temporal order coincides with ascending index order.

Tie-breaking everywhere: the lower frame index wins.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ValidationError
from .store import EmbeddingStore, SearchState


@dataclass(frozen=True)
class WorkingSet:
    """Ordered subset of frame indices with its current capacity target."""

    indices: tuple[int, ...] = ()
    target: int = 0

    def __post_init__(self):
        if len(set(self.indices)) != len(self.indices):
            raise ValidationError("working set indices must be unique")
        if any(i < 0 for i in self.indices):
            raise ValidationError("working set indices must be non-negative")
        if tuple(sorted(self.indices)) != self.indices:
            raise ValidationError("working set indices must be in temporal (ascending) order")

    def __len__(self) -> int:
        return len(self.indices)

    def __contains__(self, frame: int) -> bool:
        return frame in self.indices

    def check_bounds(self, store: EmbeddingStore) -> None:
        if self.indices and self.indices[-1] >= store.n_frames:
            raise ValidationError(
                f"working set index {self.indices[-1]} out of range for {store.n_frames} frames"
            )

    @classmethod
    def of(cls, indices: Iterable[int], target: int | None = None) -> "WorkingSet":
        idx = tuple(sorted(int(i) for i in indices))
        return cls(idx, len(idx) if target is None else target)


@dataclass(frozen=True)
class RetrievalConfig:
    """Knobs for the retrieval policy and the expand/shrink schedules."""

    softmax_temperature: float = 1.0
    mmr_lambda: float = 0.5
    static_schedule: tuple[int, ...] = (4, 8, 16)
    dynamic_schedule: tuple[int, ...] = (64, 32, 16)
    stochastic: bool = False
    rng_seed: int = 0

    def __post_init__(self):
        if self.softmax_temperature <= 0:
            raise ValidationError("softmax_temperature must be > 0")
        if not 0.0 <= self.mmr_lambda <= 1.0:
            raise ValidationError("mmr_lambda must be in [0, 1]")
        if any(b <= a for a, b in zip(self.static_schedule, self.static_schedule[1:])):
            raise ValidationError("static_schedule must be strictly increasing")
        if any(b >= a for a, b in zip(self.dynamic_schedule, self.dynamic_schedule[1:])):
            raise ValidationError("dynamic_schedule must be strictly decreasing")


def cosine_sim(store: EmbeddingStore, frame: int, query: SearchState) -> float:
    """Cosine similarity between one cached frame embedding and the query."""
    return float(store.vector(frame) @ query.embedding)


def pool_similarities(store: EmbeddingStore, pool: Sequence[int], query: SearchState) -> np.ndarray:
    """Similarities of every pool frame to the query, aligned with ``pool``."""
    idx = np.asarray(list(pool), dtype=np.intp)
    if idx.size == 0:
        raise ValidationError("pool must be non-empty")
    if idx.min() < 0 or idx.max() >= store.n_frames:
        raise ValidationError("pool contains out-of-range frame indices")
    return store.vectors[idx] @ query.embedding


def softmax(scores: np.ndarray, temperature: float) -> np.ndarray:
    """Numerically stable softmax of ``scores / temperature``.

    Shift-invariant: adding a constant to every score leaves the result
    unchanged up to float rounding.
    """
    if temperature <= 0:
        raise ValidationError("temperature must be > 0")
    z = np.asarray(scores, dtype=np.float64) / temperature
    z = z - z.max()
    w = np.exp(z)
    return w / w.sum()


def policy_distribution(
    store: EmbeddingStore,
    pool: Sequence[int],
    query: SearchState,
    config: RetrievalConfig,
) -> np.ndarray:
    """Softmax retrieval policy over ``pool``, aligned with its order."""
    sims = pool_similarities(store, pool, query)
    return softmax(sims, config.softmax_temperature)


def _top_m_indices(candidates: np.ndarray, sims: np.ndarray, m: int) -> list[int]:
    # sort by (-similarity, index): ties go to the lower frame index
    order = np.lexsort((candidates, -sims))
    return [int(candidates[i]) for i in order[:m]]


def _sample_without_replacement(
    candidates: list[int],
    sims: np.ndarray,
    m: int,
    temperature: float,
    rng: np.random.Generator,
) -> list[int]:
    # sequential draws, renormalizing the softmax over the remaining frames
    remaining = list(range(len(candidates)))
    picked: list[int] = []
    for _ in range(m):
        probs = softmax(sims[remaining], temperature)
        j = int(rng.choice(len(remaining), p=probs))
        picked.append(candidates[remaining.pop(j)])
    return picked


def expand_top_m(
    store: EmbeddingStore,
    working: WorkingSet,
    query: SearchState,
    target: int,
    config: RetrievalConfig = RetrievalConfig(),
    rng: np.random.Generator | None = None,
) -> WorkingSet:
    """Grow the working set to ``target`` frames.

    Deterministic mode adds the exact top-m unseen frames by similarity;
    stochastic mode samples them sequentially without replacement from
    the retrieval policy.  Existing members are never removed and the
    result is returned in temporal order.
    """
    working.check_bounds(store)
    if target > store.n_frames:
        raise ValidationError(f"target {target} exceeds pool size {store.n_frames}")
    if target < len(working):
        raise ValidationError(f"target {target} below current working-set size {len(working)}")
    m = target - len(working)
    if m == 0:
        return WorkingSet(working.indices, target)

    seen = set(working.indices)
    candidates = np.array([i for i in range(store.n_frames) if i not in seen], dtype=np.intp)
    sims = store.vectors[candidates] @ query.embedding
    if config.stochastic:
        gen = rng if rng is not None else np.random.default_rng(config.rng_seed)
        added = _sample_without_replacement(
            [int(c) for c in candidates], sims, m, config.softmax_temperature, gen
        )
    else:
        added = _top_m_indices(candidates, sims, m)
    return WorkingSet.of(set(working.indices) | set(added), target)


def shrink_mmr_greedy(
    store: EmbeddingStore,
    working: WorkingSet,
    query: SearchState,
    target: int,
    mmr_lambda: float = 0.5,
) -> WorkingSet:
    """Prune the working set to ``target`` frames by greedy MMR.

    First picks the relevance argmax, then repeatedly adds the frame
    maximizing ``lambda * sim(i, s) - (1 - lambda) * max_{j in selected}
    sim(i, j)``.  Result is temporally ordered and has size exactly
    ``target``.
    """
    working.check_bounds(store)
    if not 0.0 <= mmr_lambda <= 1.0:
        raise ValidationError("mmr_lambda must be in [0, 1]")
    if target == 0:
        raise ValidationError("shrink target must be >= 1")
    if target > len(working):
        raise ValidationError(f"target {target} exceeds working-set size {len(working)}")
    if target == len(working):
        return WorkingSet(working.indices, target)

    members = list(working.indices)
    vecs = store.vectors[np.array(members, dtype=np.intp)]
    rel = vecs @ query.embedding
    pairwise = vecs @ vecs.T

    # local positions into `members`; ties resolved toward the lower frame index,
    # which is the lower local position because members are sorted
    selected = [int(np.argmax(rel))]
    remaining = [p for p in range(len(members)) if p != selected[0]]
    while len(selected) < target:
        red = pairwise[np.ix_(remaining, selected)].max(axis=1)
        score = mmr_lambda * rel[remaining] - (1.0 - mmr_lambda) * red
        j = int(np.argmax(score))
        selected.append(remaining.pop(j))
    return WorkingSet.of((members[p] for p in selected), target)


def mmr_objective(
    store: EmbeddingStore,
    subset: Iterable[int],
    query: SearchState,
    mmr_lambda: float = 0.5,
) -> float:
    """MMR set objective: relevance minus within-set redundancy.

    ``sum_i [lambda * sim(i, s) - (1 - lambda) * max_{j != i} sim(i, j)]``;
    for a singleton the inner max over the empty set is 0, so the value
    reduces to pure relevance.
    """
    members = sorted(set(int(i) for i in subset))
    if not members:
        raise ValidationError("subset must be non-empty")
    idx = np.array(members, dtype=np.intp)
    if idx[0] < 0 or idx[-1] >= store.n_frames:
        raise ValidationError("subset contains out-of-range frame indices")
    vecs = store.vectors[idx]
    rel = vecs @ query.embedding
    total = mmr_lambda * float(rel.sum())
    if len(members) > 1:
        pairwise = vecs @ vecs.T
        np.fill_diagonal(pairwise, -np.inf)
        total -= (1.0 - mmr_lambda) * float(pairwise.max(axis=1).sum())
    return total


def mmr_brute_force(
    store: EmbeddingStore,
    pool: Iterable[int],
    query: SearchState,
    target: int,
    mmr_lambda: float = 0.5,
    budget: int = 10**6,
) -> tuple[int, ...]:
    """Exhaustive MMR maximizer over all ``target``-sized subsets.

    Test oracle, not a production path.  Ties resolve to the
    lexicographically smallest index tuple (combinations are generated
    in lexicographic order and only strict improvements replace the
    incumbent).
    """
    members = sorted(set(int(i) for i in pool))
    if not 1 <= target <= len(members):
        raise ValidationError(f"target {target} invalid for pool of {len(members)}")
    n_subsets = math.comb(len(members), target)
    if n_subsets > budget:
        raise ValidationError(f"{n_subsets} candidate subsets exceed budget {budget}")
    best: tuple[int, ...] | None = None
    best_val = -np.inf
    for subset in itertools.combinations(members, target):
        val = mmr_objective(store, subset, query, mmr_lambda)
        if val > best_val:
            best, best_val = subset, val
    assert best is not None
    return best
