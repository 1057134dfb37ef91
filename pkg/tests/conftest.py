from __future__ import annotations

import numpy as np
import pytest

from frameloop.store import EmbeddingStore, SearchState


def random_store(n_frames: int, dim: int, seed: int = 0) -> EmbeddingStore:
    rng = np.random.default_rng(seed)
    vectors = rng.standard_normal((n_frames, dim))
    return EmbeddingStore(vectors, np.arange(n_frames, dtype=np.float64))


def random_query(store: EmbeddingStore, seed: int = 1) -> SearchState:
    rng = np.random.default_rng(seed)
    return SearchState.from_raw("random query", rng.standard_normal(store.dim))


@pytest.fixture
def small_store() -> EmbeddingStore:
    return random_store(8, 4, seed=42)


# Constructed MMR instance with exact similarities: query sims
# [0.9, 0.8, 0.1], pairwise sim(0,1) = 0.95, sim(0,2) = sim(1,2) = 0.
# Realized as actual unit vectors in d=4 via the Cholesky factor of the
# (verified positive-definite) Gram matrix of [query, v0, v1, v2].
_MMR_GRAM = np.array(
    [
        [1.0, 0.9, 0.8, 0.1],
        [0.9, 1.0, 0.95, 0.0],
        [0.8, 0.95, 1.0, 0.0],
        [0.1, 0.0, 0.0, 1.0],
    ]
)


@pytest.fixture
def mmr_instance() -> tuple[EmbeddingStore, SearchState]:
    chol = np.linalg.cholesky(_MMR_GRAM)
    query_vec, v0, v1, v2 = chol
    store = EmbeddingStore([v0, v1, v2], [0.0, 1.0, 2.0])
    return store, SearchState.from_raw("mmr probe", query_vec)
