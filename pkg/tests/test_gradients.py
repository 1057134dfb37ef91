from __future__ import annotations

import numpy as np
import pytest

from frameloop.errors import ValidationError
from frameloop.gradients import (
    GradReport,
    PolicyGradConfig,
    RewardBaseline,
    grad_report,
    log_policy_gradient,
    reinforce_update,
    sim_gradient,
    surrogate_gradient,
    surrogate_value,
)
from frameloop.retrieval import WorkingSet, softmax
from frameloop.store import EmbeddingStore, SearchState

from .conftest import random_store

FD_STEP = 1e-6
FD_REL_TOL = 1e-5


def central_difference(f, s: np.ndarray, step: float = FD_STEP) -> np.ndarray:
    """Independent numeric oracle: central finite differences, coordinate-wise."""
    grad = np.zeros_like(s)
    for j in range(s.shape[0]):
        plus = s.copy()
        plus[j] += step
        minus = s.copy()
        minus[j] -= step
        grad[j] = (f(plus) - f(minus)) / (2.0 * step)
    return grad


def rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = max(np.linalg.norm(numeric), 1e-12)
    return float(np.linalg.norm(analytic - numeric) / denom)


def cosine_to(store: EmbeddingStore, frame: int):
    def f(s):
        return float(store.vector(frame) @ (s / np.linalg.norm(s)))

    return f


class TestSimGradient:
    def test_zero_at_alignment(self):
        store = EmbeddingStore([[1.0, 0.0]], [0.0])
        g = sim_gradient(store, 0, np.array([1.0, 0.0]))
        assert np.allclose(g, 0.0, atol=1e-12)

    def test_orthogonal_closed_form(self):
        store = EmbeddingStore([[0.0, 1.0]], [0.0])
        g = sim_gradient(store, 0, np.array([1.0, 0.0]))
        assert np.allclose(g, [0.0, 1.0], atol=1e-12)

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(0)
        store = random_store(5, 8, seed=3)
        for _ in range(25):
            s = rng.standard_normal(8) * rng.uniform(0.5, 3.0)
            frame = int(rng.integers(5))
            analytic = sim_gradient(store, frame, s)
            numeric = central_difference(cosine_to(store, frame), s)
            assert rel_error(analytic, numeric) < FD_REL_TOL

    def test_zero_vector_rejected(self):
        store = random_store(2, 3)
        with pytest.raises(ValidationError):
            sim_gradient(store, 0, np.zeros(3))


class TestLogPolicyGradient:
    def test_single_frame_pool_is_zero(self):
        store = random_store(4, 5, seed=1)
        g = log_policy_gradient(store, [2], np.array([1.0, 0, 0, 0, 0.5]), 2, temperature=0.7)
        assert np.allclose(g, 0.0, atol=1e-12)

    def test_two_symmetric_frames(self):
        store = EmbeddingStore([[1.0, 0.0], [0.0, 1.0]], [0.0, 1.0], normalized=True)
        s = np.array([1.0, 1.0]) / np.sqrt(2.0)
        g0 = log_policy_gradient(store, [0, 1], s, 0, temperature=1.0)
        g1 = log_policy_gradient(store, [0, 1], s, 1, temperature=1.0)
        assert np.linalg.norm(g0) == pytest.approx(np.linalg.norm(g1), rel=1e-12)
        assert np.allclose(g0, -g1, atol=1e-12)

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(7)
        store = random_store(6, 8, seed=9)
        pool = [0, 1, 3, 4, 5]
        tau = 0.6

        def log_prob(frame):
            def f(s):
                sims = store.vectors[pool] @ (s / np.linalg.norm(s))
                probs = softmax(sims, tau)
                return float(np.log(probs[pool.index(frame)]))

            return f

        for _ in range(20):
            s = rng.standard_normal(8) * rng.uniform(0.5, 2.0)
            frame = int(rng.choice(pool))
            analytic = log_policy_gradient(store, pool, s, frame, tau)
            numeric = central_difference(log_prob(frame), s)
            assert rel_error(analytic, numeric) < FD_REL_TOL

    def test_score_function_identity(self):
        # policy-weighted gradients must cancel exactly
        for seed in range(30):
            store = random_store(8, 6, seed=seed)
            rng = np.random.default_rng(seed + 50)
            s = rng.standard_normal(6)
            pool = list(range(8))
            sims = store.vectors @ (s / np.linalg.norm(s))
            probs = softmax(sims, 0.5)
            total = sum(
                probs[i] * log_policy_gradient(store, pool, s, i, 0.5) for i in pool
            )
            assert np.linalg.norm(total) < 1e-10

    def test_frame_not_in_pool(self):
        store = random_store(4, 3)
        with pytest.raises(ValidationError):
            log_policy_gradient(store, [0, 1], np.ones(3), 3, 1.0)


class TestSurrogate:
    def test_hand_value(self, mmr_instance):
        store, q = mmr_instance
        # W={0,1}: mean relevance (0.9+0.8)/2, redundancy 0.5 * 0.95
        val = surrogate_value(store, WorkingSet.of([0, 1]), q.embedding, gamma=0.5)
        assert val == pytest.approx(0.375, abs=1e-6)

    def test_duplicate_directions_redundancy_one(self):
        store = EmbeddingStore([[1.0, 0.0], [1.0, 1e-7]], [0.0, 1.0])
        s = np.array([0.0, 1.0])
        val = surrogate_value(store, WorkingSet.of([0, 1]), s, gamma=0.5)
        # two (near-)identical unit vectors: redundancy term is gamma * 1
        rel = float((store.vectors[0] + store.vectors[1]) @ s / 2)
        assert val == pytest.approx(rel - 0.5, abs=1e-7)

    def test_singleton_is_pure_relevance(self):
        store = random_store(3, 4, seed=2)
        s = np.array([1.0, 2.0, -0.5, 0.3])
        val = surrogate_value(store, WorkingSet.of([1]), s, gamma=0.9)
        assert val == pytest.approx(float(store.vectors[1] @ (s / np.linalg.norm(s))))

    def test_gradient_ignores_gamma(self):
        store = random_store(5, 6, seed=4)
        s = np.arange(1.0, 7.0)
        ws = WorkingSet.of([0, 2, 4])
        g1 = surrogate_gradient(store, ws, s, gamma=0.0)
        g2 = surrogate_gradient(store, ws, s, gamma=5.0)
        assert np.array_equal(g1, g2)

    def test_singleton_gradient_equals_sim_gradient(self):
        store = random_store(4, 5, seed=6)
        s = np.array([0.5, -1.0, 2.0, 0.1, 0.7])
        assert np.allclose(
            surrogate_gradient(store, WorkingSet.of([2]), s), sim_gradient(store, 2, s)
        )

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(11)
        store = random_store(7, 8, seed=13)
        ws = WorkingSet.of([0, 2, 5, 6])

        def value(s):
            return surrogate_value(store, ws, s, gamma=0.5)

        for _ in range(20):
            s = rng.standard_normal(8) * rng.uniform(0.5, 2.0)
            analytic = surrogate_gradient(store, ws, s, gamma=0.5)
            numeric = central_difference(value, s)
            assert rel_error(analytic, numeric) < FD_REL_TOL

    def test_empty_set_rejected(self):
        store = random_store(3, 3)
        with pytest.raises(ValidationError):
            surrogate_value(store, WorkingSet(), np.ones(3))


class TestReinforceUpdate:
    def test_zero_advantage_keeps_s(self):
        store = random_store(6, 4, seed=1)
        s = np.array([1.0, 0.5, -0.5, 2.0])
        out = reinforce_update(store, s, [0, 3], reward=0.6, baseline=0.6)
        assert np.array_equal(out, s)

    def test_zero_step_size_keeps_s(self):
        store = random_store(6, 4, seed=1)
        s = np.array([1.0, 0.5, -0.5, 2.0])
        cfg = PolicyGradConfig(step_size=0.0)
        out = reinforce_update(store, s, [0, 3], reward=1.0, config=cfg)
        assert np.array_equal(out, s)

    def test_step_scales_linearly_with_eta(self):
        store = random_store(8, 5, seed=2)
        s = np.ones(5)
        full = reinforce_update(store, s, [1, 4, 6], 1.0, PolicyGradConfig(step_size=0.4))
        half = reinforce_update(store, s, [1, 4, 6], 1.0, PolicyGradConfig(step_size=0.2))
        assert np.linalg.norm(half - s) == pytest.approx(0.5 * np.linalg.norm(full - s))

    def test_without_replacement_renormalization(self):
        # two draws: second step's expectation excludes the first frame
        store = random_store(3, 4, seed=5)
        s = np.array([0.3, -0.2, 1.0, 0.4])
        tau = 0.8
        cfg = PolicyGradConfig(step_size=1.0, temperature=tau)
        out = reinforce_update(store, s, [1, 2], reward=1.0, config=cfg, baseline=0.0)
        expected = (
            s
            + log_policy_gradient(store, [0, 1, 2], s, 1, tau)
            + log_policy_gradient(store, [0, 2], s, 2, tau)
        )
        assert np.allclose(out, expected, atol=1e-12)

    def test_empty_sample_rejected(self):
        store = random_store(3, 3)
        with pytest.raises(ValidationError):
            reinforce_update(store, np.ones(3), [], 1.0)


class TestBaseline:
    def test_zero_mode(self):
        b = RewardBaseline("zero")
        b.observe(0.7)
        assert b.value == 0.0

    def test_running_mean(self):
        b = RewardBaseline("running_mean")
        assert b.value == 0.0
        b.observe(0.4)
        b.observe(0.8)
        assert b.value == pytest.approx(0.6)


class TestGradReport:
    def test_shapes_and_identity(self):
        store = random_store(9, 6, seed=21)
        s = np.random.default_rng(3).standard_normal(6)
        pool = list(range(9))
        report = grad_report(
            store, pool, s, PolicyGradConfig(temperature=0.5),
            working=WorkingSet.of([1, 2]), reward=0.8, baseline=0.3,
        )
        assert isinstance(report, GradReport)
        assert len(report.per_frame_gradients) == len(pool)
        assert len(report.log_policy_gradients) == len(pool)
        assert report.advantage == pytest.approx(0.5)
        sims = store.vectors @ (s / np.linalg.norm(s))
        probs = softmax(sims, 0.5)
        weighted = sum(p * g for p, g in zip(probs, report.log_policy_gradients))
        assert np.linalg.norm(weighted) < 1e-10


@pytest.mark.parametrize("dim", [2, 8, 16])
def test_all_gradients_match_fd_across_seeds(dim):
    """100 seeds x d in {2, 8, 16}: every analytic gradient beats 1e-5."""
    tau = 0.7
    for seed in range(100):
        rng = np.random.default_rng(seed)
        store = random_store(5, dim, seed=seed + 10_000)
        s = rng.standard_normal(dim) * rng.uniform(0.5, 2.0)
        frame = int(rng.integers(5))
        pool = list(range(5))
        ws = WorkingSet.of(sorted(rng.choice(5, size=3, replace=False).tolist()))

        assert rel_error(
            sim_gradient(store, frame, s), central_difference(cosine_to(store, frame), s)
        ) < FD_REL_TOL

        def log_prob(s_):
            sims = store.vectors @ (s_ / np.linalg.norm(s_))
            return float(np.log(softmax(sims, tau)[frame]))

        assert rel_error(
            log_policy_gradient(store, pool, s, frame, tau), central_difference(log_prob, s)
        ) < FD_REL_TOL

        def surr(s_):
            return surrogate_value(store, ws, s_, gamma=0.5)

        assert rel_error(
            surrogate_gradient(store, ws, s, gamma=0.5), central_difference(surr, s)
        ) < FD_REL_TOL
