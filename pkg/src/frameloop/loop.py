"""Round-based evidence loop: reconfigure, answer, evaluate, reflect.

One question runs at most ``max_rounds`` rounds.  Static questions grow
the working set along an increasing keyframe schedule; dynamic questions
start from the whole pool and prune it with greedy MMR.  The evaluator's
score stops the loop early; otherwise the reflector rewrites the search
text and the next round re-ranks frames against it.  When every round is
rejected, the answer falls back to the global caption alone.

Frame embeddings are fetched from the store exactly once per question
(`materialize`); every later similarity computation hits that local copy.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .errors import FrameloopError, GatewayError, ValidationError
from .gateway import Gateway, Verdict, keyword_route
from .gradients import RewardBaseline
from .retrieval import RetrievalConfig, WorkingSet, expand_top_m, shrink_mmr_greedy
from .store import EmbeddingStore, SearchState

#: reflector's token budget; longer refined queries are applied with a warning
REFINED_QUERY_TOKEN_LIMIT = 25


@dataclass(frozen=True)
class LoopConfig:
    max_rounds: int = 3
    stop_threshold: float = 0.7
    retrieval: RetrievalConfig = field(default_factory=RetrievalConfig)
    seed_frames_for_caption: int = 16

    def __post_init__(self):
        if self.max_rounds < 1:
            raise ValidationError("max_rounds must be >= 1")
        if not 0.0 <= self.stop_threshold <= 1.0:
            raise ValidationError("stop_threshold must lie in [0, 1]")
        if self.seed_frames_for_caption < 1:
            raise ValidationError("seed_frames_for_caption must be >= 1")
        if len(self.retrieval.static_schedule) > self.max_rounds:
            raise ValidationError("static_schedule longer than max_rounds")
        if len(self.retrieval.dynamic_schedule) > self.max_rounds:
            raise ValidationError("dynamic_schedule longer than max_rounds")


@dataclass(frozen=True)
class LoopState:
    """State between rounds: search text, working set, fixed caption, counters.

    ``question`` is the immutable user question; ``search`` starts as the
    question verbatim and is rewritten by the reflector between rounds.
    """

    search: SearchState
    working: WorkingSet
    global_caption: str
    round: int  # rounds completed so far
    mode: str  # "static" | "dynamic"
    question: str = ""

    def __post_init__(self):
        if not self.question:
            object.__setattr__(self, "question", self.search.text)


@dataclass
class RoundRecord:
    round: int
    working_indices: tuple[int, ...]
    answer: str
    verdict: Verdict
    advantage: float
    refined_query: str = ""
    warnings: tuple[str, ...] = ()

    def to_trace_dict(self) -> dict:
        """Serialized form; field names are the trace-file contract."""
        return {
            "round": self.round,
            "working_indices": list(self.working_indices),
            "answer": self.answer,
            "score": self.verdict.score,
            "verdict": self.verdict.verdict,
            "brief_reason": self.verdict.brief_reason,
            "refined_query": self.refined_query,
            "warnings": list(self.warnings),
        }


class LoopError(FrameloopError):
    """Unrecoverable failure mid-loop; carries the rounds completed so far."""

    def __init__(self, message: str, trace: list[RoundRecord]):
        super().__init__(message)
        self.trace = trace


def materialize(store) -> EmbeddingStore:
    """Fetch every frame embedding exactly once into a local pool copy.

    Accepts anything with ``n_frames`` / ``vector(i)`` / ``timestamp(i)``,
    which lets tests count per-frame provider consultations.
    """
    rows = np.array([store.vector(i) for i in range(store.n_frames)], dtype=np.float64)
    stamps = [store.timestamp(i) for i in range(store.n_frames)]
    return EmbeddingStore(rows, stamps, normalized=True)


def seed_indices(n_frames: int, seeds: int) -> list[int]:
    """Uniformly spaced caption seed frames: floor(i * N / seeds), deduplicated."""
    if seeds < 1:
        raise ValidationError("seeds must be >= 1")
    return sorted(set(i * n_frames // seeds for i in range(seeds)))


def frame_ref(store: EmbeddingStore, index: int) -> str:
    return f"frame {index} @ {store.timestamp(index):.2f}s"


def route_question(question: str, gateway: Gateway) -> str:
    """Ask the backend to classify the question; fall back to keyword cues."""
    if not question.strip():
        raise ValidationError("question must be non-empty")
    try:
        return gateway.route(question)
    except GatewayError:
        return keyword_route(question)


def build_global_caption(store: EmbeddingStore, gateway: Gateway, config: LoopConfig) -> str:
    """Per-frame notes on uniformly spaced seeds, summarized once."""
    idx = seed_indices(store.n_frames, config.seed_frames_for_caption)
    notes = [gateway.frame_note(frame_ref(store, i)) for i in idx]
    return gateway.summarize(notes)


def verdict_accepts(verdict: Verdict, config: LoopConfig) -> bool:
    """Stop rule: score at threshold, or an explicit accept verdict."""
    return verdict.score >= config.stop_threshold or verdict.accepted


def query_length_warning(refined: str) -> str | None:
    n = len(refined.split())
    if n > REFINED_QUERY_TOKEN_LIMIT:
        return f"refined query has {n} tokens (limit {REFINED_QUERY_TOKEN_LIMIT}); applied anyway"
    return None


def apply_reflection(
    state: LoopState, refined_query: str, embed: Callable[[str], np.ndarray]
) -> LoopState:
    """Adopt a non-empty refined query as the new search text; empty keeps it."""
    if not refined_query:
        return state
    return replace(state, search=SearchState.from_raw(refined_query, embed(refined_query)))


def _round_target(mode: str, round_number: int, config: LoopConfig, n_frames: int) -> int:
    sched = (
        config.retrieval.static_schedule if mode == "static" else config.retrieval.dynamic_schedule
    )
    target = sched[min(round_number, len(sched)) - 1]
    return min(target, n_frames)


def _reconfigure(
    state: LoopState, store: EmbeddingStore, config: LoopConfig, round_number: int
) -> WorkingSet:
    target = _round_target(state.mode, round_number, config, store.n_frames)
    if target >= len(state.working):
        return expand_top_m(store, state.working, state.search, target, config.retrieval)
    return shrink_mmr_greedy(
        store, state.working, state.search, target, config.retrieval.mmr_lambda
    )


def run_round(
    state: LoopState,
    store: EmbeddingStore,
    gateway: Gateway,
    config: LoopConfig,
    baseline: RewardBaseline | None = None,
) -> tuple[RoundRecord, LoopState]:
    """Execute one round: reconfigure, act, evaluate, reflect on rejection."""
    if state.round >= config.max_rounds:
        raise ValidationError(f"loop already ran {state.round} of {config.max_rounds} rounds")
    round_number = state.round + 1
    working = _reconfigure(state, store, config, round_number)
    refs = [frame_ref(store, i) for i in working.indices]

    answer = gateway.actor_answer(
        question=state.question,
        search_text=state.search.text,
        global_caption=state.global_caption,
        frame_refs=refs,
    )
    evidence = f"{len(refs)} keyframes ({'; '.join(refs)}); global caption: {state.global_caption}"
    verdict = gateway.evaluate(state.question, answer, evidence)

    if baseline is None:
        baseline = RewardBaseline("zero")
    advantage = verdict.score - baseline.value
    baseline.observe(verdict.score)

    warnings: list[str] = []
    refined = ""
    next_state = replace(state, working=working, round=round_number)
    if not verdict_accepts(verdict, config):
        try:
            refined = gateway.reflect(
                question=state.question,
                global_caption=state.global_caption,
                last_answer=answer,
                eval_json=json.dumps(
                    {"score": verdict.score, "verdict": verdict.verdict,
                     "brief_reason": verdict.brief_reason}
                ),
            )
        except GatewayError:
            refined = ""
            warnings.append("reflector unavailable or unparseable; keeping current query")
        if refined:
            warning = query_length_warning(refined)
            if warning:
                warnings.append(warning)
            next_state = apply_reflection(
                next_state, refined, lambda text: gateway.embed_text(text, store.dim)
            )

    record = RoundRecord(
        round=round_number,
        working_indices=working.indices,
        answer=answer,
        verdict=verdict,
        advantage=advantage,
        refined_query=refined,
        warnings=tuple(warnings),
    )
    return record, next_state


def run_loop(
    question: str,
    store,
    gateway: Gateway,
    config: LoopConfig = LoopConfig(),
) -> tuple[str, list[RoundRecord]]:
    """Full question loop; returns the answer and one record per executed round."""
    if not question.strip():
        raise ValidationError("question must be non-empty")
    pool = materialize(store)
    trace: list[RoundRecord] = []
    try:
        mode = route_question(question, gateway)
        caption = build_global_caption(pool, gateway, config)
        state = LoopState(
            search=SearchState(question, gateway.embed_text(question, pool.dim)),
            working=WorkingSet(),
            global_caption=caption,
            round=0,
            mode=mode,
        )
        baseline = RewardBaseline("running_mean")
        for _ in range(config.max_rounds):
            record, state = run_round(state, pool, gateway, config, baseline)
            trace.append(record)
            if verdict_accepts(record.verdict, config):
                return record.answer, trace
        return gateway.global_answer(question, state.global_caption), trace
    except GatewayError as exc:
        raise LoopError(f"backend failure: {exc}", trace) from exc


def write_trace(trace: list[RoundRecord], path) -> None:
    """Write the round records as a JSON array with the contract field names."""
    payload = [record.to_trace_dict() for record in trace]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
