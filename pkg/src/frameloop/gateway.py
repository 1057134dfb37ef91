"""Backend client for the router/actor/evaluator/reflector roles.

Three layers: byte-stable prompt templates with explicit placeholder
sets, a transport (`call`) speaking the common chat-completions wire
shape with one retry on transport errors, and total parsers that pull
the first balanced JSON object out of an arbitrary reply.  Deterministic
mock backends make the whole loop runnable offline.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
import requests

from .errors import ParseError, ServiceError, TransportError, ValidationError

# ---------------------------------------------------------------------------
# prompt templates

ROUTE_TEMPLATE = """\
Role. Classify a video question as static or dynamic. Output JSON only.
Definitions.
- dynamic: requires temporal reasoning such as counting, repetition, order, or changes over time (e.g., "how many times", "before/after", "first/last").
- static: can be answered from a small set of unordered frames (identity, attribute, location, scene, one-shot action).
Question. {question}
Return. Single-line JSON with fields: qtype ("static" or "dynamic"), rationale (1-2 short phrases; no extra text)."""

SUMMARIZE_TEMPLATE = """\
Role. Summarize chronologically ordered frame notes into a compact global caption. Do not invent facts.
Input. Frame-wise notes (earlier -> later):
{notes}
Write. One global caption (2-4 sentences) that connects multiple frames, focusing on:
(1) moving entities with consistent appearance and actions across time;
(2) static scene objects and their states;
(3) temporal hints only if explicitly evidenced (e.g., "then", "later", "repeatedly").
Style: terse and factual; no bullet lists, storytelling, or frame-by-frame recitation."""

EVALUATE_TEMPLATE = """\
Role. Precise evaluator for video-QA. Return a single-line JSON only (no Markdown/code).
Keys. score (float 0..1), verdict ("accept" if score >= 0.7 else "reject"), brief_reason (1-2 short bullets).
Example user. {one_shot_user}
Example assistant. {one_shot_assistant}
Your task. Given the current case, output the JSON only.
Question: {question}
Answer: {answer}
Evidence: {evidence}"""

REFLECT_TEMPLATE = """\
Role. Reflector in a video-understanding pipeline. You receive the question, a global caption (from 16 uniformly sampled frames), the last answer (low confidence/rejected), and its evaluation JSON.
Objective. Analyze why the answer likely fails (missing object, wrong span, ambiguity, etc.) and produce a single short declarative retrieval text for the next round of keyframe selection.
Strict rules.
(1) Output JSON only with key refined_query.
(2) refined_query is at most 25 tokens, declarative statement (not a question), capturing disambiguating cues (entities, attributes, actions, temporal hints, viewpoint).
(3) If confidence is already good (score >= 0.7 or verdict="accept"), return an empty string.
(4) Prefer concrete visual cues (colors, clothing, object names, motion phase, timestamps, left/right, first/last).
(5) No speculation or unseen entities.
Inputs.
Question: {question}
Global caption: {global_caption}
Last answer: {last_answer}
Evaluation JSON: {eval_json}
Return. {"refined_query": "..."}"""

FRAME_NOTE_TEMPLATE = """\
Role. Assist video understanding via per-frame analysis. Describe the main objects and actions in this single frame concisely.
Focus.
(1) Living entities: distinct entities (appearance, clothing, color, species), likely roles, and what each is doing (verb phrases).
(2) Static objects & scene: salient items and states (color, shape, on/off, open/closed, broken/intact), plus scene context (indoor/outdoor, location hints).
Style. Specific but brief; no speculation; 2-4 short sentences.
Frame. {frame_ref}"""

GLOBAL_ANSWER_TEMPLATE = """\
Role. Answer concisely using only the question and the global video caption.
Inputs.
Question: {question}
Global caption (may miss fine details): {global_caption}
Instruction. Produce one short answer (1-2 sentences). If information is insufficient, reply: "Not enough evidence from global caption." """

# engine-composed prompt for answering from selected evidence; not part of
# the six template kinds but kept byte-stable for mock dispatch
ACTOR_TEMPLATE = """\
Role. Answer a video question from ordered keyframe evidence and the global caption.
Inputs.
Question: {question}
Current search focus: {search_text}
Global caption: {global_caption}
Keyframes (chronological): {frames}
Instruction. Reason over the keyframes in temporal order and produce one short answer (1-2 sentences), grounded only in the listed frames and the caption."""

PROMPT_TEMPLATES: dict[str, str] = {
    "route": ROUTE_TEMPLATE,
    "summarize": SUMMARIZE_TEMPLATE,
    "evaluate": EVALUATE_TEMPLATE,
    "reflect": REFLECT_TEMPLATE,
    "frame_note": FRAME_NOTE_TEMPLATE,
    "global_answer": GLOBAL_ANSWER_TEMPLATE,
}

PROMPT_PLACEHOLDERS: dict[str, tuple[str, ...]] = {
    "route": ("question",),
    "summarize": ("notes",),
    "evaluate": ("one_shot_user", "one_shot_assistant", "question", "answer", "evidence"),
    "reflect": ("question", "global_caption", "last_answer", "eval_json"),
    "frame_note": ("frame_ref",),
    "global_answer": ("question", "global_caption"),
}

ONE_SHOT_USER = (
    'Question: "what is the man holding?" '
    'Answer: "a red umbrella" '
    "Evidence: frames at 3.0s and 4.5s show a man holding a red umbrella."
)
ONE_SHOT_ASSISTANT = (
    '{"score": 0.9, "verdict": "accept", "brief_reason": "answer names the object; frames support it"}'
)


def render_prompt(kind: str, fields: Mapping[str, str]) -> str:
    """Substitute the declared placeholders of ``kind`` into its template.

    Values are inserted verbatim (literal braces in templates or values
    are never re-interpreted).  A missing placeholder raises a
    ValidationError naming it.
    """
    if kind not in PROMPT_TEMPLATES:
        raise ValidationError(f"unknown prompt kind {kind!r}")
    text = PROMPT_TEMPLATES[kind]
    for name in PROMPT_PLACEHOLDERS[kind]:
        if name not in fields:
            raise ValidationError(f"missing placeholder {name!r} for prompt kind {kind!r}")
        text = text.replace("{" + name + "}", str(fields[name]))
    return text


# ---------------------------------------------------------------------------
# transport

@dataclass
class BackendConfig:
    """Where and how to reach the chat-completion backend."""

    kind: str = "mock"  # "http" | "mock"
    endpoint: str = ""
    model_name: str = ""
    api_key: str = field(default="", repr=False)
    timeout: float = 30.0
    max_retries: int = 1
    sampling_temperature: float = 0.0
    responder: Callable[[str], str] | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in ("http", "mock"):
            raise ValidationError(f"unknown backend kind {self.kind!r}")
        if self.kind == "http" and (not self.endpoint or not self.model_name):
            raise ValidationError("http backend requires endpoint and model_name")
        if self.timeout <= 0:
            raise ValidationError("timeout must be > 0")
        if self.max_retries < 0:
            raise ValidationError("max_retries must be >= 0")


@dataclass
class CallResult:
    text: str
    retries: int = 0


def call(config: BackendConfig, prompt: str) -> CallResult:
    """One chat-completion exchange: a single user message in, assistant text out.

    Transport errors and malformed bodies are retried up to
    ``config.max_retries`` times; an HTTP error status is surfaced
    immediately as a ServiceError.  The API key never appears in raised
    messages.
    """
    if config.kind == "mock":
        if config.responder is None:
            raise ValidationError("mock backend requires a responder")
        return CallResult(text=str(config.responder(prompt)), retries=0)

    payload = {
        "model": config.model_name,
        "messages": [{"role": "user", "content": prompt}],
        "temperature": config.sampling_temperature,
    }
    headers = {"Content-Type": "application/json"}
    if config.api_key:
        headers["Authorization"] = f"Bearer {config.api_key}"

    last_error = "no attempt made"
    for attempt in range(config.max_retries + 1):
        try:
            resp = requests.post(
                config.endpoint, json=payload, headers=headers, timeout=config.timeout
            )
        except requests.RequestException as exc:
            last_error = type(exc).__name__
            continue
        if resp.status_code >= 400:
            raise ServiceError(resp.status_code, resp.text[:200])
        try:
            body = resp.json()
            text = body["choices"][0]["message"]["content"]
            if not isinstance(text, str):
                raise TypeError("content is not a string")
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            last_error = f"malformed body ({type(exc).__name__})"
            continue
        return CallResult(text=text, retries=attempt)
    raise TransportError(
        f"backend call failed after {config.max_retries + 1} attempts: {last_error}"
    )


# ---------------------------------------------------------------------------
# parsers

def extract_json_object(text: str) -> dict:
    """First balanced-brace JSON object found in ``text``.

    Tolerates prose around the object (hosted models wrap structured
    output despite instructions).  Raises ParseError when no parsable
    object exists; never raises anything else, for any byte input.
    """
    if not isinstance(text, str):
        raise ParseError("reply is not text")
    start = text.find("{")
    while start != -1:
        depth = 0
        in_string = False
        escaped = False
        for pos in range(start, len(text)):
            ch = text[pos]
            if in_string:
                if escaped:
                    escaped = False
                elif ch == "\\":
                    escaped = True
                elif ch == '"':
                    in_string = False
            elif ch == '"':
                in_string = True
            elif ch == "{":
                depth += 1
            elif ch == "}":
                depth -= 1
                if depth == 0:
                    candidate = text[start : pos + 1]
                    try:
                        obj = json.loads(candidate)
                    except json.JSONDecodeError:
                        break
                    if isinstance(obj, dict):
                        return obj
                    break
        start = text.find("{", start + 1)
    raise ParseError("no balanced JSON object in reply")


@dataclass(frozen=True)
class Verdict:
    """Evaluator output: confidence score, accept/reject, short reason."""

    score: float
    verdict: str
    brief_reason: str = ""

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValidationError(f"score must lie in [0, 1], got {self.score!r}")
        if self.verdict not in ("accept", "reject"):
            raise ValidationError(f"verdict must be accept or reject, got {self.verdict!r}")

    @property
    def accepted(self) -> bool:
        return self.verdict == "accept"


def parse_evaluator(reply: str) -> Verdict:
    """Extract and validate the evaluator's verdict object."""
    obj = extract_json_object(reply)
    score = obj.get("score")
    if isinstance(score, bool) or not isinstance(score, (int, float)):
        raise ParseError(f"evaluator score missing or non-numeric: {score!r}")
    if not 0.0 <= float(score) <= 1.0:
        raise ParseError(f"evaluator score {score!r} outside [0, 1]")
    verdict = obj.get("verdict")
    if verdict not in ("accept", "reject"):
        raise ParseError(f"evaluator verdict missing or invalid: {verdict!r}")
    reason = obj.get("brief_reason", "")
    if isinstance(reason, (list, tuple)):
        reason = "; ".join(str(r) for r in reason)
    return Verdict(score=float(score), verdict=verdict, brief_reason=str(reason))


def parse_reflector(reply: str) -> str:
    """Extract the refined query; an empty string means keep the current one."""
    obj = extract_json_object(reply)
    if "refined_query" not in obj:
        raise ParseError("reflector reply lacks refined_query")
    refined = obj["refined_query"]
    if not isinstance(refined, str):
        raise ParseError(f"refined_query must be a string, got {type(refined).__name__}")
    return refined


def parse_router(reply: str) -> str:
    """Extract the question-type classification: static or dynamic."""
    obj = extract_json_object(reply)
    qtype = obj.get("qtype")
    if qtype not in ("static", "dynamic"):
        raise ParseError(f"router qtype missing or invalid: {qtype!r}")
    return qtype


# ---------------------------------------------------------------------------
# text embedding fallback

def hash_embedding(text: str, dim: int) -> np.ndarray:
    """Deterministic unit vector derived from the text's digest.

    Stand-in query embedder for mock runs and offline tests; it carries
    no semantics, only reproducibility.
    """
    if dim < 1:
        raise ValidationError("embedding dim must be >= 1")
    seed = int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "little")
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(dim)
    norm = np.linalg.norm(v)
    if norm == 0.0:  # astronomically unlikely; keep the contract total
        v[0] = 1.0
        norm = 1.0
    return v / norm


# ---------------------------------------------------------------------------
# role-level client

class Gateway:
    """Role-level client: renders templates, calls the backend, parses replies.

    ``embedder`` maps (text, dim) to a query embedding; mock runs default
    to the deterministic hash embedder.
    """

    def __init__(
        self,
        config: BackendConfig,
        embedder: Callable[[str, int], np.ndarray] | None = None,
    ):
        self.config = config
        self.embedder = embedder if embedder is not None else hash_embedding
        self.last_retries = 0

    def call_raw(self, prompt: str) -> str:
        result = call(self.config, prompt)
        self.last_retries = result.retries
        return result.text

    def route(self, question: str) -> str:
        """Classify the question; raises GatewayError on any failure."""
        reply = self.call_raw(render_prompt("route", {"question": question}))
        return parse_router(reply)

    def frame_note(self, frame_ref: str) -> str:
        return self.call_raw(render_prompt("frame_note", {"frame_ref": frame_ref}))

    def summarize(self, notes: Sequence[str]) -> str:
        rendered = "\n".join(f"- {note}" for note in notes)
        return self.call_raw(render_prompt("summarize", {"notes": rendered}))

    def actor_answer(
        self, question: str, search_text: str, global_caption: str, frame_refs: Sequence[str]
    ) -> str:
        prompt = ACTOR_TEMPLATE
        for name, value in (
            ("question", question),
            ("search_text", search_text),
            ("global_caption", global_caption),
            ("frames", "; ".join(frame_refs)),
        ):
            prompt = prompt.replace("{" + name + "}", value)
        return self.call_raw(prompt)

    def evaluate(self, question: str, answer: str, evidence: str) -> Verdict:
        """Score an answer; one retry, then degrade to reject with score 0."""
        prompt = render_prompt(
            "evaluate",
            {
                "one_shot_user": ONE_SHOT_USER,
                "one_shot_assistant": ONE_SHOT_ASSISTANT,
                "question": question,
                "answer": answer,
                "evidence": evidence,
            },
        )
        for attempt in range(2):
            try:
                return parse_evaluator(self.call_raw(prompt))
            except (ParseError, TransportError, ServiceError):
                if attempt == 1:
                    return Verdict(score=0.0, verdict="reject", brief_reason="evaluator unavailable")
        raise AssertionError("unreachable")

    def reflect(self, question: str, global_caption: str, last_answer: str, eval_json: str) -> str:
        prompt = render_prompt(
            "reflect",
            {
                "question": question,
                "global_caption": global_caption,
                "last_answer": last_answer,
                "eval_json": eval_json,
            },
        )
        return parse_reflector(self.call_raw(prompt))

    def global_answer(self, question: str, global_caption: str) -> str:
        return self.call_raw(
            render_prompt("global_answer", {"question": question, "global_caption": global_caption})
        )

    def embed_text(self, text: str, dim: int) -> np.ndarray:
        emb = np.asarray(self.embedder(text, dim), dtype=np.float64)
        norm = np.linalg.norm(emb)
        if norm <= 1e-12:
            raise ValidationError("embedder returned a near-zero vector")
        return emb / norm


# ---------------------------------------------------------------------------
# mocks

_ROLE_HEADERS = {
    "route": "Role. Classify a video question",
    "summarize": "Role. Summarize chronologically ordered frame notes",
    "evaluate": "Role. Precise evaluator for video-QA",
    "reflect": "Role. Reflector in a video-understanding pipeline",
    "frame_note": "Role. Assist video understanding via per-frame analysis",
    "global_answer": "Role. Answer concisely using only the question",
    "actor": "Role. Answer a video question from ordered keyframe evidence",
}


def kind_of_prompt(prompt: str) -> str:
    """Which template a rendered prompt came from, by its role header."""
    for kind, header in _ROLE_HEADERS.items():
        if prompt.startswith(header):
            return kind
    return "unknown"


DYNAMIC_CUES = (
    "how many", "how often", "how long", "count", "times", "before", "after",
    "first", "last", "order", "sequence", "repeat", "change", "begin", "start",
    "end", "finish", "earlier", "later", "then",
)


def keyword_route(question: str) -> str:
    """Keyword fallback router: temporal/counting cues mean dynamic."""
    lowered = question.lower()
    return "dynamic" if any(cue in lowered for cue in DYNAMIC_CUES) else "static"


class ScriptedMock:
    """Deterministic responder dispatching on the rendered prompt's kind.

    ``handlers`` maps a prompt kind to a fixed reply or a callable on the
    prompt; unhandled kinds fall through to plausible defaults, so a test
    only scripts the roles it cares about.
    """

    def __init__(self, handlers: Mapping[str, str | Callable[[str], str]] | None = None,
                 evaluator_score: float = 0.8):
        self.handlers = dict(handlers or {})
        self.evaluator_score = evaluator_score
        self.prompts: list[str] = []

    def __call__(self, prompt: str) -> str:
        self.prompts.append(prompt)
        kind = kind_of_prompt(prompt)
        handler = self.handlers.get(kind)
        if handler is not None:
            return handler(prompt) if callable(handler) else handler
        return self._default(kind, prompt)

    def _default(self, kind: str, prompt: str) -> str:
        if kind == "route":
            question = _field_after(prompt, "Question. ")
            return json.dumps({"qtype": keyword_route(question), "rationale": "keyword cues"})
        if kind == "frame_note":
            ref = _field_after(prompt, "Frame. ")
            return f"One subject visible ({ref}); scene steady."
        if kind == "summarize":
            n = sum(1 for line in prompt.splitlines() if line.startswith("- "))
            return f"A single scene unfolds across {n} noted frames with one main subject acting throughout."
        if kind == "actor":
            frames = _field_after(prompt, "Keyframes (chronological): ")
            n = len([f for f in frames.split("; ") if f])
            return f"Answer grounded in {n} keyframes."
        if kind == "evaluate":
            score = self.evaluator_score
            verdict = "accept" if score >= 0.7 else "reject"
            return json.dumps({"score": score, "verdict": verdict, "brief_reason": "scripted"})
        if kind == "reflect":
            return json.dumps({"refined_query": "main subject mid-action, centered, clearly lit"})
        if kind == "global_answer":
            return "Fallback answer derived from the global caption."
        return "OK"


def _field_after(prompt: str, prefix: str) -> str:
    for line in prompt.splitlines():
        if line.startswith(prefix):
            return line[len(prefix):]
    return ""


def mock_config(responder: Callable[[str], str] | None = None, evaluator_score: float = 0.8) -> BackendConfig:
    """BackendConfig wired to a ScriptedMock (or a custom responder)."""
    return BackendConfig(
        kind="mock",
        responder=responder if responder is not None else ScriptedMock(evaluator_score=evaluator_score),
    )
