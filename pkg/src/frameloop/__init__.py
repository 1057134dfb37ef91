"""Evidence-loop toolkit over cached frame embeddings.

Core pieces: a validated binary store of unit-normalized frame
embeddings, similarity/MMR retrieval with a softmax policy, exact
policy-gradient numerics with a planted-environment simulator, a
round-based answer/evaluate/reflect loop over a chat backend, and
progress-scheduled attention gains on a synthetic attention block.
"""

from .attention import AttentionInstance, GainSchedule, alpha_img, alpha_txt, attention_text_mass, modulate_scores
from .errors import (
    FormatError,
    FrameloopError,
    GatewayError,
    ParseError,
    ServiceError,
    TransportError,
    ValidationError,
)
from .gateway import BackendConfig, Gateway, Verdict, hash_embedding, parse_evaluator, parse_reflector, parse_router, render_prompt
from .gradients import GradReport, PolicyGradConfig, RewardBaseline, log_policy_gradient, reinforce_update, sim_gradient, surrogate_gradient, surrogate_value
from .loop import LoopConfig, LoopState, RoundRecord, apply_reflection, build_global_caption, route_question, run_loop, run_round, write_trace
from .retrieval import (
    RetrievalConfig,
    WorkingSet,
    cosine_sim,
    expand_top_m,
    mmr_brute_force,
    mmr_objective,
    policy_distribution,
    shrink_mmr_greedy,
)
from .simulate import PlantedEnv, make_env, reward, run_numeric_loop
from .store import EmbeddingStore, SearchState, file_size, load_store, normalize, save_store

__version__ = "0.1.0"
