"""Ambiguity-type aware clarification generation and its evaluation."""

from .core import (
    ALL_SCENARIOS,
    ALL_SCHEMES,
    AT_DEFINITIONS,
    AmbiguityKind,
    AmbiguityType,
    Clarification,
    ClarificationKind,
    Conversation,
    GenerationOutput,
    PromptScheme,
    Query,
    Scenario,
    Turn,
    UserIntent,
    effective_query,
)
from .llm_backend import CachedBackend, FileStore, HttpChatBackend, SamplingParams, ScriptedBackend
from .offline import OfflineBackend
from .prompting import build_generation_prompt, generate_with_retry, parse_generation_output
from .simulation import SimulationConfig, simulate_conversation, simulate_matrix

__version__ = "0.1.0"

__all__ = [
    "ALL_SCENARIOS",
    "ALL_SCHEMES",
    "AT_DEFINITIONS",
    "AmbiguityKind",
    "AmbiguityType",
    "Clarification",
    "ClarificationKind",
    "Conversation",
    "GenerationOutput",
    "PromptScheme",
    "Query",
    "Scenario",
    "Turn",
    "UserIntent",
    "effective_query",
    "CachedBackend",
    "FileStore",
    "HttpChatBackend",
    "SamplingParams",
    "ScriptedBackend",
    "OfflineBackend",
    "build_generation_prompt",
    "generate_with_retry",
    "parse_generation_output",
    "SimulationConfig",
    "simulate_conversation",
    "simulate_matrix",
]
