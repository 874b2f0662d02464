"""Decision agents, prompt construction and response parsing."""

from __future__ import annotations

from .base import Agent, Decision, decide_with_retry
from .llm import LlmAgent
from .parsing import parse_decision
from .policies import HUMAN_POLICIES, PolicyEntry, load_policy_file
from .prompts import (
    COT_CLAUSE,
    OUTPUT_DIRECTIVE,
    MissingHistoryError,
    PromptBundle,
    build_prompt,
    find_banned_cues,
    template_hash,
)
from .scripted import (
    LLM_LIKE_FAILURE,
    FailureCurve,
    FixedTextAgent,
    NoisyCategoricalAgent,
    RationalAgent,
    ReplayAgent,
    rational_decision,
)

__all__ = [name for name in dir() if not name.startswith("_")]
