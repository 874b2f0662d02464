"""Agent contract and the bounded re-query loop."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Protocol

from ..llm_client import BudgetExhausted, LlmError, ParameterRejected
from ..protocol import Query
from .parsing import parse_decision
from .prompts import PromptBundle

log = logging.getLogger(__name__)

MAX_ATTEMPTS = 3


class Agent(Protocol):
    kind: str

    def respond(self, prompt: PromptBundle, query: Query, attempt: int) -> str:
        """Raw response text for one attempt (attempt counts from 1)."""
        ...


@dataclass
class Decision:
    value: float | None
    attempts_used: int
    responses: list[str | None] = field(default_factory=list)
    errors: list[str] = field(default_factory=list)

    @property
    def exhausted(self) -> bool:
        return self.value is None


def validate(query: Query, parsed: float | None) -> float | None:
    if parsed is None:
        return None
    value = query.coerce(parsed)
    return value if query.accepts(value) else None


def decide_with_retry(agent: Agent, prompt: PromptBundle, query: Query, max_attempts: int = MAX_ATTEMPTS) -> Decision:
    """Query ``agent`` with an unchanged prompt until a usable number comes back.

    Unparseable or out-of-range answers and transport failures each use one
    attempt. A refused sampling parameter or an exhausted request budget is not
    an agent failure and propagates to the caller.
    """
    if max_attempts < 1:
        raise ValueError("max_attempts must be >= 1")
    responses: list[str | None] = []
    errors: list[str] = []
    for attempt in range(1, max_attempts + 1):
        try:
            raw = agent.respond(prompt, query, attempt)
        except (ParameterRejected, BudgetExhausted):
            raise
        except LlmError as exc:
            log.debug("attempt %d transport failure: %s", attempt, exc)
            responses.append(None)
            errors.append(f"{type(exc).__name__}: {exc}")
            continue
        responses.append(raw)
        value = validate(query, parse_decision(raw))
        if value is not None:
            return Decision(value, attempt, responses, errors)
        errors.append("unparseable" if parse_decision(raw) is None else "out of range")
    return Decision(None, max_attempts, responses, errors)
