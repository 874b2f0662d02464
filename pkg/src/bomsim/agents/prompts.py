"""Three-part prompt construction from version-pinned plain-text templates.

Templates live in ``templates/<experiment>/`` and are looked up by role and
condition. Each file holds the role preamble, a line containing only ``---``,
and the experiment instructions; ``$name`` placeholders are filled from the
game parameters.
"""

from __future__ import annotations

import dataclasses
import hashlib
import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from string import Template
from typing import Any, Mapping

from ..protocol import Query, format_number

OUTPUT_DIRECTIVE = "Provide with the number and put ### in front of the number. You are limited to 300 words."
COT_CLAUSE = "Explain your reasoning process first."

_TEMPLATE_PKG = "bomsim.agents.templates"


class MissingHistoryError(ValueError):
    """A round after the first was asked for without the history it needs."""


class TemplateNotFoundError(LookupError):
    pass


@dataclass(frozen=True)
class PromptBundle:
    role_preamble: str
    instructions: str
    history_block: str
    observation: str
    question: str
    cot_enabled: bool = False
    output_directive: str = OUTPUT_DIRECTIVE

    @property
    def closing(self) -> str:
        if self.cot_enabled:
            return f"{COT_CLAUSE} {self.output_directive}"
        return self.output_directive

    def user_text(self) -> str:
        parts = [self.instructions]
        if self.history_block:
            parts.append("History of previous rounds:\n" + self.history_block)
        if self.observation:
            parts.append(self.observation)
        parts.append(f"{self.question} {self.closing}")
        return "\n\n".join(parts)

    def text(self) -> str:
        return f"{self.role_preamble}\n\n{self.user_text()}"

    def messages(self) -> list[dict[str, str]]:
        return [
            {"role": "system", "content": self.role_preamble},
            {"role": "user", "content": self.user_text()},
        ]

    def prompt_hash(self) -> str:
        return hashlib.sha256(self.text().encode("utf-8")).hexdigest()[:16]


@lru_cache(maxsize=None)
def _read_template(experiment_id: str, name: str) -> str | None:
    node = resources.files(_TEMPLATE_PKG).joinpath(experiment_id, name)
    if not node.is_file():
        return None
    return node.read_text(encoding="utf-8")


def template_candidates(role: str, condition: str) -> list[str]:
    return [f"{role}.{condition}.txt", f"{role}.txt", f"default.{condition}.txt", "default.txt"]


def load_template(experiment_id: str, role: str, condition: str) -> tuple[str, str]:
    """(preamble, instructions) source text for the most specific matching file."""
    for name in template_candidates(role, condition):
        raw = _read_template(experiment_id, name)
        if raw is not None:
            head, sep, body = raw.partition("\n---\n")
            if not sep:
                raise ValueError(f"template {experiment_id}/{name} lacks the '---' separator")
            return head.strip(), body.strip()
    raise TemplateNotFoundError(f"no template for {experiment_id} role={role} condition={condition}")


def template_hash(experiment_id: str) -> str:
    """Digest over every template file of one experiment, for citing prompt versions."""
    root = resources.files(_TEMPLATE_PKG).joinpath(experiment_id)
    h = hashlib.sha256()
    for node in sorted(root.iterdir(), key=lambda n: n.name):
        if node.name.endswith(".txt"):
            h.update(node.name.encode())
            h.update(node.read_bytes())
    return h.hexdigest()[:12]


def _template_vars(game_params: Any, n_rounds: int, role: str, condition: str) -> dict[str, str]:
    out: dict[str, str] = {"n_rounds": str(n_rounds), "role": role, "condition": condition}
    if dataclasses.is_dataclass(game_params):
        items = dataclasses.asdict(game_params).items()
    else:
        items = dict(game_params or {}).items()
    extras = getattr(game_params, "template_extras", None)
    if callable(extras):
        items = list(items) + list(extras().items())
    for key, value in items:
        if isinstance(value, bool):
            out[key] = "yes" if value else "no"
        elif isinstance(value, (int, float)):
            out[key] = format_number(value)
        else:
            out[key] = str(value)
    return out


_render_cache: dict[tuple, tuple[str, str]] = {}


def render_instructions(experiment_id: str, game_params: Any, n_rounds: int, role: str, condition: str) -> tuple[str, str]:
    key = (experiment_id, repr(game_params), n_rounds, role, condition)
    hit = _render_cache.get(key)
    if hit is not None:
        return hit
    pre_src, body_src = load_template(experiment_id, role, condition)
    variables = _template_vars(game_params, n_rounds, role, condition)
    rendered = (Template(pre_src).substitute(variables), Template(body_src).substitute(variables))
    _render_cache[key] = rendered
    return rendered


def build_prompt(
    experiment_id: str,
    game_params: Any,
    n_rounds: int,
    query: Query,
    cot_enabled: bool = False,
    session_condition: str | None = None,
) -> PromptBundle:
    """Prompt for one query. Deterministic in its inputs.

    Instructions are chosen by the session condition (for within-subject designs
    the template covers every round condition); the per-round observation text
    comes from the engine.
    """
    if query.requires_history and not query.history:
        raise MissingHistoryError(f"round {query.round_index} of {experiment_id} needs the history of earlier rounds")
    condition = session_condition if session_condition is not None else query.condition
    preamble, instructions = render_instructions(experiment_id, game_params, n_rounds, query.role, condition)
    return PromptBundle(
        role_preamble=preamble,
        instructions=instructions,
        history_block="\n".join(query.history),
        observation=query.observation,
        question=query.question,
        cot_enabled=cot_enabled,
    )


@lru_cache(maxsize=1)
def banned_cues() -> tuple[str, ...]:
    raw = resources.files("bomsim.agents").joinpath("banned_cues.txt").read_text(encoding="utf-8")
    return tuple(line.strip().lower() for line in raw.splitlines() if line.strip() and not line.startswith("#"))


def find_banned_cues(text: str, cues: Mapping[str, Any] | tuple[str, ...] | None = None) -> list[str]:
    """Behavioral-theory terms that must never be shown to a simulated subject."""
    lowered = text.lower()
    return [c for c in (cues or banned_cues()) if re.search(r"\b" + re.escape(c) + r"\b", lowered)]
