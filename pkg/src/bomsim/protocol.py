"""Types shared by engines, agents and the session driver."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping, Protocol, Sequence

import numpy as np


class EngineError(RuntimeError):
    """An engine rejected a state transition; this is a bug, not an agent failure."""


@dataclass(frozen=True)
class Query:
    """One decision requested from one role within a round."""

    role: str
    slot: str
    round_index: int
    condition: str
    question: str
    observation: str = ""
    history: tuple[str, ...] = ()
    values: Mapping[str, Any] = field(default_factory=dict)
    lo: float = 0.0
    hi: float = float("inf")
    integer: bool = False
    choices: tuple[float, ...] | None = None
    requires_history: bool = False

    def accepts(self, value: float) -> bool:
        if self.choices is not None:
            return any(value == c for c in self.choices)
        return self.lo <= value <= self.hi

    def coerce(self, value: float) -> float:
        if self.integer:
            return float(round(value))
        return float(value)


@dataclass
class RoundResult:
    payoffs: dict[str, float]
    outcomes: dict[str, dict[str, float]] = field(default_factory=dict)
    feedback: dict[str, str] = field(default_factory=dict)


class GameEngine(Protocol):
    experiment_id: str
    roles: tuple[str, ...]

    def start(self, condition: str, session_id: int, rng: np.random.Generator) -> None: ...
    def round_condition(self, round_index: int) -> str: ...
    def begin_round(self, round_index: int) -> None: ...
    def next_query(self) -> Query | None: ...
    def submit(self, query: Query, value: float) -> None: ...
    def end_round(self) -> RoundResult: ...


def format_number(x: float) -> str:
    """Compact rendering used in all observation text: integers without decimals."""
    xf = float(x)
    if xf.is_integer():
        return str(int(xf))
    return f"{xf:.2f}".rstrip("0").rstrip(".")


def join_lines(lines: Sequence[str]) -> str:
    return "\n".join(line for line in lines if line)
