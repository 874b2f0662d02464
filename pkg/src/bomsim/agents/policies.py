"""Policy tables for the noisy-categorical agent.

An entry applies to one decision slot, optionally restricted to a condition
and to observation values (``when``). The first matching entry wins. The
value distribution is a discretized normal around a mean that is either
absolute, an offset from the normative answer, or a multiple of it; choice
slots use explicit probabilities or a flip rate away from the normative answer.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Literal, Mapping, Sequence

from ..protocol import Query

Mode = Literal["absolute", "offset", "scale"]


@dataclass(frozen=True)
class PolicyEntry:
    slot: str
    condition: str = "*"
    when: Mapping[str, Any] = field(default_factory=dict)
    mode: Mode = "offset"
    mu: float = 0.0
    sd: float = 0.0
    sd_rel: float = 0.0
    step: float = 1.0
    values: tuple[float, ...] | None = None
    probs: tuple[float, ...] | None = None
    flip: float = 0.0
    anchor: Mapping[str, float] | None = None

    def __post_init__(self) -> None:
        if self.mode not in ("absolute", "offset", "scale"):
            raise ValueError(f"unknown policy mode {self.mode!r}")
        if self.sd < 0 or self.sd_rel < 0:
            raise ValueError("policy sd must be nonnegative")
        if self.step <= 0:
            raise ValueError("policy step must be positive")
        if not (0.0 <= self.flip <= 1.0):
            raise ValueError("flip must be a probability")
        if self.probs is not None:
            if any(p < 0 for p in self.probs) or sum(self.probs) <= 0:
                raise ValueError("policy probs must be nonnegative with positive total")
            if self.values is not None and len(self.values) != len(self.probs):
                raise ValueError("policy values and probs differ in length")

    def matches(self, query: Query) -> bool:
        if self.slot != query.slot:
            return False
        if self.condition not in ("*", query.condition):
            return False
        for key, expected in self.when.items():
            got = query.values.get(key)
            if isinstance(expected, (list, tuple)):
                if got not in expected:
                    return False
            elif got != expected:
                return False
        return True

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> PolicyEntry:
        d = dict(data)
        for key in ("values", "probs"):
            if d.get(key) is not None:
                d[key] = tuple(float(x) for x in d[key])
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown policy key(s): {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict[str, Any]:
        out = asdict(self)
        out["when"] = dict(self.when)
        return out


def match_policy(policy: Sequence[PolicyEntry], query: Query) -> PolicyEntry | None:
    for entry in policy:
        if entry.matches(query):
            return entry
    return None


def load_policy_file(path: str | Path) -> dict[str, list[PolicyEntry]]:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    return {exp: [PolicyEntry.from_dict(e) for e in entries] for exp, entries in raw.items()}


def _queue_entries(cond: str, buy_by_wait: Mapping[int, float]) -> list[PolicyEntry]:
    entries = [
        PolicyEntry("buy", cond, {"informed": 1, "quality": "high"}, probs=(0.05, 0.95)),
        PolicyEntry("buy", cond, {"informed": 1, "quality": "low"}, probs=(0.9, 0.1)),
    ]
    for w, p in buy_by_wait.items():
        entries.append(PolicyEntry("buy", cond, {"informed": 0, "wait": w}, probs=(1.0 - p, p)))
    return entries


# Behaviour resembling the original human studies: each table produces the
# documented treatment effect with margin at the study's scale.
HUMAN_POLICIES: dict[str, list[PolicyEntry]] = {
    "payment_scheme": [
        PolicyEntry("order", "O", mode="absolute", mu=11.0, sd=3.0),
        PolicyEntry("order", "C", mode="absolute", mu=9.8, sd=3.0),
    ],
    "beer_game": [
        PolicyEntry("order", "base", mode="offset", mu=0.0, sd=4.0),
        PolicyEntry("order", "share", mode="offset", mu=0.0, sd=1.5),
    ],
    "reserve_auction": [
        PolicyEntry("reserve", "1", mode="offset", mu=-12.0, sd=10.0),
        PolicyEntry("reserve", "4", mode="offset", mu=-6.0, sd=10.0),
        PolicyEntry("reserve", "7", mode="offset", mu=-2.0, sd=10.0),
        PolicyEntry("reserve", "10", mode="offset", mu=2.0, sd=10.0),
    ],
    "regret_auction": [
        PolicyEntry("bid", "loser", mode="scale", mu=1.18, sd_rel=0.08, step=0.1),
        PolicyEntry("bid", "both", mode="scale", mu=1.08, sd_rel=0.08, step=0.1),
    ],
    "contract": [
        PolicyEntry("fixed_fee", "TPT", mode="offset", mu=-900.0, sd=300.0, step=10.0),
        PolicyEntry("wholesale", "TPT", mode="absolute", mu=12.0, sd=6.0),
        PolicyEntry("qd_x", "QD", mode="absolute", mu=12.0, sd=6.0),
        PolicyEntry("qd_y", "QD", mode="absolute", mu=1500.0, sd=300.0, step=10.0),
        PolicyEntry("accept", "TPT", flip=0.30),
        PolicyEntry("accept", "QD", flip=0.08),
        PolicyEntry("price_b", "*", mode="offset", mu=3.0, sd=4.0),
    ],
    "queue": _queue_entries("q00", {1: 0.85, 2: 0.75, 3: 0.65, 4: 0.55})
    + _queue_entries("q50", {1: 0.45, 2: 0.6, 3: 0.7, 4: 0.75}),
    "forecast": [
        PolicyEntry("forecast", "stable", mode="offset", sd=3.0, step=0.5, anchor={"alpha": 0.59}),
        PolicyEntry("forecast", "unstable", mode="offset", sd=3.0, step=0.5, anchor={"alpha": 0.89}),
    ],
    "newsvendor_profit": [
        PolicyEntry("order", "high", mode="absolute", mu=180.0, sd=50.0),
        PolicyEntry("order", "low", mode="absolute", mu=120.0, sd=50.0),
    ],
    "cheap_talk": [
        PolicyEntry("message", "*", mode="offset", mu=35.0, sd=30.0),
        PolicyEntry("capacity", "*", mode="scale", mu=0.85, sd=25.0),
    ],
}


def scaled_policy(policy: Sequence[PolicyEntry], sd_factor: float) -> list[PolicyEntry]:
    """Same table with every spread multiplied by ``sd_factor``."""
    from dataclasses import replace

    return [replace(e, sd=e.sd * sd_factor, sd_rel=e.sd_rel * sd_factor) for e in policy]
