"""Registry of the nine studies: scale presets, output categories, agent factories."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Mapping, Sequence

from .agents.policies import HUMAN_POLICIES, PolicyEntry
from .agents.scripted import FailureCurve, NoisyCategoricalAgent, RationalAgent
from .core import EXPERIMENT_IDS, CategoryMap, ExperimentSpec, check_experiment_id, derive_seed
from .games.engines import engine_roles
from .sampling import SamplingConfig


@dataclass(frozen=True)
class Preset:
    conditions: tuple[str, ...]
    n_subjects: int
    n_rounds: int
    within_subject: bool = False


# Subjects per condition (groups or pairs for multi-role studies) and rounds.
PAPER_SCALE: dict[str, Preset] = {
    "payment_scheme": Preset(("O", "C"), 25, 25),
    "beer_game": Preset(("base", "share"), 11, 48),
    "reserve_auction": Preset(("1", "4", "7", "10"), 20, 20),
    "regret_auction": Preset(("loser", "both"), 20, 20),
    "contract": Preset(("TPT", "QD"), 20, 10),
    "queue": Preset(("q00", "q50"), 12, 20),
    "forecast": Preset(("stable", "unstable"), 67, 50),
    "newsvendor_profit": Preset(("high", "low"), 40, 30, within_subject=True),
    "cheap_talk": Preset(("base",), 40, 30),
}

SMOKE_SCALE: dict[str, Preset] = {
    "payment_scheme": Preset(("O", "C"), 3, 4),
    "beer_game": Preset(("base", "share"), 2, 6),
    "reserve_auction": Preset(("1", "4", "7", "10"), 2, 3),
    "regret_auction": Preset(("loser", "both"), 3, 4),
    "contract": Preset(("TPT", "QD"), 3, 3),
    "queue": Preset(("q00", "q50"), 2, 4),
    "forecast": Preset(("stable", "unstable"), 3, 12),
    "newsvendor_profit": Preset(("high", "low"), 4, 6, within_subject=True),
    "cheap_talk": Preset(("base",), 4, 5),
}

PRESETS = {"paper": PAPER_SCALE, "smoke": SMOKE_SCALE}

CATEGORY_MAPS: dict[str, CategoryMap] = {
    "payment_scheme": CategoryMap({"order": "{condition}"}),
    "beer_game": CategoryMap({"order": "{condition}"}),
    "reserve_auction": CategoryMap({"reserve": "{condition}"}),
    "regret_auction": CategoryMap({"bid": "{condition}"}, {"value": "{condition}/value"}),
    "contract": CategoryMap(
        {
            "fixed_fee": "tpt fixed fee",
            "wholesale": "tpt price a",
            "qd_x": "qd x",
            "qd_y": "qd y",
            "price_b": "{cond} price b",
            "accept": "{cond}/accept",
        },
        {"efficiency": "{cond}/efficiency"},
    ),
    "queue": CategoryMap({"buy": "{condition}"}, {"wait": "{condition}/wait", "informed": "{condition}/informed"}),
    "forecast": CategoryMap({"forecast": "{condition}"}, {"demand": "{condition}/demand"}),
    "newsvendor_profit": CategoryMap({"order": "{condition}"}),
    "cheap_talk": CategoryMap({"message": "signal", "capacity": "capacity"},
                              {"xi": "signal/xi", "received": "capacity/received"}),
}

ALIGNMENT_CATEGORIES: dict[str, tuple[str, ...]] = {
    "payment_scheme": ("O", "C"),
    "beer_game": ("base", "share"),
    "reserve_auction": ("1", "4", "7", "10"),
    "regret_auction": ("loser", "both"),
    "contract": ("tpt fixed fee", "tpt price a", "tpt price b", "qd x", "qd y", "qd price b"),
    "queue": ("q00", "q50"),
    "forecast": ("stable", "unstable"),
    "newsvendor_profit": ("high", "low"),
    "cheap_talk": ("signal", "capacity"),
}


def is_aux_category(category: str) -> bool:
    """Auxiliary rows (values, waits, demands, efficiencies) support tests but are never aligned."""
    return "/" in category


def make_spec(
    experiment_id: str,
    preset: str = "paper",
    *,
    seed: int = 0,
    conditions: Sequence[str] | None = None,
    n_subjects: int | None = None,
    n_rounds: int | None = None,
    game_params: Mapping[str, Any] | None = None,
) -> ExperimentSpec:
    check_experiment_id(experiment_id)
    if preset not in PRESETS:
        raise ValueError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    p = PRESETS[preset][experiment_id]
    conds = tuple(conditions) if conditions else p.conditions
    if p.within_subject and set(conds) != set(p.conditions):
        raise ValueError(f"{experiment_id} runs all of {list(p.conditions)} inside each session")
    bad = [c for c in conds if c not in p.conditions]
    if bad:
        raise ValueError(f"unknown condition(s) for {experiment_id}: {bad}; valid: {list(p.conditions)}")
    return ExperimentSpec(
        experiment_id=experiment_id,
        conditions=conds,
        n_subjects_per_condition=n_subjects or p.n_subjects,
        n_rounds=n_rounds or p.n_rounds,
        roles=engine_roles(experiment_id),
        game_params=dict(game_params or {}),
        rng_seed=seed,
        within_subject=p.within_subject,
    )


def rational_factory(spec: ExperimentSpec, role: str, condition: str, session_id: int) -> RationalAgent:
    return RationalAgent(spec.experiment_id, spec.params)


@dataclass
class NoisyFactory:
    """Builds noisy-categorical agents with seeds that ignore the sampling config."""

    policies: Mapping[str, Sequence[PolicyEntry]] | None = None
    sampling: SamplingConfig = SamplingConfig()
    failure: FailureCurve = FailureCurve()
    seed_salt: int = 0

    def __call__(self, spec: ExperimentSpec, role: str, condition: str, session_id: int) -> NoisyCategoricalAgent:
        table = (self.policies or HUMAN_POLICIES).get(spec.experiment_id, [])
        seed = derive_seed(spec.rng_seed, "agent", self.seed_salt, condition, session_id, role)
        return NoisyCategoricalAgent(spec.experiment_id, table, self.sampling, seed, self.failure, spec.params)


__all__ = [
    "EXPERIMENT_IDS",
    "PAPER_SCALE",
    "SMOKE_SCALE",
    "CATEGORY_MAPS",
    "ALIGNMENT_CATEGORIES",
    "Preset",
    "make_spec",
    "is_aux_category",
    "rational_factory",
    "NoisyFactory",
]
