"""Offline agents: normative, replayed, fixed-text and noisy-categorical."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from ..games.auctions import CubeRoot, nash_bid, optimal_reserve
from ..games.contract import ContractOffer, ContractParams, rational_offer, retailer_best_profit
from ..games.forecasting import FORECAST_CONDITIONS, alpha_star
from ..games.newsvendor import dice_demand_pmf, optimal_discrete_order, uniform_int_pmf
from ..protocol import Query, format_number
from ..sampling import SamplingConfig, apply_config
from .policies import PolicyEntry, match_policy
from .prompts import PromptBundle


class UnsupportedExperimentError(ValueError):
    pass


@lru_cache(maxsize=None)
def _dice_optimum(p: float, c: float, n_dice: int) -> int:
    frac = lambda x: Fraction(x).limit_denominator(10**6)  # noqa: E731
    return optimal_discrete_order(dice_demand_pmf(n_dice), frac(p), frac(c))


@lru_cache(maxsize=None)
def _uniform_optimum(price: float, cost: float, lo: int, hi: int) -> int:
    frac = lambda x: Fraction(x).limit_denominator(10**6)  # noqa: E731
    return optimal_discrete_order(uniform_int_pmf(lo, hi), frac(price), frac(cost))


@lru_cache(maxsize=None)
def _cube_root_reserve(scale: float) -> float:
    return optimal_reserve(CubeRoot(scale))


def _smoothed_level(history: Sequence[float], alpha: float) -> float:
    level = float(np.mean(history))
    for d in history:
        level += alpha * (d - level)
    return level


def rational_decision(
    experiment_id: str,
    query: Query,
    params: Any = None,
    anchor: Mapping[str, float] | None = None,
) -> float:
    """Normative benchmark answer for one query.

    ``params`` is the engine's parameter record (needed for the contract game);
    ``anchor`` may override benchmark quantities, e.g. ``{"alpha": 0.6}`` for a
    forecaster who smooths with a non-optimal weight.
    """
    v = query.values
    anchor = anchor or {}
    if experiment_id == "payment_scheme":
        return float(_dice_optimum(float(v["p"]), float(v["c"]), int(v["n_dice"])))
    if experiment_id == "newsvendor_profit":
        return float(_uniform_optimum(float(v["price"]), float(v["cost"]), int(v["low_d"]), int(v["high_d"])))
    if experiment_id == "beer_game":
        # pass the customer's order straight through
        return float(v["incoming"])
    if experiment_id == "reserve_auction":
        return _cube_root_reserve(float(v.get("scale", 100.0)))
    if experiment_id == "regret_auction":
        return nash_bid(float(v["value"]))
    if experiment_id == "contract":
        cp = params if isinstance(params, ContractParams) else ContractParams()
        if query.slot in ("fixed_fee", "wholesale", "qd_x", "qd_y"):
            offer = rational_offer(cp, "TPT" if query.slot in ("fixed_fee", "wholesale") else "QD")
            return {"fixed_fee": offer.first, "wholesale": offer.second, "qd_x": offer.first, "qd_y": offer.second}[query.slot]
        offer = ContractOffer.tpt(float(v["lump_sum"]), float(v["unit_price"]))
        if query.slot == "accept":
            return 1.0 if retailer_best_profit(cp, offer) >= -1e-9 else 0.0
        if query.slot == "price_b":
            return cp.best_retail_price(offer.unit_price)
    if experiment_id == "queue":
        from ..games.queueing import QueueParams

        qp = params if isinstance(params, QueueParams) else QueueParams()
        w = int(v["wait"])
        gain = qp.buy_payoff(v["quality"], w) if v.get("informed") else qp.prior_expected_buy(w)
        return 1.0 if gain >= qp.endowment else 0.0
    if experiment_id == "forecast":
        alpha = anchor.get("alpha")
        if alpha is None:
            c, n = FORECAST_CONDITIONS[query.condition]
            alpha = alpha_star(c * c / (n * n))
        if v.get("last_forecast") is None:
            return _smoothed_level(v["history"], float(alpha))
        return float(v["last_forecast"]) + float(alpha) * (float(v["last_demand"]) - float(v["last_forecast"]))
    if experiment_id == "cheap_talk":
        if query.slot == "message":
            return float(v["xi"])
        if query.slot == "capacity":
            # median noise is zero, and the critical fractile is one half under defaults
            return float(v["message"])
    raise UnsupportedExperimentError(f"no normative rule for {experiment_id}/{query.slot}")


def answer_text(value: float) -> str:
    return f"### {format_number(value)}"


class RationalAgent:
    kind = "rational"

    def __init__(self, experiment_id: str, params: Any = None, anchor: Mapping[str, float] | None = None) -> None:
        self.experiment_id = experiment_id
        self.params = params
        self.anchor = dict(anchor or {})

    def respond(self, prompt: PromptBundle, query: Query, attempt: int) -> str:
        value = rational_decision(self.experiment_id, query, self.params, self.anchor)
        if query.integer:
            value = float(round(value))
        return answer_text(value)


class FixedTextAgent:
    """Cycles through canned responses; handy for exercising the retry path."""

    kind = "fixed"

    def __init__(self, responses: Sequence[str]) -> None:
        if not responses:
            raise ValueError("need at least one response")
        self.responses = list(responses)
        self.calls = 0

    def respond(self, prompt: PromptBundle, query: Query, attempt: int) -> str:
        text = self.responses[self.calls % len(self.responses)]
        self.calls += 1
        return text


class ReplayAgent:
    """Answers with a recorded sequence of decisions, one per call."""

    kind = "replay"

    def __init__(self, values: Iterable[float]) -> None:
        self.values = [float(x) for x in values]
        self.cursor = 0

    def respond(self, prompt: PromptBundle, query: Query, attempt: int) -> str:
        if self.cursor >= len(self.values):
            return "replay exhausted"
        value = self.values[self.cursor]
        self.cursor += 1
        return answer_text(value)


def hash_uniform(*keys: object) -> float:
    """Deterministic uniform in [0, 1) from a tuple of keys."""
    digest = hashlib.blake2b("\x1f".join(map(str, keys)).encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big") / 2.0**64


@dataclass(frozen=True)
class FailureCurve:
    """Per-attempt probability of an unusable answer, logistic in temperature."""

    ceiling: float = 0.0
    midpoint: float = 1.5
    width: float = 0.25
    floor: float = 0.0

    def __post_init__(self) -> None:
        if not (0.0 <= self.floor <= self.ceiling <= 1.0):
            raise ValueError("failure curve needs 0 <= floor <= ceiling <= 1")
        if self.width <= 0:
            raise ValueError("failure curve width must be positive")

    def prob(self, temperature: float) -> float:
        z = (temperature - self.midpoint) / self.width
        s = 1.0 / (1.0 + math.exp(-z)) if z > -700 else 0.0
        return self.floor + (self.ceiling - self.floor) * s

    @classmethod
    def from_dict(cls, data: Mapping[str, float] | None) -> FailureCurve:
        return cls(**dict(data or {}))


LLM_LIKE_FAILURE = FailureCurve(ceiling=0.9, midpoint=2.2, width=0.3)


def _sample_from_u(probs: np.ndarray, u: float) -> int:
    cum = np.cumsum(probs)
    idx = int(np.searchsorted(cum, u * cum[-1], side="right"))
    return min(idx, probs.size - 1)


class NoisyCategoricalAgent:
    """Draws answers from a categorical distribution shaped by a policy table.

    For each query the matching policy entry defines base probabilities over a
    value grid; the sampling config (temperature, then one truncation rule)
    reshapes them exactly as a decoder would. Random draws come from hashes of
    (seed, round, role, slot, attempt), so two sampling configs with the same
    seed see the same uniforms: common random numbers across sweep cells. With
    a fixed-topology game this makes completion monotone in temperature.
    """

    kind = "noisy"

    def __init__(
        self,
        experiment_id: str,
        policy: Sequence[PolicyEntry],
        sampling: SamplingConfig | None = None,
        seed: int = 0,
        failure: FailureCurve | None = None,
        params: Any = None,
    ) -> None:
        self.experiment_id = experiment_id
        self.policy = list(policy)
        self.sampling = sampling or SamplingConfig()
        self.seed = seed
        self.failure = failure or FailureCurve()
        self.params = params

    def distribution(self, query: Query) -> tuple[np.ndarray, np.ndarray]:
        """(support values, base probabilities) before decoding transforms."""
        entry = match_policy(self.policy, query)
        anchor_params = entry.anchor if entry is not None else None
        try:
            anchor = rational_decision(self.experiment_id, query, self.params, anchor_params)
        except UnsupportedExperimentError:
            anchor = 0.0
        if query.choices is not None:
            return self._choice_distribution(query, entry, anchor)
        if entry is None:
            return np.array([anchor]), np.array([1.0])
        if entry.values is not None:
            return np.asarray(entry.values, dtype=float), np.asarray(entry.probs, dtype=float)
        if entry.mode == "absolute":
            mean = entry.mu
        elif entry.mode == "offset":
            mean = anchor + entry.mu
        else:
            mean = anchor * entry.mu
        sd = entry.sd + entry.sd_rel * abs(anchor)
        step = max(entry.step, 1.0) if query.integer else entry.step
        lo, hi = query.lo, query.hi
        if sd <= 0:
            x = np.array([min(max(round(mean / step) * step, lo), hi)])
            return x, np.array([1.0])
        k_lo = math.floor((mean - 4 * sd) / step)
        k_hi = math.ceil((mean + 4 * sd) / step)
        grid = np.arange(k_lo, k_hi + 1) * step
        grid = grid[(grid >= lo) & (grid <= hi)]
        if grid.size == 0:
            grid = np.array([min(max(mean, lo), hi)])
        w = np.exp(-0.5 * ((grid - mean) / sd) ** 2)
        if w.sum() <= 0:
            w = np.ones_like(grid)
        return grid, w / w.sum()

    def _choice_distribution(self, query: Query, entry: PolicyEntry | None, anchor: float) -> tuple[np.ndarray, np.ndarray]:
        choices = np.asarray(query.choices, dtype=float)
        if entry is not None and entry.probs is not None:
            vals = np.asarray(entry.values if entry.values is not None else choices, dtype=float)
            return vals, np.asarray(entry.probs, dtype=float)
        flip = entry.flip if entry is not None else 0.0
        probs = np.where(choices == anchor, 1.0 - flip, 0.0)
        others = choices != anchor
        if others.any():
            probs[others] = flip / others.sum()
        if probs.sum() <= 0:
            probs = np.full(choices.size, 1.0 / choices.size)
        return choices, probs / probs.sum()

    def respond(self, prompt: PromptBundle, query: Query, attempt: int) -> str:
        key = (self.seed, query.round_index, query.role, query.slot, attempt)
        if hash_uniform(*key, "fail") < self.failure.prob(self.sampling.temperature):
            return "I am unable to settle on a figure for this round."
        support, base = self.distribution(query)
        probs = apply_config(base, self.sampling)
        value = float(support[_sample_from_u(probs, hash_uniform(*key, "value"))])
        return f"My decision for this round. ### {format_number(round(value, 6))}"
