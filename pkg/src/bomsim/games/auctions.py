"""Second-price auctions with a seller reserve and first-price auctions with regret feedback."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Protocol, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

RESERVE_CONDITIONS: tuple[int, ...] = (1, 4, 7, 10)
NASH_SHARE = 2.0 / 3.0


class ValueDistribution(Protocol):
    lo: float
    hi: float

    def cdf(self, v: float) -> float: ...
    def sample(self, rng: np.random.Generator, size: int | None = None) -> np.ndarray | float: ...


@dataclass(frozen=True)
class CubeRoot:
    """F(v) = (v / scale)^(1/3) on [0, scale]; sampled as scale * U^3."""

    scale: float = 100.0

    @property
    def lo(self) -> float:
        return 0.0

    @property
    def hi(self) -> float:
        return self.scale

    def cdf(self, v: float) -> float:
        if v < 0 or v > self.scale:
            raise ValueError(f"cube-root cdf defined on [0, {self.scale}], got {v}")
        return (v / self.scale) ** (1.0 / 3.0)

    def pdf(self, v: float) -> float:
        if v <= 0 or v > self.scale:
            return 0.0
        return (1.0 / (3.0 * self.scale)) * (v / self.scale) ** (-2.0 / 3.0)

    def ppf(self, u: float) -> float:
        return self.scale * u**3

    def sample(self, rng: np.random.Generator, size: int | None = None):
        u = rng.random(size)
        return self.scale * u**3


@dataclass(frozen=True)
class Uniform:
    lo: float = 0.0
    hi: float = 100.0

    def cdf(self, v: float) -> float:
        if v < self.lo or v > self.hi:
            raise ValueError(f"uniform cdf defined on [{self.lo}, {self.hi}], got {v}")
        return (v - self.lo) / (self.hi - self.lo)

    def sample(self, rng: np.random.Generator, size: int | None = None):
        return rng.uniform(self.lo, self.hi, size)


@dataclass(frozen=True)
class PointMass:
    value: float

    @property
    def lo(self) -> float:
        return self.value

    @property
    def hi(self) -> float:
        return self.value

    def cdf(self, v: float) -> float:
        return 1.0 if v >= self.value else 0.0

    def sample(self, rng: np.random.Generator, size: int | None = None):
        return np.full(size, self.value) if size is not None else self.value


def cube_root_cdf(v: float, scale: float = 100.0) -> float:
    return CubeRoot(scale).cdf(v)


def cube_root_sample(rng: np.random.Generator, size: int | None = None, scale: float = 100.0):
    return CubeRoot(scale).sample(rng, size)


def optimal_reserve(dist: ValueDistribution, grid_points: int = 4001) -> float:
    """Reserve maximizing r * (1 - F(r)), the single-bidder expected revenue.

    For independent private values the optimal reserve in a second-price auction
    does not depend on the number of bidders, so the single-bidder objective is
    enough. A grid search brackets the maximum and a bounded scalar search refines it.
    """
    lo, hi = float(dist.lo), float(dist.hi)
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise ValueError("optimal_reserve needs a bounded support")
    if hi == lo:
        return hi

    def revenue(r: float) -> float:
        r = min(max(r, lo), hi)
        # left limit of the CDF so an atom at r still counts as a sale
        below = dist.cdf(r) if r == lo else dist.cdf(math.nextafter(r, -math.inf))
        return r * (1.0 - below)

    grid = np.linspace(lo, hi, grid_points)
    vals = np.array([revenue(float(r)) for r in grid])
    i = int(np.argmax(vals))
    a = float(grid[max(i - 1, 0)])
    b = float(grid[min(i + 1, grid_points - 1)])
    res = minimize_scalar(lambda r: -revenue(r), bounds=(a, b), method="bounded", options={"xatol": 1e-10})
    best = float(res.x) if -res.fun >= vals[i] else float(grid[i])
    return best


def second_price_reserve_outcome(reserve: float, values: Sequence[float]) -> tuple[bool, float]:
    """(sold, revenue). Revenue is max(reserve, second-highest value) when the top value clears."""
    if len(values) == 0:
        raise ValueError("need at least one bidder value")
    if reserve < 0:
        raise ValueError("reserve must be nonnegative")
    ordered = sorted((float(v) for v in values), reverse=True)
    if ordered[0] < reserve:
        return False, 0.0
    second = ordered[1] if len(ordered) > 1 else 0.0
    return True, max(float(reserve), second)


FeedbackMode = Literal["loser", "both"]


@dataclass(frozen=True)
class RegretOutcome:
    won: bool
    payoff: float
    rival_bids: tuple[float, ...]
    winning_bid: float
    loser_regret: float
    winner_regret: float | None
    second_highest: float | None


def first_price_regret_outcome(
    bid: float,
    value: float,
    rival_values: Sequence[float],
    feedback_mode: FeedbackMode = "loser",
    rng: np.random.Generator | None = None,
) -> RegretOutcome:
    """First-price auction against computerized rivals who bid two thirds of their values.

    Loser's regret (shown in both modes) is how much more the subject could have
    earned by winning at the winning price. Winner's regret, only computed in
    ``both`` mode, is the gap between the subject's bid and the next-highest bid.
    """
    if bid < 0 or value < 0 or any(v < 0 for v in rival_values):
        raise ValueError("bids and values must be nonnegative")
    if feedback_mode not in ("loser", "both"):
        raise ValueError(f"unknown feedback mode {feedback_mode!r}")
    rival_bids = tuple(nash_bid(float(v)) for v in rival_values)
    top_rival = max(rival_bids) if rival_bids else 0.0
    if bid > top_rival:
        won = True
    elif bid < top_rival:
        won = False
    else:
        if rng is None:
            raise ValueError("tie between bids needs an rng to break it")
        n_tied = 1 + sum(1 for b in rival_bids if b == top_rival)
        won = rng.random() < 1.0 / n_tied
    winning_bid = float(bid) if won else top_rival
    payoff = float(value) - float(bid) if won else 0.0
    loser_regret = 0.0 if won else max(float(value) - top_rival, 0.0)
    winner_regret = None
    second = None
    if feedback_mode == "both":
        second = top_rival if won else float(bid)
        winner_regret = max(float(bid) - top_rival, 0.0) if won else 0.0
    return RegretOutcome(won, payoff, rival_bids, winning_bid, loser_regret, winner_regret, second)


def nash_bid(value: float) -> float:
    # one rounding step, so the result is the float nearest to exactly 2v/3
    return 2.0 * value / 3.0
