"""Newsvendor payoffs, demand tables and the critical-fractile benchmark."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from itertools import product
from typing import Literal, Mapping, Union

Number = Union[int, float, Fraction]
Pmf = Mapping[int, Number]

Scheme = Literal["O", "C"]


@dataclass(frozen=True)
class PaymentSchemeParams:
    p: float = 2.0
    c: float = 1.0
    n_dice: int = 3

    def __post_init__(self) -> None:
        if not (0 < self.c < self.p):
            raise ValueError("payment scheme needs 0 < c < p")
        if self.n_dice < 1:
            raise ValueError("n_dice must be >= 1")

    @property
    def demand_support(self) -> tuple[int, int]:
        return self.n_dice, 6 * self.n_dice

    def template_extras(self) -> dict[str, float]:
        lo, hi = self.demand_support
        return {"demand_min": lo, "demand_max": hi, "margin": self.p - self.c}


@dataclass(frozen=True)
class ProfitNewsvendorParams:
    """High and low critical-fractile products sharing one demand distribution."""

    price: float = 12.0
    cost_high: float = 3.0
    cost_low: float = 9.0
    low_d: int = 1
    high_d: int = 300

    def __post_init__(self) -> None:
        for cost in (self.cost_high, self.cost_low):
            if not (0 < cost < self.price):
                raise ValueError("profit newsvendor needs 0 < cost < price")
        if self.low_d > self.high_d:
            raise ValueError("low_d must not exceed high_d")

    def cost(self, condition: str) -> float:
        if condition == "high":
            return self.cost_high
        if condition == "low":
            return self.cost_low
        raise ValueError(f"unknown profit condition {condition!r}")

    def fractile(self, condition: str) -> float:
        return (self.price - self.cost(condition)) / self.price

    def pmf(self) -> dict[int, Fraction]:
        return uniform_int_pmf(self.low_d, self.high_d)

    def optimal_order(self, condition: str) -> int:
        return optimal_discrete_order(
            self.pmf(), Fraction(self.price).limit_denominator(), Fraction(self.cost(condition)).limit_denominator()
        )


def payment_scheme_payoff(scheme: Scheme, q: float, d: float, p: float = 2.0, c: float = 1.0) -> float:
    """Profit for order ``q`` and demand ``d`` under the O or C presentation.

    O charges c per unit ordered and pays p per unit sold. C credits p - c per
    unit ordered and charges p per leftover unit. The two are the same cash flow.
    """
    if q < 0:
        raise ValueError("order quantity must be nonnegative")
    if d < 0:
        raise ValueError("demand must be nonnegative")
    if scheme == "O":
        return -c * q + p * min(q, d)
    if scheme == "C":
        return (p - c) * q - p * max(q - d, 0)
    raise ValueError(f"unknown payment scheme {scheme!r}")


def newsvendor_profit(q: float, d: float, price: float, cost: float) -> float:
    if q < 0:
        raise ValueError("order quantity must be nonnegative")
    return price * min(q, d) - cost * q


def dice_demand_pmf(n_dice: int = 3) -> dict[int, Fraction]:
    """Exact distribution of the sum of ``n_dice`` fair six-sided dice."""
    counts: dict[int, int] = {}
    for roll in product(range(1, 7), repeat=n_dice):
        s = sum(roll)
        counts[s] = counts.get(s, 0) + 1
    total = 6**n_dice
    return {k: Fraction(v, total) for k, v in sorted(counts.items())}


def uniform_int_pmf(lo: int, hi: int) -> dict[int, Fraction]:
    if lo > hi:
        raise ValueError("empty support")
    w = Fraction(1, hi - lo + 1)
    return {k: w for k in range(lo, hi + 1)}


def pmf_mean(pmf: Pmf) -> float:
    return float(sum(k * v for k, v in pmf.items()))


def _check_pmf(pmf: Pmf) -> list[tuple[int, Number]]:
    items = sorted((int(k), v) for k, v in pmf.items() if v > 0)
    if not items:
        raise ValueError("degenerate pmf: no positive mass")
    if any(v < 0 for v in pmf.values()):
        raise ValueError("pmf has negative entries")
    total = sum(v for _, v in items)
    exact = all(isinstance(v, (int, Fraction)) for _, v in items)
    if (exact and total != 1) or (not exact and abs(float(total) - 1.0) > 1e-9):
        raise ValueError(f"pmf sums to {float(total)}, not 1")
    return items


def optimal_discrete_order(pmf: Pmf, p: Number, c: Number) -> int:
    """Smallest expected-profit-maximizing order: first q with P(D <= q) >= (p - c) / p.

    Exact when the pmf and prices are Fractions or ints; float inputs use a
    1e-12 tolerance on the CDF comparison.
    """
    if not (0 < c < p):
        raise ValueError("need 0 < c < p")
    items = _check_pmf(pmf)
    exact = all(isinstance(v, (int, Fraction)) for _, v in items) and all(
        isinstance(x, (int, Fraction)) for x in (p, c)
    )
    if exact:
        target = (Fraction(p) - Fraction(c)) / Fraction(p)
        cum: Number = Fraction(0)
        for k, v in items:
            cum += v
            if cum >= target:
                return k
    else:
        target_f = (float(p) - float(c)) / float(p)
        cum_f = 0.0
        for k, v in items:
            cum_f += float(v)
            if cum_f >= target_f - 1e-12:
                return k
    return items[-1][0]


def expected_profit(pmf: Pmf, q: int, p: float, c: float) -> float:
    return float(sum(float(v) * (p * min(q, k) - c * q) for k, v in pmf.items()))
