"""Two-player channel contracting under two-part tariff and quantity-discount framings."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

Framing = Literal["TPT", "QD"]


@dataclass(frozen=True)
class ContractParams:
    a: float = 100.0
    b: float = 1.0
    c_a: float = 0.0

    def __post_init__(self) -> None:
        if self.b <= 0:
            raise ValueError("demand slope b must be positive")
        if self.c_a < 0:
            raise ValueError("production cost must be nonnegative")
        if self.a - self.b * self.c_a <= 0:
            raise ValueError("integrated-channel profit must be positive (need a > b * c_a)")

    @property
    def integrated_optimum(self) -> float:
        return (self.a - self.b * self.c_a) ** 2 / (4.0 * self.b)

    @property
    def integrated_price(self) -> float:
        return (self.a / self.b + self.c_a) / 2.0

    def quantity(self, price_b: float) -> float:
        return max(self.a - self.b * price_b, 0.0)

    def best_retail_price(self, unit_cost: float) -> float:
        return max((self.a / self.b + unit_cost) / 2.0, unit_cost)


@dataclass(frozen=True)
class ContractOffer:
    """A's proposal. TPT: fixed fee plus wholesale price per unit.

    QD: quoted average unit price ``x + y / q`` (``x`` the marginal price, ``y``
    the amount spread over the order), which costs B exactly ``y + x * q``.
    """

    framing: Framing
    first: float
    second: float

    def __post_init__(self) -> None:
        if self.framing not in ("TPT", "QD"):
            raise ValueError(f"unknown framing {self.framing!r}")
        if self.first < 0 or self.second < 0:
            raise ValueError("contract terms must be nonnegative")

    @classmethod
    def tpt(cls, fixed_fee: float, wholesale: float) -> ContractOffer:
        return cls("TPT", fixed_fee, wholesale)

    @classmethod
    def qd(cls, x: float, y: float) -> ContractOffer:
        return cls("QD", x, y)

    @property
    def lump_sum(self) -> float:
        return self.first if self.framing == "TPT" else self.second

    @property
    def unit_price(self) -> float:
        return self.second if self.framing == "TPT" else self.first

    def payment(self, quantity: float) -> float:
        return self.lump_sum + self.unit_price * quantity

    def cash_equivalent(self) -> ContractOffer:
        """Same cash flows expressed under the other framing."""
        if self.framing == "TPT":
            return ContractOffer.qd(x=self.unit_price, y=self.lump_sum)
        return ContractOffer.tpt(fixed_fee=self.lump_sum, wholesale=self.unit_price)


@dataclass(frozen=True)
class ContractOutcome:
    profit_a: float
    profit_b: float
    efficiency: float
    quantity: float


def contract_stage_game(params: ContractParams, offer: ContractOffer, accept: bool, price_b: float | None) -> ContractOutcome:
    if not accept:
        return ContractOutcome(0.0, 0.0, 0.0, 0.0)
    if price_b is None or price_b < 0:
        raise ValueError("an accepted contract needs a nonnegative retail price")
    q = params.quantity(price_b)
    pay = offer.payment(q)
    profit_a = pay - params.c_a * q
    profit_b = price_b * q - pay
    eff = (profit_a + profit_b) / params.integrated_optimum
    return ContractOutcome(profit_a, profit_b, eff, q)


def retailer_best_profit(params: ContractParams, offer: ContractOffer) -> float:
    p = params.best_retail_price(offer.unit_price)
    q = params.quantity(p)
    return p * q - offer.payment(q)


def rational_offer(params: ContractParams, framing: Framing) -> ContractOffer:
    """Marginal-cost unit price with a lump sum extracting the whole channel profit."""
    tpt = ContractOffer.tpt(params.integrated_optimum, params.c_a)
    return tpt if framing == "TPT" else tpt.cash_equivalent()
