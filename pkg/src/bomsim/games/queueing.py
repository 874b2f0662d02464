"""Sequential purchase decisions with observable queues and partially informed consumers."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

QUALITIES = ("high", "low")


@dataclass(frozen=True)
class QueueParams:
    v_high: float = 9.0
    v_low: float = 1.0
    price: float = 0.0
    wait_cost: float = 0.25
    endowment: float = 4.0
    prior_high: float = 0.5
    n_consumers: int = 4
    show_decisions: bool = True

    def __post_init__(self) -> None:
        if not (0.0 <= self.prior_high <= 1.0):
            raise ValueError("prior_high must be a probability")
        if self.wait_cost < 0:
            raise ValueError("wait_cost must be nonnegative")
        if self.n_consumers < 1:
            raise ValueError("need at least one consumer")

    def value(self, quality: str) -> float:
        if quality == "high":
            return self.v_high
        if quality == "low":
            return self.v_low
        raise ValueError(f"unknown quality label {quality!r}")

    def buy_payoff(self, quality: str, wait: int) -> float:
        return self.value(quality) - self.price - self.wait_cost * wait

    def prior_expected_buy(self, wait: int) -> float:
        ev = self.prior_high * self.v_high + (1 - self.prior_high) * self.v_low
        return ev - self.price - self.wait_cost * wait


INFORMED_SHARE = {"q00": 0.0, "q50": 0.5}


@dataclass(frozen=True)
class QueueObservation:
    consumer_index: int
    wait: int
    informed: bool
    quality: str | None
    predecessor_decisions: tuple[int, ...] | None

    def render(self) -> str:
        lines = [f"You are consumer {self.consumer_index} in line. Your waiting time if you order is {self.wait}."]
        if self.informed:
            lines.append(f"You know the product quality: it is {self.quality}.")
        else:
            lines.append("You do not know the product quality.")
        if self.predecessor_decisions is not None:
            if self.predecessor_decisions:
                shown = ", ".join("order" if d else "no order" for d in self.predecessor_decisions)
                lines.append(f"Consumers ahead of you chose: {shown}.")
            else:
                lines.append("Nobody is ahead of you.")
        return "\n".join(lines)


def queue_round(
    params: QueueParams,
    consumer_index: int,
    informed: bool,
    quality: str,
    wait: int,
    predecessor_decisions: Sequence[int],
) -> tuple[QueueObservation, float, float]:
    """Observation plus (payoff if buying, payoff if skipping) for one consumer."""
    if not (1 <= consumer_index <= params.n_consumers):
        raise ValueError(f"consumer_index must be in 1..{params.n_consumers}")
    if not (1 <= wait <= params.n_consumers):
        raise ValueError(f"wait must be in 1..{params.n_consumers}")
    buy = params.buy_payoff(quality, wait)
    obs = QueueObservation(
        consumer_index,
        wait,
        informed,
        quality if informed else None,
        tuple(int(d) for d in predecessor_decisions) if params.show_decisions else None,
    )
    return obs, buy, params.endowment


def wait_time(predecessor_decisions: Sequence[int]) -> int:
    """Service wait: one period plus one per customer ahead who ordered."""
    return 1 + sum(1 for d in predecessor_decisions if d)
