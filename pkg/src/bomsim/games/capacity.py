"""Capacity investment with a cheap-talk demand forecast."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class CapacityGameParams:
    xi_lo: int = 100
    xi_hi: int = 400
    eps_lo: int = -75
    eps_hi: int = 75
    capacity_cost: float = 20.0
    supplier_margin: float = 40.0
    manufacturer_margin: float = 40.0

    def __post_init__(self) -> None:
        if self.xi_lo > self.xi_hi or self.eps_lo > self.eps_hi:
            raise ValueError("empty forecast or noise range")
        if self.capacity_cost < 0:
            raise ValueError("capacity cost must be nonnegative")
        if self.supplier_margin <= self.capacity_cost:
            # no interior optimum: building capacity never pays
            raise ValueError("supplier margin must exceed capacity cost")

    def draw(self, rng: np.random.Generator) -> tuple[int, int]:
        xi = int(rng.integers(self.xi_lo, self.xi_hi + 1))
        eps = int(rng.integers(self.eps_lo, self.eps_hi + 1))
        return xi, eps

    def demand(self, xi: float, eps: float) -> float:
        # negative demand is truncated at zero
        return max(xi + eps, 0.0)

    @property
    def critical_fractile(self) -> float:
        return (self.supplier_margin - self.capacity_cost) / self.supplier_margin


def capacity_game_payoffs(params: CapacityGameParams, capacity: float, demand: float) -> tuple[float, float]:
    """(supplier profit, manufacturer profit) for capacity K and realized demand."""
    if capacity < 0:
        raise ValueError("capacity must be nonnegative")
    sales = min(max(demand, 0.0), capacity)
    supplier = params.supplier_margin * sales - params.capacity_cost * capacity
    manufacturer = params.manufacturer_margin * sales
    return supplier, manufacturer
