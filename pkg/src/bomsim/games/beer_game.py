"""Four-echelon beer distribution game.

Role 0 is the retailer facing consumer demand, role 3 the factory. The factory
orders from an unconstrained brewery that ships exactly what was ordered once
the order lag has elapsed.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

BEER_ROLES: tuple[str, ...] = ("retailer", "wholesaler", "distributor", "factory")


@dataclass(frozen=True)
class BeerGameParams:
    holding_cost: float = 0.5
    backlog_cost: float = 1.0
    order_lag: int = 2
    ship_lag: int = 2
    demand_lo: int = 0
    demand_hi: int = 8
    initial_inventory: int = 12
    initial_pipeline: int = 4
    n_rounds: int = 48

    def __post_init__(self) -> None:
        if self.order_lag < 1 or self.ship_lag < 1:
            raise ValueError("beer game lags must be >= 1")
        if self.holding_cost < 0 or self.backlog_cost < 0:
            raise ValueError("beer game costs must be >= 0")
        if self.demand_lo < 0 or self.demand_lo > self.demand_hi:
            raise ValueError("invalid consumer demand range")

    def demand_stream(self, rng: np.random.Generator, n_rounds: int | None = None) -> list[int]:
        n = self.n_rounds if n_rounds is None else n_rounds
        return [int(x) for x in rng.integers(self.demand_lo, self.demand_hi + 1, size=n)]


@dataclass
class BeerState:
    inventory: list[float]
    backlog: list[float]
    # ship_pipeline[i][0] arrives at role i next round
    ship_pipeline: list[list[float]]
    # order_pipeline[i][0] reaches role i+1 (or the brewery) next round
    order_pipeline: list[list[float]]
    last_incoming: list[float] = field(default_factory=lambda: [0.0] * 4)
    last_arrival: list[float] = field(default_factory=lambda: [0.0] * 4)
    last_order: list[float] = field(default_factory=lambda: [0.0] * 4)

    @classmethod
    def initial(cls, params: BeerGameParams) -> BeerState:
        pipe = float(params.initial_pipeline)
        return cls(
            inventory=[float(params.initial_inventory)] * 4,
            backlog=[0.0] * 4,
            ship_pipeline=[[pipe] * params.ship_lag for _ in range(4)],
            order_pipeline=[[pipe] * params.order_lag for _ in range(4)],
            last_incoming=[pipe] * 4,
            last_arrival=[pipe] * 4,
            last_order=[pipe] * 4,
        )

    def copy(self) -> BeerState:
        return replace(
            self,
            inventory=list(self.inventory),
            backlog=list(self.backlog),
            ship_pipeline=[list(p) for p in self.ship_pipeline],
            order_pipeline=[list(p) for p in self.order_pipeline],
            last_incoming=list(self.last_incoming),
            last_arrival=list(self.last_arrival),
            last_order=list(self.last_order),
        )

    def units_in_system(self) -> float:
        return float(sum(self.inventory) + sum(sum(p) for p in self.ship_pipeline))


@dataclass(frozen=True)
class BeerStepResult:
    state: BeerState
    costs: list[float]
    served: float
    production: float


def _check_state(state: BeerState, params: BeerGameParams) -> None:
    lengths = {len(state.inventory), len(state.backlog), len(state.ship_pipeline), len(state.order_pipeline)}
    if lengths != {4}:
        raise ValueError("beer state vectors must all have length 4")
    if any(len(p) != params.ship_lag for p in state.ship_pipeline):
        raise ValueError("ship pipeline length disagrees with ship_lag")
    if any(len(p) != params.order_lag for p in state.order_pipeline):
        raise ValueError("order pipeline length disagrees with order_lag")


def beer_game_step(
    state: BeerState, orders: Sequence[float], demand: float, params: BeerGameParams
) -> BeerStepResult:
    """Advance one round. ``orders`` are indexed retailer..factory."""
    _check_state(state, params)
    if len(orders) != 4:
        raise ValueError("beer game needs one order per role")
    if any(o < 0 for o in orders) or demand < 0:
        raise ValueError("orders and demand must be nonnegative")
    s = state.copy()
    for i, o in enumerate(orders):
        s.order_pipeline[i].append(float(o))
        s.last_order[i] = float(o)
    for i in range(4):
        arrival = s.ship_pipeline[i].pop(0)
        s.inventory[i] += arrival
        s.last_arrival[i] = arrival
    incoming = [float(demand)] + [s.order_pipeline[i - 1].pop(0) for i in range(1, 4)]
    production = s.order_pipeline[3].pop(0)
    s.ship_pipeline[3].append(production)
    served = 0.0
    for i in range(4):
        need = s.backlog[i] + incoming[i]
        shipped = min(s.inventory[i], need)
        s.inventory[i] -= shipped
        s.backlog[i] = need - shipped
        s.last_incoming[i] = incoming[i]
        if i == 0:
            served = shipped
        else:
            s.ship_pipeline[i - 1].append(shipped)
    costs = [params.holding_cost * s.inventory[i] + params.backlog_cost * s.backlog[i] for i in range(4)]
    return BeerStepResult(s, costs, served, production)


def order_oscillation(orders: Mapping[str, Sequence[float]]) -> dict[str, float]:
    """Sample variance (n - 1 denominator) of each role's order series."""
    out: dict[str, float] = {}
    for role, series in orders.items():
        arr = np.asarray(series, dtype=float)
        if arr.size < 2:
            raise ValueError(f"role {role!r} has fewer than 2 rounds")
        out[role] = float(arr.var(ddof=1))
    return out
