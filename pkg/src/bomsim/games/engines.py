"""Round-by-round engines for the nine studies.

Each engine is written as a generator per round: it yields a ``Query`` for
every decision it needs, receives the parsed value back, and finally returns
a ``RoundResult``. The public ``next_query`` / ``submit`` / ``end_round`` API
wraps that generator so the session driver never sees engine internals.
"""

from __future__ import annotations

import dataclasses
from typing import Any, Generator, Mapping

import numpy as np

from ..protocol import EngineError, Query, RoundResult, format_number as fmt
from .auctions import CubeRoot, Uniform, first_price_regret_outcome, second_price_reserve_outcome
from .beer_game import BEER_ROLES, BeerGameParams, BeerState, beer_game_step
from .capacity import CapacityGameParams, capacity_game_payoffs
from .contract import ContractOffer, ContractParams, contract_stage_game
from .forecasting import FORECAST_CONDITIONS, ForecastParams, forecast_series
from .newsvendor import PaymentSchemeParams, ProfitNewsvendorParams, payment_scheme_payoff, newsvendor_profit
from .queueing import INFORMED_SHARE, QueueParams, queue_round, wait_time

RoundGen = Generator[Query, float, RoundResult]

ORDER_CAP = 1000.0


@dataclasses.dataclass(frozen=True)
class ReserveAuctionParams:
    scale: float = 100.0

    @property
    def distribution(self) -> CubeRoot:
        return CubeRoot(self.scale)


@dataclasses.dataclass(frozen=True)
class RegretAuctionParams:
    value_lo: float = 0.0
    value_hi: float = 100.0
    n_rivals: int = 2

    def __post_init__(self) -> None:
        if self.n_rivals < 1:
            raise ValueError("need at least one rival")
        if not (0 <= self.value_lo < self.value_hi):
            raise ValueError("invalid value range")

    @property
    def distribution(self) -> Uniform:
        return Uniform(self.value_lo, self.value_hi)


class BaseEngine:
    experiment_id = ""
    roles: tuple[str, ...] = ("subject",)

    def __init__(self, params: Any, n_rounds: int) -> None:
        if n_rounds < 1:
            raise ValueError("n_rounds must be positive")
        self.params = params
        self.n_rounds = n_rounds
        self.condition = ""
        self.session_id = 0
        self.history: dict[str, list[str]] = {}
        self._gen: RoundGen | None = None
        self._pending: Query | None = None
        self._result: RoundResult | None = None
        self.round_index = 0

    # lifecycle -----------------------------------------------------------

    def start(self, condition: str, session_id: int, rng: np.random.Generator) -> None:
        self.check_condition(condition)
        self.condition = condition
        self.session_id = session_id
        self.rng = rng
        self.history = {r: [] for r in self.roles}
        self.round_index = 0
        self.setup()

    def check_condition(self, condition: str) -> None:
        pass

    def setup(self) -> None:
        pass

    def round_condition(self, round_index: int) -> str:
        return self.condition

    def begin_round(self, round_index: int) -> None:
        if round_index != self.round_index + 1 or round_index > self.n_rounds:
            raise EngineError(f"round {round_index} out of sequence")
        self.round_index = round_index
        self._result = None
        self._gen = self.play(round_index)
        self._pending = self._advance(None, first=True)

    def _advance(self, value: float | None, first: bool = False) -> Query | None:
        assert self._gen is not None
        try:
            return next(self._gen) if first else self._gen.send(value)  # type: ignore[arg-type]
        except StopIteration as stop:
            self._result = stop.value
            return None

    def next_query(self) -> Query | None:
        return self._pending

    def submit(self, query: Query, value: float) -> None:
        if self._pending is None or query is not self._pending:
            raise EngineError("submit does not answer the pending query")
        if not query.accepts(value):
            raise EngineError(f"value {value} outside the range for slot {query.slot!r}")
        self._pending = self._advance(query.coerce(value))

    def end_round(self) -> RoundResult:
        if self._pending is not None or self._result is None:
            raise EngineError("round ended before all queries were answered")
        result = self._result
        for role, line in result.feedback.items():
            self.history[role].append(line)
        self._gen = None
        return result

    # helpers -------------------------------------------------------------

    def play(self, r: int) -> RoundGen:
        raise NotImplementedError

    def query(self, role: str, slot: str, question: str, **kw: Any) -> Query:
        kw.setdefault("condition", self.round_condition(self.round_index))
        return Query(
            role=role,
            slot=slot,
            round_index=self.round_index,
            question=question,
            history=tuple(self.history[role]),
            requires_history=self.round_index > 1,
            **kw,
        )

    def round_header(self, r: int) -> str:
        return f"Round {r} of {self.n_rounds}."


# --- 1. payment scheme newsvendor -----------------------------------------


class PaymentSchemeEngine(BaseEngine):
    experiment_id = "payment_scheme"

    def check_condition(self, condition: str) -> None:
        if condition not in ("O", "C"):
            raise ValueError(f"payment_scheme condition must be O or C, got {condition!r}")

    def setup(self) -> None:
        p: PaymentSchemeParams = self.params
        self.demands = self.rng.integers(1, 7, size=(self.n_rounds, p.n_dice)).sum(axis=1).tolist()

    def play(self, r: int) -> RoundGen:
        p: PaymentSchemeParams = self.params
        q = yield self.query(
            "subject",
            "order",
            "How many units do you order this round?",
            observation=self.round_header(r),
            values={"scheme": self.condition, "p": p.p, "c": p.c, "n_dice": p.n_dice},
            lo=0.0,
            hi=ORDER_CAP,
            integer=True,
        )
        d = self.demands[r - 1]
        profit = payment_scheme_payoff(self.condition, q, d, p.p, p.c)  # type: ignore[arg-type]
        line = f"Round {r}: you ordered {fmt(q)}, demand was {d}, your profit was {fmt(profit)}."
        return RoundResult({"subject": profit}, {"subject": {"demand": float(d)}}, {"subject": line})


# --- 2. beer game -----------------------------------------------------------


class BeerGameEngine(BaseEngine):
    experiment_id = "beer_game"
    roles = BEER_ROLES

    def check_condition(self, condition: str) -> None:
        if condition not in ("base", "share"):
            raise ValueError(f"beer_game condition must be base or share, got {condition!r}")

    def setup(self) -> None:
        p: BeerGameParams = self.params
        self.demands = p.demand_stream(self.rng, self.n_rounds)
        self.state = BeerState.initial(p)

    def _position(self, i: int) -> str:
        s = self.state
        return (
            f"{BEER_ROLES[i]}: inventory {fmt(s.inventory[i])}, backlog {fmt(s.backlog[i])}"
        )

    def _observation(self, i: int, r: int) -> str:
        s = self.state
        lines = [
            self.round_header(r),
            f"Your inventory is {fmt(s.inventory[i])} and your backlog is {fmt(s.backlog[i])}.",
            f"Last round you received an order of {fmt(s.last_incoming[i])} and a shipment of "
            f"{fmt(s.last_arrival[i])}. Units on the way to you: {fmt(sum(s.ship_pipeline[i]))}.",
        ]
        if self.condition == "share":
            lines.append("Current positions of all four roles: " + "; ".join(self._position(j) for j in range(4)) + ".")
        return "\n".join(lines)

    def play(self, r: int) -> RoundGen:
        orders: list[float] = []
        s = self.state
        for i, role in enumerate(BEER_ROLES):
            o = yield self.query(
                role,
                "order",
                "How many units do you order from your supplier this round?",
                observation=self._observation(i, r),
                values={
                    "inventory": s.inventory[i],
                    "backlog": s.backlog[i],
                    "incoming": s.last_incoming[i],
                    "arrival": s.last_arrival[i],
                    "in_transit": sum(s.ship_pipeline[i]),
                },
                lo=0.0,
                hi=ORDER_CAP,
                integer=True,
            )
            orders.append(o)
        try:
            step = beer_game_step(self.state, orders, self.demands[r - 1], self.params)
        except ValueError as exc:
            raise EngineError(str(exc)) from exc
        self.state = step.state
        payoffs = {role: -step.costs[i] for i, role in enumerate(BEER_ROLES)}
        outcomes = {
            role: {"cost": step.costs[i], "inventory": step.state.inventory[i], "backlog": step.state.backlog[i]}
            for i, role in enumerate(BEER_ROLES)
        }
        feedback = {}
        for i, role in enumerate(BEER_ROLES):
            line = (
                f"Round {r}: you ordered {fmt(orders[i])}, received an order of {fmt(step.state.last_incoming[i])}, "
                f"ended with inventory {fmt(step.state.inventory[i])} and backlog {fmt(step.state.backlog[i])}, "
                f"cost {fmt(step.costs[i])}."
            )
            if self.condition == "share":
                line += " All roles: " + "; ".join(self._position(j) for j in range(4)) + "."
            feedback[role] = line
        return RoundResult(payoffs, outcomes, feedback)


# --- 3. reserve-price auction ---------------------------------------------


class ReserveAuctionEngine(BaseEngine):
    experiment_id = "reserve_auction"

    def check_condition(self, condition: str) -> None:
        if condition not in ("1", "4", "7", "10"):
            raise ValueError(f"reserve_auction condition must be one of 1, 4, 7, 10, got {condition!r}")

    def setup(self) -> None:
        self.n_bidders = int(self.condition)
        dist = self.params.distribution
        self.values = dist.sample(self.rng, (self.n_rounds, self.n_bidders))

    def play(self, r: int) -> RoundGen:
        scale = self.params.scale
        reserve = yield self.query(
            "subject",
            "reserve",
            "What reserve price do you set this round?",
            observation=f"{self.round_header(r)} There are {self.n_bidders} bidders in this auction.",
            values={"n_bidders": self.n_bidders, "scale": scale},
            lo=0.0,
            hi=scale,
        )
        vals = [float(v) for v in self.values[r - 1]]
        sold, revenue = second_price_reserve_outcome(reserve, vals)
        if sold:
            line = f"Round {r}: reserve {fmt(reserve)}, the item sold for {fmt(revenue)}."
        else:
            line = f"Round {r}: reserve {fmt(reserve)}, no bid reached the reserve and the item did not sell."
        outcomes = {"subject": {"sold": float(sold), "max_value": max(vals)}}
        return RoundResult({"subject": revenue}, outcomes, {"subject": line})


# --- 4. first-price auction with regret feedback ----------------------------


class RegretAuctionEngine(BaseEngine):
    experiment_id = "regret_auction"

    def check_condition(self, condition: str) -> None:
        if condition not in ("loser", "both"):
            raise ValueError(f"regret_auction condition must be loser or both, got {condition!r}")

    def setup(self) -> None:
        p: RegretAuctionParams = self.params
        draws = p.distribution.sample(self.rng, (self.n_rounds, 1 + p.n_rivals))
        self.own = draws[:, 0]
        self.rivals = draws[:, 1:]

    def play(self, r: int) -> RoundGen:
        p: RegretAuctionParams = self.params
        value = float(self.own[r - 1])
        bid = yield self.query(
            "subject",
            "bid",
            "What is your bid this round?",
            observation=f"{self.round_header(r)} Your value for the item is {fmt(value)}.",
            values={"value": value},
            lo=0.0,
            hi=p.value_hi,
        )
        out = first_price_regret_outcome(bid, value, [float(v) for v in self.rivals[r - 1]], self.condition, self.rng)  # type: ignore[arg-type]
        if out.won:
            line = f"Round {r}: value {fmt(value)}, you bid {fmt(bid)} and won, earning {fmt(out.payoff)}."
            if out.winner_regret is not None:
                line += (
                    f" The second-highest bid was {fmt(out.second_highest)}; you left {fmt(out.winner_regret)} on the table."
                )
        else:
            line = (
                f"Round {r}: value {fmt(value)}, you bid {fmt(bid)} and lost. The winning bid was "
                f"{fmt(out.winning_bid)}; you missed {fmt(out.loser_regret)}."
            )
        outcomes = {"subject": {"value": value, "won": float(out.won)}}
        return RoundResult({"subject": out.payoff}, outcomes, {"subject": line})


# --- 5. contracting ---------------------------------------------------------


class ContractEngine(BaseEngine):
    experiment_id = "contract"
    roles = ("A", "B")

    def check_condition(self, condition: str) -> None:
        if condition not in ("TPT", "QD"):
            raise ValueError(f"contract condition must be TPT or QD, got {condition!r}")

    def play(self, r: int) -> RoundGen:
        p: ContractParams = self.params
        head = self.round_header(r)
        cap_price = p.a / p.b
        cap_fee = 2.0 * p.integrated_optimum
        if self.condition == "TPT":
            first = yield self.query("A", "fixed_fee", "What fixed fee do you charge?", observation=head,
                                     values={}, lo=0.0, hi=cap_fee)
            second = yield self.query("A", "wholesale", "What wholesale price per unit do you charge?",
                                      observation=f"{head} Your fixed fee is {fmt(first)}.",
                                      values={"fixed_fee": first}, lo=0.0, hi=cap_price)
            offer = ContractOffer.tpt(first, second)
            terms = f"fixed fee {fmt(first)} plus {fmt(second)} per unit"
        else:
            first = yield self.query("A", "qd_x", "What per-unit price x do you set in the discount schedule?",
                                     observation=head, values={}, lo=0.0, hi=cap_price)
            second = yield self.query("A", "qd_y", "What amount y do you spread over the order in the schedule?",
                                      observation=f"{head} Your per-unit price x is {fmt(first)}.",
                                      values={"qd_x": first}, lo=0.0, hi=cap_fee)
            offer = ContractOffer.qd(first, second)
            terms = f"average unit price {fmt(first)} + {fmt(second)}/q for an order of q units"
        offer_values = {"lump_sum": offer.lump_sum, "unit_price": offer.unit_price, "framing": self.condition}
        accept = yield self.query("B", "accept", "Do you accept the contract? Answer 1 to accept or 0 to reject.",
                                  observation=f"{head} Player A offers: {terms}.", values=offer_values,
                                  choices=(0.0, 1.0))
        price_b = None
        if accept:
            price_b = yield self.query("B", "price_b", "What retail price do you set?",
                                       observation=f"{head} You accepted: {terms}.", values=offer_values,
                                       lo=0.0, hi=cap_price)
        out = contract_stage_game(p, offer, bool(accept), price_b)
        if accept:
            common = f"Round {r}: contract {terms} accepted, retail price {fmt(price_b)}, quantity sold {fmt(out.quantity)}."
        else:
            common = f"Round {r}: contract {terms} rejected, no sales."
        feedback = {
            "A": f"{common} Your profit {fmt(out.profit_a)}.",
            "B": f"{common} Your profit {fmt(out.profit_b)}.",
        }
        outcomes = {"A": {"efficiency": out.efficiency}, "B": {"quantity": out.quantity}}
        return RoundResult({"A": out.profit_a, "B": out.profit_b}, outcomes, feedback)


# --- 6. queueing ---------------------------------------------------------


class QueueEngine(BaseEngine):
    experiment_id = "queue"
    roles = ("c1", "c2", "c3", "c4")

    def check_condition(self, condition: str) -> None:
        if condition not in INFORMED_SHARE:
            raise ValueError(f"queue condition must be q00 or q50, got {condition!r}")
        if self.params.n_consumers != len(self.roles):
            raise ValueError("queue engine is built for four consumers")

    def play(self, r: int) -> RoundGen:
        p: QueueParams = self.params
        n = p.n_consumers
        quality = "high" if self.rng.random() < p.prior_high else "low"
        n_informed = int(round(INFORMED_SHARE[self.condition] * n))
        informed_idx = set(self.rng.choice(n, size=n_informed, replace=False).tolist()) if n_informed else set()
        decisions: list[int] = []
        outcomes: dict[str, dict[str, float]] = {}
        payoffs: dict[str, float] = {}
        for i, role in enumerate(self.roles):
            informed = i in informed_idx
            w = wait_time(decisions)
            obs, pay_buy, pay_skip = queue_round(p, i + 1, informed, quality, w, decisions)
            buy = yield self.query(
                role,
                "buy",
                "Do you place an order? Answer 1 to order or 0 to keep the endowment.",
                observation=f"{self.round_header(r)}\n{obs.render()}",
                values={"informed": int(informed), "quality": quality if informed else None, "wait": w,
                        "position": i + 1, "predecessors": tuple(decisions)},
                choices=(0.0, 1.0),
            )
            decisions.append(int(buy))
            payoffs[role] = pay_buy if buy else pay_skip
            outcomes[role] = {"wait": float(w), "informed": float(informed)}
        feedback = {
            role: f"Round {r}: the product was {quality} quality; you {'ordered' if decisions[i] else 'did not order'}"
            f" and earned {fmt(payoffs[role])}."
            for i, role in enumerate(self.roles)
        }
        return RoundResult(payoffs, outcomes, feedback)


# --- 7. forecasting -------------------------------------------------------


class ForecastEngine(BaseEngine):
    experiment_id = "forecast"

    def check_condition(self, condition: str) -> None:
        if condition not in FORECAST_CONDITIONS:
            raise ValueError(f"forecast condition must be stable or unstable, got {condition!r}")

    def condition_params(self) -> ForecastParams:
        base: ForecastParams = self.params
        c, n = FORECAST_CONDITIONS[self.condition]
        return dataclasses.replace(base, c=c, n=n, horizon=self.n_rounds)

    def setup(self) -> None:
        fp = self.condition_params()
        self.series = forecast_series(fp, self.rng)
        self.n_history = fp.history
        self.past = self.series[: self.n_history]
        self.last_forecast: float | None = None

    def play(self, r: int) -> RoundGen:
        t = self.n_history + r - 1  # index of the period being forecast
        values: dict[str, Any] = {
            "period": t + 1,
            "history_mean": float(np.mean(self.past)),
            "last_demand": float(self.series[t - 1]),
            "last_forecast": self.last_forecast,
        }
        if r == 1:
            values["history"] = tuple(float(x) for x in self.past)
            shown = ", ".join(fmt(round(float(x), 1)) for x in self.past)
            observation = f"Demand in periods 1 to {self.n_history}: {shown}."
        else:
            observation = f"Demand in period {t} was {fmt(round(float(self.series[t - 1]), 1))}."
        f = yield self.query(
            "subject",
            "forecast",
            f"What is your forecast of demand in period {t + 1}?",
            observation=f"{self.round_header(r)} {observation}",
            values=values,
            lo=-1e9,
            hi=1e9,
        )
        d = float(self.series[t])
        self.last_forecast = f
        line = f"Period {t + 1}: you forecast {fmt(round(f, 2))}, demand was {fmt(round(d, 1))}."
        return RoundResult({"subject": -abs(f - d)}, {"subject": {"demand": d}}, {"subject": line})


# --- 8. profit newsvendor -------------------------------------------------


class ProfitNewsvendorEngine(BaseEngine):
    experiment_id = "newsvendor_profit"
    BLOCKS = ("high", "low")

    def check_condition(self, condition: str) -> None:
        if condition != "high+low":
            raise ValueError(f"newsvendor_profit sessions run both products, condition 'high+low', got {condition!r}")

    def block_order(self) -> tuple[str, str]:
        # counterbalanced by session parity
        return self.BLOCKS if self.session_id % 2 == 0 else self.BLOCKS[::-1]

    def round_condition(self, round_index: int) -> str:
        first, second = self.block_order()
        return first if round_index <= self.n_rounds // 2 else second

    def setup(self) -> None:
        p: ProfitNewsvendorParams = self.params
        self.demands = self.rng.integers(p.low_d, p.high_d + 1, size=self.n_rounds).tolist()

    def play(self, r: int) -> RoundGen:
        p: ProfitNewsvendorParams = self.params
        cond = self.round_condition(r)
        cost = p.cost(cond)
        q = yield self.query(
            "subject",
            "order",
            "How many units do you order this round?",
            observation=f"{self.round_header(r)} This round the product sells for {fmt(p.price)} and costs {fmt(cost)} per unit.",
            values={"price": p.price, "cost": cost, "low_d": p.low_d, "high_d": p.high_d},
            lo=0.0,
            hi=float(2 * p.high_d),
            integer=True,
        )
        d = self.demands[r - 1]
        profit = newsvendor_profit(q, d, p.price, cost)
        line = f"Round {r} ({cond} margin product): you ordered {fmt(q)}, demand was {d}, profit {fmt(profit)}."
        return RoundResult({"subject": profit}, {"subject": {"demand": float(d)}}, {"subject": line})


# --- 9. cheap talk capacity game ------------------------------------------


class CheapTalkEngine(BaseEngine):
    experiment_id = "cheap_talk"
    roles = ("manufacturer", "supplier")

    def check_condition(self, condition: str) -> None:
        if condition != "base":
            raise ValueError(f"cheap_talk has a single condition 'base', got {condition!r}")

    def play(self, r: int) -> RoundGen:
        p: CapacityGameParams = self.params
        xi, eps = p.draw(self.rng)
        head = self.round_header(r)
        msg = yield self.query(
            "manufacturer",
            "message",
            "What demand forecast do you report to the supplier?",
            observation=f"{head} Your private demand forecast is {xi}.",
            values={"xi": float(xi)},
            lo=0.0,
            hi=ORDER_CAP,
            integer=True,
        )
        cap = yield self.query(
            "supplier",
            "capacity",
            "How much capacity do you build?",
            observation=f"{head} The manufacturer reports a demand forecast of {fmt(msg)}.",
            values={"message": msg},
            lo=0.0,
            hi=ORDER_CAP,
            integer=True,
        )
        demand = p.demand(xi, eps)
        sup, man = capacity_game_payoffs(p, cap, demand)
        common = f"Round {r}: reported forecast {fmt(msg)}, capacity {fmt(cap)}, demand {fmt(demand)}, sales {fmt(min(demand, cap))}."
        feedback = {"manufacturer": f"{common} Your profit {fmt(man)}.", "supplier": f"{common} Your profit {fmt(sup)}."}
        outcomes = {"manufacturer": {"xi": float(xi), "demand": demand}, "supplier": {"received": msg}}
        return RoundResult({"manufacturer": man, "supplier": sup}, outcomes, feedback)


# --- registry ---------------------------------------------------------------

ENGINES: dict[str, tuple[type[BaseEngine], type]] = {
    "payment_scheme": (PaymentSchemeEngine, PaymentSchemeParams),
    "beer_game": (BeerGameEngine, BeerGameParams),
    "reserve_auction": (ReserveAuctionEngine, ReserveAuctionParams),
    "regret_auction": (RegretAuctionEngine, RegretAuctionParams),
    "contract": (ContractEngine, ContractParams),
    "queue": (QueueEngine, QueueParams),
    "forecast": (ForecastEngine, ForecastParams),
    "newsvendor_profit": (ProfitNewsvendorEngine, ProfitNewsvendorParams),
    "cheap_talk": (CheapTalkEngine, CapacityGameParams),
}


def build_params(experiment_id: str, overrides: Mapping[str, Any] | None = None) -> Any:
    """Parameter record with defaults replaced by ``overrides``; unknown keys are errors."""
    if experiment_id not in ENGINES:
        raise KeyError(experiment_id)
    cls = ENGINES[experiment_id][1]
    overrides = dict(overrides or {})
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(overrides) - names)
    if unknown:
        raise ValueError(f"unknown game parameter(s) for {experiment_id}: {', '.join(unknown)}")
    return cls(**overrides)


def make_engine(experiment_id: str, game_params: Mapping[str, Any] | None, n_rounds: int) -> BaseEngine:
    engine_cls = ENGINES[experiment_id][0]
    return engine_cls(build_params(experiment_id, game_params), n_rounds)


def engine_roles(experiment_id: str) -> tuple[str, ...]:
    return ENGINES[experiment_id][0].roles
