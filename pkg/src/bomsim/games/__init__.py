"""Game engines, payoff formulas and normative benchmarks."""

from __future__ import annotations

from .auctions import (
    CubeRoot,
    PointMass,
    Uniform,
    cube_root_cdf,
    cube_root_sample,
    first_price_regret_outcome,
    nash_bid,
    optimal_reserve,
    second_price_reserve_outcome,
)
from .beer_game import BEER_ROLES, BeerGameParams, BeerState, beer_game_step, order_oscillation
from .capacity import CapacityGameParams, capacity_game_payoffs
from .contract import ContractOffer, ContractParams, contract_stage_game, rational_offer
from .engines import ENGINES, build_params, engine_roles, make_engine
from .forecasting import ForecastParams, alpha_star, forecast_series, smoothing_forecasts
from .newsvendor import (
    PaymentSchemeParams,
    ProfitNewsvendorParams,
    dice_demand_pmf,
    optimal_discrete_order,
    payment_scheme_payoff,
    pmf_mean,
    uniform_int_pmf,
)
from .queueing import QueueParams, queue_round

__all__ = [name for name in dir() if not name.startswith("_")]
