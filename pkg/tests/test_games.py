from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bomsim.games import auctions, beer_game, capacity, contract, forecasting, newsvendor, queueing
from oracles import brute_force_newsvendor, dice_pmf_enumerated, mc_reserve


class TestNewsvendor:
    def test_dice_pmf_matches_enumeration(self):
        assert newsvendor.dice_demand_pmf(3) == dice_pmf_enumerated(3)
        assert newsvendor.dice_demand_pmf(3)[10] == Fraction(27, 216)

    def test_dice_optimum_is_ten(self):
        pmf = newsvendor.dice_demand_pmf(3)
        assert newsvendor.optimal_discrete_order(pmf, 2, 1) == 10
        # 10 and 11 tie in expected profit; the smaller is returned
        assert newsvendor.expected_profit(pmf, 10, 2, 1) == pytest.approx(newsvendor.expected_profit(pmf, 11, 2, 1))

    def test_fractile_optima(self):
        p = newsvendor.ProfitNewsvendorParams()
        assert p.optimal_order("high") == 225
        assert p.optimal_order("low") == 75

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.integers(1, 20), min_size=1, max_size=8), st.integers(2, 20), st.data())
    def test_matches_brute_force(self, weights, price, data):
        cost = data.draw(st.integers(1, price - 1))
        total = sum(weights)
        pmf = {3 * i + 1: Fraction(w, total) for i, w in enumerate(weights)}
        got = newsvendor.optimal_discrete_order(pmf, Fraction(price), Fraction(cost))
        assert got == brute_force_newsvendor(pmf, Fraction(price), Fraction(cost))

    def test_framing_equivalence_full_grid(self):
        for q in range(0, 21):
            for d in range(3, 19):
                o = newsvendor.payment_scheme_payoff("O", q, d)
                c = newsvendor.payment_scheme_payoff("C", q, d)
                assert o == c

    def test_invalid_pmf(self):
        with pytest.raises(ValueError):
            newsvendor.optimal_discrete_order({1: Fraction(1, 2)}, 2, 1)
        with pytest.raises(ValueError):
            newsvendor.PaymentSchemeParams(p=1, c=1)


class TestBeerGame:
    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_flow_conservation(self, seed):
        rng = np.random.default_rng(seed)
        params = beer_game.BeerGameParams()
        state = beer_game.BeerState.initial(params)
        for _ in range(20):
            before = state.units_in_system()
            orders = [int(x) for x in rng.integers(0, 15, 4)]
            res = beer_game.beer_game_step(state, orders, int(rng.integers(0, 9)), params)
            assert res.production - res.served == pytest.approx(res.state.units_in_system() - before)
            assert all(c >= 0 for c in res.costs)
            assert all(v >= 0 for v in res.state.inventory)
            state = res.state

    def test_lags_and_costs_validated(self):
        with pytest.raises(ValueError):
            beer_game.BeerGameParams(order_lag=0)
        with pytest.raises(ValueError):
            beer_game.BeerGameParams(holding_cost=-1)

    def test_oscillation(self):
        osc = beer_game.order_oscillation({"retailer": [4, 4, 4], "factory": [0, 8, 0]})
        assert osc["retailer"] == 0 and osc["factory"] == pytest.approx(64 / 3)


class TestAuctions:
    def test_cube_root_distribution(self):
        dist = auctions.CubeRoot()
        assert dist.ppf(0.5) == pytest.approx(12.5)
        draws = dist.sample(np.random.default_rng(0), 1_000_000)
        assert draws.min() >= 0 and draws.max() <= 100
        assert abs(draws.mean() - 25) < 0.5
        assert dist.cdf(12.5) == pytest.approx(0.5)

    def test_optimal_reserve(self):
        assert auctions.optimal_reserve(auctions.CubeRoot()) == pytest.approx(42.1875, abs=1e-4)
        assert auctions.optimal_reserve(auctions.Uniform(0, 100)) == pytest.approx(50, abs=1e-4)

    def test_reserve_monte_carlo_oracle(self):
        draws = auctions.CubeRoot().sample(np.random.default_rng(1), 1_000_000)
        assert abs(mc_reserve(draws) - auctions.optimal_reserve(auctions.CubeRoot())) < 0.5

    @given(st.lists(st.floats(0, 100), min_size=1, max_size=10), st.floats(0, 100), st.floats(0, 100))
    def test_revenue_monotone_while_selling(self, values, r1, r2):
        lo, hi = sorted((r1, r2))
        sold_hi, rev_hi = auctions.second_price_reserve_outcome(hi, values)
        sold_lo, rev_lo = auctions.second_price_reserve_outcome(lo, values)
        if sold_hi:
            assert sold_lo and rev_hi >= rev_lo

    @given(st.lists(st.floats(0, 100), min_size=1, max_size=5))
    def test_rival_bids_two_thirds(self, rivals):
        out = auctions.first_price_regret_outcome(50.0, 80.0, rivals, "both", np.random.default_rng(0))
        assert out.rival_bids == tuple(2 * v / 3 for v in rivals)
        assert auctions.nash_bid(90.0) == 60.0

    def test_regret_feedback(self):
        lose = auctions.first_price_regret_outcome(30.0, 80.0, [60.0], "loser")
        assert not lose.won and lose.loser_regret == pytest.approx(40.0) and lose.winner_regret is None
        win = auctions.first_price_regret_outcome(50.0, 80.0, [60.0], "both")
        assert win.won and win.winner_regret == pytest.approx(10.0) and win.payoff == 30.0

    def test_tie_needs_rng(self):
        with pytest.raises(ValueError):
            auctions.first_price_regret_outcome(40.0, 80.0, [60.0], "loser")


class TestContract:
    def test_integrated_optimum(self):
        p = contract.ContractParams()
        assert p.integrated_optimum == 2500 and p.integrated_price == 50
        prices = np.linspace(0, 100, 10001)
        grid = prices * np.maximum(100 - prices, 0)
        assert grid.max() == pytest.approx(2500) and prices[grid.argmax()] == pytest.approx(50)

    def test_rational_offer_efficiency_one(self):
        p = contract.ContractParams()
        for framing in ("TPT", "QD"):
            offer = contract.rational_offer(p, framing)
            out = contract.contract_stage_game(p, offer, True, p.best_retail_price(offer.unit_price))
            assert abs(out.efficiency - 1.0) < 1e-9

    @given(st.floats(0, 3000), st.floats(0, 90), st.floats(0, 100))
    def test_cash_equivalent_profits_identical(self, fee, w, price_b):
        p = contract.ContractParams()
        tpt = contract.ContractOffer.tpt(fee, w)
        qd = tpt.cash_equivalent()
        a = contract.contract_stage_game(p, tpt, True, price_b)
        b = contract.contract_stage_game(p, qd, True, price_b)
        assert (a.profit_a, a.profit_b, a.efficiency) == (b.profit_a, b.profit_b, b.efficiency)
        assert qd.cash_equivalent() == tpt

    @given(st.floats(0, 2500), st.floats(0, 100), st.floats(0, 100))
    def test_efficiency_bounded(self, fee, w, price_b):
        p = contract.ContractParams()
        out = contract.contract_stage_game(p, contract.ContractOffer.tpt(fee, w), True, price_b)
        assert out.efficiency <= 1.0 + 1e-9

    def test_rejection_zero(self):
        out = contract.contract_stage_game(contract.ContractParams(), contract.ContractOffer.qd(10, 100), False, None)
        assert out == contract.ContractOutcome(0.0, 0.0, 0.0, 0.0)


class TestQueue:
    def test_calibration(self):
        p = queueing.QueueParams()
        assert p.prior_expected_buy(1) == pytest.approx(4.75)
        assert p.endowment == 4.0
        assert p.prior_expected_buy(4) == pytest.approx(4.0)
        assert p.buy_payoff("high", 1) == pytest.approx(8.75)

    def test_wait_rule(self):
        assert queueing.wait_time([]) == 1
        assert queueing.wait_time([1, 0, 1]) == 3

    def test_observation_hides_quality_when_uninformed(self):
        obs, _, _ = queueing.queue_round(queueing.QueueParams(), 2, False, "high", 2, [1])
        assert "high" not in obs.render()


class TestForecast:
    def test_alpha_star(self):
        assert forecasting.alpha_star(0) == 0.0
        assert forecasting.alpha_star(16) == pytest.approx(0.9443, abs=1e-4)
        assert round(forecasting.alpha_star(16), 2) == 0.94

    @given(st.floats(0, 1e4), st.floats(0, 1e4))
    def test_alpha_star_monotone_bounded(self, a, b):
        lo, hi = sorted((a, b))
        assert 0 <= forecasting.alpha_star(lo) <= forecasting.alpha_star(hi) < 1
        if hi > lo and hi - lo > 1e-6 * hi:
            assert forecasting.alpha_star(lo) < forecasting.alpha_star(hi)

    def test_change_to_noise(self):
        assert forecasting.ForecastParams.for_condition("unstable").change_to_noise == 16

    def test_stable_variance(self):
        params = forecasting.ForecastParams(c=0, n=10, history=50_000, horizon=50_000)
        d = forecasting.forecast_series(params, np.random.default_rng(0))
        assert abs(d.var() - 100) < 5


class TestCapacity:
    def test_known_demand_optimum(self):
        p = capacity.CapacityGameParams()
        ks = np.arange(0, 501)
        profits = [capacity.capacity_game_payoffs(p, k, 250)[0] for k in ks]
        assert ks[int(np.argmax(profits))] == 250

    def test_demand_truncated(self):
        assert capacity.CapacityGameParams().demand(10, -75) == 0.0

    def test_no_interior_optimum_rejected(self):
        with pytest.raises(ValueError):
            capacity.CapacityGameParams(capacity_cost=50)


def test_alpha_star_closed_form():
    w = 16
    assert forecasting.alpha_star(w) == pytest.approx(2 / (1 + math.sqrt(1 + 4 / w)))
