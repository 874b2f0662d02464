from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bomsim.sampling import (
    SamplingConfig,
    apply_config,
    min_p_filter,
    sample,
    temperature_transform,
    top_k_filter,
    top_p_filter,
)

dists = st.lists(st.floats(0.001, 1.0), min_size=1, max_size=12).map(lambda v: np.array(v) / np.sum(v))
configs = st.one_of(
    st.builds(SamplingConfig, st.floats(0.1, 5.0)),
    st.builds(SamplingConfig, st.floats(0.1, 5.0), st.just("top_p"), st.floats(0.05, 1.0)),
    st.builds(SamplingConfig, st.floats(0.1, 5.0), st.just("min_p"), st.floats(0.01, 0.99)),
    st.builds(SamplingConfig, st.floats(0.1, 5.0), st.just("top_k"), st.integers(1, 20)),
)


class TestHandComputed:
    def test_temperature_two_outcomes(self):
        out = temperature_transform([0.7, 0.3], 2.0)
        expect = math.sqrt(0.7) / (math.sqrt(0.7) + math.sqrt(0.3))
        assert out[0] == pytest.approx(expect, abs=1e-12)
        assert out == pytest.approx([0.604, 0.396], abs=1e-3)

    def test_top_p(self):
        assert top_p_filter([0.5, 0.3, 0.2], 0.7) == pytest.approx([0.625, 0.375, 0.0], abs=1e-3)

    def test_min_p(self):
        assert min_p_filter([0.6, 0.3, 0.1], 0.25) == pytest.approx([2 / 3, 1 / 3, 0.0], abs=1e-3)

    def test_top_k(self):
        assert top_k_filter([0.5, 0.3, 0.2], 2) == pytest.approx([0.625, 0.375, 0.0], abs=1e-3)

    def test_top_p_boundary_tie_includes_token(self):
        # cumulative mass reaches exactly 0.8 at the second token
        out = top_p_filter([0.5, 0.3, 0.2], 0.8)
        assert out[2] == 0.0 and out[1] > 0

    def test_low_temperature_sharpens(self):
        out = temperature_transform([0.4, 0.35, 0.25], 0.05)
        assert out[0] > 0.9


class TestIdentities:
    @given(dists)
    def test_unit_temperature(self, p):
        assert np.allclose(temperature_transform(p, 1.0), p, atol=1e-15)

    @given(dists)
    def test_top_p_one(self, p):
        assert np.allclose(top_p_filter(p, 1.0), p, atol=1e-15)

    @given(dists)
    def test_top_k_full(self, p):
        assert np.allclose(top_k_filter(p, p.size), p, atol=1e-15)
        assert np.allclose(top_k_filter(p, p.size + 5), p, atol=1e-15)

    @given(dists)
    def test_min_p_tiny(self, p):
        assert np.allclose(min_p_filter(p, 1e-9), p, atol=1e-15)


class TestProperties:
    @given(dists, configs)
    def test_output_is_distribution_on_subset(self, p, cfg):
        out = apply_config(p, cfg)
        assert np.all(out >= 0)
        assert abs(out.sum() - 1) <= 1e-12
        assert np.all((out > 0) <= (p > 0))

    @given(dists, configs)
    def test_argmax_invariant(self, p, cfg):
        assert np.argmax(apply_config(p, cfg)) == np.argmax(p)


class TestConfig:
    @pytest.mark.parametrize("kwargs", [
        {"temperature": 0},
        {"temperature": 1, "rule": "top_p", "threshold": 0},
        {"temperature": 1, "rule": "top_p", "threshold": 1.2},
        {"temperature": 1, "rule": "min_p", "threshold": 1.0},
        {"temperature": 1, "rule": "top_k", "threshold": 0},
        {"temperature": 1, "rule": "top_k", "threshold": 2.5},
        {"temperature": 1, "rule": "none", "threshold": 0.5},
        {"temperature": 1, "rule": "top_p"},
        {"temperature": 1, "rule": "beam", "threshold": 2},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            SamplingConfig(**kwargs)

    @given(configs)
    def test_round_trip_and_single_rule(self, cfg):
        assert SamplingConfig.from_dict(cfg.to_dict()) == cfg
        params = cfg.request_params()
        assert sum(k in params for k in ("top_p", "min_p", "top_k")) <= 1
        assert params["temperature"] == cfg.temperature

    def test_hash_stable(self):
        a = SamplingConfig(1.5, "top_k", 10)
        assert a.config_hash() == SamplingConfig(1.5, "top_k", 10).config_hash()
        assert a.config_hash() != SamplingConfig(1.5, "top_k", 30).config_hash()


def test_sampling_frequencies_within_three_sigma():
    rng = np.random.default_rng(2024)
    base = np.array([0.4, 0.25, 0.15, 0.1, 0.06, 0.04])
    n = 100_000
    for cfg in (SamplingConfig(1.7), SamplingConfig(0.7, "top_p", 0.8), SamplingConfig(2.0, "min_p", 0.2),
                SamplingConfig(1.0, "top_k", 3)):
        target = apply_config(base, cfg)
        counts = np.bincount([sample(target, rng) for _ in range(n)], minlength=base.size)
        sigma = np.sqrt(n * target * (1 - target))
        assert np.all(np.abs(counts - n * target) <= 3 * sigma + 1e-9), cfg.label


def test_sample_never_returns_zero_mass_index():
    rng = np.random.default_rng(1)
    p = top_k_filter([0.5, 0.3, 0.2], 1)
    assert {sample(p, rng) for _ in range(200)} == {0}


@settings(max_examples=50)
@given(st.lists(st.floats(-1, 1), min_size=1, max_size=5))
def test_rejects_invalid_distributions(v):
    arr = np.array(v)
    if np.all(arr >= 0) and arr.sum() > 0:
        return
    with pytest.raises(ValueError):
        apply_config(arr, SamplingConfig())
