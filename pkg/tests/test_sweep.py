from __future__ import annotations

import json
from functools import lru_cache

import pytest

from bomsim.agents.llm import LlmAgent
from bomsim.agents.scripted import LLM_LIKE_FAILURE
from bomsim.fixtures import load_human_fixtures
from bomsim.llm_client import ChatClient, LlmEndpointConfig
from bomsim.sampling import SamplingConfig
from bomsim.sweep import (
    TEMPERATURES,
    CellResult,
    ExperimentCellStats,
    SweepConfig,
    build_grid,
    cell_id,
    first_quartile_band,
    load_state,
    noisy_builder,
    rate_table,
    run_sweep,
)


@lru_cache(maxsize=1)
def humans():
    return load_human_fixtures().filter(experiment="payment_scheme")


def _config(**kw) -> SweepConfig:
    base = dict(experiments=("payment_scheme",), preset="smoke", repetitions=2, seed=11)
    base.update(kw)
    return SweepConfig(**base)


def _tree(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


class TestGrid:
    def test_shape(self):
        grid = build_grid()
        assert len(grid) == 144
        for t in TEMPERATURES:
            cells = [g for g in grid if g.temperature == t]
            assert len(cells) == 16
            assert sum(g.rule == "none" for g in cells) == 1
            assert {g.rule for g in cells} == {"none", "top_p", "min_p", "top_k"}
        assert len({cell_id(i, g) for i, g in enumerate(grid)}) == 144
        assert cell_id(0, grid[0]) == "000-T0.5-default"

    def test_config_round_trip(self):
        cfg = _config()
        assert SweepConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg
        with pytest.raises(ValueError):
            SweepConfig.from_dict({"colour": 1})
        with pytest.raises(ValueError):
            _config(repetitions=0)


def _fake(index: int, cfg: SamplingConfig, dist: float | None, status: str = "ok") -> CellResult:
    stats = ExperimentCellStats(1.0, 1.0, {}, None, dist, 1, 1)
    return CellResult(cell_id(index, cfg), index, cfg.to_dict(), status, {"payment_scheme": stats})


class TestBand:
    def test_picks_four_of_fifteen(self):
        grid = build_grid(temperatures=(1.0,))
        results = [_fake(i, g, float((7 * i) % 16)) for i, g in enumerate(grid)]
        band = first_quartile_band(results)
        rule_cells = sorted((r.mean_distance, r.cell_id) for r in results if r.config.rule != "none")
        assert len(rule_cells) == 15
        assert band == {1.0: [cid for _, cid in rule_cells[:4]]}
        default = next(r for r in results if r.config.rule == "none")
        assert default.cell_id not in band[1.0]

    def test_skips_missing_and_unsupported(self):
        grid = build_grid(temperatures=(2.0,))
        results = [_fake(i, g, None if i % 2 else float(i)) for i, g in enumerate(grid)]
        results[2] = _fake(2, grid[2], 0.0, status="unsupported")
        band = first_quartile_band(results)[2.0]
        assert len(band) == 4 and results[2].cell_id not in band
        assert all(int(c[:3]) % 2 == 0 for c in band)


class TestRunSweep:
    def test_resume_is_bitwise_identical(self, tmp_path):
        cfg = _config(temperatures=(0.5, 3.0))
        builder = noisy_builder(LLM_LIKE_FAILURE)
        full = run_sweep(cfg, tmp_path / "a", builder, humans())
        assert full.complete and len(full.results) == 32
        part = run_sweep(cfg, tmp_path / "b", builder, humans(), max_cells=5)
        assert not part.complete and len(part.results) == 5
        rest = run_sweep(cfg, tmp_path / "b", builder, humans())
        assert rest.complete
        assert _tree(tmp_path / "a") == _tree(tmp_path / "b")
        saved_cfg, saved = load_state(tmp_path / "b")
        assert saved_cfg == cfg and [r.cell_id for r in saved] == [r.cell_id for r in full.results]

    def test_config_mismatch_rejected(self, tmp_path):
        run_sweep(_config(temperatures=(1.0,)), tmp_path, noisy_builder(), None, max_cells=1)
        with pytest.raises(ValueError, match="different"):
            run_sweep(_config(temperatures=(1.0,), repetitions=3), tmp_path, noisy_builder(), None)

    def test_completion_nonincreasing_in_temperature(self, tmp_path):
        cfg = _config(top_p=(), min_p=(), top_k=(), repetitions=3)
        out = run_sweep(cfg, tmp_path, noisy_builder(LLM_LIKE_FAILURE), humans())
        rates = [r.completion_rate for r in out.results]
        assert len(rates) == len(TEMPERATURES)
        assert all(a >= b for a, b in zip(rates, rates[1:]))
        assert rates[0] == 1.0 and rates[-1] < 0.5
        low = [r for r in out.results if r.completion_rate < cfg.min_completion]
        assert low and all(r.experiments["payment_scheme"].mean_distance is None for r in low)
        high = out.results[0].experiments["payment_scheme"]
        assert high.mean_distance is not None and set(high.distances) == {"O", "C"}

    def test_rate_table(self, tmp_path):
        out = run_sweep(_config(temperatures=(1.0,), top_p=(), min_p=(), top_k=(10,)), tmp_path, noisy_builder(), humans())
        rows = rate_table(out.results)
        assert [r["rule"] for r in rows] == ["none", "top_k"]
        assert rows[1]["threshold"] == 10


def _llm_builder(url: str, **cfg):
    client = ChatClient(LlmEndpointConfig(url, "m", api_key_env="", requests_per_minute=100_000, **cfg))

    def build(sampling: SamplingConfig, rep: int):
        return lambda spec, role, cond, sid: LlmAgent(client, sampling)

    return build


class TestEndpointCells:
    def test_unsupported_rule_marked(self, tmp_path):
        cfg = _config(temperatures=(1.0,), repetitions=1, model="mock")
        out = run_sweep(cfg, tmp_path, _llm_builder("mock://constant?value=10&reject=min_p"), None)
        status = {r.config.rule: r.status for r in out.results}
        assert out.complete and status == {"none": "ok", "top_p": "ok", "min_p": "unsupported", "top_k": "ok"}
        assert sum(r.status == "unsupported" for r in out.results) == 5

    def test_budget_abort_leaves_cell_unwritten(self, tmp_path):
        cfg = _config(temperatures=(1.0,), repetitions=1, model="mock")
        out = run_sweep(cfg, tmp_path, _llm_builder("mock://constant?value=10", max_requests=150), None)
        assert not out.complete and out.aborted_cell is not None
        assert not (tmp_path / "cells" / out.aborted_cell / "result.json").exists()
        assert len(out.results) >= 1
