from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bomsim.agents.scripted import FixedTextAgent, RationalAgent, ReplayAgent
from bomsim.core import (
    DATASET_COLUMNS,
    EXPERIMENT_IDS,
    DatasetError,
    ExperimentSpec,
    ResponseDataset,
    Row,
    TopologyError,
    UnknownExperimentError,
    check_experiment_id,
    derive_seed,
    read_transcripts,
    run_experiment,
    run_session,
    transcripts_to_dataset,
    write_transcripts,
)
from bomsim.experiments import CATEGORY_MAPS, NoisyFactory, make_spec, rational_factory
from bomsim.games.engines import engine_roles

FIXTURES = Path(__file__).parent / "fixtures"


def _payment_spec(**kw) -> ExperimentSpec:
    return make_spec("payment_scheme", "smoke", seed=kw.pop("seed", 7), **kw)


class TestSpec:
    def test_paper_scales(self):
        assert (make_spec("payment_scheme").n_subjects_per_condition, make_spec("payment_scheme").n_rounds) == (25, 25)
        nv = make_spec("newsvendor_profit")
        assert (nv.n_subjects_per_condition, nv.n_rounds, nv.within_subject) == (40, 30, True)
        fc = make_spec("forecast")
        assert fc.n_subjects_per_condition == 67 and fc.n_rounds == 50 and fc.params.history == 30
        assert make_spec("beer_game").n_subjects_per_condition == 11
        assert make_spec("cheap_talk").n_subjects_per_condition == 40

    def test_role_counts(self):
        assert len(engine_roles("beer_game")) == 4 and len(engine_roles("queue")) == 4
        assert len(engine_roles("contract")) == 2 and len(engine_roles("cheap_talk")) == 2
        assert len(engine_roles("payment_scheme")) == 1

    def test_topology_enforced(self):
        with pytest.raises(TopologyError):
            ExperimentSpec("beer_game", ("base",), 1, 2, ("retailer",))

    def test_unknown_experiment_lists_ids(self):
        with pytest.raises(UnknownExperimentError) as err:
            check_experiment_id("newsboy")
        for exp in EXPERIMENT_IDS:
            assert exp in str(err.value)

    def test_unknown_game_param(self):
        with pytest.raises(ValueError, match="unknown game parameter"):
            make_spec("payment_scheme", game_params={"price": 3})

    def test_override_param(self):
        spec = make_spec("payment_scheme", "smoke", game_params={"p": 3, "c": 1})
        assert spec.params.p == 3

    @given(st.integers(0, 2**64 - 1), st.text(max_size=5), st.integers(0, 100))
    def test_derive_seed_range(self, seed, cond, sid):
        s = derive_seed(seed, cond, sid)
        assert 0 <= s < 2**64 and s == derive_seed(seed, cond, sid)


class TestRunSession:
    def test_rational_payment_scheme(self):
        spec = make_spec("payment_scheme", "paper", seed=1)
        t = run_session(spec, [RationalAgent("payment_scheme", spec.params)], spec.make_engine(),
                        condition="O", session_id=0)
        assert len(t.rounds) == 25 and t.completed
        assert all(r.attempts_used == 1 for r in t.rounds)
        assert all(r.decisions() == [10.0] for r in t.rounds)

    def test_no_number_agent_fails_round_one(self):
        spec = _payment_spec()
        t = run_session(spec, [FixedTextAgent(["no number"])], spec.make_engine(), condition="C", session_id=0)
        assert not t.completed and len(t.rounds) == 1
        assert t.rounds[0].attempts_used == 3 and not t.rounds[0].completed
        t.validate()

    def test_success_on_second_attempt(self):
        spec = _payment_spec(n_rounds=1)
        t = run_session(spec, [FixedTextAgent(["hmm", "### 9"])], spec.make_engine(), condition="O", session_id=0)
        assert t.completed and t.rounds[0].attempts_used == 2

    def test_agent_count_mismatch(self):
        spec = make_spec("contract", "smoke")
        with pytest.raises(TopologyError):
            run_session(spec, [RationalAgent("contract", spec.params)], spec.make_engine(), condition="TPT", session_id=0)

    def test_beer_replay_identity(self):
        fx = json.loads((FIXTURES / "beer_replay.json").read_text())
        spec = make_spec("beer_game", "smoke", n_rounds=fx["n_rounds"], seed=3)
        agents = {role: ReplayAgent(fx["orders"][role]) for role in spec.roles}
        t = run_session(spec, agents, spec.make_engine(), condition=fx["condition"], session_id=0)
        assert t.completed
        for role in spec.roles:
            assert [r.decisions(role=role)[0] for r in t.rounds] == fx["orders"][role]

    def test_history_isolation(self):
        """Subject 1 never sees a value produced only by subject 0."""
        spec = make_spec("reserve_auction", "smoke", seed=5, conditions=["4"], n_rounds=3)
        sentinel = 77.13
        prompts: dict[int, list[str]] = {0: [], 1: []}

        class Recording:
            kind = "recording"

            def __init__(self, sid, inner):
                self.sid, self.inner = sid, inner

            def respond(self, prompt, query, attempt):
                prompts[self.sid].append(prompt.text())
                return self.inner.respond(prompt, query, attempt)

        def factory(spec_, role, cond, sid):
            inner = ReplayAgent([sentinel] * 3) if sid == 0 else ReplayAgent([20.0] * 3)
            return Recording(sid, inner)

        run_experiment(spec, factory)
        assert any("77.13" in p for p in prompts[0][1:])
        assert not any("77.13" in p for p in prompts[1])


class TestDeterminism:
    @pytest.mark.parametrize("exp", EXPERIMENT_IDS)
    def test_same_seed_same_transcripts(self, exp, tmp_path):
        spec = make_spec(exp, "smoke", seed=99)
        a = run_experiment(spec, NoisyFactory())
        b = run_experiment(spec, NoisyFactory(), jobs=4)
        write_transcripts(a, tmp_path / "a.jsonl")
        write_transcripts(b, tmp_path / "b.jsonl")
        assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()

    def test_transcript_round_trip(self, tmp_path):
        spec = make_spec("newsvendor_profit", "smoke", seed=4)
        ts = run_experiment(spec, NoisyFactory())
        write_transcripts(ts, tmp_path / "t.jsonl")
        back = read_transcripts(tmp_path / "t.jsonl")
        write_transcripts(back, tmp_path / "u.jsonl")
        assert (tmp_path / "t.jsonl").read_bytes() == (tmp_path / "u.jsonl").read_bytes()
        assert [t.condition for t in back] == [t.condition for t in ts]


class TestDataset:
    def test_only_completed_sessions(self):
        spec = _payment_spec(n_subjects=3)

        def factory(spec_, role, cond, sid):
            return FixedTextAgent(["nothing"]) if sid == 2 else RationalAgent("payment_scheme", spec_.params)

        ts = run_experiment(spec, factory, conditions=["O"])
        ds = transcripts_to_dataset(ts, CATEGORY_MAPS["payment_scheme"], "sim:test")
        assert sum(t.completed for t in ts) == 2
        assert len(ds) == 2 * spec.n_rounds
        assert {r.subject for r in ds.rows} == {"s000", "s001"}

    @pytest.mark.parametrize("exp", EXPERIMENT_IDS)
    def test_row_count_matches_completed_sessions(self, exp):
        spec = make_spec(exp, "smoke", seed=12)
        ts = run_experiment(spec, NoisyFactory())
        ds = transcripts_to_dataset(ts, CATEGORY_MAPS[exp], "sim:x")
        expected = 0
        cmap = CATEGORY_MAPS[exp]
        for t in ts:
            if not t.completed:
                continue
            for r in t.rounds:
                expected += sum(1 for q in r.queries if cmap.slot_category(q.slot, r.condition) is not None)
                expected += sum(1 for outs in r.outcomes.values() for n in outs if cmap.outcome_category(n, r.condition))
        assert len(ds) == expected

    def test_cheap_talk_categories(self):
        spec = make_spec("cheap_talk", "smoke", seed=2)
        ds = transcripts_to_dataset(run_experiment(spec, rational_factory), CATEGORY_MAPS["cheap_talk"], "sim:x")
        cats = set(ds.categories())
        assert {"signal", "capacity"} <= cats
        per_round = len(ds.filter(category="signal")) == len(ds.filter(category="capacity"))
        assert per_round

    def test_empty(self):
        assert len(transcripts_to_dataset([], CATEGORY_MAPS["queue"], "x")) == 0

    def test_mixed_experiments_rejected(self):
        a = run_experiment(make_spec("payment_scheme", "smoke"), rational_factory)
        b = run_experiment(make_spec("newsvendor_profit", "smoke"), rational_factory)
        with pytest.raises(DatasetError):
            transcripts_to_dataset(a + b, CATEGORY_MAPS["payment_scheme"], "x")

    def test_unique_and_finite(self):
        ds = ResponseDataset([Row("e", "c", "k", "s", 1, 1.0, "src")])
        with pytest.raises(DatasetError):
            ds.add(Row("e", "c", "k", "s", 1, 2.0, "src"))
        with pytest.raises(DatasetError):
            ds.add(Row("e", "c", "k", "s", 2, float("nan"), "src"))
        ds.add(Row("e", "c", "k", "s", 1, 2.0, "other"))
        assert len(ds) == 2

    @settings(max_examples=30)
    @given(st.lists(st.tuples(st.sampled_from(["a", "b"]), st.integers(1, 30), st.floats(-1e6, 1e6)),
                    unique_by=lambda t: (t[0], t[1]), max_size=20))
    def test_csv_round_trip(self, items):
        ds = ResponseDataset(Row("queue", "q00", cat, "s001", rnd, val, "human:x") for cat, rnd, val in items)
        back = ResponseDataset.from_csv_text(ds.to_csv_text())
        assert back.sorted_rows() == ds.sorted_rows()
        assert back.to_csv_text() == ds.to_csv_text()

    def test_csv_header_and_missing_column(self):
        text = ResponseDataset().to_csv_text()
        assert text.splitlines()[0] == ",".join(DATASET_COLUMNS)
        with pytest.raises(DatasetError, match="category"):
            ResponseDataset.from_csv_text("experiment,condition,subject,round,value,source\n")

    def test_csv_bad_value(self):
        bad = ",".join(DATASET_COLUMNS) + "\nqueue,q00,q00,s1,1,abc,h\n"
        with pytest.raises(DatasetError, match="value"):
            ResponseDataset.from_csv_text(bad)


def test_session_seed_independent_of_order():
    spec = make_spec("forecast", "smoke", seed=8)
    fwd = run_experiment(spec, NoisyFactory(), conditions=["stable", "unstable"])
    rev = run_experiment(spec, NoisyFactory(), conditions=["unstable", "stable"])
    key = lambda t: (t.condition, t.session_id)  # noqa: E731
    a = {key(t): [r.outcomes for r in t.rounds] for t in fwd}
    b = {key(t): [r.outcomes for r in t.rounds] for t in rev}
    assert a == b
    assert np.isfinite([q.decision for t in fwd for r in t.rounds for q in r.queries if q.decision is not None]).all()
