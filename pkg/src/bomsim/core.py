"""Experiment and session data model plus the round-by-round driver."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Iterator, Mapping, Sequence

import numpy as np

from .agents.base import MAX_ATTEMPTS, Agent, decide_with_retry
from .agents.prompts import build_prompt
from .games.engines import BaseEngine, build_params, engine_roles, make_engine

log = logging.getLogger(__name__)

EXPERIMENT_IDS: tuple[str, ...] = (
    "payment_scheme",
    "beer_game",
    "reserve_auction",
    "regret_auction",
    "contract",
    "queue",
    "forecast",
    "newsvendor_profit",
    "cheap_talk",
)

DATASET_COLUMNS = ("experiment", "condition", "category", "subject", "round", "value", "source")


class TopologyError(ValueError):
    """Agents, roles and engine disagree on the session layout."""


class UnknownExperimentError(KeyError):
    def __init__(self, name: str) -> None:
        super().__init__(name)
        self.name = name

    def __str__(self) -> str:
        return f"unknown experiment {self.name!r}; valid ids: {', '.join(EXPERIMENT_IDS)}"


def check_experiment_id(name: str) -> str:
    if name not in EXPERIMENT_IDS:
        raise UnknownExperimentError(name)
    return name


def derive_seed(seed: int, *parts: object) -> int:
    """64-bit seed from a base seed and a tuple of labels (condition, session, role, ...)."""
    blob = repr((int(seed),) + tuple(str(p) for p in parts)).encode("utf-8")
    return int.from_bytes(hashlib.blake2b(blob, digest_size=8).digest(), "big")


@dataclass(frozen=True)
class ExperimentSpec:
    experiment_id: str
    conditions: tuple[str, ...]
    n_subjects_per_condition: int
    n_rounds: int
    roles: tuple[str, ...]
    game_params: Mapping[str, Any] = field(default_factory=dict)
    rng_seed: int = 0
    within_subject: bool = False

    def __post_init__(self) -> None:
        check_experiment_id(self.experiment_id)
        object.__setattr__(self, "conditions", tuple(str(c) for c in self.conditions))
        object.__setattr__(self, "roles", tuple(self.roles))
        object.__setattr__(self, "game_params", dict(self.game_params))
        if not self.conditions:
            raise ValueError("spec needs at least one condition")
        if self.n_subjects_per_condition < 1:
            raise ValueError("n_subjects_per_condition must be positive")
        if self.n_rounds < 1:
            raise ValueError("n_rounds must be positive")
        if not (0 <= self.rng_seed < 2**64):
            raise ValueError("rng_seed must be a 64-bit unsigned integer")
        expected = engine_roles(self.experiment_id)
        if self.roles != expected:
            raise TopologyError(f"{self.experiment_id} needs roles {list(expected)}, got {list(self.roles)}")
        build_params(self.experiment_id, self.game_params)  # fail early on unknown keys

    @property
    def session_conditions(self) -> tuple[str, ...]:
        """Conditions that index sessions; within-subject designs run all conditions in one session."""
        return ("+".join(self.conditions),) if self.within_subject else self.conditions

    @property
    def params(self) -> Any:
        return build_params(self.experiment_id, self.game_params)

    def make_engine(self) -> BaseEngine:
        return make_engine(self.experiment_id, self.game_params, self.n_rounds)

    def subject_id(self, session_id: int, role: str) -> str:
        base = f"s{session_id:03d}"
        return base if len(self.roles) == 1 else f"{base}.{role}"

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["conditions"] = list(self.conditions)
        d["roles"] = list(self.roles)
        d["game_params"] = dict(self.game_params)
        return d


# --- transcripts ------------------------------------------------------------


@dataclass
class QueryRecord:
    role: str
    slot: str
    subject: str
    observation: str
    values: dict[str, Any]
    prompt_hash: str
    responses: list[str | None]
    decision: float | None
    attempts: int
    errors: list[str] = field(default_factory=list)


@dataclass
class RoundRecord:
    round: int
    condition: str
    queries: list[QueryRecord]
    attempts_used: int
    completed: bool
    payoffs: dict[str, float] = field(default_factory=dict)
    outcomes: dict[str, dict[str, float]] = field(default_factory=dict)

    def decisions(self, role: str | None = None, slot: str | None = None) -> list[float | None]:
        return [q.decision for q in self.queries if (role is None or q.role == role) and (slot is None or q.slot == slot)]


@dataclass
class SessionTranscript:
    experiment_id: str
    condition: str
    session_id: int
    subject_ids: dict[str, str]
    rounds: list[RoundRecord] = field(default_factory=list)
    n_rounds_planned: int = 0
    source: str = ""

    @property
    def completed(self) -> bool:
        return (
            len(self.rounds) == self.n_rounds_planned
            and all(r.completed for r in self.rounds)
        )

    def validate(self) -> None:
        for i, r in enumerate(self.rounds, start=1):
            if r.round != i:
                raise ValueError(f"round indices must run 1..n without gaps; found {r.round} at position {i}")
        for r in self.rounds[:-1]:
            if not r.completed:
                raise ValueError("no round may follow an incomplete round")

    def to_jsonl_lines(self) -> list[str]:
        head = {
            "experiment": self.experiment_id,
            "session_condition": self.condition,
            "session_id": self.session_id,
            "subjects": self.subject_ids,
            "n_rounds_planned": self.n_rounds_planned,
            "source": self.source,
        }
        return [json.dumps({**head, **asdict(r)}, sort_keys=True, ensure_ascii=False) for r in self.rounds]


def write_transcripts(transcripts: Iterable[SessionTranscript], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for t in transcripts:
            for line in t.to_jsonl_lines():
                fh.write(line + "\n")


def read_transcripts(path: str | Path) -> list[SessionTranscript]:
    out: dict[tuple, SessionTranscript] = {}
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            d = json.loads(line)
            key = (d["experiment"], d["session_condition"], d["session_id"], d.get("source", ""))
            t = out.get(key)
            if t is None:
                t = SessionTranscript(d["experiment"], d["session_condition"], d["session_id"], d["subjects"],
                                      n_rounds_planned=d["n_rounds_planned"], source=d.get("source", ""))
                out[key] = t
            queries = [QueryRecord(**q) for q in d["queries"]]
            t.rounds.append(RoundRecord(d["round"], d["condition"], queries, d["attempts_used"], d["completed"],
                                        d["payoffs"], d["outcomes"]))
    return list(out.values())


def _jsonable(values: Mapping[str, Any]) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for k, v in values.items():
        if isinstance(v, tuple):
            v = list(v)
        if isinstance(v, (np.floating, np.integer)):
            v = v.item()
        out[k] = v
    return out


# --- session driver --------------------------------------------------------


def run_session(
    spec: ExperimentSpec,
    agents: Mapping[str, Agent] | Sequence[Agent],
    engine: BaseEngine,
    *,
    condition: str,
    session_id: int,
    cot: bool = False,
    max_attempts: int = MAX_ATTEMPTS,
    source: str = "",
) -> SessionTranscript:
    """Play one session. Stops at the first decision no attempt could produce."""
    if engine.experiment_id != spec.experiment_id:
        raise TopologyError(f"engine {engine.experiment_id!r} does not match spec {spec.experiment_id!r}")
    if tuple(engine.roles) != spec.roles:
        raise TopologyError("engine roles differ from spec roles")
    if not isinstance(agents, Mapping):
        agents = list(agents)
        if len(agents) != len(spec.roles):
            raise TopologyError(f"{spec.experiment_id} needs {len(spec.roles)} agents, got {len(agents)}")
        agents = dict(zip(spec.roles, agents))
    elif set(agents) != set(spec.roles):
        raise TopologyError(f"agents must be keyed by roles {list(spec.roles)}")

    params = engine.params
    rng = np.random.default_rng(derive_seed(spec.rng_seed, condition, session_id))
    engine.start(condition, session_id, rng)
    subjects = {role: spec.subject_id(session_id, role) for role in spec.roles}
    transcript = SessionTranscript(spec.experiment_id, condition, session_id, subjects,
                                   n_rounds_planned=spec.n_rounds, source=source)
    for r in range(1, spec.n_rounds + 1):
        engine.begin_round(r)
        records: list[QueryRecord] = []
        complete = True
        while (q := engine.next_query()) is not None:
            prompt = build_prompt(spec.experiment_id, params, spec.n_rounds, q, cot, session_condition=condition)
            decision = decide_with_retry(agents[q.role], prompt, q, max_attempts)
            records.append(QueryRecord(q.role, q.slot, subjects[q.role], q.observation, _jsonable(q.values),
                                       prompt.prompt_hash(), decision.responses, decision.value,
                                       decision.attempts_used, decision.errors))
            if decision.value is None:
                complete = False
                break
            engine.submit(q, decision.value)
        attempts = max((rec.attempts for rec in records), default=1)
        round_condition = engine.round_condition(r)
        if not complete:
            transcript.rounds.append(RoundRecord(r, round_condition, records, attempts, False))
            log.info("%s session %s/%d incomplete at round %d", spec.experiment_id, condition, session_id, r)
            break
        result = engine.end_round()
        transcript.rounds.append(RoundRecord(r, round_condition, records, attempts, True,
                                             dict(result.payoffs), {k: dict(v) for k, v in result.outcomes.items()}))
    return transcript


AgentFactory = Callable[[ExperimentSpec, str, str, int], Agent]


def run_experiment(
    spec: ExperimentSpec,
    agent_factory: AgentFactory,
    *,
    cot: bool = False,
    max_attempts: int = MAX_ATTEMPTS,
    jobs: int = 1,
    source: str = "",
    conditions: Sequence[str] | None = None,
) -> list[SessionTranscript]:
    """All sessions of a spec, in (condition, session) order regardless of ``jobs``.

    ``agent_factory(spec, role, condition, session_id)`` builds one agent per role.
    """
    conds = tuple(conditions) if conditions is not None else spec.session_conditions
    tasks = [(c, s) for c in conds for s in range(spec.n_subjects_per_condition)]

    def one(task: tuple[str, int]) -> SessionTranscript:
        cond, sid = task
        agents = {role: agent_factory(spec, role, cond, sid) for role in spec.roles}
        return run_session(spec, agents, spec.make_engine(), condition=cond, session_id=sid, cot=cot,
                           max_attempts=max_attempts, source=source)

    if jobs <= 1:
        return [one(t) for t in tasks]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(one, tasks))


# --- datasets -----------------------------------------------------------------


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class Row:
    experiment: str
    condition: str
    category: str
    subject: str
    round: int
    value: float
    source: str

    @property
    def key(self) -> tuple:
        return (self.experiment, self.condition, self.category, self.subject, self.round, self.source)


class ResponseDataset:
    """Long-format observations shared by human and simulated data.

    Keys (experiment, condition, category, subject, round) are unique within
    each source, so several sources can live in one dataset.
    """

    def __init__(self, rows: Iterable[Row] = ()) -> None:
        self.rows: list[Row] = []
        self._keys: set[tuple] = set()
        for r in rows:
            self.add(r)

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self) -> Iterator[Row]:
        return iter(self.rows)

    def add(self, row: Row) -> None:
        if not math.isfinite(row.value):
            raise DatasetError(f"non-finite value in {row}")
        if row.key in self._keys:
            raise DatasetError(f"duplicate observation {row.key}")
        self._keys.add(row.key)
        self.rows.append(row)

    def extend(self, other: Iterable[Row]) -> ResponseDataset:
        for r in other:
            self.add(r)
        return self

    def filter(self, **criteria: Any) -> ResponseDataset:
        def ok(r: Row) -> bool:
            for k, v in criteria.items():
                got = getattr(r, k)
                if isinstance(v, (set, frozenset, list, tuple)):
                    if got not in v:
                        return False
                elif got != v:
                    return False
            return True

        return ResponseDataset(r for r in self.rows if ok(r))

    def values(self, **criteria: Any) -> np.ndarray:
        return np.array([r.value for r in self.filter(**criteria).rows], dtype=float)

    def sources(self) -> list[str]:
        return sorted({r.source for r in self.rows})

    def experiments(self) -> list[str]:
        return sorted({r.experiment for r in self.rows})

    def categories(self, experiment: str | None = None) -> list[str]:
        return sorted({r.category for r in self.rows if experiment is None or r.experiment == experiment})

    def sorted_rows(self) -> list[Row]:
        return sorted(self.rows, key=lambda r: (r.source, r.experiment, r.condition, r.category, r.subject, r.round))

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(DATASET_COLUMNS)
        for r in self.rows:
            w.writerow([r.experiment, r.condition, r.category, r.subject, r.round, repr(float(r.value)), r.source])
        return buf.getvalue()

    def to_csv(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv_text(), encoding="utf-8")

    @classmethod
    def from_csv_text(cls, text: str, origin: str = "<csv>") -> ResponseDataset:
        reader = csv.reader(io.StringIO(text))
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetError(f"{origin}: empty file, expected header {','.join(DATASET_COLUMNS)}") from None
        header = [h.strip() for h in header]
        missing = [c for c in DATASET_COLUMNS if c not in header]
        if missing:
            raise DatasetError(f"{origin}: missing column(s) {', '.join(missing)}")
        idx = {c: header.index(c) for c in DATASET_COLUMNS}
        ds = cls()
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(header):
                raise DatasetError(f"{origin}: row {lineno} has {len(rec)} fields, expected {len(header)}")
            try:
                rnd = int(rec[idx["round"]])
            except ValueError:
                raise DatasetError(f"{origin}: row {lineno}, column round: not an integer") from None
            try:
                value = float(rec[idx["value"]])
            except ValueError:
                raise DatasetError(f"{origin}: row {lineno}, column value: not a number") from None
            if not math.isfinite(value):
                raise DatasetError(f"{origin}: row {lineno}, column value: not finite")
            row = Row(rec[idx["experiment"]], rec[idx["condition"]], rec[idx["category"]], rec[idx["subject"]],
                      rnd, value, rec[idx["source"]])
            try:
                ds.add(row)
            except DatasetError as exc:
                raise DatasetError(f"{origin}: row {lineno}: {exc}") from None
        return ds

    @classmethod
    def from_csv(cls, path: str | Path) -> ResponseDataset:
        return cls.from_csv_text(Path(path).read_text(encoding="utf-8"), origin=str(path))


@dataclass(frozen=True)
class CategoryMap:
    """How transcript decisions and outcomes become dataset categories.

    Templates may use {condition} (the round's condition) and {cond} (its
    lower-case form). A slot mapped to None is recorded in transcripts only.
    """

    slots: Mapping[str, str | None]
    outcomes: Mapping[str, str] = field(default_factory=dict)

    def slot_category(self, slot: str, condition: str) -> str | None:
        if slot not in self.slots:
            raise DatasetError(f"unknown decision slot {slot!r}")
        tmpl = self.slots[slot]
        return None if tmpl is None else tmpl.format(condition=condition, cond=condition.lower())

    def outcome_category(self, name: str, condition: str) -> str | None:
        tmpl = self.outcomes.get(name)
        return None if tmpl is None else tmpl.format(condition=condition, cond=condition.lower())


def transcripts_to_dataset(
    transcripts: Sequence[SessionTranscript],
    category_map: CategoryMap,
    source: str,
) -> ResponseDataset:
    """Rows from completed sessions only; incomplete sessions are dropped whole."""
    ds = ResponseDataset()
    if not transcripts:
        return ds
    experiments = {t.experiment_id for t in transcripts}
    if len(experiments) > 1:
        raise DatasetError(f"transcripts mix experiments: {sorted(experiments)}")
    for t in transcripts:
        if not t.completed:
            continue
        for r in t.rounds:
            for q in r.queries:
                cat = category_map.slot_category(q.slot, r.condition)
                if cat is None or q.decision is None:
                    continue
                ds.add(Row(t.experiment_id, r.condition, cat, q.subject, r.round, float(q.decision), source))
            for role, outs in r.outcomes.items():
                for name, value in outs.items():
                    cat = category_map.outcome_category(name, r.condition)
                    if cat is not None:
                        ds.add(Row(t.experiment_id, r.condition, cat, t.subject_ids[role], r.round, float(value), source))
    return ds


def session_source(model: str, config_hash: str) -> str:
    return f"sim:{model}:{config_hash}"
