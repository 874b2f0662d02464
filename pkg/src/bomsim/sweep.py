"""Sampling-parameter sweep with on-disk, resumable state.

Layout under the state directory::

    sweep.json                      config, grid and per-cell status
    cells/<cell_id>/transcripts.jsonl
    cells/<cell_id>/result.json

A cell is skipped on resume when its result.json exists. Everything written is
a pure function of the config, so an interrupted run that is resumed leaves the
same bytes on disk as an uninterrupted one.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from .analysis import MissingCategoryError, alignment, replicate
from .core import (
    EXPERIMENT_IDS,
    AgentFactory,
    ResponseDataset,
    Row,
    SessionTranscript,
    check_experiment_id,
    derive_seed,
    run_experiment,
    session_source,
    transcripts_to_dataset,
    write_transcripts,
)
from .experiments import CATEGORY_MAPS, make_spec
from .llm_client import BudgetExhausted, ParameterRejected
from .sampling import SamplingConfig

log = logging.getLogger(__name__)

TEMPERATURES: tuple[float, ...] = (0.5, 1.0, 1.5, 1.7, 1.9, 2.5, 3.0, 3.5, 4.0)
TOP_P: tuple[float, ...] = (0.5, 0.6, 0.7, 0.8, 0.9)
MIN_P: tuple[float, ...] = (0.05, 0.1, 0.15, 0.2, 0.25)
TOP_K: tuple[int, ...] = (10, 30, 50, 70, 90)
MIN_COMPLETION = 0.5
BAND_SIZE = 4


def build_grid(
    temperatures: Sequence[float] = TEMPERATURES,
    top_p: Sequence[float] = TOP_P,
    min_p: Sequence[float] = MIN_P,
    top_k: Sequence[int] = TOP_K,
) -> list[SamplingConfig]:
    """Temperature-major grid: default, then top-p, min-p and top-k thresholds ascending."""
    grid: list[SamplingConfig] = []
    for t in temperatures:
        grid.append(SamplingConfig(float(t)))
        grid += [SamplingConfig(float(t), "top_p", float(p)) for p in sorted(top_p)]
        grid += [SamplingConfig(float(t), "min_p", float(p)) for p in sorted(min_p)]
        grid += [SamplingConfig(float(t), "top_k", int(k)) for k in sorted(top_k)]
    return grid


def cell_id(index: int, config: SamplingConfig) -> str:
    return f"{index:03d}-{config.label}"


@dataclass
class SweepConfig:
    experiments: tuple[str, ...] = EXPERIMENT_IDS
    preset: str = "paper"
    repetitions: int = 20
    seed: int = 0
    temperatures: tuple[float, ...] = TEMPERATURES
    top_p: tuple[float, ...] = TOP_P
    min_p: tuple[float, ...] = MIN_P
    top_k: tuple[int, ...] = TOP_K
    max_attempts: int = 3
    cot: bool = False
    model: str = "noisy"
    min_completion: float = MIN_COMPLETION

    def __post_init__(self) -> None:
        self.experiments = tuple(check_experiment_id(e) for e in self.experiments)
        self.temperatures = tuple(float(t) for t in self.temperatures)
        self.top_p = tuple(float(x) for x in self.top_p)
        self.min_p = tuple(float(x) for x in self.min_p)
        self.top_k = tuple(int(x) for x in self.top_k)
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if not 0 <= self.min_completion <= 1:
            raise ValueError("min_completion must lie in [0, 1]")

    def grid(self) -> list[SamplingConfig]:
        return build_grid(self.temperatures, self.top_p, self.min_p, self.top_k)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> SweepConfig:
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown sweep setting(s): {sorted(unknown)}")
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in data.items()})


@dataclass
class ExperimentCellStats:
    completion_rate: float
    replication_rate: float
    hypothesis_rates: dict[str, float]
    distances: dict[str, float] | None
    mean_distance: float | None
    sessions: int
    completed_sessions: int


@dataclass
class CellResult:
    cell_id: str
    index: int
    sampling: dict[str, Any]
    status: str  # ok | unsupported | aborted
    experiments: dict[str, ExperimentCellStats] = field(default_factory=dict)
    reason: str = ""

    @property
    def config(self) -> SamplingConfig:
        return SamplingConfig.from_dict(self.sampling)

    @property
    def mean_distance(self) -> float | None:
        ds = [e.mean_distance for e in self.experiments.values() if e.mean_distance is not None]
        return float(np.mean(ds)) if ds else None

    @property
    def completion_rate(self) -> float:
        if not self.experiments:
            return 0.0
        return float(np.mean([e.completion_rate for e in self.experiments.values()]))

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> CellResult:
        exps = {k: ExperimentCellStats(**v) for k, v in d.get("experiments", {}).items()}
        return cls(d["cell_id"], d["index"], dict(d["sampling"]), d["status"], exps, d.get("reason", ""))


AgentBuilder = Callable[[SamplingConfig, int], AgentFactory]


@dataclass
class SweepOutcome:
    results: list[CellResult]
    complete: bool
    aborted_cell: str | None = None


def _dump(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _write_atomic(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _rep_rows(ds: ResponseDataset, rep: int, source: str) -> list[Row]:
    # Prefix subjects so repetitions pool into one sample without key clashes.
    return [Row(r.experiment, r.condition, r.category, f"r{rep:02d}/{r.subject}", r.round, r.value, source) for r in ds.rows]


def run_cell(
    config: SweepConfig,
    index: int,
    sampling: SamplingConfig,
    builder: AgentBuilder,
    humans: ResponseDataset | None,
    jobs: int = 1,
) -> tuple[CellResult, list[SessionTranscript]]:
    """Run every experiment and repetition of one grid cell.

    Repetition seeds depend only on (sweep seed, repetition, experiment), never
    on the cell, so cells differ only through their sampling parameters.
    """
    cid = cell_id(index, sampling)
    source = session_source(config.model, sampling.config_hash())
    transcripts: list[SessionTranscript] = []
    result = CellResult(cid, index, sampling.to_dict(), "ok")
    for exp in config.experiments:
        pooled = ResponseDataset()
        sessions = completed = replicated = 0
        hyp_hits: dict[str, int] = {}
        for rep in range(config.repetitions):
            spec = make_spec(exp, config.preset, seed=derive_seed(config.seed, "rep", rep, exp))
            ts = run_experiment(spec, builder(sampling, rep), cot=config.cot, max_attempts=config.max_attempts,
                                jobs=jobs, source=f"{source}#rep{rep:02d}")
            transcripts += ts
            sessions += len(ts)
            completed += sum(t.completed for t in ts)
            ds = transcripts_to_dataset(ts, CATEGORY_MAPS[exp], source)
            try:
                verdicts = replicate(exp, ds) if len(ds) else []
            except MissingCategoryError:
                verdicts = []  # a condition with no completed session cannot replicate
            for v in verdicts:
                hyp_hits[v.hypothesis_id] = hyp_hits.get(v.hypothesis_id, 0) + int(v.replicated)
            if verdicts and all(v.replicated for v in verdicts):
                replicated += 1
            pooled.extend(_rep_rows(ds, rep, source))
        completion = completed / sessions if sessions else 0.0
        distances = mean_d = None
        if humans is not None and completion >= config.min_completion and len(pooled):
            rep_align = alignment(pooled, humans, [exp])
            distances = {r.category: r.mean_distance for r in rep_align.rows}
            mean_d = float(np.mean(list(distances.values()))) if distances else None
        result.experiments[exp] = ExperimentCellStats(
            completion_rate=completion,
            replication_rate=replicated / config.repetitions,
            hypothesis_rates={h: k / config.repetitions for h, k in sorted(hyp_hits.items())},
            distances=distances,
            mean_distance=mean_d,
            sessions=sessions,
            completed_sessions=completed,
        )
    return result, transcripts


def _state_doc(config: SweepConfig, grid: Sequence[SamplingConfig], results: Mapping[str, CellResult]) -> dict[str, Any]:
    cells = []
    for i, s in enumerate(grid):
        cid = cell_id(i, s)
        r = results.get(cid)
        cells.append({"cell_id": cid, "sampling": s.to_dict(), "status": r.status if r else "pending"})
    return {"config": config.to_dict(), "cells": cells}


def load_state(state_dir: str | Path) -> tuple[SweepConfig, list[CellResult]]:
    root = Path(state_dir)
    doc = json.loads((root / "sweep.json").read_text(encoding="utf-8"))
    config = SweepConfig.from_dict(doc["config"])
    results = []
    for c in doc["cells"]:
        path = root / "cells" / c["cell_id"] / "result.json"
        if path.exists():
            results.append(CellResult.from_dict(json.loads(path.read_text(encoding="utf-8"))))
    return config, results


def run_sweep(
    config: SweepConfig,
    state_dir: str | Path,
    builder: AgentBuilder,
    humans: ResponseDataset | None = None,
    *,
    jobs: int = 1,
    max_cells: int | None = None,
) -> SweepOutcome:
    """Run (or resume) the sweep. ``max_cells`` caps new cells run in this call."""
    root = Path(state_dir)
    (root / "cells").mkdir(parents=True, exist_ok=True)
    grid = config.grid()
    state_path = root / "sweep.json"
    if state_path.exists():
        saved = json.loads(state_path.read_text(encoding="utf-8"))["config"]
        if saved != config.to_dict():
            raise ValueError(f"{state_path} was created with a different sweep config")
    results: dict[str, CellResult] = {}
    for i, s in enumerate(grid):
        path = root / "cells" / cell_id(i, s) / "result.json"
        if path.exists():
            results[cell_id(i, s)] = CellResult.from_dict(json.loads(path.read_text(encoding="utf-8")))
    _write_atomic(state_path, _dump(_state_doc(config, grid, results)))

    ran = 0
    for i, sampling in enumerate(grid):
        cid = cell_id(i, sampling)
        if cid in results:
            continue
        if max_cells is not None and ran >= max_cells:
            break
        cell_dir = root / "cells" / cid
        cell_dir.mkdir(parents=True, exist_ok=True)
        log.info("cell %s", cid)
        try:
            result, transcripts = run_cell(config, i, sampling, builder, humans, jobs)
        except ParameterRejected as exc:
            result, transcripts = CellResult(cid, i, sampling.to_dict(), "unsupported",
                                             reason=f"endpoint rejected {exc.parameter}"), []
        except BudgetExhausted as exc:
            # Leave no result.json so a resume with more budget reruns the cell.
            log.warning("request budget exhausted in %s: %s", cid, exc)
            _write_atomic(state_path, _dump(_state_doc(config, grid, results)))
            return SweepOutcome([results[k] for k in sorted(results)], False, cid)
        write_transcripts(transcripts, cell_dir / "transcripts.jsonl")
        _write_atomic(cell_dir / "result.json", _dump(result.to_dict()))
        results[cid] = result
        ran += 1
        _write_atomic(state_path, _dump(_state_doc(config, grid, results)))
    ordered = [results[cell_id(i, s)] for i, s in enumerate(grid) if cell_id(i, s) in results]
    return SweepOutcome(ordered, len(ordered) == len(grid))


def first_quartile_band(results: Sequence[CellResult], experiment: str | None = None) -> dict[float, list[str]]:
    """Per temperature, the 4 truncation-rule cells with the smallest distance.

    The default (no truncation) cell never enters the band; cells without a
    distance (low completion, unsupported) are ineligible.
    """
    by_t: dict[float, list[tuple[float, int, str]]] = {}
    for r in results:
        cfg = r.config
        if cfg.rule == "none" or r.status != "ok":
            continue
        if experiment is not None:
            e = r.experiments.get(experiment)
            d = e.mean_distance if e else None
        else:
            d = r.mean_distance
        by_t.setdefault(cfg.temperature, [])
        if d is not None:
            by_t[cfg.temperature].append((d, r.index, r.cell_id))
    return {t: [cid for _, _, cid in sorted(v)[:BAND_SIZE]] for t, v in sorted(by_t.items())}


def rate_table(results: Sequence[CellResult]) -> list[dict[str, Any]]:
    """Long-format rows for plotting rates against temperature."""
    rows = []
    for r in results:
        cfg = r.config
        for exp, e in r.experiments.items():
            rows.append({
                "cell_id": r.cell_id,
                "temperature": cfg.temperature,
                "rule": cfg.rule,
                "threshold": "" if cfg.threshold is None else cfg.threshold,
                "experiment": exp,
                "completion_rate": e.completion_rate,
                "replication_rate": e.replication_rate,
                "mean_distance": "" if e.mean_distance is None else e.mean_distance,
            })
    return rows


def noisy_builder(failure: Any = None, policies: Any = None) -> AgentBuilder:
    """Offline builder: noisy-categorical agents whose seeds depend on the repetition only."""
    from .experiments import NoisyFactory
    from .agents.scripted import FailureCurve

    curve = failure or FailureCurve()

    def build(sampling: SamplingConfig, rep: int) -> AgentFactory:
        return NoisyFactory(policies=policies, sampling=sampling, failure=curve, seed_salt=rep)

    return build
