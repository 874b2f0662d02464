"""Command-line entry point: simulate, analyze, sweep.

Exit codes: 0 success, 1 configuration or input error, 2 partial results,
3 endpoint failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

from . import __version__
from .agents.llm import LlmAgent
from .agents.scripted import LLM_LIKE_FAILURE, FailureCurve
from .analysis import MissingCategoryError, analyze
from .core import (
    EXPERIMENT_IDS,
    DatasetError,
    ResponseDataset,
    TopologyError,
    UnknownExperimentError,
    check_experiment_id,
    derive_seed,
    run_experiment,
    session_source,
    transcripts_to_dataset,
    write_transcripts,
)
from .experiments import CATEGORY_MAPS, PRESETS, NoisyFactory, make_spec, rational_factory
from .fixtures import load_human_fixtures
from .llm_client import BudgetExhausted, ChatClient, LlmEndpointConfig, LlmError, ParameterRejected
from .sampling import RULES, SamplingConfig
from .sweep import SweepConfig, first_quartile_band, load_state, noisy_builder, rate_table, run_sweep

log = logging.getLogger("bomsim")

EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL, EXIT_ENDPOINT = 0, 1, 2, 3
CONFIG_SECTIONS = ("endpoint", "experiment_overrides", "sweep", "seeds")
SPEC_OVERRIDE_KEYS = ("conditions", "n_subjects", "n_rounds")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    endpoint: LlmEndpointConfig | None = None
    experiment_overrides: dict[str, dict[str, Any]] = field(default_factory=dict)
    sweep: dict[str, Any] = field(default_factory=dict)
    seeds: dict[str, int] = field(default_factory=dict)

    @classmethod
    def load(cls, path: str | None) -> RunConfig:
        if path is None:
            return cls()
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be an object")
        unknown = sorted(set(data) - set(CONFIG_SECTIONS))
        if unknown:
            raise ConfigError(f"{path}: unknown section(s) {unknown}; expected {list(CONFIG_SECTIONS)}")
        try:
            endpoint = LlmEndpointConfig.from_dict(data["endpoint"]) if data.get("endpoint") else None
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{path}: {exc}") from None
        overrides = data.get("experiment_overrides", {}) or {}
        for exp in overrides:
            check_experiment_id(exp)
        seeds = data.get("seeds", {}) or {}
        for k, v in seeds.items():
            if k != "base":
                check_experiment_id(k)
            if not isinstance(v, int) or v < 0:
                raise ConfigError(f"{path}: seeds.{k} must be a nonnegative integer")
        return cls(endpoint, dict(overrides), dict(data.get("sweep", {}) or {}), dict(seeds))

    def seed_for(self, experiment: str, cli_seed: int | None) -> int:
        if cli_seed is not None:
            return cli_seed
        if experiment in self.seeds:
            return self.seeds[experiment]
        return derive_seed(self.seeds.get("base", 0), experiment)

    def spec_kwargs(self, experiment: str) -> dict[str, Any]:
        o = dict(self.experiment_overrides.get(experiment, {}))
        kwargs: dict[str, Any] = {k: o.pop(k) for k in SPEC_OVERRIDE_KEYS if k in o}
        kwargs["game_params"] = o
        return kwargs


def _sampling_from_args(args: argparse.Namespace) -> SamplingConfig:
    threshold = args.threshold
    if args.rule == "top_k" and threshold is not None:
        threshold = int(threshold)
    return SamplingConfig(args.temperature, args.rule, threshold)


def _failure(name: str) -> FailureCurve:
    return LLM_LIKE_FAILURE if name == "llm-like" else FailureCurve()


def _make_client(cfg: RunConfig) -> ChatClient:
    if cfg.endpoint is None:
        raise ConfigError("agent 'llm' needs an 'endpoint' section in --config")
    return ChatClient(cfg.endpoint)


def _llm_factory(client: ChatClient, sampling: SamplingConfig):
    def factory(spec, role, condition, session_id):
        return LlmAgent(client, sampling, client.config.max_tokens)

    return factory


def _experiments(arg: Sequence[str]) -> list[str]:
    if not arg or list(arg) == ["all"]:
        return list(EXPERIMENT_IDS)
    return [check_experiment_id(e) for e in arg]


# --- simulate ---------------------------------------------------------------


def cmd_simulate(args: argparse.Namespace) -> int:
    cfg = RunConfig.load(args.config)
    experiments = _experiments(args.experiment)
    sampling = _sampling_from_args(args)
    client = _make_client(cfg) if args.agent == "llm" else None
    if args.agent == "rational":
        factory: Any = rational_factory
        model = "rational"
    elif args.agent == "noisy":
        factory = NoisyFactory(sampling=sampling, failure=_failure(args.failure))
        model = "noisy"
    else:
        factory = _llm_factory(client, sampling)  # type: ignore[arg-type]
        model = cfg.endpoint.model  # type: ignore[union-attr]
    source = args.source or session_source(model, sampling.config_hash())

    out = ResponseDataset()
    transcripts = []
    partial = False
    try:
        for exp in experiments:
            kwargs = cfg.spec_kwargs(exp)
            if args.n_subjects:
                kwargs["n_subjects"] = args.n_subjects
            if args.n_rounds:
                kwargs["n_rounds"] = args.n_rounds
            spec = make_spec(exp, args.preset, seed=cfg.seed_for(exp, args.seed), **kwargs)
            ts = run_experiment(spec, factory, cot=args.cot, max_attempts=args.max_attempts, jobs=args.jobs, source=source)
            transcripts += ts
            done = sum(t.completed for t in ts)
            if done < len(ts):
                partial = True
                log.warning("%s: %d of %d sessions incomplete", exp, len(ts) - done, len(ts))
            out.extend(transcripts_to_dataset(ts, CATEGORY_MAPS[exp], source).rows)
    except (ParameterRejected, BudgetExhausted) as exc:
        print(f"error: endpoint failure: {exc}", file=sys.stderr)
        return EXIT_ENDPOINT
    finally:
        if client is not None:
            client.close()

    text = out.to_csv_text()
    if args.out == "-":
        sys.stdout.write(text)
    else:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text, encoding="utf-8", newline="")
    if args.transcripts:
        write_transcripts(transcripts, args.transcripts)
    if partial and _endpoint_unreachable(transcripts):
        return EXIT_ENDPOINT
    return EXIT_PARTIAL if partial else EXIT_OK


def _endpoint_unreachable(transcripts: Sequence[Any]) -> bool:
    """True when no session finished and every failed decision got no response at all."""
    if not transcripts or any(t.completed for t in transcripts):
        return False
    for t in transcripts:
        failed = t.rounds[-1].queries[-1] if t.rounds and t.rounds[-1].queries else None
        if failed is None or any(r is not None for r in failed.responses):
            return False
    return True


# --- analyze ----------------------------------------------------------------


def _load_datasets(paths: Sequence[str]) -> ResponseDataset:
    ds = ResponseDataset()
    for p in paths:
        if not Path(p).exists():
            raise ConfigError(f"input file not found: {p}")
        ds.extend(ResponseDataset.from_csv(p).rows)
    return ds


def _csv_text(rows: Sequence[Mapping[str, Any]], header: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(header), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: r.get(k, "") for k in header})
    return buf.getvalue()


RATE_HEADER = ("cell_id", "temperature", "rule", "threshold", "experiment", "completion_rate", "replication_rate", "mean_distance")


def cmd_analyze(args: argparse.Namespace) -> int:
    sim = _load_datasets(args.sim) if args.sim else None
    humans = _load_datasets(args.human) if args.human else load_human_fixtures()
    experiments = _experiments(args.experiment) if args.experiment else None
    report = analyze(sim, humans, experiments)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    doc = json.loads(report.to_json())
    (out / "verdicts.json").write_text(json.dumps(doc["verdicts"], indent=2, sort_keys=True) + "\n", encoding="utf-8")
    (out / "alignment.json").write_text(json.dumps(doc["alignment"], indent=2, sort_keys=True) + "\n", encoding="utf-8")
    (out / "report.md").write_text(report.to_markdown(), encoding="utf-8")
    (out / "distance_by_category.csv").write_text(report.distance_csv(), encoding="utf-8")
    if args.sweep_dir:
        _, results = load_state(args.sweep_dir)
        (out / "rate_by_temperature.csv").write_text(_csv_text(rate_table(results), RATE_HEADER), encoding="utf-8")
    n_rep = sum(v.replicated for vs in report.verdicts.values() for v in vs)
    n_all = sum(len(vs) for vs in report.verdicts.values())
    print(f"{n_rep}/{n_all} hypotheses replicated; outputs in {out}")
    return EXIT_OK


# --- sweep ------------------------------------------------------------------


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = RunConfig.load(args.config)
    settings = dict(cfg.sweep)
    if args.experiment:
        settings["experiments"] = _experiments(args.experiment)
    for key in ("preset", "repetitions"):
        if getattr(args, key) is not None:
            settings[key] = getattr(args, key)
    if args.seed is not None:
        settings["seed"] = args.seed
    elif "seed" not in settings and "base" in cfg.seeds:
        settings["seed"] = cfg.seeds["base"]
    client = None
    if args.agent == "llm":
        client = _make_client(cfg)
        settings.setdefault("model", cfg.endpoint.model)  # type: ignore[union-attr]

        def builder(sampling, rep):
            return _llm_factory(client, sampling)
    else:
        builder = noisy_builder(_failure(args.failure))
    try:
        sweep_cfg = SweepConfig.from_dict(settings)
    except TypeError as exc:
        raise ConfigError(f"sweep settings: {exc}") from None
    humans = _load_datasets(args.human) if args.human else load_human_fixtures()
    try:
        outcome = run_sweep(sweep_cfg, args.state_dir, builder, humans, jobs=args.jobs, max_cells=args.max_cells)
    finally:
        if client is not None:
            client.close()
    root = Path(args.state_dir)
    band = {str(t): ids for t, ids in first_quartile_band(outcome.results).items()}
    (root / "band.json").write_text(json.dumps(band, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    (root / "rate_by_temperature.csv").write_text(_csv_text(rate_table(outcome.results), RATE_HEADER), encoding="utf-8")
    total = len(sweep_cfg.grid())
    print(f"{len(outcome.results)}/{total} cells done in {root}")
    if outcome.aborted_cell is not None:
        print(f"error: request budget exhausted at {outcome.aborted_cell}; rerun to resume", file=sys.stderr)
        return EXIT_ENDPOINT
    return EXIT_OK if outcome.complete else EXIT_PARTIAL


# --- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bomsim", description="Simulate operations-management experiments with language-model agents.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp: argparse.ArgumentParser) -> None:
        sp.add_argument("--config", help="JSON file with endpoint, experiment_overrides, sweep and seeds sections")
        sp.add_argument("--jobs", type=int, default=1, help="sessions run concurrently")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--agent", choices=("rational", "noisy", "llm"), default="noisy")
        sp.add_argument("--failure", choices=("none", "llm-like"), default="none",
                        help="unusable-answer curve for the noisy agent")

    s = sub.add_parser("simulate", help="run experiments and write a long-format CSV")
    common(s)
    s.add_argument("--experiment", "-e", nargs="+", default=["all"], help=f"ids from {', '.join(EXPERIMENT_IDS)} or 'all'")
    s.add_argument("--preset", choices=sorted(PRESETS), default="paper")
    s.add_argument("--n-subjects", type=int)
    s.add_argument("--n-rounds", type=int)
    s.add_argument("--temperature", type=float, default=1.0)
    s.add_argument("--rule", choices=RULES, default="none")
    s.add_argument("--threshold", type=float)
    s.add_argument("--cot", action="store_true", help="ask for reasoning before the answer")
    s.add_argument("--max-attempts", type=int, default=3)
    s.add_argument("--source", help="source tag written to every row")
    s.add_argument("--out", "-o", required=True, help="CSV path or '-' for stdout")
    s.add_argument("--transcripts", help="optional JSONL transcript path")
    s.set_defaults(func=cmd_simulate)

    a = sub.add_parser("analyze", help="replication verdicts and distance to human data")
    a.add_argument("--sim", nargs="*", default=[], help="simulated CSV(s); omit for a human self-replication report")
    a.add_argument("--human", nargs="*", default=[], help="human CSV(s); defaults to the bundled two-site fixtures")
    a.add_argument("--experiment", "-e", nargs="*")
    a.add_argument("--sweep-dir", help="sweep state directory for the rate-by-temperature table")
    a.add_argument("--out-dir", "-o", required=True)
    a.set_defaults(func=cmd_analyze)

    w = sub.add_parser("sweep", help="run the temperature x truncation grid with resumable state")
    common(w)
    w.add_argument("--experiment", "-e", nargs="*")
    w.add_argument("--preset", choices=sorted(PRESETS))
    w.add_argument("--repetitions", type=int)
    w.add_argument("--state-dir", required=True)
    w.add_argument("--human", nargs="*", default=[])
    w.add_argument("--max-cells", type=int, help="stop after this many new cells (resume later)")
    w.set_defaults(func=cmd_sweep, agent="noisy")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        if getattr(args, "jobs", 1) < 1:
            raise ConfigError("--jobs must be >= 1")
        return args.func(args)
    except UnknownExperimentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConfigError, DatasetError, MissingCategoryError, TopologyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ParameterRejected, BudgetExhausted) as exc:
        print(f"error: endpoint failure: {exc}", file=sys.stderr)
        return EXIT_ENDPOINT
    except LlmError as exc:
        print(f"error: endpoint failure: {exc}", file=sys.stderr)
        return EXIT_ENDPOINT
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
