"""Hypothesis replication recipes and distributional alignment."""

from __future__ import annotations

import itertools
import json
import logging
import math
import warnings
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Iterable, Mapping, Sequence

import numpy as np

from . import stats
from .core import EXPERIMENT_IDS, ResponseDataset, check_experiment_id
from .experiments import ALIGNMENT_CATEGORIES, is_aux_category
from .games.forecasting import FORECAST_CONDITIONS, alpha_star
from .games.newsvendor import ProfitNewsvendorParams

log = logging.getLogger(__name__)

ALPHA_LEVEL = 0.01

METHOD_NOTES = (
    "Replication requires the hypothesised direction and p < 0.01; no multiplicity correction.",
    "Two-sample t tests use Welch degrees of freedom; Mann-Whitney uses midranks with tie and continuity corrections.",
    "Queueing hypotheses use a two-proportion test at wait 1 and a linear-probability interaction in place of a probit.",
    "Forecast smoothing factors are per-subject simple-mode estimates (revision on error, no intercept).",
    "Sweep best-cell band: per temperature, the 4 of 15 truncation cells with the smallest distance (25% rounded up).",
)


class MissingCategoryError(KeyError):
    def __init__(self, experiment: str, category: str, where: str = "dataset") -> None:
        super().__init__(category)
        self.experiment = experiment
        self.category = category
        self.where = where

    def __str__(self) -> str:
        return f"{self.experiment}: category {self.category!r} missing from {self.where}"


@dataclass
class ReplicationVerdict:
    experiment_id: str
    hypothesis_id: str
    description: str
    expected_direction: int
    effect_direction_matches: bool
    p_value: float
    replicated: bool
    method: str = ""
    statistic: float | None = None
    reason: str = ""
    inputs: dict[str, Any] = field(default_factory=dict)
    sub_verdicts: list[ReplicationVerdict] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.replicated and not (self.effect_direction_matches and self.p_value < ALPHA_LEVEL):
            raise ValueError("a replicated verdict needs the expected direction and p < 0.01")

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["sub_verdicts"] = [v.to_dict() for v in self.sub_verdicts]
        return d


def _from_test(exp: str, hid: str, desc: str, expected: int, res: stats.TestResult, inputs: dict[str, Any]) -> ReplicationVerdict:
    matches = res.direction == expected
    p = float(res.p_value)
    reason = ""
    if res.degenerate:
        reason = f"degenerate data ({res.note})"
    elif not matches:
        reason = "effect in the opposite direction" if res.direction != 0 else "no effect"
    elif p >= ALPHA_LEVEL:
        reason = "not significant at 0.01"
    ok = matches and p < ALPHA_LEVEL and not res.degenerate
    return ReplicationVerdict(exp, hid, desc, expected, matches, p, ok, res.method, _finite(res.statistic), reason,
                              {**inputs, "n1": res.n1, "n2": res.n2, "df": res.df, "alternative": res.alternative})


def _from_ols(exp: str, hid: str, desc: str, fit: stats.OLSResult, term: str, expected: int, inputs: dict[str, Any]) -> ReplicationVerdict:
    i = fit.index(term)
    coef = float(fit.coef[i])
    direction = (coef > 0) - (coef < 0)
    p = fit.one_sided_p(term, expected)
    matches = direction == expected
    reason = "" if matches and p < ALPHA_LEVEL else ("effect in the opposite direction" if not matches else "not significant at 0.01")
    return ReplicationVerdict(exp, hid, desc, expected, matches, p, matches and p < ALPHA_LEVEL, "ols", _finite(float(fit.t[i])),
                              reason, {**inputs, "term": term, "coef": coef, "se": float(fit.se[i]),
                                       "df_resid": fit.df_resid, "n": int(fit.residuals.size), "fit": fit.to_dict()})


def _failed(exp: str, hid: str, desc: str, expected: int, reason: str) -> ReplicationVerdict:
    return ReplicationVerdict(exp, hid, desc, expected, False, 1.0, False, reason=reason)


def _finite(x: float | None) -> float | None:
    if x is None or not math.isfinite(x):
        return None
    return float(x)


# --- dataset helpers --------------------------------------------------------


def _require(ds: ResponseDataset, exp: str, *categories: str) -> None:
    present = set(ds.categories(exp))
    for c in categories:
        if c not in present:
            raise MissingCategoryError(exp, c)


def _by_subject(ds: ResponseDataset, exp: str, category: str) -> dict[str, list[tuple[int, float]]]:
    out: dict[str, list[tuple[int, float]]] = defaultdict(list)
    for r in ds.rows:
        if r.experiment == exp and r.category == category:
            out[r.subject].append((r.round, r.value))
    for v in out.values():
        v.sort()
    return dict(sorted(out.items()))


def _keyed(ds: ResponseDataset, exp: str, category: str) -> dict[tuple[str, int], float]:
    return {(r.subject, r.round): r.value for r in ds.rows if r.experiment == exp and r.category == category}


def subject_means(ds: ResponseDataset, exp: str, category: str) -> dict[str, float]:
    return {s: float(np.mean([v for _, v in vals])) for s, vals in _by_subject(ds, exp, category).items()}


def _single_source(ds: ResponseDataset, source: str | None) -> ResponseDataset:
    if source is not None:
        return ds.filter(source=source)
    sources = ds.sources()
    if len(sources) > 1:
        raise ValueError(f"dataset holds several sources {sources}; pass source=")
    return ds


# --- recipes ----------------------------------------------------------------


def _payment_scheme(ds: ResponseDataset, params: Any) -> list[ReplicationVerdict]:
    exp = "payment_scheme"
    _require(ds, exp, "O", "C")
    o, c = subject_means(ds, exp, "O"), subject_means(ds, exp, "C")
    res = stats.mann_whitney_one_sided(list(o.values()), list(c.values()), "greater")
    return [_from_test(exp, "H1", "mean order under O exceeds mean order under C", 1, res,
                       {"mean_O": float(np.mean(list(o.values()))), "mean_C": float(np.mean(list(c.values())))})]


def _beer_game(ds: ResponseDataset, params: Any) -> list[ReplicationVerdict]:
    exp = "beer_game"
    _require(ds, exp, "base", "share")
    var = {}
    for cond in ("base", "share"):
        var[cond] = [float(np.var([v for _, v in vals], ddof=1)) for vals in _by_subject(ds, exp, cond).values() if len(vals) >= 2]
    res = stats.mann_whitney_one_sided(var["base"], var["share"], "greater")
    return [_from_test(exp, "H2", "order variance is lower when inventory information is shared", 1, res,
                       {"mean_var_base": float(np.mean(var["base"])), "mean_var_share": float(np.mean(var["share"]))})]


def _reserve_auction(ds: ResponseDataset, params: Any) -> list[ReplicationVerdict]:
    exp = "reserve_auction"
    cats = ("1", "4", "7", "10")
    present = [c for c in cats if c in ds.categories(exp)]
    if len(present) < 2:
        raise MissingCategoryError(exp, next(c for c in cats if c not in present))
    rows = [r for r in ds.rows if r.experiment == exp and r.category in present]
    y = np.array([r.value for r in rows])
    n = np.array([float(r.category) for r in rows])
    t = np.array([float(r.round) for r in rows])
    X = np.column_stack([np.ones_like(y), n - n.mean(), t - t.mean()])
    desc = "reserve prices rise with the number of bidders"
    try:
        fit = stats.ols(y, X, ["const", "bidders", "period"])
        head = _from_ols(exp, "H3", desc, fit, "bidders", 1, {"categories": present})
    except (stats.SingularDesignError, stats.InsufficientDataError) as exc:
        head = _failed(exp, "H3", desc, 1, f"regression failed: {exc}")
    means = {c: subject_means(ds, exp, c) for c in present}
    for lo, hi in zip(present, present[1:]):
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", stats.DegenerateDataWarning)
                res = stats.t_test_two_sample(list(means[hi].values()), list(means[lo].values()), "greater")
            head.sub_verdicts.append(_from_test(exp, f"H3:{hi}>{lo}", f"reserve with {hi} bidders exceeds {lo}", 1, res, {}))
        except stats.InsufficientDataError as exc:
            head.sub_verdicts.append(_failed(exp, f"H3:{hi}>{lo}", f"reserve with {hi} bidders exceeds {lo}", 1, str(exc)))
    return [head]


def _bid_ratio(ds: ResponseDataset, exp: str, cond: str) -> dict[str, float]:
    bids = _keyed(ds, exp, cond)
    values = _keyed(ds, exp, f"{cond}/value")
    per: dict[str, list[float]] = defaultdict(list)
    for key, bid in bids.items():
        v = values.get(key)
        if v is not None and v > 0:
            per[key[0]].append(bid / v)
    return {s: float(np.mean(x)) for s, x in sorted(per.items())}


def _regret_auction(ds: ResponseDataset, params: Any) -> list[ReplicationVerdict]:
    exp = "regret_auction"
    _require(ds, exp, "loser", "both", "loser/value", "both/value")
    loser, both = _bid_ratio(ds, exp, "loser"), _bid_ratio(ds, exp, "both")
    res = stats.t_test_two_sample(list(both.values()), list(loser.values()), "less")
    return [_from_test(exp, "H4", "bid/value is lower with both regrets shown than with loser's only", -1, res,
                       {"mean_ratio_loser": float(np.mean(list(loser.values()))),
                        "mean_ratio_both": float(np.mean(list(both.values())))})]


def _contract(ds: ResponseDataset, params: Any) -> list[ReplicationVerdict]:
    exp = "contract"
    _require(ds, exp, "qd/efficiency", "tpt/efficiency")
    qd, tpt = subject_means(ds, exp, "qd/efficiency"), subject_means(ds, exp, "tpt/efficiency")
    res = stats.t_test_two_sample(list(qd.values()), list(tpt.values()), "greater")
    return [_from_test(exp, "H5", "channel efficiency is higher under quantity discounts", 1, res,
                       {"mean_eff_QD": float(np.mean(list(qd.values()))), "mean_eff_TPT": float(np.mean(list(tpt.values())))})]


def _queue_rows(ds: ResponseDataset, cond: str) -> list[tuple[float, float, float]]:
    """(buy, wait, informed) per consumer decision."""
    exp = "queue"
    buys = _keyed(ds, exp, cond)
    waits = _keyed(ds, exp, f"{cond}/wait")
    informed = _keyed(ds, exp, f"{cond}/informed")
    out = []
    for key in sorted(buys):
        if key in waits and key in informed:
            out.append((buys[key], waits[key], informed[key]))
    return out


def _queue(ds: ResponseDataset, params: Any) -> list[ReplicationVerdict]:
    exp = "queue"
    _require(ds, exp, "q00", "q50", "q00/wait", "q50/wait", "q00/informed", "q50/informed")
    rows = {c: [r for r in _queue_rows(ds, c) if r[2] == 0] for c in ("q00", "q50")}
    at1 = {c: [b for b, w, _ in rows[c] if w == 1] for c in rows}
    desc_a = "uninformed consumers facing wait 1 buy less often when half the consumers are informed"
    if not at1["q00"] or not at1["q50"]:
        kd_a = _failed(exp, "KD_a", desc_a, -1, "no uninformed decisions at wait 1")
    else:
        k50, n50 = int(sum(at1["q50"])), len(at1["q50"])
        k00, n00 = int(sum(at1["q00"])), len(at1["q00"])
        res = stats.two_proportion_test(k50, n50, k00, n00, "less")
        kd_a = _from_test(exp, "KD_a", desc_a, -1, res, {"k_q50": k50, "n_q50": n50, "k_q00": k00, "n_q00": n00})
    desc_b = "with informed consumers present, longer waits raise uninformed purchase rates (wait x q50 > 0)"
    buy, wait, q50 = [], [], []
    for cond, flag in (("q00", 0.0), ("q50", 1.0)):
        for b, w, _ in rows[cond]:
            buy.append(b)
            wait.append(w)
            q50.append(flag)
    w_arr, g_arr = np.array(wait), np.array(q50)
    X = np.column_stack([np.ones_like(w_arr), w_arr, g_arr, w_arr * g_arr])
    try:
        fit = stats.ols(np.array(buy), X, ["const", "wait", "q50", "wait_x_q50"])
        kd_b = _from_ols(exp, "KD_b", desc_b, fit, "wait_x_q50", 1, {})
    except (stats.SingularDesignError, stats.InsufficientDataError) as exc:
        kd_b = _failed(exp, "KD_b", desc_b, 1, f"regression failed: {exc}")
    return [kd_a, kd_b]


def subject_alphas(ds: ResponseDataset, cond: str, mode: str = "simple") -> dict[str, float]:
    exp = "forecast"
    forecasts = _by_subject(ds, exp, cond)
    demands = _by_subject(ds, exp, f"{cond}/demand")
    out = {}
    for subject, fvals in forecasts.items():
        dmap = dict(demands.get(subject, []))
        pairs = [(f, dmap[r]) for r, f in fvals if r in dmap]
        if not pairs:
            continue
        f, d = zip(*pairs)
        try:
            out[subject] = stats.estimate_alpha(f, d, mode)  # type: ignore[arg-type]
        except stats.InsufficientDataError:
            log.debug("skipping %s: too few periods", subject)
    return out


def condition_benchmark(condition: str) -> float:
    c, n = FORECAST_CONDITIONS[condition]
    return alpha_star(c * c / (n * n))


def _forecast(ds: ResponseDataset, params: Any) -> list[ReplicationVerdict]:
    exp = "forecast"
    _require(ds, exp, "stable", "unstable", "stable/demand", "unstable/demand")
    out = []
    for hid, cond, alt, expected in (("KR_a", "stable", "greater", 1), ("KR_b", "unstable", "less", -1)):
        bench = condition_benchmark(cond)
        alphas = subject_alphas(ds, cond)
        word = "above" if expected > 0 else "below"
        desc = f"{cond} smoothing factor lies {word} the optimum {bench:.4f}"
        try:
            res = stats.t_test_one_sample(list(alphas.values()), bench, alt)  # type: ignore[arg-type]
            out.append(_from_test(exp, hid, desc, expected, res,
                                  {"benchmark": bench, "mean_alpha": float(np.mean(list(alphas.values())))}))
        except stats.InsufficientDataError as exc:
            out.append(_failed(exp, hid, desc, expected, str(exc)))
    return out


def _newsvendor_profit(ds: ResponseDataset, params: Any) -> list[ReplicationVerdict]:
    exp = "newsvendor_profit"
    _require(ds, exp, "high", "low")
    p = params if isinstance(params, ProfitNewsvendorParams) else ProfitNewsvendorParams()
    out = []
    for hid, cond, alt, expected in (("SC_a", "high", "less", -1), ("SC_b", "low", "greater", 1)):
        bench = p.optimal_order(cond)
        means = list(subject_means(ds, exp, cond).values())
        word = "below" if expected < 0 else "above"
        res = stats.t_test_one_sample(means, bench, alt)  # type: ignore[arg-type]
        out.append(_from_test(exp, hid, f"{cond}-margin orders fall {word} the optimum {bench}", expected, res,
                              {"benchmark": bench, "mean_order": float(np.mean(means))}))
    return out


def _cheap_talk(ds: ResponseDataset, params: Any) -> list[ReplicationVerdict]:
    exp = "cheap_talk"
    _require(ds, exp, "signal", "signal/xi", "capacity", "capacity/received")
    out = []
    for hid, ycat, xcat, desc in (
        ("OZ_a", "signal", "signal/xi", "reported forecasts increase with private forecasts"),
        ("OZ_b", "capacity", "capacity/received", "capacity increases with the reported forecast"),
    ):
        yk, xk = _keyed(ds, exp, ycat), _keyed(ds, exp, xcat)
        keys = sorted(set(yk) & set(xk))
        y = np.array([yk[k] for k in keys])
        x = np.array([xk[k] for k in keys])
        try:
            fit = stats.ols(y, np.column_stack([np.ones_like(x), x]), ["const", "slope"])
            out.append(_from_ols(exp, hid, desc, fit, "slope", 1, {}))
        except (stats.SingularDesignError, stats.InsufficientDataError) as exc:
            out.append(_failed(exp, hid, desc, 1, f"regression failed: {exc}"))
    return out


RECIPES: dict[str, Callable[[ResponseDataset, Any], list[ReplicationVerdict]]] = {
    "payment_scheme": _payment_scheme,
    "beer_game": _beer_game,
    "reserve_auction": _reserve_auction,
    "regret_auction": _regret_auction,
    "contract": _contract,
    "queue": _queue,
    "forecast": _forecast,
    "newsvendor_profit": _newsvendor_profit,
    "cheap_talk": _cheap_talk,
}

HYPOTHESES: dict[str, tuple[str, ...]] = {
    "payment_scheme": ("H1",),
    "beer_game": ("H2",),
    "reserve_auction": ("H3",),
    "regret_auction": ("H4",),
    "contract": ("H5",),
    "queue": ("KD_a", "KD_b"),
    "forecast": ("KR_a", "KR_b"),
    "newsvendor_profit": ("SC_a", "SC_b"),
    "cheap_talk": ("OZ_a", "OZ_b"),
}


def replicate(experiment_id: str, dataset: ResponseDataset, source: str | None = None, params: Any = None) -> list[ReplicationVerdict]:
    """One verdict per hypothesis of the study, computed on one source's rows."""
    check_experiment_id(experiment_id)
    # canonical row order keeps floating-point sums independent of input order
    ds = ResponseDataset(_single_source(dataset, source).filter(experiment=experiment_id).sorted_rows())
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", stats.DegenerateDataWarning)
        try:
            return RECIPES[experiment_id](ds, params)
        except stats.InsufficientDataError as exc:
            return [_failed(experiment_id, h, "", 0, f"insufficient data: {exc}") for h in HYPOTHESES[experiment_id]]


# --- alignment --------------------------------------------------------------


@dataclass
class AlignmentRow:
    sim_source: str
    experiment: str
    category: str
    distances: dict[str, float]
    mean_distance: float
    human_baseline: float | None
    ratio_to_baseline: float | None


@dataclass
class AlignmentReport:
    rows: list[AlignmentRow] = field(default_factory=list)
    baselines: dict[str, float] = field(default_factory=dict)
    human_sources: list[str] = field(default_factory=list)

    def get(self, experiment: str, category: str, sim_source: str | None = None) -> AlignmentRow:
        for r in self.rows:
            if r.experiment == experiment and r.category == category and (sim_source is None or r.sim_source == sim_source):
                return r
        raise KeyError((experiment, category, sim_source))

    def to_dict(self) -> dict[str, Any]:
        return {"human_sources": self.human_sources, "baselines": self.baselines, "rows": [asdict(r) for r in self.rows]}


def _is_human(source: str) -> bool:
    return source.startswith("human")


def human_baseline(humans: ResponseDataset, experiment: str, category: str) -> float | None:
    srcs = [s for s in humans.sources() if _is_human(s)]
    samples = {s: humans.values(experiment=experiment, category=category, source=s) for s in srcs}
    samples = {s: v for s, v in samples.items() if v.size}
    if len(samples) < 2:
        return None
    pairs = list(itertools.combinations(sorted(samples), 2))
    return float(np.mean([stats.wasserstein_1d(samples[a], samples[b]) for a, b in pairs]))


def alignment(
    sim: ResponseDataset,
    humans: ResponseDataset | Sequence[ResponseDataset],
    experiments: Iterable[str] | None = None,
) -> AlignmentReport:
    """Per-category W1 from each simulated source to each human source, with the human-pair baseline."""
    if not isinstance(humans, ResponseDataset):
        merged = ResponseDataset()
        for h in humans:
            merged.extend(h.rows)
        humans = merged
    human_srcs = [s for s in humans.sources() if _is_human(s)]
    if not human_srcs:
        raise ValueError("alignment needs at least one human-tagged source (tag starting with 'human')")
    exps = list(experiments) if experiments is not None else [e for e in EXPERIMENT_IDS if e in sim.experiments()]
    report = AlignmentReport(human_sources=human_srcs)
    for exp in exps:
        for cat in ALIGNMENT_CATEGORIES[exp]:
            if is_aux_category(cat):
                continue
            for sim_src in sim.sources():
                xs = sim.values(experiment=exp, category=cat, source=sim_src)
                if xs.size == 0:
                    continue
                dists = {}
                for h in human_srcs:
                    ys = humans.values(experiment=exp, category=cat, source=h)
                    if ys.size == 0:
                        raise MissingCategoryError(exp, cat, f"human source {h}")
                    dists[h] = stats.wasserstein_1d(xs, ys)
                key = f"{exp}/{cat}"
                if key not in report.baselines:
                    base = human_baseline(humans, exp, cat)
                    if base is not None:
                        report.baselines[key] = base
                base = report.baselines.get(key)
                mean_d = float(np.mean(list(dists.values())))
                ratio = mean_d / base if base else None
                report.rows.append(AlignmentRow(sim_src, exp, cat, dists, mean_d, base, ratio))
    return report


def human_only_alignment(humans: ResponseDataset, experiments: Iterable[str] | None = None) -> AlignmentReport:
    """Baselines only, for a report that has no simulated data."""
    report = AlignmentReport(human_sources=[s for s in humans.sources() if _is_human(s)])
    exps = list(experiments) if experiments is not None else [e for e in EXPERIMENT_IDS if e in humans.experiments()]
    for exp in exps:
        for cat in ALIGNMENT_CATEGORIES[exp]:
            base = human_baseline(humans, exp, cat)
            if base is not None:
                report.baselines[f"{exp}/{cat}"] = base
    return report


def improvement_ratio(w_before: float, w_after: float) -> float:
    """Relative reduction in distance; positive means the second run is closer to humans."""
    if w_before == 0:
        raise ZeroDivisionError("improvement ratio undefined when the starting distance is 0")
    if w_before < 0 or w_after < 0:
        raise ValueError("distances must be nonnegative")
    return (w_before - w_after) / w_before


# --- reports ----------------------------------------------------------------


@dataclass
class AnalysisReport:
    verdicts: dict[str, list[ReplicationVerdict]]
    alignment: AlignmentReport | None = None
    notes: tuple[str, ...] = METHOD_NOTES
    human_self_replication: bool = False

    def to_dict(self) -> dict[str, Any]:
        return {
            "verdicts": {src: [v.to_dict() for v in vs] for src, vs in self.verdicts.items()},
            "alignment": self.alignment.to_dict() if self.alignment else None,
            "notes": list(self.notes),
            "human_self_replication": self.human_self_replication,
        }

    def to_json(self) -> str:
        return json.dumps(_json_clean(self.to_dict()), indent=2, sort_keys=True)

    def to_markdown(self) -> str:
        lines: list[str] = []
        title = "Human self-replication" if self.human_self_replication else "Replication"
        sources = sorted(self.verdicts)
        lines.append(f"## {title}")
        lines.append("")
        lines.append("| study | hypothesis | " + " | ".join(sources) + " |")
        lines.append("|---|---|" + "---|" * len(sources))
        keys: list[tuple[str, str]] = []
        for vs in self.verdicts.values():
            for v in vs:
                if (v.experiment_id, v.hypothesis_id) not in keys:
                    keys.append((v.experiment_id, v.hypothesis_id))
        keys.sort(key=lambda k: (EXPERIMENT_IDS.index(k[0]), k[1]))
        for exp, hid in keys:
            cells = []
            for src in sources:
                match = [v for v in self.verdicts[src] if v.experiment_id == exp and v.hypothesis_id == hid]
                if not match:
                    cells.append(" ")
                else:
                    v = match[0]
                    cells.append(("✓" if v.replicated else "✗") + f" (p={v.p_value:.3g})")
            lines.append(f"| {exp} | {hid} | " + " | ".join(cells) + " |")
        if self.alignment is not None:
            lines += ["", "## Wasserstein distance to human data", ""]
            if self.alignment.rows:
                lines.append("| source | study | category | mean distance | human baseline | ratio |")
                lines.append("|---|---|---|---|---|---|")
                for r in self.alignment.rows:
                    base = "n/a" if r.human_baseline is None else f"{r.human_baseline:.4g}"
                    ratio = "n/a" if r.ratio_to_baseline is None else f"{r.ratio_to_baseline:.3g}"
                    lines.append(f"| {r.sim_source} | {r.experiment} | {r.category} | {r.mean_distance:.4g} | {base} | {ratio} |")
            else:
                lines.append("| study/category | human baseline |")
                lines.append("|---|---|")
                for key, base in sorted(self.alignment.baselines.items()):
                    lines.append(f"| {key} | {base:.4g} |")
        lines += ["", "Notes:"] + [f"- {n}" for n in self.notes]
        return "\n".join(lines) + "\n"

    def distance_csv(self) -> str:
        out = ["sim_source,experiment,category,human_source,distance,human_baseline"]
        if self.alignment is not None:
            for r in self.alignment.rows:
                base = "" if r.human_baseline is None else repr(r.human_baseline)
                for h, d in sorted(r.distances.items()):
                    out.append(f"{r.sim_source},{r.experiment},{r.category},{h},{d!r},{base}")
        return "\n".join(out) + "\n"


def _json_clean(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _json_clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_clean(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def analyze(
    sim: ResponseDataset | None,
    humans: Sequence[ResponseDataset] | ResponseDataset | None,
    experiments: Iterable[str] | None = None,
) -> AnalysisReport:
    """Verdicts for every source in ``sim`` (or for each human source when sim is absent) plus alignment."""
    human_ds: ResponseDataset | None = None
    if humans is not None:
        if isinstance(humans, ResponseDataset):
            human_ds = humans
        else:
            human_ds = ResponseDataset()
            for h in humans:
                human_ds.extend(h.rows)
    target = sim if sim is not None else human_ds
    if target is None:
        raise ValueError("nothing to analyze")
    exps = list(experiments) if experiments is not None else [e for e in EXPERIMENT_IDS if e in target.experiments()]
    verdicts: dict[str, list[ReplicationVerdict]] = {}
    for src in target.sources():
        sub = target.filter(source=src)
        verdicts[src] = [v for e in exps if e in sub.experiments() for v in replicate(e, sub)]
    align = None
    if human_ds is not None:
        align = alignment(sim, human_ds, exps) if sim is not None else human_only_alignment(human_ds, exps)
    return AnalysisReport(verdicts, align, human_self_replication=sim is None)


def replication_rate(verdict_sets: Sequence[Sequence[ReplicationVerdict]]) -> float:
    """Share of runs in which every hypothesis replicated."""
    if not verdict_sets:
        return 0.0
    return sum(1 for vs in verdict_sets if vs and all(v.replicated for v in vs)) / len(verdict_sets)


def mean_by(values: Mapping[str, Sequence[float]]) -> dict[str, float]:
    return {k: float(np.mean(v)) for k, v in values.items() if len(v)}


def load_reference() -> dict[str, Any]:
    """Published per-model checkmarks and distances, bundled for report formatting only."""
    from importlib import resources

    text = (resources.files("bomsim") / "data" / "reference_results.json").read_text(encoding="utf-8")
    return json.loads(text)


def reference_markdown(reference: Mapping[str, Any] | None = None) -> str:
    """Checkmark table of the bundled reference results, same layout as AnalysisReport.to_markdown."""
    ref = reference if reference is not None else load_reference()
    models = list(ref["models"])
    lines = ["| study | hypothesis | " + " | ".join(models) + " |", "|---|---|" + "---|" * len(models)]
    for exp in EXPERIMENT_IDS:
        for hid, marks in sorted(ref["replication"].get(exp, {}).items()):
            lines.append(f"| {exp} | {hid} | " + " | ".join("✓" if marks[m] else "✗" for m in models) + " |")
    return "\n".join(lines) + "\n"
