"""Categorical decoding transforms: temperature, top-p, min-p and top-k.

The same transforms drive the offline noisy-categorical agent and describe the
parameters sent to remote chat-completion servers, so a sweep can be exercised
end to end without network access.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Any, Literal

import numpy as np

Rule = Literal["none", "top_p", "min_p", "top_k"]
RULES: tuple[str, ...] = ("none", "top_p", "min_p", "top_k")

_CUM_TOL = 1e-12


@dataclass(frozen=True)
class SamplingConfig:
    """Temperature plus at most one truncation rule."""

    temperature: float = 1.0
    rule: Rule = "none"
    threshold: float | int | None = None

    def __post_init__(self) -> None:
        if not (self.temperature > 0):
            raise ValueError(f"temperature must be > 0, got {self.temperature}")
        if self.rule not in RULES:
            raise ValueError(f"unknown sampling rule {self.rule!r}; expected one of {RULES}")
        t = self.threshold
        if self.rule == "none":
            if t is not None:
                raise ValueError("rule 'none' takes no threshold")
        elif t is None:
            raise ValueError(f"rule {self.rule!r} requires a threshold")
        elif self.rule == "top_p" and not (0 < t <= 1):
            raise ValueError(f"top_p threshold must be in (0, 1], got {t}")
        elif self.rule == "min_p" and not (0 < t < 1):
            raise ValueError(f"min_p threshold must be in (0, 1), got {t}")
        elif self.rule == "top_k" and (int(t) != t or t < 1):
            raise ValueError(f"top_k count must be an integer >= 1, got {t}")

    @property
    def label(self) -> str:
        if self.rule == "none":
            return f"T{self.temperature:g}-default"
        return f"T{self.temperature:g}-{self.rule}-{self.threshold:g}"

    def to_dict(self) -> dict[str, Any]:
        return {"temperature": self.temperature, "rule": self.rule, "threshold": self.threshold}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> SamplingConfig:
        unknown = set(data) - {"temperature", "rule", "threshold"}
        if unknown:
            raise ValueError(f"unknown sampling keys: {sorted(unknown)}")
        rule = data.get("rule", "none") or "none"
        threshold = data.get("threshold")
        if rule == "top_k" and threshold is not None:
            threshold = int(threshold)
        return cls(float(data.get("temperature", 1.0)), rule, threshold)

    def request_params(self) -> dict[str, float | int]:
        """Body fields for an OpenAI-compatible request; never two rules at once."""
        params: dict[str, float | int] = {"temperature": self.temperature}
        if self.rule != "none":
            assert self.threshold is not None
            params[self.rule] = int(self.threshold) if self.rule == "top_k" else float(self.threshold)
        return params

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


def _as_dist(dist: Any) -> np.ndarray:
    p = np.asarray(dist, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise ValueError("distribution must be a non-empty 1-d vector")
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        raise ValueError("distribution must be finite and nonnegative")
    total = p.sum()
    if total <= 0:
        raise ValueError("distribution has zero support")
    return p


def _renormalize(p: np.ndarray, keep: np.ndarray) -> np.ndarray:
    if np.all(keep | (p == 0)):
        return p.copy()
    out = np.where(keep, p, 0.0)
    return out / out.sum()


def temperature_transform(dist: Any, temperature: float) -> np.ndarray:
    """Return p_i^(1/T), renormalized. Computed in log space so tiny T does not underflow."""
    p = _as_dist(dist)
    if not (temperature > 0):
        raise ValueError("temperature must be > 0")
    if temperature == 1.0:
        return p.copy()
    with np.errstate(divide="ignore"):
        logp = np.log(p)
    scaled = logp / temperature
    scaled -= scaled[np.isfinite(scaled)].max()
    out = np.exp(scaled)
    return out / out.sum()


def _descending_order(p: np.ndarray) -> np.ndarray:
    # stable sort on -p breaks ties by original index
    return np.argsort(-p, kind="stable")


def top_p_filter(dist: Any, p_threshold: float) -> np.ndarray:
    """Keep the shortest descending prefix whose cumulative mass reaches ``p_threshold``."""
    p = _as_dist(dist)
    if not (0 < p_threshold <= 1):
        raise ValueError("top_p threshold must be in (0, 1]")
    if p_threshold == 1:
        return p.copy()
    order = _descending_order(p)
    cum = np.cumsum(p[order])
    n_keep = int(np.searchsorted(cum, p_threshold - _CUM_TOL, side="left")) + 1
    keep = np.zeros(p.size, dtype=bool)
    keep[order[: min(n_keep, p.size)]] = True
    return _renormalize(p, keep)


def min_p_filter(dist: Any, min_p: float) -> np.ndarray:
    """Keep entries with probability at least ``min_p`` times the largest probability."""
    p = _as_dist(dist)
    if not (0 < min_p < 1):
        raise ValueError("min_p threshold must be in (0, 1)")
    keep = p >= min_p * p.max()
    return _renormalize(p, keep)


def top_k_filter(dist: Any, k: int) -> np.ndarray:
    p = _as_dist(dist)
    if int(k) != k or k < 1:
        raise ValueError("top_k count must be an integer >= 1")
    k = int(k)
    if k >= p.size:
        return p.copy()
    keep = np.zeros(p.size, dtype=bool)
    keep[_descending_order(p)[:k]] = True
    return _renormalize(p, keep)


def apply_config(dist: Any, config: SamplingConfig) -> np.ndarray:
    """Temperature first, then the single active truncation rule."""
    out = temperature_transform(dist, config.temperature)
    if config.rule == "top_p":
        out = top_p_filter(out, float(config.threshold))  # type: ignore[arg-type]
    elif config.rule == "min_p":
        out = min_p_filter(out, float(config.threshold))  # type: ignore[arg-type]
    elif config.rule == "top_k":
        out = top_k_filter(out, int(config.threshold))  # type: ignore[arg-type]
    return out


def sample(dist: Any, rng: np.random.Generator) -> int:
    """Draw one index; consumes exactly one uniform from ``rng``."""
    p = _as_dist(dist)
    cum = np.cumsum(p)
    u = rng.random() * cum[-1]
    idx = int(np.searchsorted(cum, u, side="right"))
    idx = min(idx, p.size - 1)
    # never land on a zero-probability entry at the top edge
    while p[idx] == 0 and idx > 0:
        idx -= 1
    return idx
