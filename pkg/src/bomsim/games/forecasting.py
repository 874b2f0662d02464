"""Demand forecasting with permanent and temporary shocks."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

FORECAST_CONDITIONS = {"stable": (0.0, 10.0), "unstable": (40.0, 10.0)}


@dataclass(frozen=True)
class ForecastParams:
    c: float = 0.0
    n: float = 10.0
    mu0: float = 500.0
    history: int = 30
    horizon: int = 50

    def __post_init__(self) -> None:
        if self.c < 0:
            raise ValueError("permanent-shock sd c must be nonnegative")
        if self.n <= 0:
            raise ValueError("temporary-shock sd n must be positive")
        if self.history < 1 or self.horizon < 1:
            raise ValueError("history and horizon must be positive")

    @classmethod
    def for_condition(cls, condition: str, **overrides) -> ForecastParams:
        if condition not in FORECAST_CONDITIONS:
            raise ValueError(f"unknown forecast condition {condition!r}")
        c, n = FORECAST_CONDITIONS[condition]
        return cls(c=overrides.pop("c", c), n=overrides.pop("n", n), **overrides)

    @property
    def change_to_noise(self) -> float:
        return self.c**2 / self.n**2


def alpha_star(w: float) -> float:
    """Optimal smoothing weight for change-to-noise ratio ``w`` (0 at w = 0)."""
    if w < 0:
        raise ValueError("change-to-noise ratio must be nonnegative")
    if w == 0:
        return 0.0
    return 2.0 / (1.0 + math.sqrt(1.0 + 4.0 / w))


def forecast_series(params: ForecastParams, rng: np.random.Generator) -> np.ndarray:
    """Demand D_t = mu_t + eps_t with mu_t = mu_{t-1} + v_t, length history + horizon."""
    total = params.history + params.horizon
    eps = rng.normal(0.0, params.n, size=total)
    if params.c > 0:
        mu = params.mu0 + np.cumsum(rng.normal(0.0, params.c, size=total))
    else:
        mu = np.full(total, params.mu0)
    return mu + eps


def smoothing_forecasts(demands: Sequence[float], alpha: float, initial: float) -> np.ndarray:
    """F_1 = initial, F_{t+1} = F_t + alpha (D_t - F_t)."""
    d = np.asarray(demands, dtype=float)
    f = np.empty_like(d)
    f[0] = initial
    for t in range(1, d.size):
        f[t] = f[t - 1] + alpha * (d[t - 1] - f[t - 1])
    return f
