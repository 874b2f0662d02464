"""Statistical primitives used by the replication recipes.

Distribution tails and W1 come from scipy. Mann-Whitney switches to its own
exact enumeration for small samples because scipy's exact mode does not allow
ties. OLS is solved through a QR decomposition. Tests check each piece against
an independent oracle.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field
from itertools import combinations
from typing import Any, Literal, Sequence

import numpy as np
from scipy import special
from scipy import stats as scipy_stats

Alternative = Literal["two-sided", "greater", "less"]

P_FLOOR = 1e-300
EXACT_MW_MAX_N = 12


class DegenerateDataWarning(UserWarning):
    """Input has no variation; the test result carries ``degenerate=True``."""


class SingularDesignError(ValueError):
    """OLS design matrix is rank deficient."""


class InsufficientDataError(ValueError):
    pass


@dataclass
class TestResult:
    statistic: float
    p_value: float
    direction: int
    n1: int
    n2: int | None
    method: str
    alternative: str = "two-sided"
    df: float | None = None
    degenerate: bool = False
    note: str = ""

    __test__ = False  # not a pytest class

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def _clamp_p(p: float) -> float:
    p = float(p)
    if math.isnan(p):
        return 1.0
    return min(1.0, max(P_FLOOR, p))


def _sign(x: float) -> int:
    return (x > 0) - (x < 0)


# --- distributions -------------------------------------------------------


def normal_sf(z: float) -> float:
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def normal_cdf(z: float) -> float:
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def t_sf(t: float, df: float) -> float:
    """Upper tail P(T > t) for Student's t with ``df`` degrees of freedom."""
    if df <= 0:
        raise ValueError("df must be positive")
    # stdtr evaluates the lower tail directly, so this keeps precision far out
    return float(special.stdtr(df, -t))


def t_cdf(t: float, df: float) -> float:
    return 1.0 - t_sf(t, df) if t >= 0 else t_sf(-t, df)


def _tail_p(stat: float, alternative: Alternative, sf) -> float:
    if alternative == "greater":
        return sf(stat)
    if alternative == "less":
        return sf(-stat)
    if alternative == "two-sided":
        return min(1.0, 2.0 * sf(abs(stat)))
    raise ValueError(f"unknown alternative {alternative!r}")


# --- Wasserstein ---------------------------------------------------------


def wasserstein_1d(xs: Sequence[float], ys: Sequence[float]) -> float:
    """W1 between two empirical distributions: the integral of |F_x - F_y|."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.size == 0 or y.size == 0:
        raise ValueError("wasserstein_1d needs two non-empty samples")
    return float(scipy_stats.wasserstein_distance(x, y))


# --- rank tests ----------------------------------------------------------


def _midranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(values.size, dtype=float)
    sorted_vals = values[order]
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def mann_whitney_one_sided(
    xs: Sequence[float],
    ys: Sequence[float],
    alternative: Literal["greater", "less"] = "greater",
    method: Literal["auto", "exact", "normal"] = "auto",
) -> TestResult:
    """One-sided Mann-Whitney U test; ``alternative`` refers to xs relative to ys.

    The statistic is U for xs. Exact enumeration over all rank assignments is
    used when n1 + n2 <= 12 (midranks, so ties are handled), otherwise the normal
    approximation with tie and continuity corrections.
    """
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    n1, n2 = x.size, y.size
    if n1 < 1 or n2 < 1:
        raise InsufficientDataError("mann_whitney needs at least one observation per sample")
    if alternative not in ("greater", "less"):
        raise ValueError("alternative must be 'greater' or 'less'")
    pooled = np.concatenate([x, y])
    ranks = _midranks(pooled)
    u1 = float(ranks[:n1].sum() - n1 * (n1 + 1) / 2.0)
    mean_u = n1 * n2 / 2.0
    direction = _sign(u1 - mean_u)
    n = n1 + n2
    if np.all(pooled == pooled[0]):
        warnings.warn("Mann-Whitney on all-tied data", DegenerateDataWarning, stacklevel=2)
        return TestResult(u1, 0.5, 0, n1, n2, "mann-whitney", alternative, degenerate=True,
                          note="all observations tied")
    use_exact = method == "exact" or (method == "auto" and n <= EXACT_MW_MAX_N)
    if use_exact:
        offset = n1 * (n1 + 1) / 2.0
        total = 0
        hits = 0
        for idx in combinations(range(n), n1):
            u = ranks[list(idx)].sum() - offset
            total += 1
            if alternative == "greater":
                hits += u >= u1 - 1e-9
            else:
                hits += u <= u1 + 1e-9
        return TestResult(u1, _clamp_p(hits / total), direction, n1, n2, "mann-whitney-exact",
                          alternative)
    _, counts = np.unique(pooled, return_counts=True)
    tie_term = float(np.sum(counts.astype(float) ** 3 - counts))
    var_u = n1 * n2 / 12.0 * ((n + 1) - tie_term / (n * (n - 1)))
    sd = math.sqrt(var_u)
    if alternative == "greater":
        z = (u1 - mean_u - 0.5) / sd
        p = normal_sf(z)
    else:
        z = (u1 - mean_u + 0.5) / sd
        p = normal_cdf(z)
    return TestResult(u1, _clamp_p(p), direction, n1, n2, "mann-whitney-normal", alternative,
                      note=f"z={z:.6g}")


def mann_whitney_from_u(u1: float, n1: int, n2: int, alternative: Literal["greater", "less"] = "greater") -> float:
    """Normal-approximation p-value from a reported U (no tie information)."""
    mean_u = n1 * n2 / 2.0
    sd = math.sqrt(n1 * n2 * (n1 + n2 + 1) / 12.0)
    if alternative == "greater":
        return _clamp_p(normal_sf((u1 - mean_u - 0.5) / sd))
    return _clamp_p(normal_cdf((u1 - mean_u + 0.5) / sd))


# --- t tests -------------------------------------------------------------


def _degenerate_t(n1: int, n2: int | None, method: str, alternative: str, diff: float) -> TestResult:
    warnings.warn(f"{method}: zero variance, p reported as 1", DegenerateDataWarning, stacklevel=3)
    return TestResult(float("nan"), 1.0, _sign(diff), n1, n2, method, alternative, degenerate=True,
                      note="zero variance")


def t_test_one_sample(xs: Sequence[float], mu0: float, alternative: Alternative = "two-sided") -> TestResult:
    x = np.asarray(xs, dtype=float)
    n = x.size
    if n < 2:
        raise InsufficientDataError("one-sample t test needs n >= 2")
    mean = float(x.mean())
    sd = float(x.std(ddof=1))
    if sd == 0.0:
        return _degenerate_t(n, None, "t-one-sample", alternative, mean - mu0)
    t = (mean - mu0) / (sd / math.sqrt(n))
    df = n - 1.0
    p = _tail_p(t, alternative, lambda s: t_sf(s, df))
    return TestResult(t, _clamp_p(p), _sign(mean - mu0), n, None, "t-one-sample", alternative, df=df)


def t_test_two_sample(
    xs: Sequence[float],
    ys: Sequence[float],
    alternative: Alternative = "two-sided",
    pooled: bool = False,
) -> TestResult:
    """Welch by default; ``pooled=True`` gives the equal-variance Student test."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    n1, n2 = x.size, y.size
    if n1 < 2 or n2 < 2:
        raise InsufficientDataError("two-sample t test needs n >= 2 per sample")
    diff = float(x.mean() - y.mean())
    v1, v2 = float(x.var(ddof=1)), float(y.var(ddof=1))
    method = "t-two-sample-pooled" if pooled else "t-two-sample-welch"
    if v1 == 0.0 and v2 == 0.0:
        return _degenerate_t(n1, n2, method, alternative, diff)
    if pooled:
        df = n1 + n2 - 2.0
        sp2 = ((n1 - 1) * v1 + (n2 - 1) * v2) / df
        se = math.sqrt(sp2 * (1.0 / n1 + 1.0 / n2))
    else:
        a, b = v1 / n1, v2 / n2
        se = math.sqrt(a + b)
        df = (a + b) ** 2 / (a * a / (n1 - 1) + b * b / (n2 - 1))
    t = diff / se
    p = _tail_p(t, alternative, lambda s: t_sf(s, df))
    return TestResult(t, _clamp_p(p), _sign(diff), n1, n2, method, alternative, df=df)


def t_p_value(t: float, df: float, alternative: Alternative = "two-sided") -> float:
    return _clamp_p(_tail_p(t, alternative, lambda s: t_sf(s, df)))


# --- proportions ---------------------------------------------------------


def two_proportion_test(k1: int, n1: int, k2: int, n2: int, alternative: Alternative = "two-sided") -> TestResult:
    """Pooled two-proportion z test with continuity correction toward zero."""
    if n1 < 1 or n2 < 1:
        raise InsufficientDataError("two_proportion_test needs n >= 1 in both groups")
    if not (0 <= k1 <= n1 and 0 <= k2 <= n2):
        raise ValueError("counts must satisfy 0 <= k <= n")
    p1, p2 = k1 / n1, k2 / n2
    diff = p1 - p2
    pooled = (k1 + k2) / (n1 + n2)
    se = math.sqrt(pooled * (1 - pooled) * (1.0 / n1 + 1.0 / n2))
    if se == 0.0:
        warnings.warn("two-proportion test on all-0 or all-1 outcomes", DegenerateDataWarning, stacklevel=2)
        return TestResult(0.0, 0.5 if alternative != "two-sided" else 1.0, 0, n1, n2,
                          "two-proportion-z", alternative, degenerate=True, note="pooled proportion is 0 or 1")
    cc = 0.5 * (1.0 / n1 + 1.0 / n2)
    adj = math.copysign(max(abs(diff) - cc, 0.0), diff)
    z = adj / se
    p = _tail_p(z, alternative, normal_sf)
    return TestResult(z, _clamp_p(p), _sign(diff), n1, n2, "two-proportion-z", alternative)


# --- OLS -----------------------------------------------------------------


@dataclass
class OLSResult:
    coef: np.ndarray
    se: np.ndarray
    t: np.ndarray
    p: np.ndarray
    r2: float
    df_resid: int
    residuals: np.ndarray
    names: list[str] = field(default_factory=list)

    def index(self, name: str) -> int:
        return self.names.index(name)

    def one_sided_p(self, name: str, direction: int) -> float:
        """p for H1: coefficient has sign ``direction``."""
        i = self.index(name)
        stat = float(self.t[i]) * direction
        if math.isnan(stat):
            return 1.0
        return t_p_value(stat, self.df_resid, "greater")

    def to_dict(self) -> dict[str, Any]:
        return {
            "names": list(self.names),
            "coef": self.coef.tolist(),
            "se": self.se.tolist(),
            "t": self.t.tolist(),
            "p": self.p.tolist(),
            "r2": self.r2,
            "df_resid": self.df_resid,
        }


def ols(y: Sequence[float], X: Any, names: Sequence[str] | None = None) -> OLSResult:
    """Least squares with classical standard errors; X must already hold any intercept column."""
    yv = np.asarray(y, dtype=float)
    Xm = np.asarray(X, dtype=float)
    if Xm.ndim == 1:
        Xm = Xm[:, None]
    n, k = Xm.shape
    if yv.shape != (n,):
        raise ValueError("y and X disagree on the number of rows")
    if n < k + 1:
        raise InsufficientDataError(f"OLS needs at least {k + 1} rows, got {n}")
    q, r = np.linalg.qr(Xm, mode="reduced")
    diag = np.abs(np.diag(r))
    scale = max(float(np.max(np.linalg.norm(Xm, axis=0))), 1.0)
    if np.any(diag <= 1e-10 * scale):
        raise SingularDesignError("design matrix is rank deficient")
    coef = np.linalg.solve(r, q.T @ yv)
    resid = yv - Xm @ coef
    df = n - k
    sigma2 = float(resid @ resid) / df
    r_inv = np.linalg.solve(r, np.eye(k))
    cov = sigma2 * (r_inv @ r_inv.T)
    se = np.sqrt(np.diag(cov))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(se > 0, coef / se, np.sign(coef) * np.inf)
    p = np.array([t_p_value(float(tv), df, "two-sided") if not math.isnan(tv) else 1.0 for tv in t])
    ss_tot = float(np.sum((yv - yv.mean()) ** 2))
    r2 = 1.0 - float(resid @ resid) / ss_tot if ss_tot > 0 else 1.0
    labels = list(names) if names is not None else [f"x{i}" for i in range(k)]
    if len(labels) != k:
        raise ValueError("names length must match the number of design columns")
    return OLSResult(coef, se, t, p, r2, df, resid, labels)


# --- smoothing factor ----------------------------------------------------

MIN_ALPHA_TRIPLES = 10


def _alpha_simple(f: np.ndarray, d: np.ndarray) -> float:
    err = d[:-1] - f[:-1]
    rev = f[1:] - f[:-1]
    denom = float(err @ err)
    if denom == 0.0:
        raise InsufficientDataError("forecast errors are all zero")
    return float(err @ rev) / denom


def _alpha_behavioral(f: np.ndarray, d: np.ndarray) -> float:
    # rows t = 2 .. T-1 (0-based) need F_{t+1}, F_t, F_{t-1}, D_t, D_{t-1}, D_{t-2}
    t_idx = np.arange(2, f.size - 1)
    rev = f[t_idx + 1] - f[t_idx]
    err = d[t_idx] - f[t_idx]
    dd = d[t_idx] - d[t_idx - 1]
    dd_lag = d[t_idx - 1] - d[t_idx - 2]
    df_ = f[t_idx] - f[t_idx - 1]
    df_lag = f[t_idx - 1] - f[t_idx - 2]
    # a subject's first forecast is constant within subject, so it is absorbed by the intercept
    X = np.column_stack([err, dd, dd_lag, df_, df_lag, np.ones_like(err)])
    res = ols(rev, X, ["error", "d_demand", "d_demand_lag", "d_forecast", "d_forecast_lag", "const"])
    return float(res.coef[0])


def estimate_alpha(
    forecasts: Sequence[float],
    demands: Sequence[float],
    mode: Literal["simple", "behavioral"] = "simple",
) -> float:
    """Smoothing-factor estimate for one forecaster.

    ``forecasts[t]`` is the forecast made for period t and ``demands[t]`` the
    demand later realized in that period. Simple mode regresses the revision
    F[t+1] - F[t] on the error D[t] - F[t] through the origin; behavioral mode
    adds demand and forecast changes and an intercept and returns the error
    coefficient.
    """
    f = np.asarray(forecasts, dtype=float)
    d = np.asarray(demands, dtype=float)
    if f.shape != d.shape:
        raise ValueError("forecasts and demands must have the same length")
    usable = f.size - 1 if mode == "simple" else f.size - 3
    if usable < MIN_ALPHA_TRIPLES:
        raise InsufficientDataError(f"need >= {MIN_ALPHA_TRIPLES} usable periods, got {max(usable, 0)}")
    if mode == "simple":
        return _alpha_simple(f, d)
    if mode == "behavioral":
        return _alpha_behavioral(f, d)
    raise ValueError(f"unknown mode {mode!r}")
