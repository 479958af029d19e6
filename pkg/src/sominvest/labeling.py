"""
Binary investment labels for series intervals.

An interval is "good" (label 1) when the stock's weekly log returns are
distributionally above the market's over that interval: a one-tailed Welch
t-test when the paired return differences look normal, a one-tailed
Mann-Whitney U test otherwise. Intervals shorter than a power-derived minimum
sample size are skipped rather than labeled.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from datetime import date
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .changepoint import IntervalSet
from .errors import ValidationError
from .ingest import CompanyDataset


@dataclass(frozen=True)
class PowerSpec:
    """Power-analysis constants for the minimum-sample-size rule.

    The defaults encode: smallest acceptable annual edge of 5%, one-sided
    test at the 5% level (z 1.64) and 80% power (z 0.84).
    """

    min_annual_return: float = 0.05
    power: float = 0.80
    alpha: float = 0.05
    z_alpha: float = 1.64
    z_beta: float = 0.84

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValidationError(f"alpha must be in (0,1), got {self.alpha}")
        if not 0 < self.power < 1:
            raise ValidationError(f"power must be in (0,1), got {self.power}")

    @classmethod
    def from_alpha_power(cls, alpha: float, power: float, min_annual_return: float = 0.05) -> "PowerSpec":
        """Derive the z constants from alpha and power instead of the defaults."""
        return cls(
            min_annual_return=min_annual_return,
            power=power,
            alpha=alpha,
            z_alpha=float(stats.norm.ppf(1.0 - alpha)),
            z_beta=float(stats.norm.ppf(power)),
        )


@dataclass
class ReturnPair:
    """Weekly log returns of stock and market over one interval, plus the
    gross return ratios over the whole interval."""

    stock_returns: np.ndarray
    market_returns: np.ndarray
    stock_ratio: float
    market_ratio: float

    def __post_init__(self):
        if len(self.stock_returns) != len(self.market_returns):
            raise ValidationError("stock and market return samples must have equal length")
        if not (self.stock_ratio > 0 and self.market_ratio > 0):
            raise ValidationError("gross return ratios must be positive")

    def differences(self) -> np.ndarray:
        return self.stock_returns - self.market_returns


class LabelMethod(enum.Enum):
    WELCH_T = "welch_t"
    MANN_WHITNEY = "mann_whitney"
    SKIPPED = "skipped"


class Normality(enum.Enum):
    NORMAL = "normal"
    NON_NORMAL = "non_normal"
    TOO_SMALL = "too_small"


@dataclass
class IntervalLabel:
    interval: tuple[int, int]
    label: Optional[int]  # None iff skipped
    method: LabelMethod
    p_value: Optional[float] = None


@dataclass
class LabeledVector:
    """One feature vector with its label and full provenance."""

    ticker: str
    features: np.ndarray
    label: int
    interval: tuple[int, int]
    start_date: Optional[date] = None
    end_date: Optional[date] = None
    method: LabelMethod = LabelMethod.SKIPPED
    p_value: Optional[float] = None
    feature_names: list[str] = field(default_factory=list)


def min_sample_size(spec: PowerSpec, market_ratio: float, sigma: float) -> int:
    """Weeks needed to detect the minimum acceptable edge with the spec's power.

    The detectable log edge is tau = ln((r + M) / M) for minimum annual edge r
    over market gross return M; the required count is
    ceil(((z_alpha + z_beta) * sigma / tau)^2), clamped to at least 2.
    """
    if market_ratio <= 0:
        raise ValidationError(f"market ratio must be positive, got {market_ratio}")
    if sigma < 0:
        raise ValidationError(f"sigma must be non-negative, got {sigma}")
    shifted = spec.min_annual_return + market_ratio
    if shifted <= 0:
        raise ValidationError("min_annual_return + market_ratio must be positive")
    tau = math.log(shifted / market_ratio)
    if tau <= 0:
        raise ValidationError(f"non-positive detectable edge tau={tau}")
    if sigma == 0.0:
        return 2
    n = math.ceil(((spec.z_alpha + spec.z_beta) * sigma / tau) ** 2)
    return max(n, 2)


def normality_check(sample: Sequence[float]) -> Normality:
    """Anderson-Darling normality gate with estimated mean and variance.

    Uses the small-sample adjusted statistic A2 * (1 + 0.75/n + 2.25/n^2) and
    rejects at the 5% level when it exceeds 0.752. Samples shorter than 8
    cannot support the test and come back TOO_SMALL; degenerate (constant)
    samples are reported non-normal.
    """
    x = np.sort(np.asarray(sample, dtype=float))
    n = len(x)
    if n < 8:
        return Normality.TOO_SMALL
    s = x.std(ddof=1)
    if s == 0.0 or not np.isfinite(s):
        return Normality.NON_NORMAL
    z = (x - x.mean()) / s
    i = np.arange(1, n + 1)
    a2 = -n - np.mean((2 * i - 1) * (stats.norm.logcdf(z) + stats.norm.logsf(z[::-1])))
    a2_adj = a2 * (1.0 + 0.75 / n + 2.25 / n**2)
    return Normality.NON_NORMAL if a2_adj > 0.752 else Normality.NORMAL


def welch_one_tailed(x: Sequence[float], y: Sequence[float]) -> float:
    """One-tailed Welch t-test p-value for the alternative mean(x) > mean(y).

    Unequal variances, Welch-Satterthwaite degrees of freedom. When both
    samples are exactly constant the p-value falls back to 0.5 for equal
    means and 0 or 1 for unequal ones.
    """
    xa = np.asarray(x, dtype=float)
    ya = np.asarray(y, dtype=float)
    nx, ny = len(xa), len(ya)
    if nx < 2 or ny < 2:
        raise ValidationError("each sample needs at least 2 observations")
    vx = xa.var(ddof=1)
    vy = ya.var(ddof=1)
    delta = xa.mean() - ya.mean()
    if vx == 0.0 and vy == 0.0:
        if delta == 0.0:
            return 0.5
        return 0.0 if delta > 0 else 1.0
    se2 = vx / nx + vy / ny
    t = delta / math.sqrt(se2)
    df = se2**2 / ((vx / nx) ** 2 / (nx - 1) + (vy / ny) ** 2 / (ny - 1))
    return float(stats.t.sf(t, df))


def _rank_with_ties(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # Midranks plus the tie-group sizes needed for the variance correction.
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(len(values), dtype=float)
    tie_sizes = []
    i = 0
    sorted_vals = values[order]
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        tie_sizes.append(j - i + 1)
        i = j + 1
    return ranks, np.array(tie_sizes)


def _exact_u_tail(u_obs: float, nx: int, ny: int) -> float:
    # P(U >= u_obs) by counting rank subsets with a size/sum table.
    total_n = nx + ny
    max_sum = total_n * (total_n + 1) // 2
    table = np.zeros((nx + 1, max_sum + 1), dtype=float)
    table[0, 0] = 1.0
    for rank in range(1, total_n + 1):
        for k in range(min(rank, nx), 0, -1):
            table[k, rank:] += table[k - 1, : max_sum + 1 - rank]
    rank_sum_obs = u_obs + nx * (nx + 1) / 2.0
    threshold = math.ceil(rank_sum_obs - 1e-9)
    count = table[nx, threshold:].sum()
    return float(count / math.comb(total_n, nx))


def mann_whitney_one_tailed(x: Sequence[float], y: Sequence[float]) -> float:
    """One-tailed Mann-Whitney U p-value: x stochastically greater than y.

    Uses the exact null distribution for tie-free samples with combined size
    at most 16; otherwise a normal approximation with midrank tie correction
    and continuity correction.
    """
    xa = np.asarray(x, dtype=float)
    ya = np.asarray(y, dtype=float)
    nx, ny = len(xa), len(ya)
    if nx < 1 or ny < 1:
        raise ValidationError("each sample must be non-empty")
    combined = np.concatenate([xa, ya])
    ranks, tie_sizes = _rank_with_ties(combined)
    u_x = ranks[:nx].sum() - nx * (nx + 1) / 2.0
    has_ties = bool((tie_sizes > 1).any())
    if nx + ny <= 16 and not has_ties:
        return _exact_u_tail(u_x, nx, ny)
    total_n = nx + ny
    mean_u = nx * ny / 2.0
    tie_term = float((tie_sizes**3 - tie_sizes).sum()) / (total_n * (total_n - 1))
    var_u = nx * ny / 12.0 * ((total_n + 1) - tie_term)
    if var_u <= 0.0:
        return 0.5
    z = (u_x - 0.5 - mean_u) / math.sqrt(var_u)
    return float(stats.norm.sf(z))


def returns_for_interval(company: CompanyDataset, start: int, end: int) -> ReturnPair:
    """Weekly log returns of stock and market over [start, end]."""
    if not company.aligned:
        raise ValidationError(f"{company.ticker}: dataset must be aligned first")
    if not (0 <= start < end < len(company.log_stock)):
        raise ValidationError(f"interval ({start}, {end}) out of bounds")
    ls = company.log_stock[start : end + 1]
    lm = company.log_market[start : end + 1]
    return ReturnPair(
        stock_returns=np.diff(ls),
        market_returns=np.diff(lm),
        stock_ratio=float(np.exp(ls[-1] - ls[0])),
        market_ratio=float(np.exp(lm[-1] - lm[0])),
    )


def _interval_sigma(pair: ReturnPair) -> float:
    d = pair.differences()
    if len(d) < 2:
        return 0.0
    return float(d.std(ddof=1))


def label_interval(pair: ReturnPair, spec: PowerSpec) -> IntervalLabel:
    """Label one interval, or skip it when too short for the required power.

    The normality gate runs on the paired weekly return differences; the
    interval is good (label 1) exactly when the chosen one-tailed test
    rejects at ``spec.alpha``.
    """
    length = len(pair.stock_returns)
    needed = min_sample_size(spec, pair.market_ratio, _interval_sigma(pair))
    interval = (0, length)
    if length < needed:
        return IntervalLabel(interval, None, LabelMethod.SKIPPED)
    gate = normality_check(pair.differences())
    if gate is Normality.NORMAL:
        p = welch_one_tailed(pair.stock_returns, pair.market_returns)
        method = LabelMethod.WELCH_T
    else:
        p = mann_whitney_one_tailed(pair.stock_returns, pair.market_returns)
        method = LabelMethod.MANN_WHITNEY
    return IntervalLabel(interval, int(p < spec.alpha), method, p)


def sliding_window_labels(
    company: CompanyDataset,
    intervals: IntervalSet,
    spec: PowerSpec,
    stride: Optional[int] = None,
) -> list[LabeledVector]:
    """Emit one labeled vector per (sub-)interval start.

    For each interval (a, b), sub-intervals (a + j*stride, b) are labeled
    while their length strictly exceeds the minimum sample size computed for
    that sub-interval. ``stride=None`` disables the window (only j=0 is
    considered, under the same strict size guard). The vector attached to a
    start index is the company's most recent fundamentals record at or
    before that date; starts with no record emit nothing.
    """
    if stride is not None and stride < 1:
        raise ValidationError(f"stride must be >= 1, got {stride}")
    out: list[LabeledVector] = []
    for a, b in intervals.intervals:
        step = stride if stride is not None else b  # one pass when disabled
        j = 0
        while a + j < b:
            start = a + j
            pair = returns_for_interval(company, start, b)
            needed = min_sample_size(spec, pair.market_ratio, _interval_sigma(pair))
            if b - start <= needed:
                break
            result = label_interval(pair, spec)
            if result.method is not LabelMethod.SKIPPED:
                start_date = company.dates[start]
                record = company.record_at(start_date)
                if record is not None:
                    out.append(
                        LabeledVector(
                            ticker=company.ticker,
                            features=record.values.copy(),
                            label=result.label,
                            interval=(start, b),
                            start_date=start_date,
                            end_date=company.dates[b],
                            method=result.method,
                            p_value=result.p_value,
                        )
                    )
            j += step
    return out
