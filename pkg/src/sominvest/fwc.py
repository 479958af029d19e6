"""
Fractional, weighted, convolved unit scores and test-vector ranking.

Training vectors vote good/bad at their best matching unit. Each unit's score
is its good-vote fraction weighted by vote mass, then a normalized Gaussian
kernel smooths the grid (nearby good units reinforce each other). Test
vectors are ranked by the smoothed score at their own best matching unit.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from datetime import date
from typing import Sequence

import numpy as np

from .errors import ValidationError
from .featsel import FeatureMatrix
from .som import SomGrid, _assign_all, bmu


class WeightMode(enum.Enum):
    # fraction: mass * good/(good+bad). ratio: the literal good/bad variant,
    # kept for comparison; its zero-bad cells use a denominator floor of 1.
    FRACTION = "fraction"
    RATIO = "ratio"

    @classmethod
    def parse(cls, name: str) -> "WeightMode":
        try:
            return cls(name.lower())
        except ValueError:
            raise ValidationError(f"unknown weight mode {name!r}") from None


@dataclass
class VoteGrid:
    good: np.ndarray  # rows x cols counts
    bad: np.ndarray

    def __post_init__(self):
        if self.good.shape != self.bad.shape:
            raise ValidationError("good and bad grids must share a shape")
        if (self.good < 0).any() or (self.bad < 0).any():
            raise ValidationError("vote counts must be non-negative")

    def total(self) -> int:
        return int(self.good.sum() + self.bad.sum())


@dataclass
class FwcMatrix:
    scores: np.ndarray  # rows x cols
    kernel_size: int
    kernel_sigma: float

    def __post_init__(self):
        if not np.isfinite(self.scores).all():
            raise ValidationError("scores must be finite")


@dataclass
class RankedEntry:
    ticker: str
    start_date: date
    unit: tuple[int, int]
    score: float


@dataclass
class RankedResult:
    entries: list[RankedEntry]


def accumulate_votes(grid: SomGrid, data: FeatureMatrix, labels: Sequence[int]) -> VoteGrid:
    """One vote per training row at its BMU: label 1 is good, 0 is bad."""
    y = np.asarray(labels, dtype=int)
    if len(y) != data.rows:
        raise ValidationError("labels length must equal row count")
    idx, _ = _assign_all(data.values, grid.flat(), grid.dim)
    good = np.bincount(idx[y == 1], minlength=grid.units)
    bad = np.bincount(idx[y == 0], minlength=grid.units)
    return VoteGrid(
        good.reshape(grid.rows, grid.cols).astype(np.int64),
        bad.reshape(grid.rows, grid.cols).astype(np.int64),
    )


def fractional_weighted(votes: VoteGrid, mode: WeightMode = WeightMode.FRACTION) -> np.ndarray:
    """Good-vote share weighted by good-vote mass; unvoted units score 0."""
    g = votes.good.astype(float)
    b = votes.bad.astype(float)
    total = g + b
    if mode is WeightMode.FRACTION:
        with np.errstate(invalid="ignore", divide="ignore"):
            frac = np.where(total > 0, g / np.maximum(total, 1.0), 0.0)
        return g * frac
    denom = np.maximum(b, 1.0)
    return np.where(total > 0, g * g / denom, 0.0)


def gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    """Discrete 2-D Gaussian at integer offsets, normalized to sum exactly 1."""
    if size < 1 or size % 2 == 0:
        raise ValidationError(f"kernel size must be odd and >= 1, got {size}")
    if sigma <= 0:
        raise ValidationError(f"sigma must be positive, got {sigma}")
    half = size // 2
    offsets = np.arange(-half, half + 1, dtype=float)
    kernel = np.exp(-(offsets[:, None] ** 2 + offsets[None, :] ** 2) / (2.0 * sigma * sigma))
    return kernel / kernel.sum()


def convolve(scores: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Same-size convolution with edge-replicate padding.

    Replicate padding keeps border scores on the same footing as interior
    ones and preserves constant grids exactly (the kernel sums to 1).
    """
    scores = np.asarray(scores, dtype=float)
    if kernel.shape[0] > scores.shape[0] or kernel.shape[1] > scores.shape[1]:
        raise ValidationError("kernel must not exceed the grid in either dimension")
    half_r = kernel.shape[0] // 2
    half_c = kernel.shape[1] // 2
    padded = np.pad(scores, ((half_r, half_r), (half_c, half_c)), mode="edge")
    out = np.zeros_like(scores)
    rows, cols = scores.shape
    for dr in range(kernel.shape[0]):
        for dc in range(kernel.shape[1]):
            out += kernel[dr, dc] * padded[dr : dr + rows, dc : dc + cols]
    return out


def build_fwc(
    votes: VoteGrid,
    kernel_size: int = 5,
    kernel_sigma: float = 1.0,
    mode: WeightMode = WeightMode.FRACTION,
) -> FwcMatrix:
    """Weight the vote fractions then smooth them into the final score grid."""
    weighted = fractional_weighted(votes, mode)
    smoothed = convolve(weighted, gaussian_kernel(kernel_size, kernel_sigma))
    return FwcMatrix(smoothed, kernel_size, kernel_sigma)


def rank_vectors(
    fwc: FwcMatrix,
    grid: SomGrid,
    test: FeatureMatrix,
    provenance: Sequence[tuple[str, date]],
    n: int,
) -> RankedResult:
    """Score each test row at its BMU and return the top n.

    Ordering is total: descending score, then ticker, then date, then unit
    index, so permuting the input rows cannot change the result. Asking for
    more rows than exist returns everything ranked.
    """
    if len(provenance) != test.rows:
        raise ValidationError("provenance length must equal test row count")
    entries = []
    for i in range(test.rows):
        unit, _ = bmu(grid, test.values[i])
        ticker, when = provenance[i]
        entries.append(RankedEntry(ticker, when, unit, float(fwc.scores[unit])))
    entries.sort(key=lambda e: (-e.score, e.ticker, e.start_date, e.unit))
    return RankedResult(entries[: max(0, n)] if n < len(entries) else entries)
