"""
Two-sided CUSUM change-point detection with sensitivity tuning and interval
consolidation toward a target length.

Detection runs on the standardized first differences of the (log) series, so
threshold and drift are expressed in units of the difference series' standard
deviation and one grid serves every ticker. Tuning picks the most sensitive
grid point; consolidation then merges adjacent intervals that explain the same
slope until interval lengths sit near the requested target.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import TuningError, ValidationError


class TargetSize(enum.Enum):
    """Interval length targets, in weeks."""

    SMALL = 25
    MEDIUM = 52
    LARGE = 156

    @property
    def weeks(self) -> int:
        return self.value

    @classmethod
    def parse(cls, name: str) -> "TargetSize":
        try:
            return cls[name.upper()]
        except KeyError:
            raise ValidationError(f"unknown target size {name!r} (small|medium|large)") from None


@dataclass(frozen=True)
class CusumParams:
    """Sensitivity of the detector, in difference-sigma units."""

    threshold: float
    drift: float

    def __post_init__(self):
        if not self.threshold > 0:
            raise ValidationError(f"threshold must be > 0, got {self.threshold}")
        if self.drift < 0:
            raise ValidationError(f"drift must be >= 0, got {self.drift}")


@dataclass
class ChangePointSet:
    """Strictly increasing series indices where an alarm fired."""

    indices: list[int]
    params: CusumParams


@dataclass
class IntervalSet:
    """Contiguous, non-overlapping (start, end) index pairs covering the
    span between the first and last change point."""

    intervals: list[tuple[int, int]]
    target_len: int

    def lengths(self) -> list[int]:
        return [b - a for a, b in self.intervals]


DEFAULT_THRESHOLDS = (1.0, 2.0, 3.0, 4.0, 5.0)
DEFAULT_DRIFTS = (0.0, 0.25, 0.5, 1.0)


def cusum_detect(series: Sequence[float], params: CusumParams) -> ChangePointSet:
    """Run two-sided CUSUM on standardized first differences.

    Running sums g+ and g- accumulate the standardized increments minus the
    drift allowance; an index is flagged when either sum exceeds the
    threshold, and both sums reset to zero after an alarm so one shift cannot
    cascade into a train of alarms.

    A constant series (zero difference variance) yields no change points.
    """
    x = np.asarray(series, dtype=float)
    if x.ndim != 1 or len(x) < 2:
        raise ValidationError("series must be one-dimensional with length >= 2")
    diffs = np.diff(x)
    sd = float(diffs.std())
    if sd == 0.0:
        return ChangePointSet([], params)
    z = (diffs - diffs.mean()) / sd
    g_pos = 0.0
    g_neg = 0.0
    alarms: list[int] = []
    for i in range(len(z)):
        g_pos = max(0.0, g_pos + z[i] - params.drift)
        g_neg = max(0.0, g_neg - z[i] - params.drift)
        if g_pos > params.threshold or g_neg > params.threshold:
            alarms.append(i + 1)  # series index of the increment's right end
            g_pos = 0.0
            g_neg = 0.0
    return ChangePointSet(alarms, params)


def tune_hypersensitive(
    series: Sequence[float],
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
    drifts: Sequence[float] = DEFAULT_DRIFTS,
    min_segments: int = 2,
) -> CusumParams:
    """Exhaustively search the grid for the most change-happy parameters.

    Returns the grid point producing the largest alarm count that still
    reaches ``min_segments``; ties break toward the smaller threshold, then
    the smaller drift.

    Raises:
        TuningError: no grid point reached ``min_segments`` alarms. The error
            carries the best count found.
    """
    if not thresholds or not drifts:
        raise ValidationError("threshold and drift grids must be non-empty")
    if min_segments < 2:
        raise ValidationError("min_segments must be >= 2")
    best_count = -1
    best: CusumParams | None = None
    for th in sorted(thresholds):
        for dr in sorted(drifts):
            params = CusumParams(th, dr)
            count = len(cusum_detect(series, params).indices)
            if count > best_count:
                best_count = count
                best = params
    if best_count < min_segments:
        raise TuningError(best_count, min_segments)
    return best


def _pooled_noise_std(x: np.ndarray, indices: Sequence[int]) -> float:
    # Pool the within-interval variance of the increments; centering each
    # interval removes its drift so regime trends do not inflate the scale.
    ss = 0.0
    dof = 0
    for a, b in zip(indices[:-1], indices[1:]):
        d = np.diff(x[a : b + 1])
        if len(d) >= 2:
            ss += float(((d - d.mean()) ** 2).sum())
            dof += len(d) - 1
    if dof == 0:
        return float(np.diff(x).std())
    return math.sqrt(ss / dof)


def consolidate(
    series: Sequence[float],
    cps: ChangePointSet,
    target: TargetSize,
    tolerance: float = 0.2,
    flat_z: float = 2.0,
) -> IntervalSet:
    """Merge adjacent hypersensitive intervals until lengths sit near target.

    Intervals are only ever merged, never split, and the covered span is
    preserved exactly. Each interval gets a slope class from the sign of
    series[end] - series[start]: the move counts as flat when it is within
    ``flat_z`` pooled-noise sigmas of zero for its length. Merging follows
    three rules:

      * intervals with definite opposite slopes never merge (those
        boundaries are the turning points worth keeping);
      * same-definite-slope neighbors merge while the result stays within
        the tolerance band above target (redundant middle points on one
        monotone run are eliminated);
      * otherwise a growing interval absorbs its neighbor while shorter
        than the per-series aim, the covered span divided by the number of
        target-sized intervals that fit in it.

    A final cleanup pass repeatedly folds intervals shorter than the band's
    lower edge into a compatible neighbor when the merge stays under the cap.
    """
    if len(cps.indices) < 2:
        raise ValidationError("consolidate needs at least 2 change points")
    x = np.asarray(series, dtype=float)
    goal = float(target.weeks)
    cap = goal * (1.0 + tolerance)
    floor = goal * (1.0 - tolerance)
    span = cps.indices[-1] - cps.indices[0]
    pieces_fit = max(1, round(span / goal))
    aim = span / pieces_fit
    if aim > cap:
        aim = span / (pieces_fit + 1)
    sigma = _pooled_noise_std(x, cps.indices)

    def slope_class(a: int, b: int) -> int:
        move = x[b] - x[a]
        if abs(move) <= flat_z * sigma * math.sqrt(b - a):
            return 0
        return 1 if move > 0 else -1

    def compatible(p: tuple[int, int], q: tuple[int, int]) -> bool:
        cp, cq = slope_class(*p), slope_class(*q)
        return cp == 0 or cq == 0 or cp == cq

    pieces = list(zip(cps.indices[:-1], cps.indices[1:]))
    merged: list[tuple[int, int]] = []
    cur = pieces[0]
    for nxt in pieces[1:]:
        cls_cur, cls_nxt = slope_class(*cur), slope_class(*nxt)
        same_definite = cls_cur != 0 and cls_cur == cls_nxt
        ok = (
            nxt[1] - cur[0] <= cap
            and (cls_cur == 0 or cls_nxt == 0 or cls_cur == cls_nxt)
            and (same_definite or cur[1] - cur[0] < aim)
        )
        if ok:
            cur = (cur[0], nxt[1])
        else:
            merged.append(cur)
            cur = nxt
    merged.append(cur)

    changed = True
    while changed:
        changed = False
        for i in range(len(merged) - 1):
            a, b = merged[i], merged[i + 1]
            if (
                min(a[1] - a[0], b[1] - b[0]) < floor
                and b[1] - a[0] <= cap
                and compatible(a, b)
            ):
                merged[i : i + 2] = [(a[0], b[1])]
                changed = True
                break
    return IntervalSet(merged, target.weeks)


def segment(
    series: Sequence[float],
    target: TargetSize,
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
    drifts: Sequence[float] = DEFAULT_DRIFTS,
    min_segments: int | None = None,
) -> IntervalSet:
    """Tune, detect and consolidate in one deterministic call.

    ``min_segments`` defaults to ceil(len(series) / target), the number of
    target-length intervals the series could hold.
    """
    if min_segments is None:
        min_segments = max(2, math.ceil(len(series) / target.weeks))
    params = tune_hypersensitive(series, thresholds, drifts, min_segments)
    cps = cusum_detect(series, params)
    return consolidate(series, cps, target)
