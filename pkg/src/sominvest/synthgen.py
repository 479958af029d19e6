"""
Seeded synthetic fixtures: weekly price series with injected drift regimes
and quarterly fundamentals with one planted informative feature.

Stock log prices follow a piecewise-drift random walk around a shared market
drift. Regimes whose extra drift meets the minimum acceptable weekly edge are
"good"; the planted feature tracks regime goodness so selection and ranking
have a recoverable signal. Everything is deterministic given the seed.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from datetime import date, timedelta
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .ingest import CompanyDataset, FeatureRecord, PricePoint, PriceSeries, SeriesKind

# Weekly drift equivalent of the 5% minimum annual edge.
GOOD_DRIFT_THRESHOLD = math.log(1.05) / 52.0


@dataclass
class SynthSpec:
    seed: int
    n_companies: int = 12
    weeks: int = 520
    # per company: list of (week index, drift shift applied from that week on)
    change_points: list[list[tuple[int, float]]] = field(default_factory=list)
    planted_feature: int = 2
    noise_sigma: float = 0.004
    n_features: int = 30
    n_sparse_features: int = 2
    missing_rate: float = 0.005
    market_drift: float = 0.0005
    market_sigma: float = 0.002
    initial_extra_drift: float = 0.01
    start: date = date(2005, 1, 3)
    quarter_weeks: int = 13

    def __post_init__(self):
        if self.noise_sigma <= 0:
            raise ValidationError("noise_sigma must be positive")
        if self.weeks < 2:
            raise ValidationError("weeks must be >= 2")
        if not 0 <= self.planted_feature < self.n_features:
            raise ValidationError("planted_feature out of range")
        for cps in self.change_points:
            idxs = [i for i, _ in cps]
            if any(b <= a for a, b in zip(idxs, idxs[1:])):
                raise ValidationError("change indices must be strictly increasing")
            if any(not 0 < i < self.weeks for i in idxs):
                raise ValidationError("change indices must be inside (0, weeks)")

    @classmethod
    def random_changes(
        cls,
        seed: int,
        n_companies: int = 12,
        weeks: int = 520,
        n_changes: int = 5,
        shift: float = 0.02,
        min_gap: int = 60,
        **kwargs,
    ) -> "SynthSpec":
        """Build a spec with alternating-sign drift shifts at random points.

        Each company starts at +shift/2 extra drift and flips sign at every
        change point, so every shift has magnitude ``shift``.
        """
        rng = np.random.default_rng(seed)
        per_company = []
        for _ in range(n_companies):
            while True:
                pts = np.sort(rng.choice(np.arange(min_gap, weeks - min_gap), size=n_changes, replace=False))
                if n_changes < 2 or np.diff(pts).min() >= min_gap:
                    break
            sign = -1.0
            changes = []
            for p in pts:
                changes.append((int(p), sign * shift))
                sign = -sign
            per_company.append(changes)
        return cls(
            seed=seed,
            n_companies=n_companies,
            weeks=weeks,
            change_points=per_company,
            initial_extra_drift=shift / 2.0,
            **kwargs,
        )


@dataclass
class CompanyTruth:
    ticker: str
    changes: list[tuple[int, float, bool]]  # (index, shift, recoverable)
    intervals: list[tuple[int, int, int]]  # (start, end, label)


@dataclass
class GroundTruth:
    companies: list[CompanyTruth]

    def to_json(self) -> str:
        payload = {
            t.ticker: {
                "changes": [
                    {"index": i, "shift": s, "recoverable": r} for i, s, r in t.changes
                ],
                "intervals": [
                    {"start": a, "end": b, "label": lbl} for a, b, lbl in t.intervals
                ],
            }
            for t in self.companies
        }
        return json.dumps(payload, indent=2, sort_keys=True)


def _week_date(start: date, index: int) -> date:
    return start + timedelta(weeks=index)


def generate(spec: SynthSpec) -> tuple[list[CompanyDataset], GroundTruth]:
    """Generate companies plus the ground truth used by acceptance oracles."""
    n = spec.n_companies
    changes = spec.change_points or [[] for _ in range(n)]
    if len(changes) != n:
        raise ValidationError("change_points must list one entry per company")

    seq = np.random.SeedSequence(spec.seed)
    children = seq.spawn(n + 1)
    market_rng = np.random.default_rng(children[0])

    dates = [_week_date(spec.start, i) for i in range(spec.weeks)]
    market_diffs = spec.market_drift + market_rng.normal(0.0, spec.market_sigma, spec.weeks - 1)
    market_log = np.concatenate([[math.log(100.0)], math.log(100.0) + np.cumsum(market_diffs)])
    market = PriceSeries(
        "market",
        [PricePoint(d, float(p)) for d, p in zip(dates, np.exp(market_log))],
        SeriesKind.MARKET,
    )

    companies: list[CompanyDataset] = []
    truths: list[CompanyTruth] = []
    n_total_features = spec.n_features + spec.n_sparse_features
    quarter_starts = list(range(0, spec.weeks, spec.quarter_weeks))
    for c in range(n):
        rng = np.random.default_rng(children[c + 1])
        ticker = f"SYN{c:03d}"

        extra = np.full(spec.weeks - 1, spec.initial_extra_drift)
        level = spec.initial_extra_drift
        truth_changes = []
        for idx, shift in changes[c]:
            level += shift
            extra[idx:] = level  # diff i spans week i -> i+1; week idx opens the new regime
            truth_changes.append((idx, shift, shift != 0.0))

        stock_diffs = spec.market_drift + extra + rng.normal(0.0, spec.noise_sigma, spec.weeks - 1)
        log0 = rng.uniform(2.5, 4.0)
        stock_log = np.concatenate([[log0], log0 + np.cumsum(stock_diffs)])
        stock = PriceSeries(
            ticker,
            [PricePoint(d, float(p)) for d, p in zip(dates, np.exp(stock_log))],
            SeriesKind.STOCK,
        )

        boundaries = [0] + [i for i, _ in changes[c]] + [spec.weeks - 1]
        intervals = []
        for a, b in zip(boundaries[:-1], boundaries[1:]):
            regime_extra = extra[a] if a < len(extra) else extra[-1]
            intervals.append((a, b, int(regime_extra >= GOOD_DRIFT_THRESHOLD)))
        truths.append(CompanyTruth(ticker, truth_changes, intervals))

        records = []
        for q in quarter_starts:
            values = rng.normal(0.0, 1.0, n_total_features)
            values[0] = rng.normal(15.0, 3.0)  # PE-style key ratio, never missing
            values[1] = rng.normal(8.0, 2.0)  # EBITDA-style key ratio, never missing
            regime_extra = extra[min(q, spec.weeks - 2)]
            goodness = 1.0 if regime_extra >= GOOD_DRIFT_THRESHOLD else -1.0
            values[spec.planted_feature] = goodness + rng.normal(0.0, 0.3)
            for j in range(spec.n_features, n_total_features):
                if rng.random() < 0.5:
                    values[j] = np.nan
            if spec.missing_rate > 0:
                for j in range(spec.n_features):
                    if j in (0, 1, spec.planted_feature):
                        continue
                    if rng.random() < spec.missing_rate:
                        values[j] = np.nan
            records.append(FeatureRecord(ticker, dates[q], values))
        companies.append(CompanyDataset(ticker, stock, market, records))
    return companies, GroundTruth(truths)


def feature_names(spec: SynthSpec) -> list[str]:
    return [f"f{j:03d}" for j in range(spec.n_features + spec.n_sparse_features)]


def write_fixture(spec: SynthSpec, out_dir: Path) -> dict[str, Path]:
    """Write the generated fixture in the exact schemas the loader reads.

    Produces ``prices/<TICKER>.csv`` plus ``prices/market.csv``, a combined
    ``fundamentals.csv``, and ``ground_truth.json``. Floats are written with
    shortest round-trip repr so regenerating is byte-identical.
    """
    out_dir = Path(out_dir)
    prices_dir = out_dir / "prices"
    prices_dir.mkdir(parents=True, exist_ok=True)
    companies, truth = generate(spec)

    def write_series(series: PriceSeries, path: Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["date", "price"])
            for p in series.points:
                w.writerow([p.date.isoformat(), repr(p.price)])

    write_series(companies[0].market, prices_dir / "market.csv")
    for company in companies:
        write_series(company.stock, prices_dir / f"{company.ticker}.csv")

    names = feature_names(spec)
    fundamentals = out_dir / "fundamentals.csv"
    with open(fundamentals, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["ticker", "quarter_end", *names])
        for company in companies:
            for rec in company.records:
                row = [company.ticker, rec.quarter_end.isoformat()]
                row += ["" if not np.isfinite(v) else repr(float(v)) for v in rec.values]
                w.writerow(row)

    truth_path = out_dir / "ground_truth.json"
    truth_path.write_text(truth.to_json() + "\n")
    return {"prices_dir": prices_dir, "fundamentals": fundamentals, "ground_truth": truth_path}
