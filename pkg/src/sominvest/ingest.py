"""
Loading, validation and alignment of per-company price and fundamentals data.

Input files are plain CSV:
  * price series:   header ``date,price``, ISO-8601 dates, one file per ticker
    plus one shared market-index file;
  * fundamentals:   header ``ticker,quarter_end,f000,...,fNNN``; missing values
    are an empty field or the literal ``NaN``.

Prices are weekly. Daily input is downsampled to the last observation of each
ISO week so that interval targets quoted in weeks are directly addressable as
index counts.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import AlignmentError, ParseError, ValidationError


class SeriesKind(enum.Enum):
    STOCK = "stock"
    MARKET = "market"


@dataclass(frozen=True)
class PricePoint:
    """A single weekly observation. Price must be positive (logs are taken)."""

    date: date
    price: float

    def __post_init__(self):
        if not (self.price > 0 and math.isfinite(self.price)):
            raise ValidationError(f"price must be a positive finite number, got {self.price}")


@dataclass
class PriceSeries:
    """An ordered weekly price series for one ticker (or the market index)."""

    ticker: str
    points: list[PricePoint]
    kind: SeriesKind

    def __post_init__(self):
        if len(self.points) < 2:
            raise ValidationError(f"{self.ticker}: price series needs at least 2 points")
        dates = [p.date for p in self.points]
        if any(b <= a for a, b in zip(dates, dates[1:])):
            raise ValidationError(f"{self.ticker}: dates must be strictly increasing")

    def dates(self) -> list[date]:
        return [p.date for p in self.points]

    def prices(self) -> np.ndarray:
        return np.array([p.price for p in self.points], dtype=float)


@dataclass
class FeatureRecord:
    """One quarterly fundamentals row. Missing entries are NaN, never zero."""

    ticker: str
    quarter_end: date
    values: np.ndarray

    def has_value(self, index: int) -> bool:
        return bool(np.isfinite(self.values[index]))


@dataclass
class CompanyDataset:
    """Aligned stock/market series plus quarterly records for one ticker.

    ``dates``, ``log_stock`` and ``log_market`` are populated by
    :func:`align_and_log`; before alignment they are ``None``.
    """

    ticker: str
    stock: PriceSeries
    market: PriceSeries
    records: list[FeatureRecord]
    dates: Optional[list[date]] = None
    log_stock: Optional[np.ndarray] = None
    log_market: Optional[np.ndarray] = None

    @property
    def aligned(self) -> bool:
        return self.dates is not None

    def record_at(self, when: date) -> Optional[FeatureRecord]:
        """Most recent record with quarter_end <= when (no lookahead)."""
        hit = None
        for rec in self.records:
            if rec.quarter_end <= when:
                hit = rec
            else:
                break
        return hit


class DropReason(enum.Enum):
    TOO_SHORT = "too_short"
    MISSING_PRICES = "missing_prices"
    MISSING_KEY_RATIOS = "missing_key_ratios"


@dataclass
class InclusionReport:
    """Partition of the input tickers into kept and dropped (with reason)."""

    kept: list[str] = field(default_factory=list)
    dropped: list[tuple[str, DropReason]] = field(default_factory=list)

    def write_csv(self, path: Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["ticker", "status", "reason"])
            for t in self.kept:
                w.writerow([t, "kept", ""])
            for t, reason in self.dropped:
                w.writerow([t, "dropped", reason.value])


def _parse_iso_date(text: str, path, line_no: int) -> date:
    try:
        return date.fromisoformat(text.strip())
    except ValueError:
        raise ParseError(path, line_no, f"bad ISO date {text!r}") from None


def downsample_weekly(points: list[PricePoint]) -> list[PricePoint]:
    """Keep the last observation of each ISO week. Weekly input is a no-op."""
    by_week: dict[tuple[int, int], PricePoint] = {}
    for p in points:
        iso = p.date.isocalendar()
        by_week[(iso[0], iso[1])] = p
    return sorted(by_week.values(), key=lambda p: p.date)


def load_prices(path: Path, kind: SeriesKind) -> PriceSeries:
    """Load one ``date,price`` CSV into a validated weekly series.

    Args:
        path: CSV file; the ticker is taken from the file stem.
        kind: whether this is a per-stock series or the market index.

    Returns:
        PriceSeries sorted by date, downsampled to weekly resolution.

    Raises:
        ParseError: malformed row (bad date or non-numeric price).
        ValidationError: duplicate dates, non-positive price, too few rows.
    """
    path = Path(path)
    points: list[PricePoint] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header[:2]] != ["date", "price"]:
            raise ParseError(path, 1, "expected header 'date,price'")
        for line_no, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) < 2:
                raise ParseError(path, line_no, f"expected 2 fields, got {len(row)}")
            when = _parse_iso_date(row[0], path, line_no)
            try:
                price = float(row[1])
            except ValueError:
                raise ParseError(path, line_no, f"bad price {row[1]!r}") from None
            if not (price > 0 and math.isfinite(price)):
                raise ValidationError(f"{path}:{line_no}: non-positive price {price} (log undefined)")
            points.append(PricePoint(when, price))
    points.sort(key=lambda p: p.date)
    seen = set()
    for p in points:
        if p.date in seen:
            raise ValidationError(f"{path}: duplicate date {p.date}")
        seen.add(p.date)
    return PriceSeries(ticker=path.stem, points=downsample_weekly(points), kind=kind)


def load_fundamentals(path: Path) -> tuple[dict[str, list[FeatureRecord]], list[str]]:
    """Load the shared fundamentals CSV, grouped by ticker.

    Returns:
        (records by ticker, feature column names). Records are sorted by
        quarter_end; missing cells come back as NaN.
    """
    path = Path(path)
    by_ticker: dict[str, list[FeatureRecord]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or len(header) < 3 or header[0].strip() != "ticker":
            raise ParseError(path, 1, "expected header 'ticker,quarter_end,f...'")
        names = [h.strip() for h in header[2:]]
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(names) + 2:
                raise ParseError(path, line_no, f"expected {len(names) + 2} fields, got {len(row)}")
            ticker = row[0].strip()
            when = _parse_iso_date(row[1], path, line_no)
            values = np.empty(len(names), dtype=float)
            for j, cell in enumerate(row[2:]):
                cell = cell.strip()
                if cell == "" or cell.lower() == "nan":
                    values[j] = np.nan
                else:
                    try:
                        values[j] = float(cell)
                    except ValueError:
                        raise ParseError(path, line_no, f"bad value {cell!r} in column {names[j]}") from None
            by_ticker.setdefault(ticker, []).append(FeatureRecord(ticker, when, values))
    for ticker, recs in by_ticker.items():
        recs.sort(key=lambda r: r.quarter_end)
        stamps = [r.quarter_end for r in recs]
        if len(set(stamps)) != len(stamps):
            raise ValidationError(f"{path}: duplicate quarter_end for ticker {ticker}")
    return by_ticker, names


def align_and_log(company: CompanyDataset) -> CompanyDataset:
    """Restrict stock and market to their common dates and take natural logs.

    Idempotent: aligning an already-aligned dataset changes nothing.

    Raises:
        AlignmentError: the two series share no dates.
    """
    stock_dates = set(company.stock.dates())
    market_by_date = {p.date: p for p in company.market.points}
    common = sorted(stock_dates & set(market_by_date))
    if not common:
        raise AlignmentError(f"{company.ticker}: stock and market date ranges do not intersect")
    common_set = set(common)
    stock_pts = [p for p in company.stock.points if p.date in common_set]
    market_pts = [market_by_date[d] for d in common]
    stock = PriceSeries(company.stock.ticker, stock_pts, company.stock.kind)
    market = PriceSeries(company.market.ticker, market_pts, company.market.kind)
    return CompanyDataset(
        ticker=company.ticker,
        stock=stock,
        market=market,
        records=company.records,
        dates=common,
        log_stock=np.log(stock.prices()),
        log_market=np.log(market.prices()),
    )


def apply_inclusion_rules(
    companies: Sequence[CompanyDataset],
    min_quarters: int,
    key_ratio_indices: Sequence[int],
) -> tuple[list[CompanyDataset], InclusionReport]:
    """Filter companies by record depth, key-ratio completeness and price coverage.

    Checks run in a fixed order and the first failure decides the drop reason:

      1. too_short            fewer than ``min_quarters`` raw records;
      2. missing_key_ratios   records missing any key-ratio value are removed,
                              and the survivor count falls below the minimum;
      3. missing_prices       the aligned price range does not cover the span
                              of the surviving records (or alignment fails).

    Kept companies come back aligned and logged, with the filtered records.

    Args:
        companies: unfiltered datasets (aligned or not).
        min_quarters: minimum number of quarterly records to keep a company.
        key_ratio_indices: feature columns that must be present in every record.

    Returns:
        (kept datasets, report); the report partitions the input tickers.
    """
    if min_quarters < 1:
        raise ValidationError("min_quarters must be >= 1")
    kept: list[CompanyDataset] = []
    report = InclusionReport()
    for company in companies:
        if len(company.records) < min_quarters:
            report.dropped.append((company.ticker, DropReason.TOO_SHORT))
            continue
        for idx in key_ratio_indices:
            if company.records and not (0 <= idx < len(company.records[0].values)):
                raise ValidationError(f"key ratio index {idx} out of range")
        complete = [
            rec for rec in company.records
            if all(rec.has_value(i) for i in key_ratio_indices)
        ]
        if len(complete) < min_quarters:
            report.dropped.append((company.ticker, DropReason.MISSING_KEY_RATIOS))
            continue
        try:
            aligned = align_and_log(
                CompanyDataset(company.ticker, company.stock, company.market, complete)
            )
        except AlignmentError:
            report.dropped.append((company.ticker, DropReason.MISSING_PRICES))
            continue
        span_start = complete[0].quarter_end
        span_end = complete[-1].quarter_end
        if aligned.dates[0] > span_start or aligned.dates[-1] < span_end:
            report.dropped.append((company.ticker, DropReason.MISSING_PRICES))
            continue
        kept.append(aligned)
        report.kept.append(company.ticker)
    return kept, report


def load_company_dir(
    prices_dir: Path,
    fundamentals_path: Path,
    market_filename: str = "market.csv",
) -> tuple[list[CompanyDataset], list[str]]:
    """Assemble unfiltered CompanyDatasets from a fixture directory.

    ``prices_dir`` holds one ``<TICKER>.csv`` per company plus the shared
    market-index file. Companies without fundamentals rows are skipped.
    """
    prices_dir = Path(prices_dir)
    market_path = prices_dir / market_filename
    if not market_path.exists():
        raise ValidationError(f"market index file not found: {market_path}")
    market = load_prices(market_path, SeriesKind.MARKET)
    records, names = load_fundamentals(fundamentals_path)
    companies = []
    for path in sorted(prices_dir.glob("*.csv")):
        if path.name == market_filename:
            continue
        stock = load_prices(path, SeriesKind.STOCK)
        companies.append(
            CompanyDataset(stock.ticker, stock, market, records.get(stock.ticker, []))
        )
    return companies, names
