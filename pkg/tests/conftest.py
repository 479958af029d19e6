"""Shared synthetic builders used across the test modules."""

from datetime import date, timedelta

import numpy as np
import pytest

from sominvest.featsel import FeatureMatrix
from sominvest.ingest import CompanyDataset, FeatureRecord, PricePoint, PriceSeries, SeriesKind
from sominvest.ingest import align_and_log


def weekly_dates(n, start=date(2005, 1, 3)):
    return [start + timedelta(weeks=i) for i in range(n)]


def series_from_log(log_prices, ticker="TST", kind=SeriesKind.STOCK, start=date(2005, 1, 3)):
    dates = weekly_dates(len(log_prices), start)
    return PriceSeries(
        ticker,
        [PricePoint(d, float(np.exp(p))) for d, p in zip(dates, log_prices)],
        kind,
    )


def drift_series(seed, length, change_points, drift_levels, sigma):
    """Random walk whose increment mean switches at the given indices.

    ``drift_levels`` has one entry per regime (len(change_points) + 1).
    Returns the log-price series (length ``length``).
    """
    rng = np.random.default_rng(seed)
    drift = np.empty(length - 1)
    bounds = [0] + list(change_points) + [length - 1]
    for k, (a, b) in enumerate(zip(bounds[:-1], bounds[1:])):
        drift[a:b] = drift_levels[k]
    return np.concatenate([[0.0], np.cumsum(drift + rng.normal(0.0, sigma, length - 1))])


def random_walk(seed, length, sigma=0.01):
    rng = np.random.default_rng(seed)
    return np.concatenate([[0.0], np.cumsum(rng.normal(0.0, sigma, length - 1))])


def company_from_logs(log_stock, log_market, ticker="TST", records=None):
    """Aligned CompanyDataset with the given log series (records optional)."""
    c = CompanyDataset(
        ticker=ticker,
        stock=series_from_log(log_stock, ticker),
        market=series_from_log(log_market, "market", SeriesKind.MARKET),
        records=records or [],
    )
    return align_and_log(c)


def quarterly_records(ticker, n_weeks, values_fn, every=13, start=date(2005, 1, 3)):
    records = []
    for q in range(0, n_weeks, every):
        records.append(FeatureRecord(ticker, start + timedelta(weeks=q), values_fn(q)))
    return records


def two_cluster_data(seed=0, n_per=400, dim=6, separation=3.0):
    """Two well-separated Gaussian blobs plus 0/1 cluster labels."""
    rng = np.random.default_rng(seed)
    a = rng.normal(-separation, 1.0, (n_per, dim))
    b = rng.normal(separation, 1.0, (n_per, dim))
    data = np.vstack([a, b])
    labels = np.array([0] * n_per + [1] * n_per)
    return FeatureMatrix(data, [f"f{j}" for j in range(dim)]), labels


@pytest.fixture(scope="session")
def fixture_dir(tmp_path_factory):
    """A small synthetic fixture on disk, shared by pipeline/CLI tests."""
    from sominvest.synthgen import SynthSpec, write_fixture

    out = tmp_path_factory.mktemp("fixture")
    spec = SynthSpec.random_changes(seed=11, n_companies=8, weeks=520)
    paths = write_fixture(spec, out)
    paths["spec"] = spec
    return paths
