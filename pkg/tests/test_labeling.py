from itertools import combinations

import numpy as np
import pytest

from sominvest.changepoint import IntervalSet
from sominvest.errors import ValidationError
from sominvest.labeling import (
    LabelMethod,
    Normality,
    PowerSpec,
    ReturnPair,
    label_interval,
    mann_whitney_one_tailed,
    min_sample_size,
    normality_check,
    returns_for_interval,
    sliding_window_labels,
    welch_one_tailed,
)

from conftest import company_from_logs, quarterly_records
from oracles import mann_whitney_p_enumeration, welch_p_quadrature


class TestMinSampleSize:
    def test_flat_market_example(self):
        # tau = ln(1.05) ~= 0.04879, n = ceil((2.48 * 0.1 / tau)^2) = 26
        assert min_sample_size(PowerSpec(), market_ratio=1.0, sigma=0.1) == 26

    def test_rising_market_example(self):
        # tau = ln(1.15/1.10) ~= 0.044452, n = ceil((0.496 / tau)^2) = 125
        assert min_sample_size(PowerSpec(), market_ratio=1.10, sigma=0.2) == 125

    def test_tiny_sigma_clamps_to_two(self):
        assert min_sample_size(PowerSpec(), 1.0, 1e-12) == 2
        assert min_sample_size(PowerSpec(), 1.0, 0.0) == 2

    def test_monte_carlo_power_at_required_n(self):
        # one-sided z-test power simulation at the boundary effect size:
        # the formula promises roughly the spec'd 80%
        spec = PowerSpec()
        tau = np.log((spec.min_annual_return + 1.0) / 1.0)
        sigma = 0.1
        n = min_sample_size(spec, 1.0, sigma)
        rng = np.random.default_rng(314)
        draws = rng.normal(tau, sigma, size=(10_000, n))
        z = draws.mean(axis=1) * np.sqrt(n) / sigma
        power = float((z > spec.z_alpha).mean())
        assert power >= 0.78

    def test_monotone_in_sigma_and_annual_return(self):
        spec = PowerSpec()
        sizes = [min_sample_size(spec, 1.0, s) for s in np.linspace(0.01, 0.5, 30)]
        assert all(b >= a for a, b in zip(sizes, sizes[1:]))
        by_edge = [
            min_sample_size(PowerSpec(min_annual_return=r), 1.0, 0.1)
            for r in np.linspace(0.01, 0.2, 20)
        ]
        assert all(b <= a for a, b in zip(by_edge, by_edge[1:]))

    def test_invalid_inputs(self):
        with pytest.raises(ValidationError):
            min_sample_size(PowerSpec(), -1.0, 0.1)
        with pytest.raises(ValidationError):
            min_sample_size(PowerSpec(), 1.0, -0.1)

    def test_default_z_constants_match_quantiles(self):
        from scipy import stats

        spec = PowerSpec()
        assert round(float(stats.norm.ppf(1 - spec.alpha)), 2) == spec.z_alpha
        assert round(float(stats.norm.ppf(spec.power)), 2) == spec.z_beta


class TestNormalityCheck:
    def test_small_sample(self):
        assert normality_check([1.0, 2.0, 3.0, 4.0, 5.0]) is Normality.TOO_SMALL

    def test_null_rejection_rate_near_five_percent(self):
        rng = np.random.default_rng(42)
        rejections = sum(
            normality_check(rng.standard_normal(1000)) is Normality.NON_NORMAL
            for _ in range(1000)
        )
        assert 0.03 <= rejections / 1000 <= 0.07

    def test_exponential_rejected(self):
        rng = np.random.default_rng(43)
        rejections = sum(
            normality_check(rng.exponential(1.0, 1000)) is Normality.NON_NORMAL
            for _ in range(100)
        )
        assert rejections >= 99

    def test_constant_sample_is_degenerate(self):
        assert normality_check(np.ones(50)) is Normality.NON_NORMAL


class TestWelch:
    def test_identical_samples_p_half(self):
        assert welch_one_tailed([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == 0.5

    def test_strong_shift_small_samples(self):
        # oracle (mpmath quadrature of the t density) gives 1.27608e-4;
        # the implementation must match it, not a rounder number
        x = [1.0, 2.0, 3.0]
        y = [-9.0, -8.0, -7.0]
        p = welch_one_tailed(x, y)
        oracle = welch_p_quadrature(x, y)
        assert abs(p - oracle) < 1e-9
        assert p < 1e-3

    def test_large_shifted_samples(self):
        rng = np.random.default_rng(0)
        x = rng.normal(0.1, 0.1, 200)
        y = rng.normal(0.0, 0.1, 200)
        p = welch_one_tailed(x, y)
        assert p < 1e-3
        assert abs(p - welch_p_quadrature(x, y)) < 1e-6

    def test_oracle_agreement_random_pairs(self):
        rng = np.random.default_rng(99)
        for _ in range(200):
            nx = int(rng.integers(2, 40))
            ny = int(rng.integers(2, 40))
            x = rng.normal(rng.uniform(-1, 1), rng.uniform(0.5, 2), nx)
            y = rng.normal(0, 1, ny)
            assert abs(welch_one_tailed(x, y) - welch_p_quadrature(x, y)) < 1e-6

    def test_degenerate_variances(self):
        assert welch_one_tailed([2.0, 2.0], [2.0, 2.0]) == 0.5
        assert welch_one_tailed([3.0, 3.0], [2.0, 2.0]) == 0.0
        assert welch_one_tailed([1.0, 1.0], [2.0, 2.0]) == 1.0


class TestMannWhitney:
    def test_separated_exact(self):
        # all x above all y: only 1 of C(6,3)=20 rank subsets reaches that U
        assert mann_whitney_one_tailed([4.0, 5.0, 6.0], [1.0, 2.0, 3.0]) == pytest.approx(0.05)

    def test_identical_samples_near_half(self):
        p = mann_whitney_one_tailed([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
        assert 0.45 <= p <= 0.62

    def test_exact_path_matches_enumeration_exhaustively(self):
        # every tie-free rank arrangement with nx+ny <= 8
        for nx in range(1, 8):
            for ny in range(1, 8):
                if nx + ny > 8:
                    continue
                values = np.arange(1.0, nx + ny + 1)
                for pos in combinations(range(nx + ny), nx):
                    x = values[list(pos)]
                    y = np.delete(values, list(pos))
                    mine = mann_whitney_one_tailed(x, y)
                    oracle = mann_whitney_p_enumeration(x, y)
                    assert mine == pytest.approx(oracle, abs=1e-12)

    def test_large_shift_significant(self):
        rng = np.random.default_rng(5)
        x = rng.normal(1.0, 1.0, 100)
        y = rng.normal(0.0, 1.0, 100)
        assert mann_whitney_one_tailed(x, y) < 0.01

    def test_normal_approximation_close_to_enumeration_on_midsize(self):
        rng = np.random.default_rng(8)
        x = rng.normal(0.3, 1, 9)
        y = rng.normal(0.0, 1, 9)  # 18 > 16 forces the approximation
        approx = mann_whitney_one_tailed(x, y)
        oracle = mann_whitney_p_enumeration(x, y)
        assert abs(approx - oracle) < 0.02

    def test_all_tied_values(self):
        assert mann_whitney_one_tailed([1.0, 1.0], [1.0, 1.0, 1.0]) == 0.5


def make_pair(stock_returns, market_returns):
    stock_returns = np.asarray(stock_returns, dtype=float)
    market_returns = np.asarray(market_returns, dtype=float)
    return ReturnPair(
        stock_returns=stock_returns,
        market_returns=market_returns,
        stock_ratio=float(np.exp(stock_returns.sum())),
        market_ratio=float(np.exp(market_returns.sum())),
    )


class TestLabelInterval:
    def test_identical_returns_label_zero(self):
        rng = np.random.default_rng(1)
        r = rng.normal(0.0, 0.002, 60)
        out = label_interval(make_pair(r, r), PowerSpec())
        assert out.label == 0
        assert out.p_value == pytest.approx(0.5, abs=0.1)

    def test_steady_outperformance_label_one(self):
        rng = np.random.default_rng(2)
        market = np.full(104, 0.001)
        stock = market + 0.01 + rng.normal(0.0, 0.0005, 104)
        out = label_interval(make_pair(stock, market), PowerSpec())
        assert out.label == 1
        assert out.method in (LabelMethod.WELCH_T, LabelMethod.MANN_WHITNEY)

    def test_short_interval_skipped(self):
        # required n is 26 at sigma 0.1 and flat market; a 10-week interval skips
        rng = np.random.default_rng(3)
        stock = rng.normal(0.0, 0.1, 10)
        market = np.zeros(10)
        pair = make_pair(stock, market)
        assert min_sample_size(PowerSpec(), pair.market_ratio, np.std(stock - market, ddof=1)) > 10
        out = label_interval(pair, PowerSpec())
        assert out.method is LabelMethod.SKIPPED
        assert out.label is None

    def test_null_label_rate_matches_alpha(self):
        # exact null: stock = constant market + iid noise, zero shift
        rng = np.random.default_rng(11)
        spec = PowerSpec()
        hits = 0
        trials = 1000
        for _ in range(trials):
            market = np.full(60, 0.001)
            stock = market + rng.normal(0.0, 0.004, 60)
            out = label_interval(make_pair(stock, market), spec)
            assert out.method is not LabelMethod.SKIPPED
            hits += out.label
        rate = hits / trials
        assert abs(rate - spec.alpha) <= 0.02


class TestSlidingWindow:
    def build_company(self, n_weeks=120):
        rng = np.random.default_rng(0)
        market = np.concatenate([[0.0], np.cumsum(np.full(n_weeks - 1, 0.001))])
        stock = np.concatenate([[0.0], np.cumsum(0.004 + rng.normal(0, 0.002, n_weeks - 1))])
        records = quarterly_records("TST", n_weeks, lambda q: np.array([1.0, 2.0, float(q)]))
        return company_from_logs(stock, market, records=records)

    def test_window_counts_under_strict_guard(self):
        company = self.build_company()
        intervals = IntervalSet([(0, 40)], target_len=52)
        spec = PowerSpec()
        out = sliding_window_labels(company, intervals, spec, stride=1)
        pair = returns_for_interval(company, 0, 40)
        sigma = float(np.std(pair.stock_returns - pair.market_returns, ddof=1))
        n_min = min_sample_size(spec, pair.market_ratio, sigma)
        # strict guard: sub-intervals of length > n_min, roughly 40 - n_min
        assert len(out) >= 40 - n_min - 2
        assert all(v.interval[1] == 40 for v in out)
        assert all(v.interval[1] - v.interval[0] > 2 for v in out)
        starts = [v.interval[0] for v in out]
        assert starts == sorted(starts)

    def test_interval_equal_to_minimum_emits_nothing(self):
        # constant series: sigma 0 so n_min clamps to 2; a 2-long interval fails len > 2
        company = company_from_logs(np.linspace(0, 0.1, 50), np.linspace(0, 0.1, 50),
                                    records=quarterly_records("TST", 50, lambda q: np.array([1.0])))
        out = sliding_window_labels(company, IntervalSet([(0, 2)], 52), PowerSpec(), stride=1)
        assert out == []

    def test_disabled_window_single_vector_per_interval(self):
        company = self.build_company()
        intervals = IntervalSet([(0, 40), (40, 80)], target_len=52)
        out = sliding_window_labels(company, intervals, PowerSpec(), stride=None)
        assert len(out) == 2
        assert [v.interval for v in out] == [(0, 40), (40, 80)]

    def test_vector_timestamp_is_subinterval_start(self):
        company = self.build_company()
        out = sliding_window_labels(company, IntervalSet([(13, 60)], 52), PowerSpec(), stride=None)
        assert len(out) == 1
        v = out[0]
        assert v.start_date == company.dates[13]
        # feature vector is the record at the start week (week 13 -> 2nd quarter)
        assert v.features[2] == 13.0


def test_return_pair_construction():
    company = company_from_logs(np.log(np.linspace(10, 20, 30)), np.log(np.linspace(5, 6, 30)))
    pair = returns_for_interval(company, 0, 29)
    assert pair.stock_ratio == pytest.approx(2.0)
    assert pair.market_ratio == pytest.approx(1.2)
    assert len(pair.stock_returns) == 29
