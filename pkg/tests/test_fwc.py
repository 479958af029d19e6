from datetime import date

import numpy as np
import pytest

from sominvest.errors import ValidationError
from sominvest.featsel import FeatureMatrix
from sominvest.fwc import (
    FwcMatrix,
    VoteGrid,
    WeightMode,
    accumulate_votes,
    build_fwc,
    convolve,
    fractional_weighted,
    gaussian_kernel,
    rank_vectors,
)
from sominvest.som import SomGrid, TrainConfig, batch_train, init_codebook

from conftest import two_cluster_data
from oracles import gaussian_kernel_direct


def fm(values):
    values = np.asarray(values, dtype=float)
    return FeatureMatrix(values, [f"f{j}" for j in range(values.shape[1])])


def votes(good, bad):
    return VoteGrid(np.asarray(good, dtype=np.int64), np.asarray(bad, dtype=np.int64))


class TestAccumulateVotes:
    def trained_grid(self):
        data, labels = two_cluster_data(0, n_per=60, dim=4)
        cfg = TrainConfig(epochs=5, radius_start=1.5, radius_end=1.0, seed=0)
        return batch_train(init_codebook(data, 6, 6, cfg), data, cfg), data, labels

    def test_single_row(self):
        grid, data, _ = self.trained_grid()
        row = fm(data.values[:1])
        out = accumulate_votes(grid, row, [1])
        assert out.good.sum() == 1
        assert out.bad.sum() == 0

    def test_vote_conservation(self):
        grid, data, labels = self.trained_grid()
        out = accumulate_votes(grid, data, labels)
        assert out.total() == data.rows
        assert out.good.sum() == int(np.sum(labels))

    def test_identical_rows_share_a_unit(self):
        grid, data, _ = self.trained_grid()
        pair = fm(np.vstack([data.values[0], data.values[0]]))
        out = accumulate_votes(grid, pair, [0, 1])
        both = out.good + out.bad
        assert both.max() == 2
        assert (both > 0).sum() == 1


class TestFractionalWeighted:
    def test_definition(self):
        out = fractional_weighted(votes([[3]], [[1]]))
        assert out[0, 0] == pytest.approx(2.25)

    def test_mass_beats_lone_unanimous_vote(self):
        out = fractional_weighted(votes([[1, 23]], [[0, 0]]))
        assert out[0, 0] == pytest.approx(1.0)
        assert out[0, 1] == pytest.approx(23.0)
        assert out[0, 1] > out[0, 0]

    def test_no_good_votes_scores_zero(self):
        assert fractional_weighted(votes([[0]], [[5]]))[0, 0] == 0.0

    def test_unvoted_units_score_zero(self):
        assert fractional_weighted(votes([[0]], [[0]]))[0, 0] == 0.0

    def test_monotone_in_good_votes(self):
        scores = [fractional_weighted(votes([[g]], [[2]]))[0, 0] for g in range(1, 10)]
        assert all(b > a for a, b in zip(scores, scores[1:]))

    def test_ratio_mode_switch(self):
        out = fractional_weighted(votes([[4]], [[2]]), WeightMode.RATIO)
        assert out[0, 0] == pytest.approx(8.0)
        # zero-bad cells use a denominator floor of 1
        out0 = fractional_weighted(votes([[4]], [[0]]), WeightMode.RATIO)
        assert out0[0, 0] == pytest.approx(16.0)


class TestGaussianKernel:
    def test_identity_kernel(self):
        assert gaussian_kernel(1, 1.0).tolist() == [[1.0]]

    def test_normalization(self):
        for size, sigma in [(3, 0.5), (5, 1.0), (7, 2.5)]:
            assert gaussian_kernel(size, sigma).sum() == pytest.approx(1.0, abs=1e-12)

    def test_center_value_matches_direct_evaluation(self):
        k = gaussian_kernel(5, 1.0)
        oracle = gaussian_kernel_direct(5, 1.0)
        assert np.allclose(k, oracle, atol=1e-12)
        assert k[2, 2] == pytest.approx(0.16210282, abs=1e-6)

    def test_even_size_rejected(self):
        with pytest.raises(ValidationError):
            gaussian_kernel(4, 1.0)


class TestConvolve:
    def test_constant_grid_preserved(self):
        grid = np.full((8, 8), 3.7)
        out = convolve(grid, gaussian_kernel(5, 1.0))
        assert np.allclose(out, 3.7, atol=1e-12)

    def test_interior_delta_reproduces_kernel(self):
        grid = np.zeros((9, 9))
        grid[4, 4] = 1.0
        kernel = gaussian_kernel(5, 1.0)
        out = convolve(grid, kernel)
        assert np.allclose(out[2:7, 2:7], kernel, atol=1e-12)
        assert out.sum() == pytest.approx(1.0, abs=1e-12)

    def test_identity_kernel_is_noop(self):
        rng = np.random.default_rng(0)
        grid = rng.random((6, 7))
        out = convolve(grid, gaussian_kernel(1, 1.0))
        assert np.array_equal(out, grid)

    def test_nonnegative_preserved(self):
        rng = np.random.default_rng(1)
        grid = rng.random((10, 10))
        out = convolve(grid, gaussian_kernel(5, 1.0))
        assert (out >= 0).all()

    def test_kernel_larger_than_grid_rejected(self):
        with pytest.raises(ValidationError):
            convolve(np.zeros((3, 3)), gaussian_kernel(5, 1.0))


class TestRankVectors:
    def setup_ranking(self):
        data, labels = two_cluster_data(2, n_per=100, dim=4)
        cfg = TrainConfig(epochs=8, radius_start=2.0, radius_end=0.8, seed=1)
        grid = batch_train(init_codebook(data, 8, 8, cfg), data, cfg)
        matrix = build_fwc(accumulate_votes(grid, data, labels))
        return grid, matrix

    def test_planted_cluster_dominates_top_ranks(self):
        grid, matrix = self.setup_ranking()
        rng = np.random.default_rng(3)
        good_test = rng.normal(3.0, 1.0, (30, 4))
        bad_test = rng.normal(-3.0, 1.0, (30, 4))
        test = fm(np.vstack([good_test, bad_test]))
        prov = [(f"G{i:02d}", date(2013, 1, 6)) for i in range(30)]
        prov += [(f"B{i:02d}", date(2013, 1, 6)) for i in range(30)]
        out = rank_vectors(matrix, grid, test, prov, n=10)
        assert len(out.entries) == 10
        good_hits = sum(e.ticker.startswith("G") for e in out.entries)
        assert good_hits >= 8

    def test_zero_matrix_ranks_lexicographically(self):
        grid, _ = self.setup_ranking()
        zeros = FwcMatrix(np.zeros((8, 8)), 5, 1.0)
        test = fm(np.random.default_rng(4).normal(size=(5, 4)))
        prov = [(t, date(2013, 1, 6)) for t in ["DD", "AA", "CC", "EE", "BB"]]
        out = rank_vectors(zeros, grid, test, prov, n=5)
        assert [e.ticker for e in out.entries] == ["AA", "BB", "CC", "DD", "EE"]

    def test_single_row(self):
        grid, matrix = self.setup_ranking()
        test = fm(np.random.default_rng(5).normal(size=(1, 4)))
        out = rank_vectors(matrix, grid, test, [("X", date(2014, 2, 3))], n=10)
        assert len(out.entries) == 1
        assert out.entries[0].ticker == "X"

    def test_n_larger_than_rows_returns_all(self):
        grid, matrix = self.setup_ranking()
        test = fm(np.random.default_rng(6).normal(size=(4, 4)))
        prov = [(f"T{i}", date(2013, 5, 5)) for i in range(4)]
        out = rank_vectors(matrix, grid, test, prov, n=100)
        assert len(out.entries) == 4
        scores = [e.score for e in out.entries]
        assert scores == sorted(scores, reverse=True)

    def test_stable_under_row_permutation(self):
        grid, matrix = self.setup_ranking()
        rng = np.random.default_rng(7)
        values = rng.normal(size=(12, 4))
        prov = [(f"T{i:02d}", date(2013, 3, 3)) for i in range(12)]
        base = rank_vectors(matrix, grid, fm(values), prov, n=12)
        perm = rng.permutation(12)
        shuffled = rank_vectors(
            matrix, grid, fm(values[perm]), [prov[i] for i in perm], n=12
        )
        assert [(e.ticker, e.score) for e in base.entries] == [
            (e.ticker, e.score) for e in shuffled.entries
        ]

    def test_missing_entries_use_masked_lookup(self):
        grid, matrix = self.setup_ranking()
        row = np.array([3.0, np.nan, 3.0, np.nan])
        out = rank_vectors(matrix, grid, fm(row[None, :]), [("M", date(2013, 1, 6))], n=1)
        assert len(out.entries) == 1
        assert np.isfinite(out.entries[0].score)


def test_build_fwc_pipeline_shape():
    g = np.zeros((6, 6), dtype=np.int64)
    b = np.zeros((6, 6), dtype=np.int64)
    g[2, 2] = 10
    out = build_fwc(VoteGrid(g, b), kernel_size=3, kernel_sigma=1.0)
    assert out.scores.shape == (6, 6)
    assert out.scores[2, 2] == out.scores.max()
    assert out.kernel_size == 3
