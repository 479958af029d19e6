"""
Feature-matrix cleaning, normalization and selection.

Cleaning drops columns whose missing/non-finite fraction exceeds a threshold
and median-imputes the rest. Selection ranks features with an ensemble of
extremely randomized trees (random split thresholds, sqrt-sized feature
subsets, Gini importance); a PCA variance report is kept as a diagnostic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ValidationError


@dataclass
class FeatureMatrix:
    values: np.ndarray  # rows x cols, NaN marks missing
    col_names: list[str]
    row_provenance: list[tuple] = field(default_factory=list)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise ValidationError("feature matrix must be 2-D")
        if len(self.col_names) != self.values.shape[1]:
            raise ValidationError("col_names length must equal column count")
        if self.row_provenance and len(self.row_provenance) != self.values.shape[0]:
            raise ValidationError("row_provenance length must equal row count")

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]


@dataclass
class CleanReport:
    dropped_cols: list[tuple[str, float]]
    imputed_cells: int


@dataclass
class PcaResult:
    components: np.ndarray  # k x cols, orthonormal rows
    explained_variance_ratio: np.ndarray  # length cols, sums to 1


@dataclass
class ImportanceRanking:
    scores: np.ndarray  # per feature, non-negative, sums to 1
    order: list[int]  # feature indices by descending score, ties by index


def clean_features(m: FeatureMatrix, max_missing_fraction: float) -> tuple[FeatureMatrix, CleanReport]:
    """Drop over-missing columns, median-impute the remaining gaps.

    A column is dropped when its fraction of NaN/Inf cells exceeds
    ``max_missing_fraction``; surviving missing cells take the column median
    of the finite values. A kept column with no finite values at all cannot
    be imputed and raises.
    """
    if not 0.0 <= max_missing_fraction <= 1.0:
        raise ValidationError("max_missing_fraction must be in [0, 1]")
    vals = m.values
    bad = ~np.isfinite(vals)
    frac = bad.mean(axis=0) if m.rows else np.zeros(m.cols)
    keep = frac <= max_missing_fraction
    dropped = [(m.col_names[j], float(frac[j])) for j in range(m.cols) if not keep[j]]
    kept_vals = vals[:, keep].copy()
    kept_names = [n for n, k in zip(m.col_names, keep) if k]
    imputed = 0
    for j in range(kept_vals.shape[1]):
        col = kept_vals[:, j]
        mask = ~np.isfinite(col)
        if mask.any():
            finite = col[~mask]
            if finite.size == 0:
                raise ValidationError(f"column {kept_names[j]} has no finite values to impute from")
            col[mask] = np.median(finite)
            imputed += int(mask.sum())
    return (
        FeatureMatrix(kept_vals, kept_names, list(m.row_provenance)),
        CleanReport(dropped, imputed),
    )


def zscore_normalize(m: FeatureMatrix) -> tuple[FeatureMatrix, list[tuple[float, float]]]:
    """Center and scale each column to mean 0, population std 1.

    Zero-variance columns map to all zeros and are flagged by a stored std
    of 0. Returns the per-column (mean, std) so the same transform can be
    replayed on held-out rows.
    """
    vals = m.values.copy()
    stats_out: list[tuple[float, float]] = []
    for j in range(vals.shape[1]):
        col = vals[:, j]
        mu = float(col.mean())
        sd = float(col.std())
        if sd == 0.0:
            vals[:, j] = 0.0
        else:
            vals[:, j] = (col - mu) / sd
        stats_out.append((mu, sd))
    return FeatureMatrix(vals, list(m.col_names), list(m.row_provenance)), stats_out


def apply_zscore(m: FeatureMatrix, stats_in: Sequence[tuple[float, float]]) -> FeatureMatrix:
    """Replay a stored z-score transform; NaN cells stay NaN."""
    if len(stats_in) != m.cols:
        raise ValidationError("transform stats do not match column count")
    vals = m.values.copy()
    for j, (mu, sd) in enumerate(stats_in):
        if sd == 0.0:
            vals[:, j] = np.where(np.isfinite(vals[:, j]), 0.0, np.nan)
        else:
            vals[:, j] = (vals[:, j] - mu) / sd
    return FeatureMatrix(vals, list(m.col_names), list(m.row_provenance))


def pca_fit(m: FeatureMatrix, k: int) -> PcaResult:
    """Eigendecomposition of the sample covariance of the standardized matrix.

    The variance-ratio list covers every feature (trailing zeros past the
    rank); the first k eigenvectors come back as component rows.
    """
    if not np.isfinite(m.values).all():
        raise ValidationError("pca_fit requires a fully finite matrix")
    if k < 1 or k > m.cols:
        raise ValidationError(f"k must be in [1, {m.cols}]")
    standardized, _ = zscore_normalize(m)
    x = standardized.values
    n = x.shape[0]
    if n < 2:
        raise ValidationError("pca_fit needs at least 2 rows")
    cov = x.T @ x / (n - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals = np.clip(eigvals[order], 0.0, None)
    eigvecs = eigvecs[:, order]
    total = eigvals.sum()
    if total <= 0.0:
        raise ValidationError("matrix has no variance; PCA undefined")
    return PcaResult(
        components=eigvecs[:, :k].T.copy(),
        explained_variance_ratio=eigvals / total,
    )


def _gini(counts: np.ndarray) -> float:
    n = counts.sum()
    if n == 0:
        return 0.0
    p = counts / n
    return float(1.0 - (p * p).sum())


def _grow_tree(
    x: np.ndarray,
    y: np.ndarray,
    row_idx: np.ndarray,
    n_subset: int,
    rng: np.random.Generator,
    importance: np.ndarray,
    n_total: int,
) -> None:
    # Iterative depth-first growth; recursion depth on noisy labels can
    # exceed Python's default limit.
    stack = [row_idx]
    n_features = x.shape[1]
    while stack:
        rows = stack.pop()
        n_node = len(rows)
        if n_node < 2:
            continue
        labels = y[rows]
        counts = np.bincount(labels, minlength=2)
        node_gini = _gini(counts)
        if node_gini == 0.0:
            continue
        candidates = rng.choice(n_features, size=n_subset, replace=False)
        best_gain = 0.0
        best = None
        for f in candidates:
            col = x[rows, f]
            lo, hi = col.min(), col.max()
            if lo == hi:
                continue
            cut = rng.uniform(lo, hi)
            left = col <= cut
            n_left = int(left.sum())
            if n_left == 0 or n_left == n_node:
                continue
            g_left = _gini(np.bincount(labels[left], minlength=2))
            g_right = _gini(np.bincount(labels[~left], minlength=2))
            gain = node_gini - (n_left * g_left + (n_node - n_left) * g_right) / n_node
            if gain > best_gain:
                best_gain = gain
                best = (f, left)
        if best is None:
            continue
        f, left = best
        importance[f] += best_gain * n_node / n_total
        stack.append(rows[left])
        stack.append(rows[~left])


def ext_importance(
    m: FeatureMatrix,
    labels: Sequence[int],
    n_trees: int = 100,
    seed: int = 0,
) -> ImportanceRanking:
    """Rank features by Gini importance in an extremely randomized ensemble.

    Each node draws a random sqrt(cols)-sized feature subset and one uniform
    threshold per candidate within the node's value range, then keeps the
    best impurity reduction. Importances accumulate across trees in a fixed
    order and are normalized to sum to 1, so a given seed is bit-reproducible.
    """
    if n_trees < 1:
        raise ValidationError("n_trees must be >= 1")
    y = np.asarray(labels, dtype=int)
    if len(y) != m.rows:
        raise ValidationError("labels length must equal row count")
    if len(np.unique(y)) < 2:
        raise ValidationError("ext_importance needs both classes present")
    if not np.isfinite(m.values).all():
        raise ValidationError("ext_importance requires a fully finite matrix")
    x = m.values
    n_subset = max(1, int(math.sqrt(m.cols)))
    importance = np.zeros(m.cols)
    root_rng = np.random.default_rng(seed)
    tree_seeds = root_rng.integers(0, 2**63 - 1, size=n_trees)
    all_rows = np.arange(m.rows)
    for tree_seed in tree_seeds:
        _grow_tree(x, y, all_rows, n_subset, np.random.default_rng(int(tree_seed)), importance, m.rows)
    total = importance.sum()
    if total > 0.0:
        scores = importance / total
    else:
        scores = np.full(m.cols, 1.0 / m.cols)  # no split found anywhere
    order = sorted(range(m.cols), key=lambda j: (-scores[j], j))
    return ImportanceRanking(scores=scores, order=order)


def select_top_k(ranking: ImportanceRanking, m: FeatureMatrix, k: int) -> FeatureMatrix:
    """Restrict the matrix to the k best-ranked features, in ranking order."""
    if k < 1 or k > m.cols:
        raise ValidationError(f"k must be in [1, {m.cols}]")
    chosen = ranking.order[:k]
    return FeatureMatrix(
        m.values[:, chosen].copy(),
        [m.col_names[j] for j in chosen],
        list(m.row_provenance),
    )


def select_columns(m: FeatureMatrix, names: Sequence[str]) -> FeatureMatrix:
    """Restrict the matrix to named columns, in the given order."""
    index = {n: j for j, n in enumerate(m.col_names)}
    missing = [n for n in names if n not in index]
    if missing:
        raise ValidationError(f"columns not present: {missing}")
    cols = [index[n] for n in names]
    return FeatureMatrix(m.values[:, cols].copy(), list(names), list(m.row_provenance))
