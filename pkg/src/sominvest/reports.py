"""
Figure-equivalent diagnostic data: U-matrix, label plane, score grid, QQ
pairs and PCA variance ratios, emitted as bit-stable CSV for external
plotting.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Optional, TextIO

import numpy as np
from scipy import stats

from . import featsel, som
from .errors import ValidationError
from .ingest import SeriesKind, load_prices

REPORT_KINDS = ("umat", "lcp", "fwc", "qq", "pca")

# artifact -> pipeline stage that produces it, for error messages
_ARTIFACT_STAGE = {
    "codebook.som": "train",
    "labeled.csv": "label",
    "transform.json": "select",
    "fwc.csv": "rank",
}


def _require(path: Path, artifact: str) -> Path:
    if not Path(path).exists():
        stage = _ARTIFACT_STAGE.get(artifact, "run")
        raise ValidationError(
            f"missing artifact {path} (produced by the {stage!r} stage)"
        )
    return Path(path)


def _fmt(value: float) -> str:
    return repr(float(value))


def _emit_grid(grid: np.ndarray, sink: TextIO) -> None:
    w = csv.writer(sink)
    for row in grid:
        w.writerow(["" if not np.isfinite(v) else _fmt(v) for v in row])


def read_grid_csv(path: Path) -> np.ndarray:
    rows = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            rows.append([np.nan if cell == "" else float(cell) for cell in row])
    if not rows or any(len(r) != len(rows[0]) for r in rows):
        raise ValidationError(f"{path}: not a rectangular numeric grid")
    return np.array(rows, dtype=float)


def _load_labeled(path: Path) -> tuple[featsel.FeatureMatrix, list[int]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:6] != ["ticker", "start_date", "end_date", "label", "method", "p_value"]:
            raise ValidationError(f"{path}: not a labeled dataset CSV")
        names = header[6:]
        rows, labels, prov = [], [], []
        for row in reader:
            labels.append(int(row[3]))
            prov.append((row[0], row[1]))
            rows.append([np.nan if cell == "" else float(cell) for cell in row[6:]])
    if not rows:
        raise ValidationError(f"{path}: labeled dataset is empty")
    return featsel.FeatureMatrix(np.array(rows, dtype=float), names, prov), labels


def report_umat(codebook_path: Path, sink: TextIO) -> None:
    grid = som.load_codebook(_require(codebook_path, "codebook.som"))
    _emit_grid(som.umatrix(grid).values, sink)


def report_lcp(codebook_path: Path, labeled_path: Path, transform_path: Path, sink: TextIO) -> None:
    """Recompute the label plane from a stored codebook and labeled dataset."""
    grid = som.load_codebook(_require(codebook_path, "codebook.som"))
    matrix, labels = _load_labeled(_require(labeled_path, "labeled.csv"))
    transform = json.loads(_require(transform_path, "transform.json").read_text())
    kept = featsel.select_columns(matrix, transform["kept_columns"])
    for j, name in enumerate(kept.col_names):
        col = kept.values[:, j]
        col[~np.isfinite(col)] = transform["column_medians"][name]
    zstats = [tuple(transform["zscore"][name]) for name in kept.col_names]
    normalized = featsel.apply_zscore(kept, zstats)
    selected = featsel.select_columns(normalized, transform["selected_columns"])
    plane = som.project_labels(grid, selected, labels)
    _emit_grid(plane.values, sink)


def report_fwc(fwc_path: Path, sink: TextIO) -> None:
    _emit_grid(read_grid_csv(_require(fwc_path, "fwc.csv")), sink)


def report_qq(prices_path: Path, sink: TextIO) -> None:
    """Theoretical vs sample quantiles of a series' standardized log returns."""
    series = load_prices(_require(prices_path, "prices"), SeriesKind.STOCK)
    returns = np.diff(np.log(series.prices()))
    if len(returns) < 3 or returns.std(ddof=1) == 0:
        raise ValidationError(f"{prices_path}: not enough return variation for a QQ report")
    sample = np.sort((returns - returns.mean()) / returns.std(ddof=1))
    n = len(sample)
    theoretical = stats.norm.ppf((np.arange(1, n + 1) - 0.5) / n)
    w = csv.writer(sink)
    w.writerow(["theoretical_quantile", "sample_quantile"])
    for t, s in zip(theoretical, sample):
        w.writerow([_fmt(t), _fmt(s)])


def report_pca(labeled_path: Path, sink: TextIO) -> None:
    matrix, _ = _load_labeled(_require(labeled_path, "labeled.csv"))
    cleaned, _ = featsel.clean_features(matrix, max_missing_fraction=1.0)
    result = featsel.pca_fit(cleaned, k=min(2, cleaned.cols))
    w = csv.writer(sink)
    w.writerow(["component", "explained_variance_ratio"])
    for j, ratio in enumerate(result.explained_variance_ratio, start=1):
        w.writerow([j, _fmt(ratio)])


def emit_report(kind: str, run_dir: Path, sink: TextIO, series: Optional[Path] = None) -> None:
    """Dispatch one report kind against a pipeline output directory."""
    run_dir = Path(run_dir)
    if kind == "umat":
        report_umat(run_dir / "codebook.som", sink)
    elif kind == "lcp":
        report_lcp(run_dir / "codebook.som", run_dir / "labeled.csv", run_dir / "transform.json", sink)
    elif kind == "fwc":
        report_fwc(run_dir / "fwc.csv", sink)
    elif kind == "qq":
        if series is None:
            raise ValidationError("report qq needs --series pointing at a price CSV")
        report_qq(series, sink)
    elif kind == "pca":
        report_pca(run_dir / "labeled.csv", sink)
    else:
        raise ValidationError(f"unknown report kind {kind!r} (choose from {', '.join(REPORT_KINDS)})")
