"""
End-to-end orchestration: ingest -> segment -> label -> select -> train -> rank.

Every stage writes its artifacts into the configured output directory and the
run finishes with a manifest (config echo, derived seeds, sha256 per
artifact). Reruns with identical config and inputs are byte-identical.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Optional

import numpy as np

from . import changepoint, featsel, fwc, labeling, som
from .config import PipelineConfig
from .errors import SominvestError, StageError, TuningError, ValidationError
from .ingest import CompanyDataset, apply_inclusion_rules, load_company_dir
from .labeling import LabeledVector, PowerSpec

log = logging.getLogger("sominvest")

STAGES = ("ingest", "segment", "label", "select", "train", "rank")


@dataclass
class PipelineState:
    """Everything the stages pass along, kept for tests and reports."""

    companies: list[CompanyDataset] = field(default_factory=list)
    feature_names: list[str] = field(default_factory=list)
    intervals: dict[str, changepoint.IntervalSet] = field(default_factory=dict)
    skipped_tickers: list[str] = field(default_factory=list)
    vectors: list[LabeledVector] = field(default_factory=list)
    train_vectors: list[LabeledVector] = field(default_factory=list)
    test_vectors: list[LabeledVector] = field(default_factory=list)
    kept_columns: list[str] = field(default_factory=list)
    selected_columns: list[str] = field(default_factory=list)
    column_medians: dict[str, float] = field(default_factory=dict)
    zscore_stats: list[tuple[float, float]] = field(default_factory=list)
    grid: Optional[som.SomGrid] = None
    fwc_matrix: Optional[fwc.FwcMatrix] = None
    ranking: Optional[fwc.RankedResult] = None
    artifacts: dict[str, Path] = field(default_factory=dict)
    seeds: dict[str, int] = field(default_factory=dict)


def _derive_seeds(cfg: PipelineConfig) -> dict[str, int]:
    children = np.random.SeedSequence(cfg.seed).spawn(2)
    ext_seed = int(children[0].generate_state(1)[0])
    som_seed = cfg.som_seed if cfg.som_seed is not None else int(children[1].generate_state(1)[0])
    return {"root": cfg.seed, "ext": ext_seed, "som": som_seed}


def _fmt(value: float) -> str:
    return repr(float(value))


def _write_grid_csv(path: Path, grid: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for row in grid:
            w.writerow(["" if not np.isfinite(v) else _fmt(v) for v in row])


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    h.update(path.read_bytes())
    return h.hexdigest()


def _stage_ingest(cfg: PipelineConfig, state: PipelineState, out: Path) -> None:
    companies, names = load_company_dir(cfg.prices_dir, cfg.fundamentals)
    if not companies:
        raise StageError("ingest", f"no company price files found in {cfg.prices_dir}")
    kept, report = apply_inclusion_rules(companies, cfg.min_quarters, cfg.key_ratio_indices)
    path = out / "inclusion.csv"
    report.write_csv(path)
    state.artifacts["inclusion.csv"] = path
    state.companies = kept
    state.feature_names = names
    if not kept:
        raise StageError("ingest", "no companies survived the inclusion rules")
    log.info("ingest: kept %d of %d companies", len(kept), len(companies))


def _stage_segment(cfg: PipelineConfig, state: PipelineState, out: Path) -> None:
    target = changepoint.TargetSize.parse(cfg.target_size)
    rows = []
    for company in state.companies:
        try:
            iv = changepoint.segment(
                company.log_stock, target, cfg.grid_thresholds, cfg.grid_drifts
            )
        except TuningError as exc:
            state.skipped_tickers.append(company.ticker)
            log.warning("segment: skipping %s (%s)", company.ticker, exc)
            continue
        state.intervals[company.ticker] = iv
        for a, b in iv.intervals:
            rows.append(
                [company.ticker, company.dates[a].isoformat(), company.dates[b].isoformat(), a, b]
            )
    if not state.intervals:
        raise StageError("segment", "segmentation failed for every company")
    path = out / "segments.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["ticker", "start_date", "end_date", "start_idx", "end_idx"])
        w.writerows(rows)
    state.artifacts["segments.csv"] = path
    log.info("segment: %d intervals over %d companies", len(rows), len(state.intervals))


def _stage_label(cfg: PipelineConfig, state: PipelineState, out: Path) -> None:
    spec = PowerSpec(
        min_annual_return=cfg.min_annual_return,
        power=cfg.power,
        alpha=cfg.alpha,
    )
    stride = cfg.stride if cfg.sliding_window else None
    vectors: list[LabeledVector] = []
    for company in state.companies:
        iv = state.intervals.get(company.ticker)
        if iv is None:
            continue
        got = labeling.sliding_window_labels(company, iv, spec, stride=stride)
        for v in got:
            v.feature_names = state.feature_names
        vectors.extend(got)
    if not vectors:
        raise StageError("label", "no interval produced a labeled vector")
    state.vectors = vectors
    state.train_vectors = [v for v in vectors if v.start_date < cfg.split_date]
    state.test_vectors = [v for v in vectors if v.start_date >= cfg.split_date]
    path = out / "labeled.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["ticker", "start_date", "end_date", "label", "method", "p_value", *state.feature_names])
        for v in vectors:
            w.writerow(
                [
                    v.ticker,
                    v.start_date.isoformat(),
                    v.end_date.isoformat(),
                    v.label,
                    v.method.value,
                    _fmt(v.p_value),
                    *["" if not np.isfinite(x) else _fmt(x) for x in v.features],
                ]
            )
    state.artifacts["labeled.csv"] = path
    log.info(
        "label: %d vectors (%d train, %d test)",
        len(vectors), len(state.train_vectors), len(state.test_vectors),
    )


def _vectors_matrix(vectors: list[LabeledVector], names: list[str]) -> featsel.FeatureMatrix:
    values = np.vstack([v.features for v in vectors]) if vectors else np.empty((0, len(names)))
    prov = [(v.ticker, v.start_date) for v in vectors]
    return featsel.FeatureMatrix(values, list(names), prov)


def _stage_select(cfg: PipelineConfig, state: PipelineState, out: Path) -> None:
    if not state.train_vectors:
        raise StageError("select", "empty training set (check split_date)")
    matrix = _vectors_matrix(state.train_vectors, state.feature_names)
    cleaned, clean_report = featsel.clean_features(matrix, cfg.max_missing_fraction)
    state.kept_columns = cleaned.col_names
    state.column_medians = {
        name: float(np.median(cleaned.values[:, j])) for j, name in enumerate(cleaned.col_names)
    }
    labels = [v.label for v in state.train_vectors]
    if len(set(labels)) < 2:
        raise StageError("select", "training labels are single-class; importances undefined")
    normalized, stats = featsel.zscore_normalize(cleaned)
    state.zscore_stats = stats
    seeds = state.seeds
    ranking = featsel.ext_importance(normalized, labels, n_trees=cfg.ext_trees, seed=seeds["ext"])
    k = min(cfg.feature_k, cleaned.cols)
    state.selected_columns = [cleaned.col_names[j] for j in ranking.order[:k]]

    path = out / "features.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["rank", "feature", "score"])
        for rank, j in enumerate(ranking.order, start=1):
            w.writerow([rank, cleaned.col_names[j], _fmt(ranking.scores[j])])
    state.artifacts["features.csv"] = path

    pca = featsel.pca_fit(cleaned, k=min(2, cleaned.cols))
    pca_path = out / "pca.csv"
    with open(pca_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["component", "explained_variance_ratio"])
        for j, ratio in enumerate(pca.explained_variance_ratio, start=1):
            w.writerow([j, _fmt(ratio)])
    state.artifacts["pca.csv"] = pca_path

    transform = {
        "kept_columns": state.kept_columns,
        "selected_columns": state.selected_columns,
        "column_medians": {k_: state.column_medians[k_] for k_ in state.kept_columns},
        "zscore": {name: list(stats[j]) for j, name in enumerate(cleaned.col_names)},
        "dropped_columns": [[n, f] for n, f in clean_report.dropped_cols],
        "imputed_cells": clean_report.imputed_cells,
    }
    tpath = out / "transform.json"
    tpath.write_text(json.dumps(transform, indent=2, sort_keys=True) + "\n")
    state.artifacts["transform.json"] = tpath
    log.info("select: kept %d columns, selected top %d", len(state.kept_columns), k)


def _train_matrix(state: PipelineState) -> featsel.FeatureMatrix:
    matrix = _vectors_matrix(state.train_vectors, state.feature_names)
    kept = featsel.select_columns(matrix, state.kept_columns)
    for j, name in enumerate(kept.col_names):
        col = kept.values[:, j]
        col[~np.isfinite(col)] = state.column_medians[name]
    normalized = featsel.apply_zscore(kept, state.zscore_stats)
    return featsel.select_columns(normalized, state.selected_columns)


def _test_matrix(state: PipelineState) -> featsel.FeatureMatrix:
    # Missing cells stay NaN: the map lookup masks them per dimension.
    matrix = _vectors_matrix(state.test_vectors, state.feature_names)
    kept = featsel.select_columns(matrix, state.kept_columns)
    normalized = featsel.apply_zscore(kept, state.zscore_stats)
    return featsel.select_columns(normalized, state.selected_columns)


def _stage_train(cfg: PipelineConfig, state: PipelineState, out: Path) -> None:
    train = _train_matrix(state)
    train_cfg = som.TrainConfig(
        epochs=cfg.som_epochs,
        radius_start=cfg.som_radius_start,
        radius_end=cfg.som_radius_end,
        seed=state.seeds["som"],
        init=som.InitScheme.parse(cfg.som_init),
    )
    grid = som.init_codebook(train, cfg.som_rows, cfg.som_cols, train_cfg)
    grid = som.batch_train(grid, train, train_cfg)
    state.grid = grid

    book_path = out / "codebook.som"
    som.save_codebook(grid, book_path)
    state.artifacts["codebook.som"] = book_path
    csv_path = out / "codebook.csv"
    som.export_codebook_csv(grid, csv_path, state.selected_columns)
    state.artifacts["codebook.csv"] = csv_path

    umat_path = out / "umatrix.csv"
    _write_grid_csv(umat_path, som.umatrix(grid).values)
    state.artifacts["umatrix.csv"] = umat_path

    labels = [v.label for v in state.train_vectors]
    plane = som.project_labels(grid, train, labels)
    lcp_path = out / "label_plane.csv"
    _write_grid_csv(lcp_path, plane.values)
    state.artifacts["label_plane.csv"] = lcp_path
    hits_path = out / "label_hits.csv"
    _write_grid_csv(hits_path, plane.hits.astype(float))
    state.artifacts["label_hits.csv"] = hits_path
    log.info("train: %dx%d map, %d epochs, final qe %.6f",
             grid.rows, grid.cols, cfg.som_epochs, grid.qe_history[-1] if grid.qe_history else float("nan"))


def _stage_rank(cfg: PipelineConfig, state: PipelineState, out: Path) -> None:
    if not state.test_vectors:
        raise StageError("rank", "empty test set: no vectors dated at/after split_date")
    train = _train_matrix(state)
    labels = [v.label for v in state.train_vectors]
    votes = fwc.accumulate_votes(state.grid, train, labels)
    matrix = fwc.build_fwc(
        votes,
        kernel_size=cfg.fwc_kernel_size,
        kernel_sigma=cfg.fwc_sigma,
        mode=fwc.WeightMode.parse(cfg.fwc_weight),
    )
    state.fwc_matrix = matrix
    fwc_path = out / "fwc.csv"
    _write_grid_csv(fwc_path, matrix.scores)
    state.artifacts["fwc.csv"] = fwc_path

    test = _test_matrix(state)
    provenance = [(v.ticker, v.start_date) for v in state.test_vectors]
    ranking = fwc.rank_vectors(matrix, state.grid, test, provenance, cfg.top_n)
    state.ranking = ranking
    rank_path = out / "ranking.csv"
    with open(rank_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["rank", "ticker", "date", "unit_row", "unit_col", "score"])
        for pos, e in enumerate(ranking.entries, start=1):
            w.writerow([pos, e.ticker, e.start_date.isoformat(), e.unit[0], e.unit[1], _fmt(e.score)])
    state.artifacts["ranking.csv"] = rank_path
    log.info("rank: wrote top %d of %d test vectors", len(ranking.entries), len(state.test_vectors))


def _write_manifest(cfg: PipelineConfig, state: PipelineState, out: Path) -> Path:
    manifest = {
        "config": cfg.to_mapping(),
        "seeds": state.seeds,
        "skipped_tickers": sorted(state.skipped_tickers),
        "artifacts": {
            name: _sha256(path) for name, path in sorted(state.artifacts.items())
        },
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


_STAGE_FUNCS = {
    "ingest": _stage_ingest,
    "segment": _stage_segment,
    "label": _stage_label,
    "select": _stage_select,
    "train": _stage_train,
    "rank": _stage_rank,
}


def run_pipeline(cfg: PipelineConfig, stop_after: str = "rank") -> PipelineState:
    """Run the pipeline through ``stop_after`` (inclusive), writing artifacts.

    Raises StageError (with the failing stage's name) on the first stage
    failure; validation problems in inputs surface as ValidationError.
    """
    if stop_after not in STAGES:
        raise ValidationError(f"unknown stage {stop_after!r}")
    cfg.validate()
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    state = PipelineState(seeds=_derive_seeds(cfg))
    for stage in STAGES:
        func = _STAGE_FUNCS[stage]
        try:
            func(cfg, state, out)
        except (StageError, ValidationError):
            raise
        except SominvestError as exc:
            raise StageError(stage, str(exc)) from exc
        if stage == stop_after:
            break
    state.artifacts["manifest.json"] = _write_manifest(cfg, state, out)
    return state
