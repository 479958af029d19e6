"""
Rectangular self-organizing map with batch training and missing-value-aware
lookup.

The lattice is rectangular with 4-connectivity so that the downstream score
grid can be convolved with a square kernel. Training is the batch variant:
each epoch assigns every row to its best matching unit, then replaces every
codebook vector with the Gaussian-neighborhood-weighted mean of the assigned
rows, with the radius decaying linearly across epochs. Distances mask missing
entries and rescale by the present-dimension count, so sparse vectors are not
biased toward any unit.
"""

from __future__ import annotations

import csv
import enum
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ValidationError
from .featsel import FeatureMatrix

_CODEBOOK_MAGIC = b"SOMCDBK1"


class InitScheme(enum.Enum):
    RANDOM_SAMPLE = "random_sample"
    PCA_PLANE = "pca_plane"

    @classmethod
    def parse(cls, name: str) -> "InitScheme":
        try:
            return cls(name.lower())
        except ValueError:
            raise ValidationError(f"unknown init scheme {name!r}") from None


@dataclass
class TrainConfig:
    epochs: int = 20
    radius_start: float | None = None  # None -> max(rows, cols) / 4
    radius_end: float = 1.0
    seed: int = 0
    init: InitScheme = InitScheme.RANDOM_SAMPLE

    def __post_init__(self):
        if self.epochs < 0:
            raise ValidationError("epochs must be >= 0")
        if self.radius_end <= 0:
            raise ValidationError("radius_end must be > 0")
        if self.radius_start is not None and self.radius_start < self.radius_end:
            raise ValidationError("radius_start must be >= radius_end")

    def resolved_radius_start(self, rows: int, cols: int) -> float:
        if self.radius_start is not None:
            return self.radius_start
        return max(max(rows, cols) / 4.0, self.radius_end)


@dataclass
class SomGrid:
    rows: int
    cols: int
    dim: int
    codebook: np.ndarray  # rows x cols x dim
    trained_epochs: int = 0
    seed: int = 0
    qe_history: list[float] = field(default_factory=list)

    def __post_init__(self):
        self.codebook = np.asarray(self.codebook, dtype=float)
        if self.codebook.shape != (self.rows, self.cols, self.dim):
            raise ValidationError("codebook shape must be rows x cols x dim")
        if not np.isfinite(self.codebook).all():
            raise ValidationError("codebook must be finite")

    @property
    def units(self) -> int:
        return self.rows * self.cols

    def flat(self) -> np.ndarray:
        return self.codebook.reshape(self.units, self.dim)


@dataclass
class Umatrix:
    values: np.ndarray  # rows x cols mean distance to 4-neighbors


@dataclass
class LabeledComponentPlane:
    values: np.ndarray  # rows x cols mean label, NaN where no hits
    hits: np.ndarray  # rows x cols hit counts


def _column_medians(data: np.ndarray) -> np.ndarray:
    meds = np.zeros(data.shape[1])
    for j in range(data.shape[1]):
        finite = data[:, j][np.isfinite(data[:, j])]
        meds[j] = np.median(finite) if finite.size else 0.0
    return meds


def init_codebook(data: FeatureMatrix, rows: int, cols: int, cfg: TrainConfig) -> SomGrid:
    """Build the initial codebook from data.

    ``random_sample`` draws unit vectors uniformly (with replacement) from the
    data rows; ``pca_plane`` spans the first two principal directions of the
    centered data linearly across the lattice. Any non-finite cell in a drawn
    row is replaced by the column median so the codebook invariant holds.
    """
    if data.rows < 1:
        raise ValidationError("init_codebook needs at least one data row")
    if rows < 1 or cols < 1:
        raise ValidationError("lattice dimensions must be positive")
    x = data.values
    if cfg.init is InitScheme.RANDOM_SAMPLE:
        rng = np.random.default_rng(cfg.seed)
        picks = rng.integers(0, data.rows, size=rows * cols)
        book = x[picks].astype(float).copy()
        if not np.isfinite(book).all():
            meds = _column_medians(x)
            bad = ~np.isfinite(book)
            book[bad] = np.broadcast_to(meds, book.shape)[bad]
        book = book.reshape(rows, cols, data.cols)
    else:
        finite = np.where(np.isfinite(x), x, np.broadcast_to(_column_medians(x), x.shape))
        mean = finite.mean(axis=0)
        centered = finite - mean
        cov = centered.T @ centered / max(1, finite.shape[0] - 1)
        eigvals, eigvecs = np.linalg.eigh(cov)
        order = np.argsort(eigvals)[::-1]
        eigvals = np.clip(eigvals[order], 0.0, None)
        eigvecs = eigvecs[:, order]
        scale1 = np.sqrt(eigvals[0]) if len(eigvals) > 0 else 0.0
        scale2 = np.sqrt(eigvals[1]) if len(eigvals) > 1 else 0.0
        ax_r = np.linspace(-1.0, 1.0, rows) if rows > 1 else np.zeros(1)
        ax_c = np.linspace(-1.0, 1.0, cols) if cols > 1 else np.zeros(1)
        book = (
            mean[None, None, :]
            + ax_r[:, None, None] * scale1 * eigvecs[:, 0][None, None, :]
            + (ax_c[None, :, None] * scale2 * eigvecs[:, 1][None, None, :] if data.cols > 1 else 0.0)
        )
    return SomGrid(rows, cols, data.cols, book, trained_epochs=0, seed=cfg.seed)


def _masked_dist2(v: np.ndarray, flat_book: np.ndarray, dim: int) -> np.ndarray:
    mask = np.isfinite(v)
    present = int(mask.sum())
    if present == 0:
        raise ValidationError("vector has no non-missing entries")
    diff = v[mask][None, :] - flat_book[:, mask]
    return (diff * diff).sum(axis=1) * (dim / present)


def bmu(grid: SomGrid, v: Sequence[float]) -> tuple[tuple[int, int], float]:
    """Best matching unit for one (possibly partially missing) vector.

    The distance over the present entries is rescaled by dim / #present so
    sparse vectors compete on the same scale; with nothing missing this is
    plain Euclidean distance. Ties go to the smallest row-major unit index.
    """
    v = np.asarray(v, dtype=float)
    if v.shape != (grid.dim,):
        raise ValidationError(f"vector must have length {grid.dim}")
    d2 = _masked_dist2(v, grid.flat(), grid.dim)
    best = int(d2.argmin())  # argmin returns the first (row-major smallest) tie
    return (best // grid.cols, best % grid.cols), float(np.sqrt(max(d2[best], 0.0)))


def _lattice_dist2(rows: int, cols: int) -> np.ndarray:
    rr, cc = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
    pos = np.stack([rr.ravel(), cc.ravel()], axis=1).astype(float)
    diff = pos[:, None, :] - pos[None, :, :]
    return (diff**2).sum(axis=-1)


def _assign_all(data: np.ndarray, flat_book: np.ndarray, dim: int, chunk: int = 8192):
    """BMU index and distance per row; fast path for fully finite rows."""
    n = data.shape[0]
    idx = np.empty(n, dtype=np.int64)
    dist = np.empty(n, dtype=float)
    finite_rows = np.isfinite(data).all(axis=1)
    book_sq = (flat_book**2).sum(axis=1)
    where_finite = np.flatnonzero(finite_rows)
    for lo in range(0, len(where_finite), chunk):
        sel = where_finite[lo : lo + chunk]
        xc = data[sel]
        d2 = (xc**2).sum(axis=1)[:, None] - 2.0 * (xc @ flat_book.T) + book_sq[None, :]
        local = d2.argmin(axis=1)
        idx[sel] = local
        dist[sel] = np.sqrt(np.maximum(d2[np.arange(len(sel)), local], 0.0))
    for i in np.flatnonzero(~finite_rows):
        d2 = _masked_dist2(data[i], flat_book, dim)
        j = int(d2.argmin())
        idx[i] = j
        dist[i] = float(np.sqrt(max(d2[j], 0.0)))
    return idx, dist


def batch_train(grid: SomGrid, data: FeatureMatrix, cfg: TrainConfig) -> SomGrid:
    """Batch-train a copy of the grid; the input grid is left untouched.

    Per epoch: assign all rows to BMUs, then set every unit to the
    neighborhood-weighted mean of the assigned rows, with Gaussian weights
    exp(-lattice_dist^2 / (2 r^2)) and r decaying linearly from radius_start
    to radius_end. Missing cells drop out of both numerator and denominator.
    Accumulation runs in a canonical row order (sorted by BMU, then by row
    content) so results do not depend on input row order. The returned grid
    carries ``qe_history``: mean BMU distance at init and after every epoch.
    """
    if data.rows < 1:
        raise ValidationError("batch_train needs non-empty data")
    if data.cols != grid.dim:
        raise ValidationError(f"data dim {data.cols} != grid dim {grid.dim}")
    x = data.values
    book = grid.flat().copy()
    units = grid.units
    epochs = cfg.epochs
    radius_start = cfg.resolved_radius_start(grid.rows, grid.cols)
    lattice = _lattice_dist2(grid.rows, grid.cols)
    history: list[float] = []
    finite_mask = np.isfinite(x)
    x_filled = np.where(finite_mask, x, 0.0)
    for epoch in range(epochs):
        frac = epoch / (epochs - 1) if epochs > 1 else 0.0
        radius = radius_start + (cfg.radius_end - radius_start) * frac
        idx, dist = _assign_all(x, book, grid.dim)
        history.append(float(dist.mean()))
        order = np.lexsort(tuple(x_filled.T[::-1]) + (idx,))
        idx_sorted = idx[order]
        sums = np.empty((units, grid.dim))
        counts = np.empty((units, grid.dim))
        for d in range(grid.dim):
            sums[:, d] = np.bincount(idx_sorted, weights=x_filled[order, d], minlength=units)
            counts[:, d] = np.bincount(idx_sorted, weights=finite_mask[order, d].astype(float), minlength=units)
        weights = np.exp(-lattice / (2.0 * radius * radius))
        numer = weights @ sums
        denom = weights @ counts
        updatable = denom > 0.0
        book = np.where(updatable, np.divide(numer, denom, out=np.zeros_like(numer), where=updatable), book)
    _, dist = _assign_all(x, book, grid.dim)
    history.append(float(dist.mean()))
    return SomGrid(
        grid.rows,
        grid.cols,
        grid.dim,
        book.reshape(grid.rows, grid.cols, grid.dim),
        trained_epochs=grid.trained_epochs + epochs,
        seed=cfg.seed,
        qe_history=grid.qe_history + history,
    )


def quantization_error(grid: SomGrid, data: FeatureMatrix) -> float:
    """Mean BMU distance over all rows."""
    if data.cols != grid.dim:
        raise ValidationError(f"data dim {data.cols} != grid dim {grid.dim}")
    if data.rows == 0:
        raise ValidationError("quantization_error needs non-empty data")
    _, dist = _assign_all(data.values, grid.flat(), grid.dim)
    return float(dist.mean())


def umatrix(grid: SomGrid) -> Umatrix:
    """Mean Euclidean distance from each unit to its existing 4-neighbors."""
    book = grid.codebook
    total = np.zeros((grid.rows, grid.cols))
    count = np.zeros((grid.rows, grid.cols))
    vert = np.sqrt(((book[1:, :, :] - book[:-1, :, :]) ** 2).sum(axis=2))
    horiz = np.sqrt(((book[:, 1:, :] - book[:, :-1, :]) ** 2).sum(axis=2))
    total[1:, :] += vert
    count[1:, :] += 1
    total[:-1, :] += vert
    count[:-1, :] += 1
    total[:, 1:] += horiz
    count[:, 1:] += 1
    total[:, :-1] += horiz
    count[:, :-1] += 1
    with np.errstate(invalid="ignore"):
        values = np.where(count > 0, total / np.maximum(count, 1), 0.0)
    return Umatrix(values)


def project_labels(grid: SomGrid, data: FeatureMatrix, labels: Sequence[int]) -> LabeledComponentPlane:
    """Per-unit hit count and mean training label; NaN where nothing lands."""
    y = np.asarray(labels, dtype=float)
    if len(y) != data.rows:
        raise ValidationError("labels length must equal row count")
    idx, _ = _assign_all(data.values, grid.flat(), grid.dim)
    hits = np.bincount(idx, minlength=grid.units).astype(int)
    sums = np.bincount(idx, weights=y, minlength=grid.units)
    with np.errstate(invalid="ignore", divide="ignore"):
        means = np.where(hits > 0, sums / np.maximum(hits, 1), np.nan)
    return LabeledComponentPlane(
        values=means.reshape(grid.rows, grid.cols),
        hits=hits.reshape(grid.rows, grid.cols),
    )


def save_codebook(grid: SomGrid, path: Path) -> None:
    """Write the codebook: magic, five int64 header fields, row-major float64."""
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(_CODEBOOK_MAGIC)
        fh.write(struct.pack("<5q", grid.rows, grid.cols, grid.dim, grid.trained_epochs, grid.seed))
        fh.write(grid.codebook.astype("<f8").tobytes())


def load_codebook(path: Path) -> SomGrid:
    path = Path(path)
    raw = path.read_bytes()
    if raw[: len(_CODEBOOK_MAGIC)] != _CODEBOOK_MAGIC:
        raise ValidationError(f"{path}: not a codebook file (bad magic)")
    header_end = len(_CODEBOOK_MAGIC) + struct.calcsize("<5q")
    rows, cols, dim, epochs, seed = struct.unpack("<5q", raw[len(_CODEBOOK_MAGIC) : header_end])
    expected = rows * cols * dim * 8
    body = raw[header_end:]
    if len(body) != expected:
        raise ValidationError(f"{path}: expected {expected} payload bytes, found {len(body)}")
    book = np.frombuffer(body, dtype="<f8").reshape(rows, cols, dim).copy()
    return SomGrid(rows, cols, dim, book, trained_epochs=epochs, seed=seed)


def export_codebook_csv(grid: SomGrid, path: Path, feature_names: Sequence[str]) -> None:
    if len(feature_names) != grid.dim:
        raise ValidationError("feature_names length must equal codebook dim")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row", "col", *feature_names])
        for i in range(grid.rows):
            for j in range(grid.cols):
                w.writerow([i, j, *[repr(float(v)) for v in grid.codebook[i, j]]])
