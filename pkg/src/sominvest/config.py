"""
Pipeline configuration: flat key-value text with section prefixes, every key
overridable by a command-line flag (flags win over file values over defaults).
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import date
from pathlib import Path
from typing import Optional

from .errors import ValidationError

# config key -> dataclass field
_KEY_MAP = {
    "paths.prices_dir": "prices_dir",
    "paths.fundamentals": "fundamentals",
    "paths.output_dir": "output_dir",
    "seed": "seed",
    "split_date": "split_date",
    "segment.target_size": "target_size",
    "segment.thresholds": "grid_thresholds",
    "segment.drifts": "grid_drifts",
    "ingest.min_quarters": "min_quarters",
    "ingest.key_ratio_indices": "key_ratio_indices",
    "featsel.k": "feature_k",
    "featsel.max_missing_fraction": "max_missing_fraction",
    "featsel.trees": "ext_trees",
    "labeling.alpha": "alpha",
    "labeling.power": "power",
    "labeling.min_annual_return": "min_annual_return",
    "labeling.sliding_window": "sliding_window",
    "labeling.stride": "stride",
    "som.rows": "som_rows",
    "som.cols": "som_cols",
    "som.epochs": "som_epochs",
    "som.seed": "som_seed",
    "som.init": "som_init",
    "som.radius_start": "som_radius_start",
    "som.radius_end": "som_radius_end",
    "fwc.kernel_size": "fwc_kernel_size",
    "fwc.sigma": "fwc_sigma",
    "fwc.weight": "fwc_weight",
    "rank.top_n": "top_n",
}


@dataclass
class PipelineConfig:
    prices_dir: Path = Path("prices")
    fundamentals: Path = Path("fundamentals.csv")
    output_dir: Path = Path("out")
    seed: int = 7
    split_date: date = date(2013, 1, 1)
    target_size: str = "medium"
    grid_thresholds: tuple[float, ...] = (1.0, 2.0, 3.0, 4.0, 5.0)
    grid_drifts: tuple[float, ...] = (0.0, 0.25, 0.5, 1.0)
    min_quarters: int = 36
    key_ratio_indices: tuple[int, ...] = (0, 1)
    feature_k: int = 25
    max_missing_fraction: float = 0.01
    ext_trees: int = 100
    alpha: float = 0.05
    power: float = 0.80
    min_annual_return: float = 0.05
    sliding_window: bool = False
    stride: int = 1
    som_rows: int = 50
    som_cols: int = 50
    som_epochs: int = 20
    som_seed: Optional[int] = None
    som_init: str = "random_sample"
    som_radius_start: Optional[float] = None
    som_radius_end: float = 1.0
    fwc_kernel_size: int = 5
    fwc_sigma: float = 1.0
    fwc_weight: str = "fraction"
    top_n: int = 10

    def validate(self) -> None:
        if self.target_size not in ("small", "medium", "large"):
            raise ValidationError(f"target_size must be small|medium|large, got {self.target_size!r}")
        if self.som_init not in ("random_sample", "pca_plane"):
            raise ValidationError(f"som.init must be random_sample|pca_plane, got {self.som_init!r}")
        if self.fwc_weight not in ("fraction", "ratio"):
            raise ValidationError(f"fwc.weight must be fraction|ratio, got {self.fwc_weight!r}")
        for name in ("feature_k", "ext_trees", "som_rows", "som_cols", "top_n", "min_quarters", "stride"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be >= 1")
        if self.som_epochs < 0:
            raise ValidationError("som.epochs must be >= 0")
        if self.fwc_kernel_size < 1 or self.fwc_kernel_size % 2 == 0:
            raise ValidationError("fwc.kernel_size must be odd and >= 1")
        if not 0 < self.alpha < 1:
            raise ValidationError("labeling.alpha must be in (0,1)")
        if not 0 < self.power < 1:
            raise ValidationError("labeling.power must be in (0,1)")

    def to_mapping(self) -> dict[str, str]:
        """Flat key-value view, used for the manifest echo."""
        out = {}
        for key, attr in _KEY_MAP.items():
            value = getattr(self, attr)
            out[key] = _format_value(value)
        return dict(sorted(out.items()))


def _format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (tuple, list)):
        return ",".join(_format_value(v) for v in value)
    if isinstance(value, date):
        return value.isoformat()
    return str(value)


def _parse_value(attr: str, raw: str):
    raw = raw.strip()
    if attr in ("prices_dir", "fundamentals", "output_dir"):
        return Path(raw)
    if attr == "split_date":
        try:
            return date.fromisoformat(raw)
        except ValueError:
            raise ValidationError(f"bad date {raw!r} for split_date") from None
    if attr in ("grid_thresholds", "grid_drifts"):
        try:
            return tuple(float(v) for v in raw.split(",") if v.strip())
        except ValueError:
            raise ValidationError(f"bad float list {raw!r}") from None
    if attr == "key_ratio_indices":
        try:
            return tuple(int(v) for v in raw.split(",") if v.strip())
        except ValueError:
            raise ValidationError(f"bad index list {raw!r}") from None
    if attr == "sliding_window":
        if raw.lower() in ("true", "1", "yes", "on"):
            return True
        if raw.lower() in ("false", "0", "no", "off"):
            return False
        raise ValidationError(f"bad boolean {raw!r} for labeling.sliding_window")
    if attr in ("som_seed", "som_radius_start"):
        if raw == "" or raw.lower() == "none":
            return None
        return int(raw) if attr == "som_seed" else float(raw)
    if attr in ("target_size", "som_init", "fwc_weight"):
        return raw
    current = PipelineConfig.__dataclass_fields__[attr].default
    try:
        if isinstance(current, bool):
            raise TypeError
        if isinstance(current, int):
            return int(raw)
        if isinstance(current, float):
            return float(raw)
    except (TypeError, ValueError):
        raise ValidationError(f"bad value {raw!r} for {attr}") from None
    return raw


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    """Parse ``key = value`` lines; '#' starts a comment, blanks are skipped."""
    out: dict[str, str] = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ValidationError(f"{source}:{line_no}: expected 'key = value', got {line.strip()!r}")
        key, _, value = stripped.partition("=")
        key = key.strip()
        if key not in _KEY_MAP:
            raise ValidationError(f"{source}:{line_no}: unknown config key {key!r}")
        out[key] = value.strip()
    return out


def load_config(path: Optional[Path] = None, overrides: Optional[dict[str, str]] = None) -> PipelineConfig:
    """Build a config from defaults, an optional file, and flag overrides."""
    cfg = PipelineConfig()
    merged: dict[str, str] = {}
    if path is not None:
        merged.update(parse_config_text(Path(path).read_text(), source=str(path)))
    if overrides:
        for key in overrides:
            if key not in _KEY_MAP:
                raise ValidationError(f"unknown config key {key!r}")
        merged.update(overrides)
    for key, raw in merged.items():
        attr = _KEY_MAP[key]
        setattr(cfg, attr, _parse_value(attr, raw))
    cfg.validate()
    return cfg
