"""
Command-line interface.

Subcommands: synth, ingest, segment, label, select, train, rank, run, report.
Stage subcommands run the pipeline from the raw inputs up to that stage and
write the artifacts produced so far. Exit codes: 0 success, 1 usage,
2 validation, 3 stage failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import load_config
from .errors import ParseError, SominvestError, StageError, ValidationError
from .pipeline import STAGES, run_pipeline
from .reports import REPORT_KINDS, emit_report
from .synthgen import SynthSpec, write_fixture

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_STAGE = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


# CLI flag -> config key; flags win over config-file values.
_FLAG_KEYS = [
    ("--prices-dir", "paths.prices_dir", "directory of per-ticker price CSVs plus market.csv"),
    ("--fundamentals", "paths.fundamentals", "fundamentals CSV path"),
    ("--out", "paths.output_dir", "output directory for artifacts"),
    ("--seed", "seed", "root seed; all randomness derives from it"),
    ("--split-date", "split_date", "train strictly before, test at/after (ISO date)"),
    ("--target-size", "segment.target_size", "interval target: small|medium|large"),
    ("--thresholds", "segment.thresholds", "comma list of CUSUM thresholds"),
    ("--drifts", "segment.drifts", "comma list of CUSUM drifts"),
    ("--min-quarters", "ingest.min_quarters", "minimum quarterly records per company"),
    ("--key-ratios", "ingest.key_ratio_indices", "comma list of must-have feature indices"),
    ("--feature-k", "featsel.k", "number of features to keep"),
    ("--max-missing", "featsel.max_missing_fraction", "column missing-fraction drop threshold"),
    ("--trees", "featsel.trees", "number of trees in the importance ensemble"),
    ("--alpha", "labeling.alpha", "test significance level"),
    ("--power", "labeling.power", "target test power"),
    ("--min-annual-return", "labeling.min_annual_return", "minimum acceptable annual edge"),
    ("--sliding-window", "labeling.sliding_window", "enable the sliding window (true/false)"),
    ("--stride", "labeling.stride", "sliding window stride in weeks"),
    ("--som-rows", "som.rows", "map rows"),
    ("--som-cols", "som.cols", "map cols"),
    ("--som-epochs", "som.epochs", "training epochs"),
    ("--som-seed", "som.seed", "override the derived map seed"),
    ("--som-init", "som.init", "codebook init: random_sample|pca_plane"),
    ("--radius-start", "som.radius_start", "initial neighborhood radius"),
    ("--radius-end", "som.radius_end", "final neighborhood radius"),
    ("--kernel-size", "fwc.kernel_size", "smoothing kernel size (odd)"),
    ("--kernel-sigma", "fwc.sigma", "smoothing kernel sigma"),
    ("--weight-mode", "fwc.weight", "unit score weighting: fraction|ratio"),
    ("--top-n", "rank.top_n", "ranking size"),
]


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, default=None, help="flat key=value config file")
    for flag, key, help_text in _FLAG_KEYS:
        p.add_argument(flag, dest=key.replace(".", "__"), default=None, help=help_text, metavar="V")


def _config_from_args(args: argparse.Namespace):
    overrides = {}
    for _, key, _ in _FLAG_KEYS:
        value = getattr(args, key.replace(".", "__"), None)
        if value is not None:
            overrides[key] = value
    return load_config(args.config, overrides)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sominvest", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", help="write a seeded synthetic fixture")
    synth.add_argument("--out", type=Path, required=True, help="fixture directory")
    synth.add_argument("--seed", type=int, default=7)
    synth.add_argument("--companies", type=int, default=12)
    synth.add_argument("--weeks", type=int, default=520)
    synth.add_argument("--changes", type=int, default=5, help="drift shifts per company")
    synth.add_argument("--shift", type=float, default=0.02, help="drift shift magnitude")
    synth.add_argument("--noise-sigma", type=float, default=0.004)
    synth.add_argument("--features", type=int, default=30)
    synth.add_argument("--sparse-features", type=int, default=2)
    synth.add_argument("--missing-rate", type=float, default=0.005)
    synth.add_argument("--planted-feature", type=int, default=2)

    for stage in STAGES + ("run",):
        p = sub.add_parser(stage, help=f"run the pipeline through the {stage} stage"
                           if stage != "run" else "run the full pipeline")
        _add_config_flags(p)

    rep = sub.add_parser("report", help="emit figure-equivalent CSV data")
    rep.add_argument("kind", choices=REPORT_KINDS)
    rep.add_argument("--run-dir", type=Path, required=True, help="pipeline output directory")
    rep.add_argument("--series", type=Path, default=None, help="price CSV (qq report only)")
    rep.add_argument("--out", type=Path, default=None, help="write here instead of stdout")

    return parser


def _cmd_synth(args: argparse.Namespace) -> int:
    spec = SynthSpec.random_changes(
        seed=args.seed,
        n_companies=args.companies,
        weeks=args.weeks,
        n_changes=args.changes,
        shift=args.shift,
        noise_sigma=args.noise_sigma,
        n_features=args.features,
        n_sparse_features=args.sparse_features,
        missing_rate=args.missing_rate,
        planted_feature=args.planted_feature,
    )
    paths = write_fixture(spec, args.out)
    for name, path in paths.items():
        print(f"{name}: {path}")
    return EXIT_OK


def _cmd_report(args: argparse.Namespace) -> int:
    if args.out is not None:
        with open(args.out, "w", newline="") as fh:
            emit_report(args.kind, args.run_dir, fh, series=args.series)
    else:
        emit_report(args.kind, args.run_dir, sys.stdout, series=args.series)
    return EXIT_OK


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(message)s", stream=sys.stderr)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "synth":
            return _cmd_synth(args)
        if args.command == "report":
            return _cmd_report(args)
        cfg = _config_from_args(args)
        stop_after = "rank" if args.command == "run" else args.command
        state = run_pipeline(cfg, stop_after=stop_after)
        for name in sorted(state.artifacts):
            print(f"{name}: {state.artifacts[name]}")
        return EXIT_OK
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except (ValidationError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except SominvestError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    raise SystemExit(main())
