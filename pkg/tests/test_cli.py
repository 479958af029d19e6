import csv
import json

import pytest

from sominvest.cli import EXIT_OK, EXIT_STAGE, EXIT_USAGE, EXIT_VALIDATION, main


def run_cli(args):
    try:
        return main(args)
    except SystemExit as exc:  # argparse usage failures
        return exc.code


class TestSynthCommand:
    def test_writes_fixture(self, tmp_path, capsys):
        code = run_cli(["synth", "--out", str(tmp_path / "fx"), "--seed", "3",
                        "--companies", "2", "--weeks", "150", "--changes", "2"])
        assert code == EXIT_OK
        assert (tmp_path / "fx" / "prices" / "market.csv").exists()
        assert (tmp_path / "fx" / "fundamentals.csv").exists()
        assert (tmp_path / "fx" / "ground_truth.json").exists()

    def test_deterministic(self, tmp_path):
        for sub in ("a", "b"):
            run_cli(["synth", "--out", str(tmp_path / sub), "--seed", "5",
                     "--companies", "2", "--weeks", "150", "--changes", "2"])
        assert (tmp_path / "a" / "fundamentals.csv").read_bytes() == \
            (tmp_path / "b" / "fundamentals.csv").read_bytes()


@pytest.fixture(scope="module")
def cli_run(fixture_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("cli_out")
    code = run_cli([
        "run",
        "--prices-dir", str(fixture_dir["prices_dir"]),
        "--fundamentals", str(fixture_dir["fundamentals"]),
        "--out", str(out),
    ])
    assert code == EXIT_OK
    return out


class TestStageCommands:
    def test_segment_stage_writes_schema(self, fixture_dir, tmp_path):
        out = tmp_path / "seg"
        code = run_cli([
            "segment",
            "--prices-dir", str(fixture_dir["prices_dir"]),
            "--fundamentals", str(fixture_dir["fundamentals"]),
            "--out", str(out),
            "--target-size", "medium",
        ])
        assert code == EXIT_OK
        with open(out / "segments.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert rows
        assert set(rows[0]) == {"ticker", "start_date", "end_date", "start_idx", "end_idx"}
        for row in rows:
            assert int(row["end_idx"]) > int(row["start_idx"])
            assert row["end_date"] > row["start_date"]

    def test_run_command_full_artifacts(self, cli_run):
        manifest = json.loads((cli_run / "manifest.json").read_text())
        assert "ranking.csv" in manifest["artifacts"]
        with open(cli_run / "ranking.csv") as fh:
            assert len(list(csv.DictReader(fh))) > 0

    def test_report_command_stdout(self, cli_run, capsys):
        code = run_cli(["report", "umat", "--run-dir", str(cli_run)])
        assert code == EXIT_OK
        lines = capsys.readouterr().out.strip().splitlines()
        assert len(lines) == 50  # default map rows

    def test_report_command_to_file(self, cli_run, tmp_path):
        out_file = tmp_path / "fwc_data.csv"
        code = run_cli(["report", "fwc", "--run-dir", str(cli_run), "--out", str(out_file)])
        assert code == EXIT_OK
        assert out_file.exists() and out_file.stat().st_size > 0


class TestExitCodes:
    def test_usage_error(self):
        assert run_cli(["segment", "--no-such-flag"]) == EXIT_USAGE
        assert run_cli([]) == EXIT_USAGE

    def test_validation_error_for_bad_config_value(self, fixture_dir, tmp_path):
        code = run_cli([
            "run",
            "--prices-dir", str(fixture_dir["prices_dir"]),
            "--fundamentals", str(fixture_dir["fundamentals"]),
            "--out", str(tmp_path / "x"),
            "--target-size", "giant",
        ])
        assert code == EXIT_VALIDATION

    def test_validation_error_for_missing_inputs(self, tmp_path):
        code = run_cli([
            "run",
            "--prices-dir", str(tmp_path / "nowhere"),
            "--fundamentals", str(tmp_path / "nothing.csv"),
            "--out", str(tmp_path / "y"),
        ])
        assert code == EXIT_VALIDATION

    def test_stage_error_for_empty_test_set(self, fixture_dir, tmp_path):
        code = run_cli([
            "run",
            "--prices-dir", str(fixture_dir["prices_dir"]),
            "--fundamentals", str(fixture_dir["fundamentals"]),
            "--out", str(tmp_path / "z"),
            "--split-date", "2030-01-01",
        ])
        assert code == EXIT_STAGE

    def test_report_on_empty_dir_is_validation_error(self, tmp_path):
        assert run_cli(["report", "umat", "--run-dir", str(tmp_path)]) == EXIT_VALIDATION
