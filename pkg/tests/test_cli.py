"""CLI behavior: subcommands, exit codes, artifacts and figures."""

import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from querypulse.cli import main


def write_config(base: Path, **overrides) -> Path:
    settings = {
        "seed": 31,
        "paths": {
            "events": str(base / "data" / "events.jsonl"),
            "labels": str(base / "data" / "labels.csv"),
            "workdir": str(base / "run"),
        },
        "ingest": {"min_count": 3},
        "featurize": {"test_fraction": 0.25},
        "train": {"grid": [{"n_trees": 25, "max_depth": 8, "min_samples_leaf": 3}]},
        "eval": {"target_precision": 0.8},
        "generator": {
            "n_queries": 400,
            "instance_scale": 550.0,
            "min_instances": 4,
        },
    }
    settings.update(overrides)
    path = base / "config.json"
    path.write_text(json.dumps(settings))
    return path


@pytest.fixture(scope="module")
def cli_workspace(tmp_path_factory):
    base = tmp_path_factory.mktemp("cli")
    config_path = write_config(base)
    runner = CliRunner()
    # the trend check needs >= 1000 instances per rating to resolve its
    # 3-standard-error gaps; this corpus is deliberately small, so skip it
    result = runner.invoke(main, ["generate", "--config", str(config_path), "--no-check"])
    assert result.exit_code == 0, f"generate failed: {result.output}"
    for command in ("featurize", "train", "evaluate", "score"):
        result = runner.invoke(main, [command, "--config", str(config_path)])
        assert result.exit_code == 0, f"{command} failed: {result.output}"
    return base, config_path, runner


class TestHappyPath:
    def test_all_artifacts_written(self, cli_workspace):
        base, _, _ = cli_workspace
        for name in (
            "data/events.jsonl", "data/labels.csv", "data/manifest.json",
            "run/report.json", "run/model.json", "run/scores.csv",
        ):
            assert (base / name).exists(), name

    def test_figures_rendered(self, cli_workspace):
        base, _, _ = cli_workspace
        for name in ("roc.png", "pr.png", "ctr_buckets.png"):
            assert (base / "run" / "figures" / name).stat().st_size > 0

    def test_generate_summary_payload(self, cli_workspace):
        base, config_path, runner = cli_workspace
        result = runner.invoke(
            main,
            ["generate", "--config", str(config_path), "--out", str(base / "data2"),
             "--no-check"],
        )
        assert result.exit_code == 0
        payload = json.loads(result.output.strip().splitlines()[-1])
        assert payload["n_queries"] == 400
        assert payload["n_events"] > payload["n_instances"] > payload["n_queries"]

    def test_trend_check_failure_exits_3(self, tmp_path):
        config_path = write_config(
            tmp_path,
            generator={
                "n_queries": 300, "instance_scale": 400.0, "min_instances": 4,
                "click_logit_sd": 25.0,
            },
        )
        result = CliRunner().invoke(main, ["generate", "--config", str(config_path)])
        assert result.exit_code == 3
        payload = json.loads(result.output.strip().splitlines()[-1])
        assert payload["error"] == "TrendError"

    def test_no_figures_flag(self, cli_workspace, tmp_path):
        base, config_path, runner = cli_workspace
        result = runner.invoke(
            main,
            ["evaluate", "--config", str(config_path), "--out", str(base / "run"),
             "--no-figures"],
        )
        assert result.exit_code == 0

    def test_train_rerun_byte_identical(self, cli_workspace):
        base, config_path, runner = cli_workspace
        model_path = base / "run" / "model.json"
        before = model_path.read_bytes()
        result = runner.invoke(main, ["train", "--config", str(config_path)])
        assert result.exit_code == 0
        assert model_path.read_bytes() == before

    def test_help_screens(self, cli_workspace):
        _, _, runner = cli_workspace
        for command in ("generate", "featurize", "train", "evaluate", "score"):
            result = runner.invoke(main, [command, "--help"])
            assert result.exit_code == 0
            assert "--config" in result.output


class TestExitCodes:
    def test_missing_events_exits_2(self, tmp_path):
        config_path = write_config(
            tmp_path,
            paths={
                "events": str(tmp_path / "nope.jsonl"),
                "labels": str(tmp_path / "nope.csv"),
                "workdir": str(tmp_path / "run"),
            },
        )
        result = CliRunner().invoke(main, ["featurize", "--config", str(config_path)])
        assert result.exit_code == 2
        payload = json.loads(result.output.strip().splitlines()[-1])
        assert "error" in payload

    def test_invalid_config_exits_3(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"seed": 1, "featurize": {"test_fraction": 3.0}}))
        result = CliRunner().invoke(main, ["featurize", "--config", str(path)])
        assert result.exit_code == 3

    def test_missing_seed_exits_3(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"paths": {"workdir": "x"}}))
        result = CliRunner().invoke(main, ["featurize", "--config", str(path)])
        assert result.exit_code == 3

    def test_generate_without_generator_section_exits_3(self, tmp_path):
        path = tmp_path / "no_gen.json"
        path.write_text(json.dumps({"seed": 4}))
        result = CliRunner().invoke(main, ["generate", "--config", str(path)])
        assert result.exit_code == 3

    def test_score_before_train_exits_2(self, tmp_path):
        config_path = write_config(tmp_path)
        runner = CliRunner()
        result = runner.invoke(main, ["generate", "--config", str(config_path),
                                      "--no-check"])
        assert result.exit_code == 0
        result = runner.invoke(main, ["score", "--config", str(config_path)])
        assert result.exit_code == 2


class TestSeedOverride:
    def test_seed_flag_changes_corpus(self, tmp_path):
        config_path = write_config(tmp_path)
        runner = CliRunner()
        out_a = tmp_path / "a"
        out_b = tmp_path / "b"
        for out, seed in ((out_a, "101"), (out_b, "102")):
            result = runner.invoke(
                main,
                ["generate", "--config", str(config_path), "--seed", seed,
                 "--out", str(out), "--no-check"],
            )
            assert result.exit_code == 0
        assert (out_a / "events.jsonl").read_bytes() != (out_b / "events.jsonl").read_bytes()
