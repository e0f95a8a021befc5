"""Command-line entry point: generate, featurize, train, evaluate, score.

Exit codes: 0 success, 2 missing inputs, 3 validation failure, 4 internal
invariant breach. Failures emit a single machine-readable JSON line on
stderr. QUERYPULSE_LOG sets the log level (DEBUG/INFO/WARNING/ERROR).
"""

from __future__ import annotations

import functools
import json
import logging
import os
import sys
from pathlib import Path

import click

from .config import PipelineConfig
from .errors import QuerypulseError
from .synth import generate as synth_generate, manifest_check

logger = logging.getLogger("querypulse")

EXIT_MISSING_INPUT = 2
EXIT_VALIDATION = 3
EXIT_INTERNAL = 4


def _setup_logging() -> None:
    level = os.environ.get("QUERYPULSE_LOG", "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )


def _fail(code: int, error: Exception) -> None:
    payload = {"error": type(error).__name__, "message": str(error)}
    click.echo(json.dumps(payload), err=True)
    sys.exit(code)


def pipeline_command(fn):
    """Shared error handling and exit-code mapping for all subcommands."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            fn(*args, **kwargs)
        except FileNotFoundError as exc:
            _fail(EXIT_MISSING_INPUT, exc)
        except OSError as exc:
            _fail(EXIT_MISSING_INPUT, exc)
        except QuerypulseError as exc:
            _fail(EXIT_VALIDATION, exc)
        except Exception as exc:  # noqa: BLE001 - anything else is a bug
            logger.exception("internal error")
            _fail(EXIT_INTERNAL, exc)

    return wrapper


def _load_config(config_path: str, seed: int | None, out: str | None) -> PipelineConfig:
    config = PipelineConfig.load(config_path)
    if seed is not None:
        config.seed = seed
        if config.generator is not None:
            config.generator.seed = seed
    if out is not None:
        config.workdir = out
    config.validate()
    return config


config_option = click.option(
    "--config", "config_path", required=True, type=click.Path(), metavar="PATH",
    help="Pipeline config file (.json or .toml).",
)
seed_option = click.option(
    "--seed", type=int, default=None, help="Override the config seed."
)
out_option = click.option(
    "--out", type=click.Path(), default=None,
    help="Override the configured working/output directory.",
)


@click.group()
@click.version_option(package_name="querypulse")
def main() -> None:
    """Predict search query performance from user-interaction logs."""
    _setup_logging()


@main.command()
@config_option
@seed_option
@click.option(
    "--out", type=click.Path(), default=None,
    help="Directory for the generated corpus (defaults to the events path's directory).",
)
@click.option("--check/--no-check", default=True, show_default=True,
              help="Verify behavioral trends after generating.")
@pipeline_command
def generate(config_path: str, seed: int | None, out: str | None, check: bool) -> None:
    """Generate a synthetic labeled corpus with known ground truth."""
    config = _load_config(config_path, seed, None)
    if config.generator is None:
        raise QuerypulseError("config has no [generator] section")
    target = Path(out) if out else Path(config.events_path).parent
    info = synth_generate(config.generator, target)
    if check:
        report = manifest_check(target)
        info["head_torso_bottom_ratio"] = report["head_torso_bottom_ratio"]
    click.echo(json.dumps(info, sort_keys=True))


@main.command()
@config_option
@seed_option
@out_option
@pipeline_command
def featurize(config_path: str, seed: int | None, out: str | None) -> None:
    """Ingest logs and labels, build and encode the feature matrix."""
    from . import pipeline

    config = _load_config(config_path, seed, out)
    info = pipeline.run_featurize(config)
    click.echo(json.dumps(info, sort_keys=True))


@main.command()
@config_option
@seed_option
@out_option
@pipeline_command
def train(config_path: str, seed: int | None, out: str | None) -> None:
    """Tune, select features and train the forest on the train split."""
    from . import pipeline

    config = _load_config(config_path, seed, out)
    info = pipeline.run_train(config)
    click.echo(json.dumps(info, sort_keys=True))


@main.command()
@config_option
@seed_option
@out_option
@click.option("--figures/--no-figures", default=None,
              help="Force figure rendering on or off (default: per config).")
@pipeline_command
def evaluate(config_path: str, seed: int | None, out: str | None,
             figures: bool | None) -> None:
    """Score the held-out split and write the evaluation report."""
    from . import pipeline

    config = _load_config(config_path, seed, out)
    if figures is not None:
        config.render_figures = figures
    report = pipeline.run_evaluate(config)
    click.echo(
        json.dumps(
            {
                "overall_auc": report.overall_auc,
                "n_test": report.n_test,
                "operating_point": report.operating_point,
            },
            sort_keys=True,
        )
    )


@main.command()
@config_option
@seed_option
@out_option
@click.option(
    "--events", "events_path", type=click.Path(), default=None,
    help="Event log to score (defaults to the configured events path).",
)
@pipeline_command
def score(config_path: str, seed: int | None, out: str | None,
          events_path: str | None) -> None:
    """Score queries and flag interventions at the calibrated threshold."""
    from . import pipeline

    config = _load_config(config_path, seed, out)
    results = pipeline.run_score(config, events_path=events_path)
    flagged = sum(1 for r in results if r["intervene"])
    click.echo(json.dumps({"n_scored": len(results), "n_flagged": flagged}))


if __name__ == "__main__":
    main()
