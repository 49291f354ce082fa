#!/usr/bin/env python3
"""
pragmabench command line.

    run       evaluate one strategy on one dataset and print the metrics line
    sweep     evaluate several strategies and print the comparison table
    report    merge finished runs and published rows into tables or exports
    validate  check a dataset for duplicate ids and empty utterances
    cache     inspect or clear the response cache
"""

import functools
import os
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import click
from dotenv import load_dotenv
from rich.console import Console
from rich.table import Table

from models.config import HarnessConfig
from models.domain import Dataset, UnparseablePolicy
from models.report import MachineFormat, TableLayout
from models.run import RunResult, StrategyId
from pipeline.config_manager import (
    ConfigManager,
    model_display_names,
    recorded_mock_mode,
    resolve_model,
)
from pipeline.datasets import DatasetFactory
from pipeline.errors import ConfigurationError, EmptyReportError, HarnessError
from pipeline.llm_client import build_client
from pipeline.report import collect_rows, emit_machine, emit_table, row_from_run_dir
from pipeline.response_cache import ResponseCache
from pipeline.runner import EvaluationRunner, build_manifest, metrics_line, smoke_check
from pipeline.templates import DEFAULT_TEMPLATE_SET
from pipeline.validators import validate as validate_dataset
from utils.helpers import format_duration, format_file_size
from utils.logging import get_pipeline_logger, setup_pipeline_logging

logger = get_pipeline_logger("cli")
console = Console(stderr=True)

EXIT_INTERRUPTED = 130
MARKDOWN_FORMAT = "markdown"


def _echo_error(error: HarnessError) -> None:
    console.print(error.token(), style="bold red", markup=False, highlight=False, soft_wrap=True)


def handle_errors(command):
    """Map harness errors to their exit status with an ``error[CODE]`` line."""

    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except HarnessError as e:
            _echo_error(e)
            sys.exit(e.exit_code)
        except KeyboardInterrupt:
            console.print("Interrupted; recorded samples are checkpointed", style="yellow")
            sys.exit(EXIT_INTERRUPTED)

    return wrapper


def run_options(command):
    """Options shared by ``run`` and ``sweep``."""
    options = [
        click.option("--dataset", help="Dataset id (mustard, semeval2018t3) or file path"),
        click.option("--provider", help="Provider id (openai, anthropic, local, mock, ...)"),
        click.option("--model", help="Provider model id or a configured model alias"),
        click.option("--limit", type=int, help="Evaluate a seeded subsample of N samples"),
        click.option("--seed", type=int, help="Subsample seed"),
        click.option("--concurrency", type=int, help="Samples evaluated in parallel"),
        click.option("--temperature", type=float, help="Sampling temperature"),
        click.option("--cache-dir", help="Response cache directory"),
        click.option("--no-cache", is_flag=True, help="Bypass the response cache"),
        click.option("--out", help="Directory holding run directories"),
        click.option("--resume", is_flag=True, help="Continue an existing run directory"),
        click.option("--mock", help="Mock mode: echo-gold | fixed:<label> | by-digest:<path>"),
        click.option("--repeat", type=int, help="Independent repeats of each run"),
        click.option("--template-set", help="Bundled template set name or directory"),
        click.option(
            "--unparseable-policy",
            type=click.Choice([policy.value for policy in UnparseablePolicy]),
            help="How unparseable verdicts enter the metrics",
        ),
        click.option("--config", "config_file", help="JSON config file"),
    ]
    for option in reversed(options):
        command = option(command)
    return command


def _resolve(flags: Dict[str, Any], config_file: Optional[str]) -> HarnessConfig:
    if flags.pop("no_cache", False):
        flags["cache_dir"] = ""
    resolved = ConfigManager().resolve(flags, config_file)
    for key, layer in sorted(resolved.sources.items()):
        if layer != "default":
            logger.debug(f"config {key} <- {layer}")
    return resolved.config


def _load_dataset(config: HarnessConfig) -> Dataset:
    if not config.dataset:
        raise ConfigurationError("A dataset is required (--dataset)")
    return DatasetFactory.load(config.dataset, config.dataset_paths)


def _run_one(
    config: HarnessConfig,
    dataset: Dataset,
    strategy: StrategyId,
    resume: bool,
    repeat: int,
) -> RunResult:
    provider_id, model = resolve_model(config)
    manifest = build_manifest(
        dataset,
        strategy,
        provider_id,
        model,
        repeat_total=config.repeat,
        template_set=config.template_set or DEFAULT_TEMPLATE_SET,
        temperature=config.temperature,
        max_tokens_stage1=config.max_tokens_stage1,
        max_tokens_stage2=config.max_tokens_stage2,
        seed=config.seed,
        limit=config.limit,
        concurrency=config.concurrency,
        unparseable_policy=config.unparseable_policy,
        system_preamble=config.system_preamble,
        mock_mode=recorded_mock_mode(config, provider_id),
        repeat=repeat,
    )

    # later repeats get their own cache namespace so they sample independently
    client_config = config
    if repeat > 1 and config.cache_dir:
        client_config = config.model_copy(
            update={"cache_dir": str(Path(config.cache_dir) / f"repeat-{repeat}")}
        )
    client = build_client(client_config, provider_id, dataset.golds())

    runner = EvaluationRunner(config.out)
    run_dir = runner.run_directory(manifest)
    if resume and run_dir.exists():
        result = runner.resume(run_dir, dataset, client)
    else:
        result = runner.run_evaluation(manifest, dataset, client)

    logger.info(
        f"{result.manifest.run_id}: {client.provider_calls} provider calls, "
        f"{client.cache_hits} cache hits"
    )
    return result


@click.group()
@click.option(
    "--log-level",
    type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False),
    help="Overrides LOG_LEVEL",
)
@click.option("--log-file", help="Also log to this file (overrides LOG_FILE)")
def cli(log_level, log_file):
    """Sarcasm-detection prompting benchmark harness."""
    load_dotenv()
    if log_level or log_file:
        setup_pipeline_logging(log_level or os.getenv("LOG_LEVEL", "INFO"), log_file)


@cli.command()
@click.option("--strategy", help="io, cot, tot, boc, coc, goc, mp or pmp")
@click.option("--smoke", is_flag=True, help="Fail unless at least 90% of verdicts parse")
@run_options
@handle_errors
def run(strategy, smoke, config_file, resume, **flags):
    """Evaluate one strategy and print the metrics line."""
    config = _resolve({"strategy": strategy, **flags}, config_file)
    if not config.strategy:
        raise ConfigurationError("A strategy is required (--strategy)")
    strategy_id = StrategyId.parse(config.strategy)
    dataset = _load_dataset(config)

    for repeat in range(1, config.repeat + 1):
        result = _run_one(config, dataset, strategy_id, resume, repeat)
        if smoke:
            rate = smoke_check(result)
            console.print(f"Smoke check passed: parse rate {rate:.1%}", style="green")
        console.print(f"Run directory: {Path(config.out) / result.manifest.run_id}")
        manifest = result.manifest
        if manifest.started_at and manifest.finished_at:
            elapsed = (manifest.finished_at - manifest.started_at).total_seconds()
            console.print(f"Elapsed: {format_duration(elapsed)}")
        click.echo(metrics_line(result.metrics))


@cli.command()
@click.option(
    "--strategies",
    default=",".join(strategy.value for strategy in StrategyId),
    show_default=True,
    help="Comma-separated strategy ids",
)
@click.option(
    "--best-scope", type=click.Choice(["table", "model"]), default="table", show_default=True
)
@run_options
@handle_errors
def sweep(strategies, best_scope, config_file, resume, **flags):
    """Evaluate several strategies on one dataset and print the comparison table."""
    config = _resolve(dict(flags), config_file)
    strategy_ids = [StrategyId.parse(token) for token in strategies.split(",") if token.strip()]
    if not strategy_ids:
        raise ConfigurationError("--strategies names no strategy")
    dataset = _load_dataset(config)

    rows = []
    for strategy_id in strategy_ids:
        for repeat in range(1, config.repeat + 1):
            result = _run_one(config, dataset, strategy_id, resume, repeat)
            console.print(f"{strategy_id.display}: {metrics_line(result.metrics)}")
            rows.append(row_from_run_dir(Path(config.out) / result.manifest.run_id))

    labels = model_display_names(config)
    rows = [row.model_copy(update={"model": labels.get(row.model, row.model)}) for row in rows]
    click.echo(emit_table(rows, TableLayout.PUBLISHED, best_scope), nl=False)


@cli.command()
@click.argument("inputs", nargs=-1, type=click.Path())
@click.option(
    "--layout",
    type=click.Choice([layout.value for layout in TableLayout]),
    default=TableLayout.PUBLISHED.value,
    show_default=True,
)
@click.option(
    "--format",
    "output_format",
    type=click.Choice([MARKDOWN_FORMAT] + [fmt.value for fmt in MachineFormat]),
    default=MARKDOWN_FORMAT,
    show_default=True,
)
@click.option(
    "--best-scope", type=click.Choice(["table", "model"]), default="table", show_default=True
)
@click.option("--out", "out_path", help="Write the report here instead of stdout")
@click.option("--config", "config_file", help="JSON config file (for model alias names)")
@handle_errors
def report(inputs, layout, output_format, best_scope, out_path, config_file):
    """Merge run directories and row files (e.g. the published fixture) into a report."""
    if not inputs:
        raise EmptyReportError("report needs at least one run directory or row file")

    config = _resolve({}, config_file)
    rows = collect_rows(list(inputs), model_display_names(config))

    if output_format == MARKDOWN_FORMAT:
        text = emit_table(rows, TableLayout(layout), best_scope)
    else:
        text = emit_machine(rows, MachineFormat(output_format))

    if out_path:
        Path(out_path).write_text(text, encoding="utf-8")
        console.print(f"Report written to {out_path} ({len(rows)} rows)")
    else:
        click.echo(text, nl=False)


@cli.command()
@click.option("--dataset", required=True, help="Dataset id or file path")
@click.option("--config", "config_file", help="JSON config file")
@handle_errors
def validate(dataset, config_file):
    """Report duplicate ids, empty utterances and class balance; exit 1 on problems."""
    config = _resolve({"dataset": dataset}, config_file)
    loaded = _load_dataset(config)
    validation = validate_dataset(loaded)

    table = Table(title=f"Dataset {loaded.id}")
    table.add_column("Label")
    table.add_column("Samples", justify="right")
    for label, count in validation.class_balance.items():
        table.add_row(label.value, str(count))
    console.print(table)

    style = "green" if validation.ok else "bold red"
    console.print(validation.get_error_report(), style=style, markup=False, soft_wrap=True)
    sys.exit(0 if validation.ok else 1)


@cli.group()
def cache():
    """Inspect or clear the response cache."""


def _cache_dir(cache_dir: Optional[str], config_file: Optional[str]) -> str:
    config = _resolve({"cache_dir": cache_dir}, config_file)
    if not config.cache_dir:
        raise ConfigurationError("No cache directory configured")
    return config.cache_dir


@cache.command()
@click.option("--cache-dir", help="Response cache directory")
@click.option("--config", "config_file", help="JSON config file")
@handle_errors
def stats(cache_dir, config_file):
    """Print entry count and size."""
    directory = _cache_dir(cache_dir, config_file)
    cache_stats = ResponseCache(directory).stats()
    click.echo(f"{cache_stats.entries} entries, {cache_stats.total_bytes} bytes")
    console.print(f"{directory}: {format_file_size(cache_stats.total_bytes)}")


@cache.command()
@click.option("--cache-dir", help="Response cache directory")
@click.option("--config", "config_file", help="JSON config file")
@handle_errors
def clear(cache_dir, config_file):
    """Remove cached responses under the cache directory."""
    directory = _cache_dir(cache_dir, config_file)
    removed, freed = ResponseCache(directory).clear()
    click.echo(f"{removed} entries removed")
    console.print(f"Freed {format_file_size(freed)}")


def main(argv: Optional[List[str]] = None):
    cli.main(args=argv, prog_name="pragmabench")


if __name__ == "__main__":
    main()
