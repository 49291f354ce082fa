"""
Evaluation runner: drives one strategy over a dataset through a completion client.

A single coordinator thread hands samples to at most ``concurrency`` workers
and is the only writer of the record log. Records are checkpointed as each
sample finishes, so interrupted runs can be resumed without repeating calls.
"""

from concurrent.futures import FIRST_COMPLETED, Future, ThreadPoolExecutor, wait
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Dict, List, Optional, Union

from models.domain import Dataset, MetricsSummary, Sample
from models.run import PredictionRecord, RunManifest, RunResult, StrategyId
from pipeline import __version__
from pipeline.datasets import dataset_digest, subsample
from pipeline.errors import (
    AuthError,
    ConfigurationError,
    DataError,
    EmptyRunError,
    SmokeCheckError,
)
from pipeline.llm_client import CompletionClient
from pipeline.record_log import RunDirectory
from pipeline.report import summarize
from pipeline.strategies import StrategyFactory
from pipeline.templates import TemplateStore
from pipeline.validators import validate
from utils.helpers import safe_filename, utc_now
from utils.logging import (
    get_pipeline_logger,
    log_data_operation,
    log_error_with_context,
    log_pipeline_stage,
)

logger = get_pipeline_logger("runner")

SMOKE_MIN_PARSE_RATE = 0.9


class RunStage(Enum):
    PREPARING = "preparing"
    EVALUATING = "evaluating"
    SUMMARIZING = "summarizing"
    COMPLETE = "complete"


@dataclass
class RunProgress:
    stage: RunStage
    progress_percent: float
    message: str
    records_processed: int = 0
    total_records: int = 0


def make_run_id(manifest: RunManifest, repeat_total: int = 1) -> str:
    run_id = "__".join(
        [
            safe_filename(manifest.dataset_id),
            manifest.strategy.value,
            safe_filename(manifest.model),
            manifest.fingerprint()[:10],
        ]
    )
    if repeat_total > 1:
        run_id = f"{run_id}-r{manifest.repeat}"
    return run_id


def build_manifest(
    dataset: Dataset,
    strategy: StrategyId,
    provider_id: str,
    model: str,
    repeat_total: int = 1,
    **settings,
) -> RunManifest:
    """Freeze a run description; ``settings`` are the remaining RunManifest fields."""
    manifest = RunManifest(
        run_id="pending",
        dataset_id=dataset.id,
        dataset_digest=dataset_digest(dataset),
        strategy=strategy,
        provider_id=provider_id,
        model=model,
        harness_version=__version__,
        **settings,
    )
    return manifest.model_copy(update={"run_id": make_run_id(manifest, repeat_total)})


def select_samples(dataset: Dataset, manifest: RunManifest) -> Dataset:
    if manifest.limit is None or manifest.limit == len(dataset.samples):
        return dataset
    return subsample(dataset, manifest.limit, manifest.seed)


def smoke_check(result: RunResult, min_parse_rate: float = SMOKE_MIN_PARSE_RATE) -> float:
    """Parse rate of a finished run; raises when it falls below ``min_parse_rate``."""
    total = len(result.records)
    if total == 0:
        raise SmokeCheckError("Smoke run produced no records")
    parsed = sum(1 for record in result.records if record.verdict.is_decided)
    rate = parsed / total
    if rate < min_parse_rate:
        raise SmokeCheckError(
            f"Parse rate {rate:.2%} is below {min_parse_rate:.0%} "
            f"({total - parsed} of {total} verdicts unparseable)"
        )
    return rate


class EvaluationRunner:
    def __init__(
        self,
        out_dir: Union[str, Path] = "runs",
        progress_callback: Optional[Callable[[RunProgress], None]] = None,
        template_store: Optional[TemplateStore] = None,
    ):
        self.out_dir = Path(out_dir)
        self.progress_callback = progress_callback or self._default_progress_callback
        self.template_store = template_store
        self.current_stage = RunStage.PREPARING

    def _default_progress_callback(self, progress: RunProgress) -> None:
        if progress.total_records > 0:
            logger.info(
                f"[{progress.stage.value}] {progress.progress_percent:.1f}% - "
                f"{progress.message} ({progress.records_processed}/{progress.total_records})"
            )
        else:
            logger.info(f"[{progress.stage.value}] {progress.message}")

    def _report_progress(
        self,
        stage: RunStage,
        percent: float,
        message: str,
        records_processed: int = 0,
        total_records: int = 0,
    ) -> None:
        self.current_stage = stage
        self.progress_callback(
            RunProgress(
                stage=stage,
                progress_percent=percent,
                message=message,
                records_processed=records_processed,
                total_records=total_records,
            )
        )

    def run_directory(self, manifest: RunManifest) -> RunDirectory:
        return RunDirectory(self.out_dir / manifest.run_id)

    def _store(self, manifest: RunManifest) -> TemplateStore:
        if self.template_store is not None:
            return self.template_store
        return TemplateStore(manifest.template_set)

    def _check_manifest(self, manifest: RunManifest, dataset: Dataset, selected: Dataset) -> None:
        if manifest.dataset_digest != dataset_digest(dataset):
            raise ConfigurationError(
                f"Dataset digest does not match manifest {manifest.run_id}; "
                "refusing to mix datasets"
            )
        if manifest.dataset_id != dataset.id:
            raise ConfigurationError(
                f"Manifest is for dataset '{manifest.dataset_id}', got '{dataset.id}'"
            )
        # records are keyed by sample id
        duplicates = validate(dataset).duplicate_ids
        if duplicates:
            shown = ", ".join(duplicates[:5])
            more = f" and {len(duplicates) - 5} more" if len(duplicates) > 5 else ""
            raise DataError(
                f"Dataset '{dataset.id}' has duplicate sample ids: {shown}{more}; "
                "run validate for the full list"
            )
        if not selected.samples:
            raise EmptyRunError(f"Dataset '{dataset.id}' has no samples to evaluate")
        # renders every prompt once so template problems surface before any call
        strategy = StrategyFactory.create_strategy(manifest.strategy, self._store(manifest))
        for sample in selected.samples:
            strategy.stage_prompts(sample, manifest.dataset_id)

    def run_evaluation(
        self, manifest: RunManifest, dataset: Dataset, client: CompletionClient
    ) -> RunResult:
        log_pipeline_stage(logger, f"RUN {manifest.run_id}", "START")
        self._report_progress(RunStage.PREPARING, 0, "Checking run configuration")

        selected = select_samples(dataset, manifest)
        self._check_manifest(manifest, dataset, selected)

        run_dir = self.run_directory(manifest)
        if run_dir.exists():
            raise ConfigurationError(
                f"Run directory {run_dir.path} already exists; pass --resume to continue it"
            )
        run_dir.create()
        manifest = manifest.model_copy(update={"started_at": utc_now()})
        run_dir.write_manifest(manifest)

        return self._evaluate(run_dir, manifest, selected, client, {})

    def resume(
        self, run_dir: Union[str, Path, RunDirectory], dataset: Dataset, client: CompletionClient
    ) -> RunResult:
        directory = run_dir if isinstance(run_dir, RunDirectory) else RunDirectory(run_dir)
        manifest = directory.read_manifest()
        log_pipeline_stage(logger, f"RESUME {manifest.run_id}", "START")
        self._report_progress(RunStage.PREPARING, 0, "Checking recorded run")

        selected = select_samples(dataset, manifest)
        self._check_manifest(manifest, dataset, selected)

        selected_ids = {sample.id for sample in selected.samples}
        existing = {
            sample_id: record
            for sample_id, record in directory.read_records().items()
            if sample_id in selected_ids
        }
        log_data_operation(logger, "Already recorded", len(existing), "samples")
        return self._evaluate(directory, manifest, selected, client, existing)

    def _evaluate(
        self,
        run_dir: RunDirectory,
        manifest: RunManifest,
        selected: Dataset,
        client: CompletionClient,
        existing: Dict[str, PredictionRecord],
    ) -> RunResult:
        total = len(selected.samples)
        pending: List[Sample] = [s for s in selected.samples if s.id not in existing]
        records: Dict[str, PredictionRecord] = dict(existing)
        strategy = StrategyFactory.create_strategy(manifest.strategy, self._store(manifest))

        self._report_progress(
            RunStage.EVALUATING,
            100.0 * len(records) / total,
            f"Evaluating {manifest.strategy.display} on {manifest.dataset_id}",
            len(records),
            total,
        )

        queue = list(pending)
        with ThreadPoolExecutor(max_workers=manifest.concurrency) as executor:
            in_flight: Dict[Future, Sample] = {}
            try:
                while queue or in_flight:
                    while queue and len(in_flight) < manifest.concurrency:
                        sample = queue.pop(0)
                        future = executor.submit(strategy.execute, sample, client, manifest)
                        in_flight[future] = sample

                    done, _ = wait(list(in_flight), return_when=FIRST_COMPLETED)
                    for future in done:
                        sample = in_flight.pop(future)
                        record = future.result()
                        run_dir.append_record(record)
                        records[record.sample_id] = record
                        self._report_progress(
                            RunStage.EVALUATING,
                            100.0 * len(records) / total,
                            f"Recorded {sample.id}",
                            len(records),
                            total,
                        )
            except AuthError as e:
                log_error_with_context(
                    logger, e, "run aborted", {"run_id": manifest.run_id}
                )
                log_pipeline_stage(logger, f"RUN {manifest.run_id}", "ERROR")
                queue.clear()
                for future in in_flight:
                    future.cancel()
                raise
            except KeyboardInterrupt:
                logger.warning(
                    f"Interrupted; {len(records)}/{total} records are checkpointed in "
                    f"{run_dir.path}"
                )
                queue.clear()
                for future in in_flight:
                    future.cancel()
                raise

        self._report_progress(RunStage.SUMMARIZING, 100, "Computing metrics")
        ordered = [records[sample.id] for sample in selected.samples]
        metrics = summarize(ordered, selected.golds(), manifest.unparseable_policy)
        run_dir.write_metrics(metrics)

        manifest = manifest.model_copy(update={"finished_at": utc_now()})
        run_dir.write_manifest(manifest)

        log_data_operation(logger, "Evaluated", len(ordered), "records")
        log_pipeline_stage(logger, f"RUN {manifest.run_id}", "COMPLETE")
        self._report_progress(RunStage.COMPLETE, 100, f"Run {manifest.run_id} complete")
        return RunResult(manifest=manifest, records=ordered, metrics=metrics)


def metrics_line(metrics: MetricsSummary) -> str:
    return (
        f"acc={metrics.accuracy:.6f} macro_f1={metrics.macro_f1:.6f} "
        f"n={metrics.n} unparseable={metrics.counts.unparseable}"
    )
